//! Grouped and keyless aggregation.
//!
//! Accumulators are widened (i128 for integer/decimal sums, f64 for floats);
//! integer overflow on emit is an error, never a silent wrap. Nulls form
//! their own group under SQL GROUP BY semantics. The hash strategy emits
//! groups in first-seen order; the sort strategy emits them sorted by key,
//! nulls last.

use std::collections::HashMap;
use std::sync::Arc;

use crate::columnar::{Batch, Column, ColumnBuilder, Values};
use crate::config::GroupStrategy;
use crate::error::{Error, Result};
use crate::kernels::AggMode;
use crate::plan::{AggFn, SortKey, TypedMeasure};
use crate::types::{append_canonical_bytes, pow10_i128, DataType, Datum};

use super::sortk;

/// One group's accumulator state, universal across aggregate functions.
#[derive(Debug, Clone)]
pub struct Acc {
    sum_i: i128,
    sum_f: f64,
    count: i64,
    min: Option<Datum>,
    max: Option<Datum>,
    seen: bool,
}

impl Acc {
    pub fn new() -> Acc {
        Acc {
            sum_i: 0,
            sum_f: 0.0,
            count: 0,
            min: None,
            max: None,
            seen: false,
        }
    }

    /// Fold one raw input value. `value` is None only for count-rows.
    pub fn update_raw(&mut self, agg: AggFn, value: Option<&Datum>) -> Result<()> {
        match agg {
            AggFn::Count => {
                let present = value.map_or(true, |d| !d.is_null());
                if present {
                    self.count += 1;
                }
            }
            AggFn::Sum | AggFn::Avg => {
                let d = value.expect("sum/avg require an input");
                if !d.is_null() {
                    self.add_sum(d)?;
                    self.seen = true;
                    self.count += 1;
                }
            }
            AggFn::Min | AggFn::Max => {
                let d = value.expect("min/max require an input");
                if !d.is_null() {
                    self.fold_minmax(agg, d);
                }
            }
        }
        Ok(())
    }

    /// Fold one accumulator row (columns starting at the measure's offset).
    pub fn update_acc(&mut self, agg: AggFn, acc_cols: &[&Arc<Column>], row: usize) -> Result<()> {
        match agg {
            AggFn::Count => {
                if let Datum::Int64(v) = acc_cols[0].datum(row) {
                    self.count += v;
                }
            }
            AggFn::Sum => {
                if acc_cols[0].is_valid(row) {
                    self.add_sum(&acc_cols[0].datum(row))?;
                    self.seen = true;
                }
            }
            AggFn::Avg => {
                if acc_cols[0].is_valid(row) {
                    self.add_sum(&acc_cols[0].datum(row))?;
                    self.seen = true;
                }
                if let Datum::Int64(v) = acc_cols[1].datum(row) {
                    self.count += v;
                }
            }
            AggFn::Min | AggFn::Max => {
                if acc_cols[0].is_valid(row) {
                    self.fold_minmax(agg, &acc_cols[0].datum(row));
                }
            }
        }
        Ok(())
    }

    fn add_sum(&mut self, d: &Datum) -> Result<()> {
        match d {
            Datum::Int64(v) => {
                self.sum_i = self
                    .sum_i
                    .checked_add(*v as i128)
                    .ok_or(Error::AccumulatorOverflow("sum"))?;
            }
            Datum::Decimal(v) => {
                self.sum_i = self
                    .sum_i
                    .checked_add(*v)
                    .ok_or(Error::AccumulatorOverflow("sum"))?;
            }
            Datum::Float64(v) => self.sum_f += v,
            other => panic!("sum over non-numeric datum {other:?}"),
        }
        Ok(())
    }

    fn fold_minmax(&mut self, agg: AggFn, d: &Datum) {
        let slot = if agg == AggFn::Min { &mut self.min } else { &mut self.max };
        match slot {
            None => *slot = Some(d.clone()),
            Some(cur) => {
                let ord = crate::types::datum_cmp(d, cur);
                let take = if agg == AggFn::Min {
                    ord == std::cmp::Ordering::Less
                } else {
                    ord == std::cmp::Ordering::Greater
                };
                if take {
                    *slot = Some(d.clone());
                }
            }
        }
    }

    fn sum_datum(&self, acc_type: &DataType) -> Result<Datum> {
        if !self.seen {
            return Ok(Datum::Null);
        }
        Ok(match acc_type {
            DataType::Int64 => Datum::Int64(
                i64::try_from(self.sum_i).map_err(|_| Error::AccumulatorOverflow("sum"))?,
            ),
            DataType::Decimal { .. } => Datum::Decimal(self.sum_i),
            DataType::Float64 => Datum::Float64(self.sum_f),
            other => panic!("sum accumulator of type {other}"),
        })
    }

    /// Accumulator-layout row fragment for this measure.
    pub fn emit_acc(&self, m: &TypedMeasure) -> Result<Vec<Datum>> {
        Ok(match m.agg {
            AggFn::Sum => vec![self.sum_datum(&m.acc_types[0])?],
            AggFn::Count => vec![Datum::Int64(self.count)],
            AggFn::Min => vec![self.min.clone().unwrap_or(Datum::Null)],
            AggFn::Max => vec![self.max.clone().unwrap_or(Datum::Null)],
            AggFn::Avg => vec![self.sum_datum(&m.acc_types[0])?, Datum::Int64(self.count)],
        })
    }

    /// Finished value for this measure.
    pub fn emit_final(&self, m: &TypedMeasure) -> Result<Datum> {
        Ok(match m.agg {
            AggFn::Sum => self.sum_datum(&m.acc_types[0])?,
            AggFn::Count => Datum::Int64(self.count),
            AggFn::Min => self.min.clone().unwrap_or(Datum::Null),
            AggFn::Max => self.max.clone().unwrap_or(Datum::Null),
            AggFn::Avg => {
                if self.count == 0 || !self.seen {
                    Datum::Null
                } else {
                    let sum = match &m.acc_types[0] {
                        DataType::Int64 => self.sum_i as f64,
                        DataType::Decimal { scale, .. } => {
                            self.sum_i as f64 / pow10_i128(*scale) as f64
                        }
                        DataType::Float64 => self.sum_f,
                        other => panic!("avg accumulator of type {other}"),
                    };
                    Datum::Float64(sum / self.count as f64)
                }
            }
        })
    }
}

/// Group-key byte encoding: per column a null marker, then the canonical
/// value bytes (strings length-prefixed so multi-key tuples cannot collide).
fn encode_group_key(keys: &[Arc<Column>], row: usize, buf: &mut Vec<u8>) {
    buf.clear();
    for col in keys {
        if !col.is_valid(row) {
            buf.push(0);
            continue;
        }
        buf.push(1);
        let d = col.datum(row);
        if let Datum::Utf8(s) = &d {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        } else {
            append_canonical_bytes(&d, buf);
        }
    }
}

/// Group assignment: representative row per group, per-row group ids, and
/// (sort strategy only) the row visit order for run-folding.
/// Hash strategy emits groups in first-seen order; sort strategy in key
/// order, nulls last.
fn assign_groups(
    keys: &[Arc<Column>],
    rows: usize,
    strategy: GroupStrategy,
) -> (Vec<usize>, Vec<u32>, Option<Vec<usize>>) {
    match strategy {
        GroupStrategy::Hash => {
            let mut map: HashMap<Vec<u8>, u32> = HashMap::new();
            let mut reps = Vec::new();
            let mut gid_of_row = Vec::with_capacity(rows);
            let mut buf = Vec::new();
            for row in 0..rows {
                encode_group_key(keys, row, &mut buf);
                let next = reps.len() as u32;
                let gid = *map.entry(buf.clone()).or_insert_with(|| {
                    reps.push(row);
                    next
                });
                gid_of_row.push(gid);
            }
            (reps, gid_of_row, None)
        }
        GroupStrategy::Sort => {
            // Sort row indices by the keys, then detect runs.
            let key_batch = Batch::new(keys.to_vec());
            let sort_keys: Vec<SortKey> = (0..keys.len())
                .map(|ordinal| SortKey {
                    ordinal,
                    descending: false,
                    nulls_first: false,
                })
                .collect();
            let perm = sortk::sort_permutation(&key_batch, &sort_keys);
            let mut reps = Vec::new();
            let mut gid_of_row = vec![0u32; rows];
            let mut order = Vec::with_capacity(rows);
            let mut prev: Option<usize> = None;
            for i in 0..perm.len() {
                let row = perm.get(i) as usize;
                let same = match prev {
                    Some(p) => keys_equal(keys, p, row),
                    None => false,
                };
                if !same {
                    reps.push(row);
                }
                gid_of_row[row] = (reps.len() - 1) as u32;
                order.push(row);
                prev = Some(row);
            }
            (reps, gid_of_row, Some(order))
        }
    }
}

/// Group equality: nulls compare equal to each other (GROUP BY semantics).
fn keys_equal(keys: &[Arc<Column>], a: usize, b: usize) -> bool {
    keys.iter().all(|c| {
        match (c.is_valid(a), c.is_valid(b)) {
            (false, false) => true,
            (true, true) => {
                sortk::ColOrd::new(c).cmp_values(a, b) == std::cmp::Ordering::Equal
            }
            _ => false,
        }
    })
}

fn accumulate_raw(
    reps_len: usize,
    gid_of_row: &[u32],
    order: Option<&[usize]>,
    measure_inputs: &[Option<Arc<Column>>],
    measures: &[TypedMeasure],
) -> Result<Vec<Vec<Acc>>> {
    let mut accs: Vec<Vec<Acc>> = measures
        .iter()
        .map(|_| vec![Acc::new(); reps_len])
        .collect();
    let rows = gid_of_row.len();
    let row_iter: Box<dyn Iterator<Item = usize>> = match order {
        Some(o) => Box::new(o.iter().copied()),
        None => Box::new(0..rows),
    };
    for row in row_iter {
        let gid = gid_of_row[row] as usize;
        for (mi, m) in measures.iter().enumerate() {
            let value = measure_inputs[mi].as_ref().map(|c| c.datum(row));
            accs[mi][gid].update_raw(m.agg, value.as_ref())?;
        }
    }
    Ok(accs)
}

fn emit_groups(
    keys: &[Arc<Column>],
    reps: &[usize],
    accs: &[Vec<Acc>],
    measures: &[TypedMeasure],
    finish: bool,
) -> Result<Batch> {
    let mut builders: Vec<ColumnBuilder> = keys
        .iter()
        .map(|c| ColumnBuilder::new(*c.dtype()))
        .collect();
    for m in measures {
        if finish {
            builders.push(ColumnBuilder::new(m.result_type));
        } else {
            for t in &m.acc_types {
                builders.push(ColumnBuilder::new(*t));
            }
        }
    }
    for (g, &rep) in reps.iter().enumerate() {
        let mut b = 0;
        for c in keys {
            builders[b].push(c.datum(rep));
            b += 1;
        }
        for (mi, m) in measures.iter().enumerate() {
            if finish {
                builders[b].push(accs[mi][g].emit_final(m)?);
                b += 1;
            } else {
                for d in accs[mi][g].emit_acc(m)? {
                    builders[b].push(d);
                    b += 1;
                }
            }
        }
    }
    Ok(Batch::from_columns(
        builders.into_iter().map(|b| b.finish()).collect(),
    ))
}

pub fn group_partial(
    keys: &[Arc<Column>],
    measure_inputs: &[Option<Arc<Column>>],
    measures: &[TypedMeasure],
    strategy: GroupStrategy,
) -> Result<Batch> {
    assert!(!keys.is_empty(), "keyless aggregation is reduce");
    let rows = keys[0].len();
    // Sort strategy folds rows in sorted-run order; hash in arrival order.
    let (reps, gid_of_row, order) = assign_groups(keys, rows, strategy);
    let accs = accumulate_raw(
        reps.len(),
        &gid_of_row,
        order.as_deref(),
        measure_inputs,
        measures,
    )?;
    emit_groups(keys, &reps, &accs, measures, false)
}

pub fn group_merge(
    acc: &Batch,
    key_count: usize,
    measures: &[TypedMeasure],
    mode: AggMode,
    strategy: GroupStrategy,
) -> Result<Batch> {
    let keys: Vec<Arc<Column>> = (0..key_count).map(|i| acc.column(i).clone()).collect();
    let rows = acc.rows();
    let (reps, gid_of_row, order) = assign_groups(&keys, rows, strategy);
    let mut accs: Vec<Vec<Acc>> = measures
        .iter()
        .map(|_| vec![Acc::new(); reps.len()])
        .collect();
    // Accumulator column offsets per measure.
    let mut offsets = Vec::with_capacity(measures.len());
    let mut pos = key_count;
    for m in measures {
        offsets.push(pos);
        pos += m.acc_width();
    }
    let row_order: Vec<usize> = order.unwrap_or_else(|| (0..rows).collect());
    for &row in &row_order {
        let gid = gid_of_row[row] as usize;
        for (mi, m) in measures.iter().enumerate() {
            let cols: Vec<&Arc<Column>> = (offsets[mi]..offsets[mi] + m.acc_width())
                .map(|c| acc.column(c))
                .collect();
            accs[mi][gid].update_acc(m.agg, &cols, row)?;
        }
    }
    emit_groups(&keys, &reps, &accs, measures, mode == AggMode::Final)
}

pub fn reduce_partial(
    measure_inputs: &[Option<Arc<Column>>],
    measures: &[TypedMeasure],
    row_count: usize,
) -> Result<Batch> {
    let mut accs: Vec<Acc> = measures.iter().map(|_| Acc::new()).collect();
    for row in 0..row_count {
        for (mi, m) in measures.iter().enumerate() {
            let value = measure_inputs[mi].as_ref().map(|c| c.datum(row));
            accs[mi].update_raw(m.agg, value.as_ref())?;
        }
    }
    emit_single_row(&accs, measures, false)
}

pub fn reduce_merge(acc: &Batch, measures: &[TypedMeasure], mode: AggMode) -> Result<Batch> {
    let mut accs: Vec<Acc> = measures.iter().map(|_| Acc::new()).collect();
    let mut offsets = Vec::with_capacity(measures.len());
    let mut pos = 0usize;
    for m in measures {
        offsets.push(pos);
        pos += m.acc_width();
    }
    for row in 0..acc.rows() {
        for (mi, m) in measures.iter().enumerate() {
            let cols: Vec<&Arc<Column>> = (offsets[mi]..offsets[mi] + m.acc_width())
                .map(|c| acc.column(c))
                .collect();
            accs[mi].update_acc(m.agg, &cols, row)?;
        }
    }
    emit_single_row(&accs, measures, mode == AggMode::Final)
}

fn emit_single_row(accs: &[Acc], measures: &[TypedMeasure], finish: bool) -> Result<Batch> {
    let mut builders = Vec::new();
    for (mi, m) in measures.iter().enumerate() {
        if finish {
            let mut b = ColumnBuilder::new(m.result_type);
            b.push(accs[mi].emit_final(m)?);
            builders.push(b);
        } else {
            for (d, t) in accs[mi].emit_acc(m)?.into_iter().zip(&m.acc_types) {
                let mut b = ColumnBuilder::new(*t);
                b.push(d);
                builders.push(b);
            }
        }
    }
    Ok(Batch::from_columns(
        builders.into_iter().map(|b| b.finish()).collect(),
    ))
}
