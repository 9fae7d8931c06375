//! Tuple-at-a-time plan execution: nested-loop joins, sorted-map group-by,
//! comparison sorts. Exchange nodes are identity here (the reference path is
//! single-node by design).

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::columnar::{Batch, ColumnBuilder, Table};
use crate::error::{Error, Result};
use crate::plan::{AggFn, AggPhase, JoinType, PhysKind, PhysNode, PhysicalPlan, TypedMeasure};
use crate::types::{append_canonical_bytes, pow10_i128, DataType, Datum};

use super::eval::{eval_datum, row_cmp};

/// Resolves table names to cached tables for the reference run.
pub trait TableSource {
    fn table(&self, name: &str) -> Result<Arc<Table>>;
}

impl<F> TableSource for F
where
    F: Fn(&str) -> Result<Arc<Table>>,
{
    fn table(&self, name: &str) -> Result<Arc<Table>> {
        self(name)
    }
}

/// Execute a validated plan row-at-a-time. Returns one output batch carrying
/// the root schema (zero rows allowed).
pub fn oracle_execute(plan: &PhysicalPlan, source: &dyn TableSource) -> Result<Batch> {
    let rows = run(&plan.root, source)?;
    let mut builders: Vec<ColumnBuilder> = plan
        .root
        .schema
        .iter()
        .map(|t| ColumnBuilder::new(*t))
        .collect();
    for row in rows {
        for (b, d) in builders.iter_mut().zip(row) {
            b.push(d);
        }
    }
    Ok(Batch::from_columns(
        builders.into_iter().map(|b| b.finish()).collect(),
    ))
}

fn run(node: &PhysNode, source: &dyn TableSource) -> Result<Vec<Vec<Datum>>> {
    match &node.kind {
        PhysKind::Read {
            table,
            columns,
            predicate,
        } => {
            let t = source.table(table)?;
            let mut out = Vec::new();
            for batch in &t.batches {
                for row in 0..batch.rows() {
                    let projected: Vec<Datum> =
                        columns.iter().map(|&c| batch.datum(c, row)).collect();
                    let keep = match predicate {
                        Some(p) => eval_datum(p, &projected).as_bool() == Some(true),
                        None => true,
                    };
                    if keep {
                        out.push(projected);
                    }
                }
            }
            Ok(out)
        }
        PhysKind::Filter { input, predicate } => {
            let rows = run(input, source)?;
            Ok(rows
                .into_iter()
                .filter(|r| eval_datum(predicate, r).as_bool() == Some(true))
                .collect())
        }
        PhysKind::Project { input, exprs } => {
            let rows = run(input, source)?;
            Ok(rows
                .into_iter()
                .map(|r| exprs.iter().map(|e| eval_datum(e, &r)).collect())
                .collect())
        }
        PhysKind::HashJoin {
            left,
            right,
            join_type,
            keys,
            ..
        } => {
            let l = run(left, source)?;
            let r = run(right, source)?;
            Ok(nested_loop_equi(&l, &r, keys, *join_type, &right.schema))
        }
        PhysKind::NestedLoopJoin {
            left,
            right,
            condition,
        } => {
            let l = run(left, source)?;
            let r = run(right, source)?;
            let mut out = Vec::new();
            for lr in &l {
                for rr in &r {
                    let mut combined = lr.clone();
                    combined.extend(rr.iter().cloned());
                    if eval_datum(condition, &combined).as_bool() == Some(true) {
                        out.push(combined);
                    }
                }
            }
            Ok(out)
        }
        PhysKind::Aggregate {
            input,
            phase,
            group_keys,
            measures,
            ..
        } => {
            let rows = run(input, source)?;
            aggregate(rows, *phase, group_keys, measures)
        }
        PhysKind::Sort { input, keys } => {
            let mut rows = run(input, source)?;
            rows.sort_by(|a, b| row_cmp(a, b, keys));
            Ok(rows)
        }
        PhysKind::Limit { input, n } => {
            let mut rows = run(input, source)?;
            rows.truncate(*n as usize);
            Ok(rows)
        }
        // Data movement is identity on the logical row multiset.
        PhysKind::Exchange { input, .. } => run(input, source),
        PhysKind::ExchangeSource { .. } => Err(Error::UnsupportedFeature(
            "reference execution of a detached plan fragment".to_string(),
        )),
    }
}

fn nested_loop_equi(
    left: &[Vec<Datum>],
    right: &[Vec<Datum>],
    keys: &[(usize, usize)],
    join_type: JoinType,
    right_schema: &[DataType],
) -> Vec<Vec<Datum>> {
    let key_eq = |l: &Vec<Datum>, r: &Vec<Datum>| {
        keys.iter().all(|&(lk, rk)| {
            let (a, b) = (&l[lk], &r[rk]);
            !a.is_null() && !b.is_null() && crate::types::datum_cmp(a, b) == std::cmp::Ordering::Equal
        })
    };
    let mut out = Vec::new();
    for lr in left {
        let mut matched = false;
        for rr in right {
            if key_eq(lr, rr) {
                matched = true;
                match join_type {
                    JoinType::Inner | JoinType::Left => {
                        let mut combined = lr.clone();
                        combined.extend(rr.iter().cloned());
                        out.push(combined);
                    }
                    JoinType::Semi => {
                        out.push(lr.clone());
                        break;
                    }
                    JoinType::Anti => break,
                }
            }
        }
        if !matched {
            match join_type {
                JoinType::Left => {
                    let mut combined = lr.clone();
                    combined.extend(right_schema.iter().map(|_| Datum::Null));
                    out.push(combined);
                }
                JoinType::Anti => out.push(lr.clone()),
                _ => {}
            }
        }
    }
    out
}

/// Per-group accumulator for the reference path.
#[derive(Debug, Clone)]
pub struct RowAcc {
    pub sum_i: i128,
    pub sum_f: f64,
    pub count: i64,
    pub min: Option<Datum>,
    pub max: Option<Datum>,
    pub seen: bool,
}

impl RowAcc {
    pub fn new() -> RowAcc {
        RowAcc {
            sum_i: 0,
            sum_f: 0.0,
            count: 0,
            min: None,
            max: None,
            seen: false,
        }
    }

    pub fn update(&mut self, agg: AggFn, value: Option<&Datum>) -> Result<()> {
        match agg {
            AggFn::Count => {
                if value.map_or(true, |d| !d.is_null()) {
                    self.count += 1;
                }
            }
            AggFn::Sum | AggFn::Avg => {
                let d = value.expect("sum/avg need input");
                if !d.is_null() {
                    self.add(d)?;
                    self.count += 1;
                    self.seen = true;
                }
            }
            AggFn::Min | AggFn::Max => {
                let d = value.expect("min/max need input");
                if !d.is_null() {
                    self.fold(agg, d);
                }
            }
        }
        Ok(())
    }

    pub fn merge_acc(&mut self, agg: AggFn, acc_row: &[Datum]) -> Result<()> {
        match agg {
            AggFn::Count => {
                if let Datum::Int64(v) = acc_row[0] {
                    self.count += v;
                }
            }
            AggFn::Sum => {
                if !acc_row[0].is_null() {
                    self.add(&acc_row[0])?;
                    self.seen = true;
                }
            }
            AggFn::Avg => {
                if !acc_row[0].is_null() {
                    self.add(&acc_row[0])?;
                    self.seen = true;
                }
                if let Datum::Int64(v) = acc_row[1] {
                    self.count += v;
                }
            }
            AggFn::Min | AggFn::Max => {
                if !acc_row[0].is_null() {
                    self.fold(agg, &acc_row[0]);
                }
            }
        }
        Ok(())
    }

    fn add(&mut self, d: &Datum) -> Result<()> {
        match d {
            Datum::Int64(v) => {
                self.sum_i = self
                    .sum_i
                    .checked_add(*v as i128)
                    .ok_or(Error::AccumulatorOverflow("sum"))?
            }
            Datum::Decimal(v) => {
                self.sum_i = self
                    .sum_i
                    .checked_add(*v)
                    .ok_or(Error::AccumulatorOverflow("sum"))?
            }
            Datum::Float64(v) => self.sum_f += v,
            other => panic!("sum over {other:?}"),
        }
        Ok(())
    }

    fn fold(&mut self, agg: AggFn, d: &Datum) {
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

    fn sum_value(&self, t: &DataType) -> Result<Datum> {
        if !self.seen {
            return Ok(Datum::Null);
        }
        Ok(match t {
            DataType::Int64 => Datum::Int64(
                i64::try_from(self.sum_i).map_err(|_| Error::AccumulatorOverflow("sum"))?,
            ),
            DataType::Decimal { .. } => Datum::Decimal(self.sum_i),
            DataType::Float64 => Datum::Float64(self.sum_f),
            other => panic!("sum type {other}"),
        })
    }

    pub fn acc_row(&self, m: &TypedMeasure) -> Result<Vec<Datum>> {
        Ok(match m.agg {
            AggFn::Sum => vec![self.sum_value(&m.acc_types[0])?],
            AggFn::Count => vec![Datum::Int64(self.count)],
            AggFn::Min => vec![self.min.clone().unwrap_or(Datum::Null)],
            AggFn::Max => vec![self.max.clone().unwrap_or(Datum::Null)],
            AggFn::Avg => vec![self.sum_value(&m.acc_types[0])?, Datum::Int64(self.count)],
        })
    }

    pub fn final_value(&self, m: &TypedMeasure) -> Result<Datum> {
        Ok(match m.agg {
            AggFn::Sum => self.sum_value(&m.acc_types[0])?,
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
                        other => panic!("avg acc type {other}"),
                    };
                    Datum::Float64(sum / self.count as f64)
                }
            }
        })
    }
}

fn group_key_bytes(row: &[Datum], group_keys: &[usize]) -> Vec<u8> {
    let mut buf = Vec::new();
    for &k in group_keys {
        let d = &row[k];
        if d.is_null() {
            buf.push(0);
            continue;
        }
        buf.push(1);
        if let Datum::Utf8(s) = d {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        } else {
            append_canonical_bytes(d, &mut buf);
        }
    }
    buf
}

fn aggregate(
    rows: Vec<Vec<Datum>>,
    phase: AggPhase,
    group_keys: &[usize],
    measures: &[TypedMeasure],
) -> Result<Vec<Vec<Datum>>> {
    // Sorted map keeps the reference output order deterministic.
    let mut groups: BTreeMap<Vec<u8>, (Vec<Datum>, Vec<RowAcc>)> = BTreeMap::new();
    let keyless = group_keys.is_empty();
    if keyless {
        groups.insert(
            Vec::new(),
            (Vec::new(), measures.iter().map(|_| RowAcc::new()).collect()),
        );
    }

    // Accumulator offsets for merge phases.
    let mut offsets = Vec::with_capacity(measures.len());
    let mut pos = group_keys.len();
    for m in measures {
        offsets.push(pos);
        pos += m.acc_width();
    }

    for row in &rows {
        let key = group_key_bytes(row, group_keys);
        let entry = groups.entry(key).or_insert_with(|| {
            (
                group_keys.iter().map(|&k| row[k].clone()).collect(),
                measures.iter().map(|_| RowAcc::new()).collect(),
            )
        });
        for (mi, m) in measures.iter().enumerate() {
            match phase {
                AggPhase::Single | AggPhase::Partial => {
                    let value = m.input.as_ref().map(|e| eval_datum(e, row));
                    entry.1[mi].update(m.agg, value.as_ref())?;
                }
                AggPhase::Final => {
                    let acc_slice: Vec<Datum> =
                        row[offsets[mi]..offsets[mi] + m.acc_width()].to_vec();
                    entry.1[mi].merge_acc(m.agg, &acc_slice)?;
                }
            }
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for (_, (key_vals, accs)) in groups {
        let mut row = key_vals;
        for (mi, m) in measures.iter().enumerate() {
            match phase {
                AggPhase::Partial => row.extend(accs[mi].acc_row(m)?),
                AggPhase::Single | AggPhase::Final => row.push(accs[mi].final_value(m)?),
            }
        }
        out.push(row);
    }
    Ok(out)
}
