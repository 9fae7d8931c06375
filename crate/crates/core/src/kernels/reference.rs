//! Reference kernel backend: the oracle's row-at-a-time primitives behind
//! the kernel interface. Swapping the registry to this backend must leave
//! every query result unchanged.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::columnar::{Batch, Column, ColumnBuilder, SelectionVector, NULL_INDEX};
use crate::config::GroupStrategy;
use crate::error::{Error, Result};
use crate::oracle::{eval_datum, RowAcc};
use crate::plan::{JoinType, SortKey, TypedExpr, TypedMeasure};
use crate::types::{append_canonical_bytes, datum_cmp, Datum};

use super::join::JoinTable;
use super::{AggMode, KernelBackend};

pub struct ReferenceBackend;

fn batch_row(b: &Batch, row: usize) -> Vec<Datum> {
    b.row(row)
}

fn key_bytes(row: &[Datum]) -> Vec<u8> {
    let mut buf = Vec::new();
    for d in row {
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

impl KernelBackend for ReferenceBackend {
    fn name(&self) -> &'static str {
        "reference"
    }

    fn eval_expr(&self, e: &TypedExpr, b: &Batch) -> Result<Column> {
        let mut builder = ColumnBuilder::new(e.dtype);
        for row in 0..b.rows() {
            builder.push(eval_datum(e, &batch_row(b, row)));
        }
        Ok(builder.finish())
    }

    fn filter(&self, predicate: &Column) -> Result<SelectionVector> {
        let mut out = Vec::new();
        for i in 0..predicate.len() {
            if predicate.datum(i).as_bool() == Some(true) {
                out.push(i as u64);
            }
        }
        Ok(SelectionVector::Wide(out))
    }

    fn join_build(&self, build: Batch, key_ordinals: &[usize]) -> Result<JoinTable> {
        Ok(JoinTable::build(build, key_ordinals))
    }

    fn join_probe(
        &self,
        table: &JoinTable,
        probe_keys: &[Arc<Column>],
        join_type: JoinType,
        narrow_limit: u64,
    ) -> Result<(SelectionVector, SelectionVector)> {
        let narrow_limit = narrow_limit.min(i32::MAX as u64);
        let rows = probe_keys.first().map_or(0, |c| c.len());
        let mut build_out = Vec::new();
        let mut probe_out = Vec::new();
        let check = |ix: u64| -> Result<u64> {
            if ix != NULL_INDEX && ix > narrow_limit {
                return Err(Error::IndexOverflow {
                    index: ix,
                    limit: narrow_limit,
                });
            }
            Ok(ix)
        };
        // Nested loop over the sealed build batch, ignoring the hash index.
        for probe_row in 0..rows {
            let probe_vals: Vec<Datum> = probe_keys.iter().map(|c| c.datum(probe_row)).collect();
            let null_key = probe_vals.iter().any(|d| d.is_null());
            let mut matched = false;
            if !null_key {
                for build_row in 0..table.rows() {
                    if table.is_null_keyed(build_row) {
                        continue;
                    }
                    let eq = table
                        .key_columns
                        .iter()
                        .zip(&probe_vals)
                        .all(|(c, p)| {
                            c.is_valid(build_row)
                                && datum_cmp(&c.datum(build_row), p) == std::cmp::Ordering::Equal
                        });
                    if !eq {
                        continue;
                    }
                    matched = true;
                    match join_type {
                        JoinType::Inner | JoinType::Left => {
                            build_out.push(check(build_row as u64)?);
                            probe_out.push(check(probe_row as u64)?);
                        }
                        JoinType::Semi => {
                            probe_out.push(check(probe_row as u64)?);
                            break;
                        }
                        JoinType::Anti => break,
                    }
                }
            }
            if !matched {
                match join_type {
                    JoinType::Left => {
                        build_out.push(NULL_INDEX);
                        probe_out.push(check(probe_row as u64)?);
                    }
                    JoinType::Anti => probe_out.push(check(probe_row as u64)?),
                    _ => {}
                }
            }
        }
        Ok((
            SelectionVector::Wide(build_out),
            SelectionVector::Wide(probe_out),
        ))
    }

    fn group_partial(
        &self,
        keys: &[Arc<Column>],
        measure_inputs: &[Option<Arc<Column>>],
        measures: &[TypedMeasure],
        _strategy: GroupStrategy,
    ) -> Result<Batch> {
        let rows = keys.first().map_or(0, |c| c.len());
        let mut groups: BTreeMap<Vec<u8>, (Vec<Datum>, Vec<RowAcc>)> = BTreeMap::new();
        for row in 0..rows {
            let key_vals: Vec<Datum> = keys.iter().map(|c| c.datum(row)).collect();
            let entry = groups.entry(key_bytes(&key_vals)).or_insert_with(|| {
                (key_vals.clone(), measures.iter().map(|_| RowAcc::new()).collect())
            });
            for (mi, m) in measures.iter().enumerate() {
                let value = measure_inputs[mi].as_ref().map(|c| c.datum(row));
                entry.1[mi].update(m.agg, value.as_ref())?;
            }
        }
        emit(groups, keys.iter().map(|c| *c.dtype()).collect(), measures, false)
    }

    fn group_merge(
        &self,
        acc: &Batch,
        key_count: usize,
        measures: &[TypedMeasure],
        mode: AggMode,
        _strategy: GroupStrategy,
    ) -> Result<Batch> {
        let mut groups: BTreeMap<Vec<u8>, (Vec<Datum>, Vec<RowAcc>)> = BTreeMap::new();
        let mut offsets = Vec::new();
        let mut pos = key_count;
        for m in measures {
            offsets.push(pos);
            pos += m.acc_width();
        }
        for row in 0..acc.rows() {
            let full = batch_row(acc, row);
            let key_vals: Vec<Datum> = full[..key_count].to_vec();
            let entry = groups.entry(key_bytes(&key_vals)).or_insert_with(|| {
                (key_vals.clone(), measures.iter().map(|_| RowAcc::new()).collect())
            });
            for (mi, m) in measures.iter().enumerate() {
                entry.1[mi].merge_acc(m.agg, &full[offsets[mi]..offsets[mi] + m.acc_width()])?;
            }
        }
        emit(
            groups,
            acc.schema()[..key_count].to_vec(),
            measures,
            mode == AggMode::Final,
        )
    }

    fn reduce_partial(
        &self,
        measure_inputs: &[Option<Arc<Column>>],
        measures: &[TypedMeasure],
        row_count: usize,
    ) -> Result<Batch> {
        let mut accs: Vec<RowAcc> = measures.iter().map(|_| RowAcc::new()).collect();
        for row in 0..row_count {
            for (mi, m) in measures.iter().enumerate() {
                let value = measure_inputs[mi].as_ref().map(|c| c.datum(row));
                accs[mi].update(m.agg, value.as_ref())?;
            }
        }
        emit_one(&accs, measures, false)
    }

    fn reduce_merge(&self, acc: &Batch, measures: &[TypedMeasure], mode: AggMode) -> Result<Batch> {
        let mut accs: Vec<RowAcc> = measures.iter().map(|_| RowAcc::new()).collect();
        let mut offsets = Vec::new();
        let mut pos = 0;
        for m in measures {
            offsets.push(pos);
            pos += m.acc_width();
        }
        for row in 0..acc.rows() {
            let full = batch_row(acc, row);
            for (mi, m) in measures.iter().enumerate() {
                accs[mi].merge_acc(m.agg, &full[offsets[mi]..offsets[mi] + m.acc_width()])?;
            }
        }
        emit_one(&accs, measures, mode == AggMode::Final)
    }

    fn sort(&self, b: &Batch, keys: &[SortKey]) -> Result<SelectionVector> {
        let rows: Vec<Vec<Datum>> = (0..b.rows()).map(|r| batch_row(b, r)).collect();
        let mut idx: Vec<u64> = (0..b.rows() as u64).collect();
        idx.sort_by(|&a, &b| {
            crate::oracle::row_cmp(&rows[a as usize], &rows[b as usize], keys)
        });
        Ok(SelectionVector::Wide(idx))
    }
}

fn emit(
    groups: BTreeMap<Vec<u8>, (Vec<Datum>, Vec<RowAcc>)>,
    key_types: Vec<crate::types::DataType>,
    measures: &[TypedMeasure],
    finish: bool,
) -> Result<Batch> {
    let mut builders: Vec<ColumnBuilder> =
        key_types.iter().map(|t| ColumnBuilder::new(*t)).collect();
    for m in measures {
        if finish {
            builders.push(ColumnBuilder::new(m.result_type));
        } else {
            for t in &m.acc_types {
                builders.push(ColumnBuilder::new(*t));
            }
        }
    }
    for (_, (key_vals, accs)) in groups {
        let mut b = 0;
        for d in key_vals {
            builders[b].push(d);
            b += 1;
        }
        for (mi, m) in measures.iter().enumerate() {
            if finish {
                builders[b].push(accs[mi].final_value(m)?);
                b += 1;
            } else {
                for d in accs[mi].acc_row(m)? {
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

fn emit_one(accs: &[RowAcc], measures: &[TypedMeasure], finish: bool) -> Result<Batch> {
    let mut builders = Vec::new();
    for (mi, m) in measures.iter().enumerate() {
        if finish {
            let mut b = ColumnBuilder::new(m.result_type);
            b.push(accs[mi].final_value(m)?);
            builders.push(b);
        } else {
            for (d, t) in accs[mi].acc_row(m)?.into_iter().zip(&m.acc_types) {
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
