//! The vectorized (columnar) kernel backend: typed buffer loops over whole
//! batches, the narrow-index contract at every materialization point.

mod agg;
mod expr;
mod probe;
mod sortk;

use std::sync::Arc;

use crate::columnar::{Batch, Column, SelectionVector};
use crate::config::GroupStrategy;
use crate::error::Result;
use crate::plan::{JoinType, SortKey, TypedExpr, TypedMeasure};

use super::join::JoinTable;
use super::{AggMode, KernelBackend};

pub struct VectorizedBackend;

impl KernelBackend for VectorizedBackend {
    fn name(&self) -> &'static str {
        "vectorized"
    }

    fn eval_expr(&self, e: &TypedExpr, b: &Batch) -> Result<Column> {
        expr::eval(e, b)
    }

    fn filter(&self, predicate: &Column) -> Result<SelectionVector> {
        Ok(expr::filter_indices(predicate))
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
        probe::probe(table, probe_keys, join_type, narrow_limit)
    }

    fn group_partial(
        &self,
        keys: &[Arc<Column>],
        measure_inputs: &[Option<Arc<Column>>],
        measures: &[TypedMeasure],
        strategy: GroupStrategy,
    ) -> Result<Batch> {
        agg::group_partial(keys, measure_inputs, measures, strategy)
    }

    fn group_merge(
        &self,
        acc: &Batch,
        key_count: usize,
        measures: &[TypedMeasure],
        mode: AggMode,
        strategy: GroupStrategy,
    ) -> Result<Batch> {
        agg::group_merge(acc, key_count, measures, mode, strategy)
    }

    fn reduce_partial(
        &self,
        measure_inputs: &[Option<Arc<Column>>],
        measures: &[TypedMeasure],
        row_count: usize,
    ) -> Result<Batch> {
        agg::reduce_partial(measure_inputs, measures, row_count)
    }

    fn reduce_merge(&self, acc: &Batch, measures: &[TypedMeasure], mode: AggMode) -> Result<Batch> {
        agg::reduce_merge(acc, measures, mode)
    }

    fn sort(&self, b: &Batch, keys: &[SortKey]) -> Result<SelectionVector> {
        Ok(sortk::sort_permutation(b, keys))
    }
}
