//! The swappable operator backend. Every kernel is a pure function over
//! immutable inputs; the executor owns all cross-batch state. Exactly one
//! backend is active per engine instance, selected by the `backend` config
//! key; re-pointing the registry at the reference backend must not change
//! any query result.

mod join;
pub mod reference;
pub mod vector;

use std::collections::HashMap;
use std::sync::Arc;

use crate::columnar::{Batch, Column, SelectionVector};
use crate::config::GroupStrategy;
use crate::error::{Error, Result};
use crate::plan::{JoinType, SortKey, TypedExpr, TypedMeasure};

pub use join::JoinTable;

/// Aggregation modes the executor composes plan phases from.
///
/// `Partial` turns raw rows into accumulator rows; `MergePartial` merges
/// accumulator rows keeping the accumulator layout; `Final` merges and
/// finishes (avg becomes sum/count). Plan phases map as: single =
/// Partial then Final; partial = Partial then MergePartial; final =
/// MergePartial then Final.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggMode {
    MergePartial,
    Final,
}

pub trait KernelBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Evaluate a typed expression over a batch; length equals the batch
    /// row count. Three-valued null semantics; division by zero is null.
    fn eval_expr(&self, e: &TypedExpr, b: &Batch) -> Result<Column>;

    /// Ascending indices of rows where the predicate is true (null excluded).
    fn filter(&self, predicate: &Column) -> Result<SelectionVector>;

    /// Build the hash table over the build side's key columns.
    fn join_build(&self, build: Batch, key_ordinals: &[usize]) -> Result<JoinTable>;

    /// Probe. Returns (build indices, probe indices) in probe-major order;
    /// the build side uses the null-pad sentinel for unmatched left rows.
    /// Emitted indices past `narrow_limit` raise IndexOverflow.
    fn join_probe(
        &self,
        table: &JoinTable,
        probe_keys: &[Arc<Column>],
        join_type: JoinType,
        narrow_limit: u64,
    ) -> Result<(SelectionVector, SelectionVector)>;

    /// Grouped aggregation over raw rows: one accumulator row per distinct
    /// key combination (nulls form their own group). Output layout:
    /// group keys, then each measure's accumulator columns.
    fn group_partial(
        &self,
        keys: &[Arc<Column>],
        measure_inputs: &[Option<Arc<Column>>],
        measures: &[TypedMeasure],
        strategy: GroupStrategy,
    ) -> Result<Batch>;

    /// Merge accumulator rows (layout: keys then accumulators). With
    /// `AggMode::Final` the avg measures finish into sum/count quotients.
    fn group_merge(
        &self,
        acc: &Batch,
        key_count: usize,
        measures: &[TypedMeasure],
        mode: AggMode,
        strategy: GroupStrategy,
    ) -> Result<Batch>;

    /// Keyless aggregation over raw rows; exactly one accumulator row, even
    /// for empty input.
    fn reduce_partial(
        &self,
        measure_inputs: &[Option<Arc<Column>>],
        measures: &[TypedMeasure],
        row_count: usize,
    ) -> Result<Batch>;

    /// Merge keyless accumulator rows into one row.
    fn reduce_merge(&self, acc: &Batch, measures: &[TypedMeasure], mode: AggMode) -> Result<Batch>;

    /// Stable sort permutation (equal keys keep input order), wide indices.
    fn sort(&self, b: &Batch, keys: &[SortKey]) -> Result<SelectionVector>;
}

/// Named backend registry; engines resolve their configured backend here.
pub struct BackendRegistry {
    backends: HashMap<&'static str, Arc<dyn KernelBackend>>,
}

impl BackendRegistry {
    pub fn with_defaults() -> BackendRegistry {
        let mut backends: HashMap<&'static str, Arc<dyn KernelBackend>> = HashMap::new();
        let v: Arc<dyn KernelBackend> = Arc::new(vector::VectorizedBackend);
        let r: Arc<dyn KernelBackend> = Arc::new(reference::ReferenceBackend);
        backends.insert(v.name(), v);
        backends.insert(r.name(), r);
        BackendRegistry { backends }
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn KernelBackend>> {
        self.backends
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnsupportedFeature(format!("unknown kernel backend {name}")))
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut n: Vec<_> = self.backends.keys().copied().collect();
        n.sort();
        n
    }
}

/// Spec-level grouped aggregation in one call, used by tests and the
/// reference path: evaluates measure inputs, accumulates, merges, finishes
/// per the plan-level phase.
pub fn group_by_once(
    backend: &dyn KernelBackend,
    batch: &Batch,
    group_keys: &[usize],
    measures: &[TypedMeasure],
    phase: crate::plan::AggPhase,
    strategy: GroupStrategy,
) -> Result<Batch> {
    use crate::plan::AggPhase;
    let key_cols: Vec<Arc<Column>> = group_keys.iter().map(|&k| batch.column(k).clone()).collect();
    match phase {
        AggPhase::Single | AggPhase::Partial => {
            let inputs: Vec<Option<Arc<Column>>> = measures
                .iter()
                .map(|m| {
                    m.input
                        .as_ref()
                        .map(|e| backend.eval_expr(e, batch).map(Arc::new))
                        .transpose()
                })
                .collect::<Result<_>>()?;
            let partial = backend.group_partial(&key_cols, &inputs, measures, strategy)?;
            let mode = if phase == AggPhase::Single {
                AggMode::Final
            } else {
                AggMode::MergePartial
            };
            backend.group_merge(&partial, group_keys.len(), measures, mode, strategy)
        }
        AggPhase::Final => {
            backend.group_merge(batch, group_keys.len(), measures, AggMode::Final, strategy)
        }
    }
}
