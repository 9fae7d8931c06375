//! Fragment execution: a fixed worker pool pulls (pipeline, task) pairs from
//! one FIFO queue; a pipeline's tasks enter the queue only when every
//! upstream sink has sealed. Operators are stateless; all cross-batch state
//! (join tables, accumulators, sort buffers, limit counters) lives here.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crate::buffer::{BufferManager, RegionKind, Reservation};
use crate::columnar::{
    concat_batches, gather, gather_padded, narrow_indices, Batch, Column, Table,
};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::kernels::{AggMode, JoinTable, KernelBackend};
use crate::plan::{AggPhase, JoinType};

use super::pipeline::{FragmentOutput, OpSpec, Pipeline, PipelineDag, SinkSpec, SourceSpec};
use super::profile::{Category, Profiler};

pub struct ExecEnv {
    pub config: EngineConfig,
    pub backend: Arc<dyn KernelBackend>,
    pub buffer: Arc<BufferManager>,
    pub profiler: Arc<Profiler>,
    /// Cached base tables visible to scans (the node-local partitions).
    pub base_tables: HashMap<String, Arc<Table>>,
    /// Received exchange intermediates, by exchange id.
    pub temp_tables: HashMap<u32, Arc<Table>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TaskStart { pipeline: usize, task: usize },
    TaskFinish { pipeline: usize, task: usize },
    Seal { pipeline: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct TaskEvent {
    pub at_ns: u64,
    pub kind: EventKind,
}

#[derive(Debug, Default, Clone)]
pub struct ExecStats {
    pub tasks_created: u64,
    pub tasks_finished: u64,
    pub tasks_cancelled: u64,
    pub events: Vec<TaskEvent>,
}

struct LimitGate {
    state: Mutex<(usize, u64)>, // (next task with the turn, rows taken)
    cv: Condvar,
}

impl LimitGate {
    fn new() -> LimitGate {
        LimitGate {
            state: Mutex::new((0, 0)),
            cv: Condvar::new(),
        }
    }

    /// Block until this task holds the claim turn (tasks claim limit quota
    /// strictly in task-id order, making "first n rows" deterministic).
    fn wait_turn(&self, task: usize, cancelled: &AtomicBool) -> Result<()> {
        let mut s = self.state.lock().unwrap();
        while s.0 != task {
            if cancelled.load(Ordering::SeqCst) {
                return Err(Error::Cancelled);
            }
            let (guard, _) = self.cv.wait_timeout(s, Duration::from_millis(5)).unwrap();
            s = guard;
        }
        Ok(())
    }

    fn claim(&self, rows: u64, n: u64) -> u64 {
        let mut s = self.state.lock().unwrap();
        let take = rows.min(n.saturating_sub(s.1));
        s.1 += take;
        take
    }

    fn advance(&self, task: usize) {
        let mut s = self.state.lock().unwrap();
        if s.0 == task {
            s.0 += 1;
            self.cv.notify_all();
        }
    }
}

enum SinkState {
    /// Raw buffered batches per task (join build, sort, fragment output).
    Buffer(Vec<Vec<Batch>>),
    /// Accumulator batches per task (aggregate sinks).
    AggPartial(Vec<Vec<Batch>>),
}

struct PipelineState {
    deps_remaining: AtomicUsize,
    tasks_total: AtomicUsize,
    tasks_done: AtomicUsize,
    morsels: Mutex<Vec<Batch>>,
    sink: Mutex<SinkState>,
    sealed: AtomicBool,
}

struct Shared<'a> {
    dag: &'a PipelineDag,
    env: &'a ExecEnv,
    states: Vec<PipelineState>,
    dependents: Vec<Vec<usize>>,
    queue: Mutex<VecDeque<(usize, usize)>>,
    queue_cv: Condvar,
    unsealed: AtomicUsize,
    cancelled: AtomicBool,
    error: Mutex<Option<Error>>,
    gates: Vec<LimitGate>,
    join_tables: Mutex<HashMap<usize, Arc<JoinTable>>>,
    breaker_out: Mutex<HashMap<usize, Arc<Vec<Batch>>>>,
    reservations: Mutex<Vec<Reservation>>,
    events: Mutex<Vec<TaskEvent>>,
    created: AtomicU64,
    finished: AtomicU64,
    cancelled_count: AtomicU64,
}

impl<'a> Shared<'a> {
    fn log(&self, kind: EventKind) {
        self.events.lock().unwrap().push(TaskEvent {
            at_ns: self.env.profiler.now_ns(),
            kind,
        });
    }

    fn fail(&self, e: Error) {
        {
            let mut err = self.error.lock().unwrap();
            if err.is_none() {
                *err = Some(e);
            }
        }
        self.cancelled.store(true, Ordering::SeqCst);
        let mut q = self.queue.lock().unwrap();
        self.cancelled_count
            .fetch_add(q.len() as u64, Ordering::SeqCst);
        q.clear();
        drop(q);
        self.queue_cv.notify_all();
        for g in &self.gates {
            g.cv.notify_all();
        }
    }

    fn reserve(&self, bytes: u64, owner: &str) -> Result<()> {
        let r = self
            .env
            .buffer
            .reserve(RegionKind::Processing, bytes.max(1), owner)?;
        self.reservations.lock().unwrap().push(r);
        Ok(())
    }
}

/// Run one fragment's pipeline DAG to completion and return the ordered
/// fragment output batches plus scheduling statistics.
pub fn execute_fragment(dag: &PipelineDag, env: &ExecEnv) -> Result<(Vec<Batch>, ExecStats)> {
    let states: Vec<PipelineState> = dag
        .pipelines
        .iter()
        .map(|p| PipelineState {
            deps_remaining: AtomicUsize::new(p.deps.len()),
            tasks_total: AtomicUsize::new(0),
            tasks_done: AtomicUsize::new(0),
            morsels: Mutex::new(Vec::new()),
            sink: Mutex::new(match &p.sink {
                SinkSpec::Aggregate { .. } => SinkState::AggPartial(Vec::new()),
                _ => SinkState::Buffer(Vec::new()),
            }),
            sealed: AtomicBool::new(false),
        })
        .collect();
    let mut dependents = vec![Vec::new(); dag.pipelines.len()];
    for p in &dag.pipelines {
        for &d in &p.deps {
            dependents[d].push(p.id);
        }
    }
    let shared = Shared {
        dag,
        env,
        states,
        dependents,
        queue: Mutex::new(VecDeque::new()),
        queue_cv: Condvar::new(),
        unsealed: AtomicUsize::new(dag.pipelines.len()),
        cancelled: AtomicBool::new(false),
        error: Mutex::new(None),
        gates: (0..dag.limit_gates).map(|_| LimitGate::new()).collect(),
        join_tables: Mutex::new(HashMap::new()),
        breaker_out: Mutex::new(HashMap::new()),
        reservations: Mutex::new(Vec::new()),
        events: Mutex::new(Vec::new()),
        created: AtomicU64::new(0),
        finished: AtomicU64::new(0),
        cancelled_count: AtomicU64::new(0),
    };

    // Pipelines with no dependencies are ready immediately.
    for p in &dag.pipelines {
        if p.deps.is_empty() {
            if let Err(e) = activate(&shared, p.id) {
                shared.fail(e);
                break;
            }
        }
    }

    let workers = env.config.workers.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| worker_loop(&shared));
        }
    });

    // Release operator-state memory now that the query is over.
    shared.reservations.lock().unwrap().clear();

    if let Some(e) = shared.error.lock().unwrap().take() {
        return Err(e);
    }

    let out_pipeline = match dag.output {
        FragmentOutput::Pipeline(p) | FragmentOutput::Breaker(p) => p,
    };
    let batches = shared
        .breaker_out
        .lock()
        .unwrap()
        .get(&out_pipeline)
        .map(|b| b.as_ref().clone())
        .unwrap_or_default();
    let stats = ExecStats {
        tasks_created: shared.created.load(Ordering::SeqCst),
        tasks_finished: shared.finished.load(Ordering::SeqCst),
        tasks_cancelled: shared.cancelled_count.load(Ordering::SeqCst),
        events: shared.events.lock().unwrap().clone(),
    };
    Ok((batches, stats))
}

/// Compute a ready pipeline's morsels and enqueue its tasks (or seal it
/// immediately when the source is empty).
fn activate(shared: &Shared<'_>, pid: usize) -> Result<()> {
    let pl = &shared.dag.pipelines[pid];
    let morsels: Vec<Batch> = match &pl.source {
        SourceSpec::Table { name, columns, .. } => {
            let table = shared
                .env
                .base_tables
                .get(name)
                .ok_or_else(|| Error::MissingTable(name.clone()))?;
            table
                .batches
                .iter()
                .filter(|b| b.rows() > 0)
                .map(|b| Batch::new(columns.iter().map(|&c| b.column(c).clone()).collect()))
                .collect()
        }
        SourceSpec::ExchangeRecv { exchange_id } => {
            let table = shared.env.temp_tables.get(exchange_id).ok_or_else(|| {
                Error::UnknownEntry {
                    query: 0,
                    exchange: *exchange_id,
                }
            })?;
            table
                .batches
                .iter()
                .filter(|b| b.rows() > 0)
                .map(|b| b.as_ref().clone())
                .collect()
        }
        SourceSpec::Breaker { pipeline } => shared
            .breaker_out
            .lock()
            .unwrap()
            .get(pipeline)
            .map(|b| b.as_ref().clone())
            .unwrap_or_default()
            .into_iter()
            .filter(|b| b.rows() > 0)
            .collect(),
    };

    let state = &shared.states[pid];
    let n = morsels.len();
    state.tasks_total.store(n, Ordering::SeqCst);
    match &mut *state.sink.lock().unwrap() {
        SinkState::Buffer(v) => v.resize_with(n, Vec::new),
        SinkState::AggPartial(v) => v.resize_with(n, Vec::new),
    }
    *state.morsels.lock().unwrap() = morsels;

    if n == 0 {
        seal(shared, pid)?;
        return Ok(());
    }
    shared.created.fetch_add(n as u64, Ordering::SeqCst);
    let mut q = shared.queue.lock().unwrap();
    for t in 0..n {
        q.push_back((pid, t));
    }
    drop(q);
    shared.queue_cv.notify_all();
    Ok(())
}

fn worker_loop(shared: &Shared<'_>) {
    loop {
        let task = {
            let mut q = shared.queue.lock().unwrap();
            loop {
                if let Some(t) = q.pop_front() {
                    break Some(t);
                }
                if shared.cancelled.load(Ordering::SeqCst)
                    || shared.unsealed.load(Ordering::SeqCst) == 0
                {
                    break None;
                }
                let (guard, _) = shared
                    .queue_cv
                    .wait_timeout(q, Duration::from_millis(5))
                    .unwrap();
                q = guard;
            }
        };
        let Some((pid, tid)) = task else { return };

        shared.log(EventKind::TaskStart {
            pipeline: pid,
            task: tid,
        });
        let result = run_task(shared, pid, tid);
        shared.log(EventKind::TaskFinish {
            pipeline: pid,
            task: tid,
        });
        // The limit turn advances exactly once per task, error or not,
        // in task order.
        for op in &shared.dag.pipelines[pid].ops {
            if let OpSpec::Limit { gate, .. } = op {
                shared.gates[*gate].advance(tid);
            }
        }
        match result {
            Ok(()) => {
                shared.finished.fetch_add(1, Ordering::SeqCst);
                let state = &shared.states[pid];
                let done = state.tasks_done.fetch_add(1, Ordering::SeqCst) + 1;
                if done == state.tasks_total.load(Ordering::SeqCst) {
                    if let Err(e) = seal(shared, pid) {
                        shared.fail(e);
                    }
                }
            }
            Err(e) => {
                shared.cancelled_count.fetch_add(1, Ordering::SeqCst);
                shared.fail(e);
            }
        }
    }
}

fn run_task(shared: &Shared<'_>, pid: usize, tid: usize) -> Result<()> {
    let pl = &shared.dag.pipelines[pid];
    let input = shared.states[pid].morsels.lock().unwrap()[tid].clone();
    let mut wave = vec![input];
    for op in &pl.ops {
        if shared.cancelled.load(Ordering::SeqCst) {
            return Err(Error::Cancelled);
        }
        let mut next = Vec::new();
        for batch in wave {
            next.extend(apply_op(shared, op, batch, tid)?);
        }
        wave = next;
    }
    sink_consume(shared, pl, tid, wave)
}

fn apply_op(shared: &Shared<'_>, op: &OpSpec, batch: Batch, tid: usize) -> Result<Vec<Batch>> {
    let env = shared.env;
    let limit_rows = env.config.batch_size_rows;
    match op {
        OpSpec::Filter { node_id, predicate } => {
            env.profiler.record(Category::Filter, *node_id, || {
                let pred = env.backend.eval_expr(predicate, &batch)?;
                let sel = env.backend.filter(&pred)?;
                let narrow = narrow_indices(&sel, env.config.narrow_index_limit)?;
                let cols: Vec<Column> = batch
                    .columns()
                    .iter()
                    .map(|c| gather(c, &narrow))
                    .collect::<Result<_>>()?;
                Ok(vec![Batch::from_columns(cols)])
            })
        }
        OpSpec::Project { node_id, exprs } => {
            env.profiler.record(Category::Other, *node_id, || {
                let cols: Vec<Column> = exprs
                    .iter()
                    .map(|e| env.backend.eval_expr(e, &batch))
                    .collect::<Result<_>>()?;
                if cols.is_empty() {
                    return Ok(vec![Batch::empty(&[])]);
                }
                Ok(vec![Batch::from_columns(cols)])
            })
        }
        OpSpec::JoinProbe {
            node_id,
            join_type,
            probe_key_ordinals,
            build_pipeline,
            ..
        } => {
            let table = shared
                .join_tables
                .lock()
                .unwrap()
                .get(build_pipeline)
                .cloned()
                .expect("probe pipeline scheduled before build sealed");
            env.profiler.record(Category::Join, *node_id, || {
                let probe_keys: Vec<Arc<Column>> = probe_key_ordinals
                    .iter()
                    .map(|&k| batch.column(k).clone())
                    .collect();
                let (bsel, psel) = env.backend.join_probe(
                    &table,
                    &probe_keys,
                    *join_type,
                    env.config.narrow_index_limit,
                )?;
                let pnarrow = narrow_indices(&psel, env.config.narrow_index_limit)?;
                let mut cols: Vec<Column> = batch
                    .columns()
                    .iter()
                    .map(|c| gather(c, &pnarrow))
                    .collect::<Result<_>>()?;
                if matches!(join_type, JoinType::Inner | JoinType::Left) {
                    let bnarrow = narrow_indices(&bsel, env.config.narrow_index_limit)?;
                    for c in table.build.columns() {
                        cols.push(gather_padded(c, &bnarrow)?);
                    }
                }
                let out = Batch::from_columns(cols);
                Ok(out.chunked(limit_rows))
            })
        }
        OpSpec::Limit { n, gate, .. } => {
            let gate = &shared.gates[*gate];
            gate.wait_turn(tid, &shared.cancelled)?;
            let take = gate.claim(batch.rows() as u64, *n) as usize;
            if take == batch.rows() {
                Ok(vec![batch])
            } else if take == 0 {
                Ok(vec![])
            } else {
                Ok(vec![batch.slice(0, take)])
            }
        }
    }
}

fn sink_consume(shared: &Shared<'_>, pl: &Pipeline, tid: usize, wave: Vec<Batch>) -> Result<()> {
    let env = shared.env;
    match &pl.sink {
        SinkSpec::FragmentOut { .. } | SinkSpec::JoinBuild { .. } | SinkSpec::Sort { .. } => {
            let mut sink = shared.states[pl.id].sink.lock().unwrap();
            match &mut *sink {
                SinkState::Buffer(per_task) => per_task[tid] = wave,
                _ => unreachable!(),
            }
            Ok(())
        }
        SinkSpec::Aggregate {
            node_id,
            phase,
            group_keys,
            measures,
            strategy,
            ..
        } => {
            let category = if group_keys.is_empty() {
                Category::Aggregation
            } else {
                Category::GroupBy
            };
            let mut accs = Vec::with_capacity(wave.len());
            for batch in &wave {
                let acc = match phase {
                    // Final-phase input is already in accumulator layout.
                    AggPhase::Final => batch.clone(),
                    AggPhase::Single | AggPhase::Partial => {
                        env.profiler.record(category, *node_id, || {
                            let inputs: Vec<Option<Arc<Column>>> = measures
                                .iter()
                                .map(|m| {
                                    m.input
                                        .as_ref()
                                        .map(|e| env.backend.eval_expr(e, batch).map(Arc::new))
                                        .transpose()
                                })
                                .collect::<Result<_>>()?;
                            if group_keys.is_empty() {
                                env.backend.reduce_partial(&inputs, measures, batch.rows())
                            } else {
                                let keys: Vec<Arc<Column>> = group_keys
                                    .iter()
                                    .map(|&k| batch.column(k).clone())
                                    .collect();
                                env.backend.group_partial(&keys, &inputs, measures, *strategy)
                            }
                        })?
                    }
                };
                accs.push(acc);
            }
            let mut sink = shared.states[pl.id].sink.lock().unwrap();
            match &mut *sink {
                SinkState::AggPartial(per_task) => per_task[tid] = accs,
                _ => unreachable!(),
            }
            Ok(())
        }
    }
}

/// Seal a pipeline's sink: task-ordered merge of buffered state into the
/// breaker output, then release dependents into the queue. Runs exactly once
/// per pipeline.
fn seal(shared: &Shared<'_>, pid: usize) -> Result<()> {
    let state = &shared.states[pid];
    if state.sealed.swap(true, Ordering::SeqCst) {
        return Ok(());
    }
    let pl = &shared.dag.pipelines[pid];
    let env = shared.env;

    let buffered: Vec<Vec<Batch>> = {
        let mut sink = state.sink.lock().unwrap();
        match &mut *sink {
            SinkState::Buffer(v) | SinkState::AggPartial(v) => std::mem::take(v),
        }
    };
    let flat: Vec<Batch> = buffered.into_iter().flatten().collect();

    match &pl.sink {
        SinkSpec::JoinBuild {
            node_id,
            key_ordinals,
            input_schema,
        } => {
            let build_batch = concat_batches(input_schema, &flat)?;
            let table = env.profiler.record(Category::Join, *node_id, || {
                env.backend.join_build(build_batch, key_ordinals)
            })?;
            shared.reserve(table.byte_size(), &format!("join_build:{node_id}"))?;
            shared
                .join_tables
                .lock()
                .unwrap()
                .insert(pid, Arc::new(table));
        }
        SinkSpec::Aggregate {
            node_id,
            phase,
            group_keys,
            measures,
            strategy,
            acc_schema,
            ..
        } => {
            let category = if group_keys.is_empty() {
                Category::Aggregation
            } else {
                Category::GroupBy
            };
            let acc = concat_batches(acc_schema, &flat)?;
            let mode = match phase {
                AggPhase::Single | AggPhase::Final => AggMode::Final,
                AggPhase::Partial => AggMode::MergePartial,
            };
            let out = env.profiler.record(category, *node_id, || {
                if group_keys.is_empty() {
                    env.backend.reduce_merge(&acc, measures, mode)
                } else {
                    env.backend
                        .group_merge(&acc, group_keys.len(), measures, mode, *strategy)
                }
            })?;
            shared.reserve(out.byte_size(), &format!("aggregate:{node_id}"))?;
            shared
                .breaker_out
                .lock()
                .unwrap()
                .insert(pid, Arc::new(out.chunked(env.config.batch_size_rows)));
        }
        SinkSpec::Sort {
            node_id,
            keys,
            schema,
        } => {
            let input = concat_batches(schema, &flat)?;
            shared.reserve(input.byte_size(), &format!("sort:{node_id}"))?;
            let out = env.profiler.record(Category::OrderBy, *node_id, || {
                let perm = env.backend.sort(&input, keys)?;
                let narrow = narrow_indices(&perm, env.config.narrow_index_limit)?;
                let cols: Vec<Column> = input
                    .columns()
                    .iter()
                    .map(|c| gather(c, &narrow))
                    .collect::<Result<_>>()?;
                Ok(Batch::from_columns(cols))
            })?;
            shared
                .breaker_out
                .lock()
                .unwrap()
                .insert(pid, Arc::new(out.chunked(env.config.batch_size_rows)));
        }
        SinkSpec::FragmentOut { schema } => {
            let out = if flat.is_empty() {
                vec![Batch::empty(schema)]
            } else {
                flat
            };
            let bytes: u64 = out.iter().map(|b| b.byte_size()).sum();
            shared.reserve(bytes, "fragment_out")?;
            shared.breaker_out.lock().unwrap().insert(pid, Arc::new(out));
        }
    }

    shared.log(EventKind::Seal { pipeline: pid });
    shared.unsealed.fetch_sub(1, Ordering::SeqCst);
    shared.queue_cv.notify_all();

    for &dep in &shared.dependents[pid] {
        let remaining = shared.states[dep]
            .deps_remaining
            .fetch_sub(1, Ordering::SeqCst)
            - 1;
        if remaining == 0 {
            activate(shared, dep)?;
        }
    }
    Ok(())
}
