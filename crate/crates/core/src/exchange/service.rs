//! Exchange patterns over a transport: hash partitioning for shuffle,
//! replication for broadcast/multicast, single-target sorted streams for
//! merge. Senders keep a bounded in-flight window per (target, exchange)
//! stream, refilled by credit messages from the receiving runtime.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::columnar::{gather, serialize_batch, Batch, Column, ColumnBuilder, SelectionVector};
use crate::error::{Error, Result};
use crate::kernels::JoinTable;
use crate::plan::{ExchangePattern, SortKey};
use crate::types::Datum;

use super::frame::ExchangeFrame;
use super::transport::{Transport, WireMessage};

pub const DEFAULT_INFLIGHT_WINDOW: usize = 8;

/// Outstanding-frame accounting per (target node, exchange id) stream.
#[derive(Default)]
pub struct CreditBook {
    inflight: Mutex<HashMap<(u16, u32), usize>>,
    cv: Condvar,
}

impl CreditBook {
    pub fn new() -> Arc<CreditBook> {
        Arc::new(CreditBook::default())
    }

    /// A credit arrived from `target` for `exchange`: one frame left its
    /// in-flight window.
    pub fn on_credit(&self, target: u16, exchange: u32) {
        let mut inflight = self.inflight.lock().unwrap();
        if let Some(v) = inflight.get_mut(&(target, exchange)) {
            *v = v.saturating_sub(1);
        }
        self.cv.notify_all();
    }

    fn acquire(&self, target: u16, exchange: u32, window: usize, timeout: Duration) -> Result<()> {
        let deadline = Instant::now() + timeout;
        let mut inflight = self.inflight.lock().unwrap();
        loop {
            let slot = inflight.entry((target, exchange)).or_insert(0);
            if *slot < window {
                *slot += 1;
                return Ok(());
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::BackpressureTimeout { exchange, target });
            }
            let (guard, _) = self.cv.wait_timeout(inbox_wait(inflight), deadline - now).unwrap();
            inflight = guard;
        }
    }
}

// Readability shim: the guard is just handed back to wait_timeout.
fn inbox_wait<T>(guard: T) -> T {
    guard
}

#[derive(Debug, Clone)]
pub struct SendPlan {
    pub query: u64,
    pub exchange: u32,
    pub producer: u16,
    pub window: usize,
    pub timeout: Duration,
}

/// Split a batch into `fanout` outputs by key hash; row r goes to
/// partition hash(keys(r)) mod fanout. Deterministic across nodes.
pub fn partition_batch(batch: &Batch, key_ordinals: &[usize], fanout: usize) -> Vec<Batch> {
    assert!(fanout >= 1);
    if fanout == 1 {
        return vec![batch.clone()];
    }
    let keys: Vec<Arc<Column>> = key_ordinals
        .iter()
        .map(|&k| batch.column(k).clone())
        .collect();
    let mut selections: Vec<Vec<u64>> = vec![Vec::new(); fanout];
    for row in 0..batch.rows() {
        let h = crate::kernels::row_hash_of(&keys, row);
        selections[(h % fanout as u64) as usize].push(row as u64);
    }
    selections
        .into_iter()
        .map(|sel| {
            let sv = SelectionVector::Wide(sel);
            let cols: Vec<Column> = batch
                .columns()
                .iter()
                .map(|c| gather(c, &sv).expect("partition indices in range"))
                .collect();
            Batch::from_columns(cols)
        })
        .collect()
}

/// Send a fragment's ordered output through one exchange edge. Streams are
/// per (target, exchange): contiguous sequences from 0, terminated by an
/// end-of-stream frame.
pub fn exchange_send(
    transport: &dyn Transport,
    credits: &CreditBook,
    plan: &SendPlan,
    pattern: ExchangePattern,
    targets: &[u16],
    key_ordinals: &[usize],
    batches: &[Batch],
) -> Result<()> {
    let mut sequences: HashMap<u16, u32> = targets.iter().map(|&t| (t, 0)).collect();
    let mut send_to = |target: u16, batch: &Batch| -> Result<()> {
        if batch.rows() == 0 {
            return Ok(());
        }
        let seq = sequences.get_mut(&target).expect("target registered");
        let partition = targets.iter().position(|&t| t == target).unwrap() as u16;
        let frame = ExchangeFrame::data(
            plan.query,
            plan.exchange,
            plan.producer,
            partition,
            *seq,
            serialize_batch(batch),
        );
        *seq += 1;
        credits.acquire(target, plan.exchange, plan.window, plan.timeout)?;
        transport.send(target, &WireMessage::Frame(frame))
    };

    match pattern {
        ExchangePattern::Broadcast | ExchangePattern::Multicast => {
            for batch in batches {
                for &t in targets {
                    send_to(t, batch)?;
                }
            }
        }
        ExchangePattern::Shuffle => {
            for batch in batches {
                let parts = partition_batch(batch, key_ordinals, targets.len());
                for (i, part) in parts.iter().enumerate() {
                    send_to(targets[i], part)?;
                }
            }
        }
        ExchangePattern::Merge => {
            let target = targets[0];
            for batch in batches {
                send_to(target, batch)?;
            }
        }
    }

    for &t in targets {
        let seq = sequences[&t];
        let partition = targets.iter().position(|&x| x == t).unwrap() as u16;
        let eos =
            ExchangeFrame::end_of_stream(plan.query, plan.exchange, plan.producer, partition, seq);
        credits.acquire(t, plan.exchange, plan.window, plan.timeout)?;
        transport.send(t, &WireMessage::Frame(eos))?;
    }
    Ok(())
}

/// Collect mode: concatenation in (producer, sequence) order. The inbox
/// already orders streams by producer.
pub fn assemble_collect(streams: Vec<(u16, Vec<Batch>)>) -> Vec<Batch> {
    streams.into_iter().flat_map(|(_, b)| b).collect()
}

/// Merge mode: k-way merge of per-producer sorted runs, preserving the
/// global sort order; ties resolve to the lower producer for determinism.
pub fn assemble_merge(
    streams: Vec<(u16, Vec<Batch>)>,
    sort_keys: &[SortKey],
    schema: &[crate::types::DataType],
    batch_size: usize,
) -> Vec<Batch> {
    struct Cursor {
        batches: Vec<Batch>,
        batch: usize,
        row: usize,
    }
    impl Cursor {
        fn current(&self) -> Option<(usize, usize)> {
            let mut b = self.batch;
            let mut r = self.row;
            while b < self.batches.len() {
                if r < self.batches[b].rows() {
                    return Some((b, r));
                }
                b += 1;
                r = 0;
            }
            None
        }
        fn advance(&mut self) {
            let (b, r) = self.current().expect("advance past end");
            self.batch = b;
            self.row = r + 1;
        }
        fn row_at(&self, pos: (usize, usize)) -> Vec<Datum> {
            self.batches[pos.0].row(pos.1)
        }
    }

    let mut cursors: Vec<Cursor> = streams
        .into_iter()
        .map(|(_, batches)| Cursor {
            batches,
            batch: 0,
            row: 0,
        })
        .collect();

    let mut out = Vec::new();
    let mut builders: Vec<ColumnBuilder> = schema.iter().map(|t| ColumnBuilder::new(*t)).collect();
    let mut pending = 0usize;
    loop {
        let mut best: Option<(usize, Vec<Datum>)> = None;
        for (i, c) in cursors.iter().enumerate() {
            let Some(pos) = c.current() else { continue };
            let row = c.row_at(pos);
            let better = match &best {
                None => true,
                Some((_, best_row)) => {
                    crate::oracle::row_cmp(&row, best_row, sort_keys) == std::cmp::Ordering::Less
                }
            };
            if better {
                best = Some((i, row));
            }
        }
        let Some((i, row)) = best else { break };
        cursors[i].advance();
        for (b, d) in builders.iter_mut().zip(row) {
            b.push(d);
        }
        pending += 1;
        if pending == batch_size {
            let cols: Vec<Column> = std::mem::replace(
                &mut builders,
                schema.iter().map(|t| ColumnBuilder::new(*t)).collect(),
            )
            .into_iter()
            .map(|b| b.finish())
            .collect();
            out.push(Batch::from_columns(cols));
            pending = 0;
        }
    }
    if pending > 0 || out.is_empty() {
        out.push(Batch::from_columns(
            builders.into_iter().map(|b| b.finish()).collect(),
        ));
    }
    out
}

/// Key hash of one row, shared with the join/groupby kernels so shuffle
/// placement and join bucketing agree across nodes.
pub fn row_hash(keys: &[Arc<Column>], row: usize) -> u64 {
    let _ = JoinTable::build; // same hash family; see kernels::row_hash_of
    crate::kernels::row_hash_of(keys, row)
}
