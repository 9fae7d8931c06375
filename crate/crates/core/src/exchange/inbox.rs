//! Inbound frame assembly: per-(query, exchange, producer) streams with
//! contiguous sequence checking. Buffered frame payloads are charged to the
//! processing region until the consumer takes the streams.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::buffer::{BufferManager, RegionKind, Reservation};
use crate::columnar::{deserialize_batch, Batch};
use crate::error::{Error, Result};

use super::frame::ExchangeFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct StreamKey {
    query: u64,
    exchange: u32,
    producer: u16,
}

struct StreamBuf {
    next_seq: u32,
    batches: Vec<Batch>,
    eos: bool,
    reservations: Vec<Reservation>,
}

pub struct ExchangeInbox {
    buffer: Arc<BufferManager>,
    streams: Mutex<HashMap<StreamKey, StreamBuf>>,
    cv: Condvar,
}

impl ExchangeInbox {
    pub fn new(buffer: Arc<BufferManager>) -> Arc<ExchangeInbox> {
        Arc::new(ExchangeInbox {
            buffer,
            streams: Mutex::new(HashMap::new()),
            cv: Condvar::new(),
        })
    }

    /// Ingest one frame: verify sequence contiguity, decode the payload,
    /// charge its bytes. Called from the transport receive loop.
    pub fn accept(&self, frame: ExchangeFrame) -> Result<()> {
        let key = StreamKey {
            query: frame.query,
            exchange: frame.exchange,
            producer: frame.producer,
        };
        let mut streams = self.streams.lock().unwrap();
        let buf = streams.entry(key).or_insert_with(|| StreamBuf {
            next_seq: 0,
            batches: Vec::new(),
            eos: false,
            reservations: Vec::new(),
        });
        if frame.sequence != buf.next_seq {
            return Err(Error::SequenceGap {
                exchange: frame.exchange,
                producer: frame.producer,
                expected: buf.next_seq,
                got: frame.sequence,
            });
        }
        buf.next_seq += 1;
        if frame.end_of_stream {
            buf.eos = true;
        } else {
            let reservation = self.buffer.reserve(
                RegionKind::Processing,
                frame.payload.len() as u64,
                &format!("exchange_intake:{}", frame.exchange),
            )?;
            let batch = deserialize_batch(&frame.payload)?;
            buf.batches.push(batch);
            buf.reservations.push(reservation);
        }
        drop(streams);
        self.cv.notify_all();
        Ok(())
    }

    /// Block until every producer's stream for this exchange has reached
    /// end-of-stream, then take the streams (ordered by producer id).
    /// Intake reservations release when the returned batches are consumed
    /// into a registered table.
    pub fn await_streams(
        &self,
        query: u64,
        exchange: u32,
        producers: &[u16],
        timeout: Duration,
    ) -> Result<Vec<(u16, Vec<Batch>)>> {
        let deadline = Instant::now() + timeout;
        let mut streams = self.streams.lock().unwrap();
        loop {
            let complete = producers.iter().all(|p| {
                streams
                    .get(&StreamKey {
                        query,
                        exchange,
                        producer: *p,
                    })
                    .map_or(false, |s| s.eos)
            });
            if complete {
                break;
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Transport(format!(
                    "timed out waiting for exchange {exchange} streams"
                )));
            }
            let (guard, _) = self
                .cv
                .wait_timeout(streams, deadline - now)
                .unwrap();
            streams = guard;
        }
        let mut sorted: Vec<u16> = producers.to_vec();
        sorted.sort_unstable();
        let mut out = Vec::with_capacity(sorted.len());
        for p in sorted {
            let buf = streams
                .remove(&StreamKey {
                    query,
                    exchange,
                    producer: p,
                })
                .expect("stream checked complete");
            // Dropping the reservations here hands accounting over to the
            // registry entry the caller creates.
            out.push((p, buf.batches));
        }
        Ok(out)
    }

    /// Drop all streams of one query (cancellation path).
    pub fn discard_query(&self, query: u64) {
        let mut streams = self.streams.lock().unwrap();
        streams.retain(|k, _| k.query != query);
        self.cv.notify_all();
    }

    pub fn pending_streams(&self) -> usize {
        self.streams.lock().unwrap().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{serialize_batch, Column};

    fn payload(v: i64) -> Vec<u8> {
        serialize_batch(&Batch::from_columns(vec![Column::from_i64(vec![Some(v)])]))
    }

    fn mgr() -> Arc<BufferManager> {
        BufferManager::new(0, 1 << 20)
    }

    #[test]
    fn sequence_gap_detected() {
        let inbox = ExchangeInbox::new(mgr());
        inbox
            .accept(ExchangeFrame::data(1, 0, 0, 0, 0, payload(1)))
            .unwrap();
        let err = inbox
            .accept(ExchangeFrame::data(1, 0, 0, 0, 2, payload(2)))
            .unwrap_err();
        assert_eq!(err.kind(), "SequenceGap");
    }

    #[test]
    fn await_collects_after_eos_and_orders_producers() {
        let buffer = mgr();
        let inbox = ExchangeInbox::new(Arc::clone(&buffer));
        inbox
            .accept(ExchangeFrame::data(1, 0, 1, 0, 0, payload(10)))
            .unwrap();
        inbox
            .accept(ExchangeFrame::end_of_stream(1, 0, 1, 0, 1))
            .unwrap();
        inbox
            .accept(ExchangeFrame::data(1, 0, 0, 0, 0, payload(20)))
            .unwrap();
        inbox
            .accept(ExchangeFrame::end_of_stream(1, 0, 0, 0, 1))
            .unwrap();
        assert!(buffer.processing_used() > 0);
        let streams = inbox
            .await_streams(1, 0, &[1, 0], Duration::from_secs(1))
            .unwrap();
        assert_eq!(streams.len(), 2);
        assert_eq!(streams[0].0, 0);
        assert_eq!(streams[1].0, 1);
        assert_eq!(buffer.processing_used(), 0);
    }

    #[test]
    fn await_times_out_without_eos() {
        let inbox = ExchangeInbox::new(mgr());
        inbox
            .accept(ExchangeFrame::data(1, 0, 0, 0, 0, payload(1)))
            .unwrap();
        let err = inbox
            .await_streams(1, 0, &[0], Duration::from_millis(50))
            .unwrap_err();
        assert_eq!(err.kind(), "TransportError");
    }
}
