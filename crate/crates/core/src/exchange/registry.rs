//! Runtime registry of exchanged intermediates as temporary tables. Entries
//! exist between first receipt and last consumer completion; deregistering
//! the last consumer releases the table's processing-region bytes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::buffer::Reservation;
use crate::columnar::Table;
use crate::error::{Error, Result};

struct Entry {
    table: Arc<Table>,
    refs: u32,
    _reservation: Option<Reservation>,
}

#[derive(Default)]
pub struct TempTableRegistry {
    entries: Mutex<HashMap<(u64, u32), Entry>>,
}

impl TempTableRegistry {
    pub fn new() -> TempTableRegistry {
        TempTableRegistry::default()
    }

    pub fn register(
        &self,
        query: u64,
        exchange: u32,
        table: Arc<Table>,
        consumers: u32,
        reservation: Option<Reservation>,
    ) {
        assert!(consumers > 0, "registering with no consumers");
        self.entries.lock().unwrap().insert(
            (query, exchange),
            Entry {
                table,
                refs: consumers,
                _reservation: reservation,
            },
        );
    }

    pub fn get(&self, query: u64, exchange: u32) -> Result<Arc<Table>> {
        self.entries
            .lock()
            .unwrap()
            .get(&(query, exchange))
            .map(|e| Arc::clone(&e.table))
            .ok_or(Error::UnknownEntry { query, exchange })
    }

    /// Drop one consumer's reference; the entry (and its memory) goes away
    /// with the last consumer.
    pub fn deregister(&self, query: u64, exchange: u32) -> Result<()> {
        let mut entries = self.entries.lock().unwrap();
        let e = entries
            .get_mut(&(query, exchange))
            .ok_or(Error::UnknownEntry { query, exchange })?;
        e.refs -= 1;
        if e.refs == 0 {
            entries.remove(&(query, exchange));
        }
        Ok(())
    }

    /// Drop everything belonging to one query (abort path).
    pub fn discard_query(&self, query: u64) {
        self.entries.lock().unwrap().retain(|k, _| k.0 != query);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::{BufferManager, RegionKind};
    use crate::columnar::{Batch, Column, TableSchema};
    use crate::types::DataType;

    fn table() -> Arc<Table> {
        Arc::new(
            Table::new(
                "tmp",
                TableSchema::new(vec![("v", DataType::Int64, true)]),
                vec![Batch::from_columns(vec![Column::from_i64(vec![Some(1)])])],
            )
            .unwrap(),
        )
    }

    #[test]
    fn single_consumer_entry_gone_after_one_deregister() {
        let r = TempTableRegistry::new();
        r.register(1, 0, table(), 1, None);
        assert!(r.get(1, 0).is_ok());
        r.deregister(1, 0).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.deregister(1, 0).unwrap_err().kind(), "UnknownEntry");
    }

    #[test]
    fn two_consumers_survive_first_deregister() {
        let r = TempTableRegistry::new();
        r.register(1, 0, table(), 2, None);
        r.deregister(1, 0).unwrap();
        assert!(r.get(1, 0).is_ok());
        r.deregister(1, 0).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn deregistration_returns_memory_to_baseline() {
        let buffer = BufferManager::new(0, 1 << 20);
        let baseline = buffer.processing_used();
        let res = buffer
            .reserve(RegionKind::Processing, 4096, "temp_table")
            .unwrap();
        let r = TempTableRegistry::new();
        r.register(7, 3, table(), 1, Some(res));
        assert!(buffer.processing_used() > baseline);
        r.deregister(7, 3).unwrap();
        assert_eq!(buffer.processing_used(), baseline);
    }
}
