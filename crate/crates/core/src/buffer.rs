//! Two-region buffer manager.
//!
//! The caching region is pre-allocated at init and holds sealed base tables;
//! the processing region is a pool for query intermediates (hash tables, sort
//! buffers, exchanged temp tables). There is no eviction and no spilling:
//! `CacheFull` and `ProcessingExhausted` are hard errors that the fallback
//! layer turns into a reference-executor rerun. Byte accounting is logical
//! (layout-derived), not allocator-reported.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::columnar::Table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Caching,
    Processing,
}

#[derive(Debug)]
struct Region {
    kind: RegionKind,
    capacity: u64,
    used: AtomicU64,
    high_water: AtomicU64,
}

impl Region {
    fn new(kind: RegionKind, capacity: u64) -> Region {
        Region {
            kind,
            capacity,
            used: AtomicU64::new(0),
            high_water: AtomicU64::new(0),
        }
    }

    fn try_reserve(&self, bytes: u64) -> Result<()> {
        let mut current = self.used.load(Ordering::SeqCst);
        loop {
            let next = current.saturating_add(bytes);
            if next > self.capacity {
                return Err(match self.kind {
                    RegionKind::Caching => Error::CacheFull {
                        needed: bytes,
                        available: self.capacity - current,
                    },
                    RegionKind::Processing => Error::ProcessingExhausted {
                        needed: bytes,
                        available: self.capacity - current,
                    },
                });
            }
            match self.used.compare_exchange_weak(
                current,
                next,
                Ordering::SeqCst,
                Ordering::SeqCst,
            ) {
                Ok(_) => {
                    self.high_water.fetch_max(next, Ordering::SeqCst);
                    return Ok(());
                }
                Err(seen) => current = seen,
            }
        }
    }

    fn release(&self, bytes: u64) {
        let prev = self.used.fetch_sub(bytes, Ordering::SeqCst);
        debug_assert!(prev >= bytes, "region released more than was reserved");
    }
}

/// Single-use grant of processing or caching bytes. Dropping releases the
/// exact granted amount, so double release is impossible.
#[derive(Debug)]
pub struct Reservation {
    manager: Arc<BufferManager>,
    kind: RegionKind,
    bytes: u64,
    pub owner: String,
}

impl Reservation {
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    /// Explicit release (equivalent to drop).
    pub fn release(self) {}
}

impl Drop for Reservation {
    fn drop(&mut self) {
        self.manager.region(self.kind).release(self.bytes);
    }
}

#[derive(Debug, Clone)]
pub struct RegionStats {
    pub capacity: u64,
    pub used: u64,
    pub high_water: u64,
}

#[derive(Debug, Clone)]
pub struct BufferStats {
    pub caching: RegionStats,
    pub processing: RegionStats,
    pub cache_entries: usize,
    pub cache_bytes: u64,
    pub exhaustion_events: u64,
    pub ingested_tables: u64,
}

/// One cached base table.
#[derive(Debug)]
pub struct CacheEntry {
    pub table: Arc<Table>,
    pub resident_bytes: u64,
    pin_count: AtomicU64,
}

impl CacheEntry {
    pub fn pin(&self) {
        self.pin_count.fetch_add(1, Ordering::SeqCst);
    }

    pub fn unpin(&self) {
        let prev = self.pin_count.fetch_sub(1, Ordering::SeqCst);
        debug_assert!(prev > 0, "unpin without pin");
    }

    pub fn pins(&self) -> u64 {
        self.pin_count.load(Ordering::SeqCst)
    }
}

#[derive(Debug)]
pub struct BufferManager {
    caching: Region,
    processing: Region,
    cache: Mutex<HashMap<String, Arc<CacheEntry>>>,
    exhaustion_events: AtomicU64,
    /// Counts base-table ingestions; hot runs leave it flat.
    ingested_tables: AtomicU64,
}

impl BufferManager {
    pub fn new(caching_bytes: u64, processing_bytes: u64) -> Arc<BufferManager> {
        Arc::new(BufferManager {
            caching: Region::new(RegionKind::Caching, caching_bytes),
            processing: Region::new(RegionKind::Processing, processing_bytes),
            cache: Mutex::new(HashMap::new()),
            exhaustion_events: AtomicU64::new(0),
            ingested_tables: AtomicU64::new(0),
        })
    }

    fn region(&self, kind: RegionKind) -> &Region {
        match kind {
            RegionKind::Caching => &self.caching,
            RegionKind::Processing => &self.processing,
        }
    }

    /// Reserve processing or caching bytes for `owner`. First come, first
    /// served; concurrent grants never over-commit the region capacity.
    pub fn reserve(
        self: &Arc<Self>,
        kind: RegionKind,
        bytes: u64,
        owner: &str,
    ) -> Result<Reservation> {
        if let Err(e) = self.region(kind).try_reserve(bytes) {
            self.exhaustion_events.fetch_add(1, Ordering::SeqCst);
            return Err(e);
        }
        Ok(Reservation {
            manager: Arc::clone(self),
            kind,
            bytes,
            owner: owner.to_string(),
        })
    }

    /// Cache a sealed table. Idempotent per table name: a second call
    /// returns the existing entry untouched.
    pub fn cache_table(self: &Arc<Self>, table: Table) -> Result<Arc<CacheEntry>> {
        let mut cache = self.cache.lock().unwrap();
        if let Some(existing) = cache.get(&table.name) {
            return Ok(Arc::clone(existing));
        }
        let bytes = table.byte_size();
        if let Err(e) = self.caching.try_reserve(bytes) {
            self.exhaustion_events.fetch_add(1, Ordering::SeqCst);
            return Err(e);
        }
        self.ingested_tables.fetch_add(1, Ordering::SeqCst);
        let entry = Arc::new(CacheEntry {
            table: Arc::new(table),
            resident_bytes: bytes,
            pin_count: AtomicU64::new(0),
        });
        cache.insert(entry.table.name.clone(), Arc::clone(&entry));
        Ok(entry)
    }

    pub fn cached(&self, name: &str) -> Option<Arc<CacheEntry>> {
        self.cache.lock().unwrap().get(name).cloned()
    }

    pub fn cached_table(&self, name: &str) -> Result<Arc<Table>> {
        self.cached(name)
            .map(|e| Arc::clone(&e.table))
            .ok_or_else(|| Error::MissingTable(name.to_string()))
    }

    pub fn cached_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.cache.lock().unwrap().keys().cloned().collect();
        names.sort();
        names
    }

    /// Drop a cached table (used when re-slicing node-local partitions
    /// between queries in test clusters). Fails if the entry is pinned.
    pub fn evict_for_reload(&self, name: &str) -> Result<()> {
        let mut cache = self.cache.lock().unwrap();
        if let Some(entry) = cache.get(name) {
            if entry.pins() > 0 {
                return Err(Error::Transport(format!("table {name} is pinned")));
            }
            let bytes = entry.resident_bytes;
            cache.remove(name);
            self.caching.release(bytes);
        }
        Ok(())
    }

    pub fn processing_used(&self) -> u64 {
        self.processing.used.load(Ordering::SeqCst)
    }

    pub fn stats(&self) -> BufferStats {
        let cache = self.cache.lock().unwrap();
        let cache_bytes = cache.values().map(|e| e.resident_bytes).sum();
        BufferStats {
            caching: RegionStats {
                capacity: self.caching.capacity,
                used: self.caching.used.load(Ordering::SeqCst),
                high_water: self.caching.high_water.load(Ordering::SeqCst),
            },
            processing: RegionStats {
                capacity: self.processing.capacity,
                used: self.processing.used.load(Ordering::SeqCst),
                high_water: self.processing.high_water.load(Ordering::SeqCst),
            },
            cache_entries: cache.len(),
            cache_bytes,
            exhaustion_events: self.exhaustion_events.load(Ordering::SeqCst),
            ingested_tables: self.ingested_tables.load(Ordering::SeqCst),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{Batch, Column, TableSchema};
    use crate::types::DataType;

    fn table(name: &str, rows: i64) -> Table {
        let col = Column::from_i64((0..rows).map(Some).collect());
        Table::new(
            name,
            TableSchema::new(vec![("v", DataType::Int64, false)]),
            vec![Batch::from_columns(vec![col])],
        )
        .unwrap()
    }

    #[test]
    fn fresh_manager_reports_zeros() {
        let m = BufferManager::new(1024, 1024);
        let s = m.stats();
        assert_eq!(s.processing.used, 0);
        assert_eq!(s.caching.used, 0);
        assert_eq!(s.cache_entries, 0);
        assert_eq!(s.exhaustion_events, 0);
    }

    #[test]
    fn release_then_reserve_again() {
        let m = BufferManager::new(0, 64);
        let r = m.reserve(RegionKind::Processing, 64, "t").unwrap();
        assert!(m.reserve(RegionKind::Processing, 1, "t").is_err());
        r.release();
        assert_eq!(m.processing_used(), 0);
        let _r2 = m.reserve(RegionKind::Processing, 64, "t").unwrap();
    }

    #[test]
    fn high_water_survives_release() {
        let m = BufferManager::new(0, 1 << 26);
        let r = m.reserve(RegionKind::Processing, 64 << 20, "t").unwrap();
        drop(r);
        let s = m.stats();
        assert_eq!(s.processing.used, 0);
        assert_eq!(s.processing.high_water, 64 << 20);
    }

    #[test]
    fn zero_caching_region_rejects_any_table() {
        let m = BufferManager::new(0, 1024);
        let err = m.cache_table(table("t", 4)).unwrap_err();
        assert_eq!(err.kind(), "CacheFull");
        assert_eq!(m.stats().exhaustion_events, 1);
    }

    #[test]
    fn cache_is_idempotent_per_name() {
        let m = BufferManager::new(1 << 20, 0);
        let t = table("t", 100);
        let bytes = t.byte_size();
        let e1 = m.cache_table(t).unwrap();
        let used_after_first = m.stats().caching.used;
        assert_eq!(used_after_first, bytes);
        let e2 = m.cache_table(table("t", 100)).unwrap();
        assert!(Arc::ptr_eq(&e1, &e2));
        assert_eq!(m.stats().caching.used, used_after_first);
        assert_eq!(m.stats().ingested_tables, 1);
    }

    #[test]
    fn table_larger_than_region_is_cache_full() {
        let m = BufferManager::new(64, 0);
        assert_eq!(m.cache_table(table("big", 1000)).unwrap_err().kind(), "CacheFull");
    }

    #[test]
    fn concurrent_overcommit_grants_exactly_one() {
        // Capacity fits 1.5x a single request: one of two concurrent
        // reservations must fail.
        for _ in 0..64 {
            let m = BufferManager::new(0, 96);
            let m1 = Arc::clone(&m);
            let m2 = Arc::clone(&m);
            // Hold both grants until both threads finished, then inspect.
            let (a, b) = std::thread::scope(|s| {
                let h1 = s.spawn(move || m1.reserve(RegionKind::Processing, 64, "a"));
                let h2 = s.spawn(move || m2.reserve(RegionKind::Processing, 64, "b"));
                (h1.join().unwrap(), h2.join().unwrap())
            });
            assert!(
                a.is_ok() ^ b.is_ok(),
                "exactly one concurrent reservation must win"
            );
            assert!(m.processing_used() <= 96);
        }
    }
}
