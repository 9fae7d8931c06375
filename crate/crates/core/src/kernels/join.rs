//! Hash table over the build side of a join: open addressing keyed by the
//! row key hash, with same-hash rows chained through a next array. Built
//! single-writer, then frozen and shared read-only by concurrent probes.

use std::sync::Arc;

use crate::columnar::{Batch, Column};
use crate::types::{combine_key_hashes, datum_cmp, datum_key_hash, Datum};

const LOAD_FACTOR: f64 = 0.7;
const EMPTY: i32 = -1;

#[derive(Debug)]
pub struct JoinTable {
    /// The sealed build batch, kept for output materialization.
    pub build: Batch,
    /// Build-side key columns (shared with `build`).
    pub key_columns: Vec<Arc<Column>>,
    /// Open-addressing slots: (key hash, head row of the chain).
    slots: Vec<(u64, i32)>,
    /// Next row in the same-hash chain, -1 terminated.
    next: Vec<i32>,
    /// Rows whose key contains a null: present in the table but never
    /// matchable (SQL null never equals null).
    null_keyed: Vec<bool>,
    occupied: usize,
    mask: u64,
}

impl JoinTable {
    pub fn build(build: Batch, key_ordinals: &[usize]) -> JoinTable {
        let rows = build.rows();
        let key_columns: Vec<Arc<Column>> =
            key_ordinals.iter().map(|&k| build.column(k).clone()).collect();
        let capacity = ((rows as f64 / LOAD_FACTOR).ceil() as usize)
            .next_power_of_two()
            .max(8);
        let mask = capacity as u64 - 1;
        let mut slots = vec![(0u64, EMPTY); capacity];
        let mut next = vec![EMPTY; rows];
        let mut null_keyed = vec![false; rows];
        let mut occupied = 0usize;

        for row in 0..rows {
            if key_columns.iter().any(|c| !c.is_valid(row)) {
                null_keyed[row] = true;
                continue;
            }
            let hash = row_key_hash(&key_columns, row);
            let mut slot = (hash & mask) as usize;
            loop {
                if slots[slot].1 == EMPTY {
                    slots[slot] = (hash, row as i32);
                    occupied += 1;
                    break;
                }
                if slots[slot].0 == hash {
                    next[row] = slots[slot].1;
                    slots[slot].1 = row as i32;
                    break;
                }
                slot = (slot + 1) & mask as usize;
            }
        }

        JoinTable {
            build,
            key_columns,
            slots,
            next,
            null_keyed,
            occupied,
            mask,
        }
    }

    pub fn rows(&self) -> usize {
        self.build.rows()
    }

    pub fn load_factor(&self) -> f64 {
        self.occupied as f64 / self.slots.len() as f64
    }

    pub fn is_null_keyed(&self, row: usize) -> bool {
        self.null_keyed[row]
    }

    /// Candidate build rows sharing the probe hash; callers verify actual
    /// key equality (hashes can collide).
    pub fn candidates(&self, hash: u64) -> JoinChain<'_> {
        let mut slot = (hash & self.mask) as usize;
        let head = loop {
            let (h, head) = self.slots[slot];
            if head == EMPTY {
                break EMPTY;
            }
            if h == hash {
                break head;
            }
            slot = (slot + 1) & self.mask as usize;
        };
        JoinChain { table: self, row: head }
    }

    /// Whether build row `row` matches the probe keys at `probe_row`
    /// (all keys valid and equal).
    pub fn keys_match(&self, row: usize, probe_keys: &[Arc<Column>], probe_row: usize) -> bool {
        self.key_columns.iter().zip(probe_keys).all(|(b, p)| {
            if !b.is_valid(row) || !p.is_valid(probe_row) {
                return false;
            }
            let bd = b.datum(row);
            let pd = p.datum(probe_row);
            datum_cmp(&bd, &pd) == std::cmp::Ordering::Equal
        })
    }

    /// Estimated processing-region footprint: build batch plus index arrays.
    pub fn byte_size(&self) -> u64 {
        self.build.byte_size()
            + (self.slots.len() * 12) as u64
            + (self.next.len() * 4) as u64
            + self.null_keyed.len() as u64
    }
}

pub struct JoinChain<'a> {
    table: &'a JoinTable,
    row: i32,
}

impl<'a> Iterator for JoinChain<'a> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.row == EMPTY {
            return None;
        }
        let current = self.row as usize;
        self.row = self.table.next[current];
        Some(current)
    }
}

/// Hash of the key tuple at `row`: per-column FNV-1a combined as
/// h = h * 31 + column_hash, nulls hashing to 0.
pub fn row_key_hash(keys: &[Arc<Column>], row: usize) -> u64 {
    combine_key_hashes(keys.iter().map(|c| {
        let d = if c.is_valid(row) { c.datum(row) } else { Datum::Null };
        datum_key_hash(&d)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::Column;

    fn table_with_keys(vals: Vec<Option<i64>>) -> JoinTable {
        let b = Batch::from_columns(vec![Column::from_i64(vals)]);
        JoinTable::build(b, &[0])
    }

    #[test]
    fn load_factor_bounded() {
        for n in [0usize, 1, 7, 8, 100, 1000] {
            let t = table_with_keys((0..n as i64).map(Some).collect());
            assert!(t.load_factor() <= 0.7, "load factor {} at n={n}", t.load_factor());
        }
    }

    #[test]
    fn every_non_null_row_reachable_under_its_hash() {
        let vals: Vec<Option<i64>> = (0..500).map(|i| Some(i % 37)).collect();
        let t = table_with_keys(vals.clone());
        for (row, v) in vals.iter().enumerate() {
            let hash = row_key_hash(&t.key_columns, row);
            assert!(
                t.candidates(hash).any(|r| r == row),
                "row {row} (key {v:?}) unreachable"
            );
        }
    }

    #[test]
    fn null_keyed_rows_flagged_and_unreachable() {
        let t = table_with_keys(vec![Some(1), None, Some(2)]);
        assert!(!t.is_null_keyed(0));
        assert!(t.is_null_keyed(1));
        // A chain walk over all slots never yields row 1.
        for slot_hash in [
            row_key_hash(&t.key_columns, 0),
            row_key_hash(&t.key_columns, 2),
        ] {
            assert!(t.candidates(slot_hash).all(|r| r != 1));
        }
    }
}
