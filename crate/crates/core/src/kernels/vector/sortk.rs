//! Stable sort permutation over multi-key batches.

use std::cmp::Ordering;

use crate::columnar::{Batch, Column, SelectionVector, Values};
use crate::plan::SortKey;
use crate::types::float_cmp;

/// Compares rows of one column without materializing datums.
pub struct ColOrd<'a> {
    col: &'a Column,
}

impl<'a> ColOrd<'a> {
    pub fn new(col: &'a Column) -> ColOrd<'a> {
        ColOrd { col }
    }

    /// Valid-row value comparison.
    pub fn cmp_values(&self, a: usize, b: usize) -> Ordering {
        match self.col.values() {
            Values::Int64(v) => v[a].cmp(&v[b]),
            Values::Float64(v) => float_cmp(v[a], v[b]),
            Values::Decimal(v) => v[a].cmp(&v[b]),
            Values::Date32(v) => v[a].cmp(&v[b]),
            Values::Bool(v) => v[a].cmp(&v[b]),
            Values::Utf8 { .. } => self.col.str_at(a).cmp(self.col.str_at(b)),
        }
    }
}

/// Null-aware single-key comparison honoring direction and null placement.
pub fn key_cmp(col: &Column, key: &SortKey, a: usize, b: usize) -> Ordering {
    let (av, bv) = (col.is_valid(a), col.is_valid(b));
    match (av, bv) {
        (false, false) => Ordering::Equal,
        (false, true) => {
            if key.nulls_first {
                Ordering::Less
            } else {
                Ordering::Greater
            }
        }
        (true, false) => {
            if key.nulls_first {
                Ordering::Greater
            } else {
                Ordering::Less
            }
        }
        (true, true) => {
            let ord = ColOrd::new(col).cmp_values(a, b);
            if key.descending {
                ord.reverse()
            } else {
                ord
            }
        }
    }
}

pub fn rows_cmp(batch: &Batch, keys: &[SortKey], a: usize, b: usize) -> Ordering {
    for key in keys {
        let ord = key_cmp(batch.column(key.ordinal), key, a, b);
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Stable permutation: equal keys keep input order.
pub fn sort_permutation(batch: &Batch, keys: &[SortKey]) -> SelectionVector {
    let mut idx: Vec<u64> = (0..batch.rows() as u64).collect();
    idx.sort_by(|&a, &b| rows_cmp(batch, keys, a as usize, b as usize));
    SelectionVector::Wide(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::Column;

    fn key(ordinal: usize, descending: bool, nulls_first: bool) -> SortKey {
        SortKey {
            ordinal,
            descending,
            nulls_first,
        }
    }

    #[test]
    fn ascending_permutation() {
        let b = Batch::from_columns(vec![Column::from_i64(vec![Some(3), Some(1), Some(2)])]);
        let p = sort_permutation(&b, &[key(0, false, false)]);
        assert_eq!(p, SelectionVector::Wide(vec![1, 2, 0]));
    }

    #[test]
    fn ties_preserve_input_order() {
        let b = Batch::from_columns(vec![
            Column::from_i64(vec![Some(1), Some(1)]),
            Column::from_str(vec![Some("a"), Some("b")]),
        ]);
        let p = sort_permutation(&b, &[key(0, false, false)]);
        assert_eq!(p, SelectionVector::Wide(vec![0, 1]));
    }

    #[test]
    fn nulls_placement_and_direction() {
        let b = Batch::from_columns(vec![Column::from_i64(vec![None, Some(5), Some(7)])]);
        let last = sort_permutation(&b, &[key(0, true, false)]);
        assert_eq!(last, SelectionVector::Wide(vec![2, 1, 0]));
        let first = sort_permutation(&b, &[key(0, true, true)]);
        assert_eq!(first, SelectionVector::Wide(vec![0, 2, 1]));
    }
}
