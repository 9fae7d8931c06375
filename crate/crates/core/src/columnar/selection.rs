//! Selection vectors: engine-side row indices are wide (u64), kernel-side
//! indices are narrow (i32). Converting wide to narrow is the one place the
//! two index widths meet; a value past the configured limit raises
//! `IndexOverflow` instead of truncating.

use crate::error::{Error, Result};
use crate::types::Datum;

use super::column::{Column, ColumnBuilder};

/// Sentinel index meaning "pad with null" (used by left-join probe output).
pub const NULL_INDEX: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionVector {
    Wide(Vec<u64>),
    Narrow(Vec<i32>),
}

impl SelectionVector {
    pub fn len(&self) -> usize {
        match self {
            SelectionVector::Wide(v) => v.len(),
            SelectionVector::Narrow(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> u64 {
        match self {
            SelectionVector::Wide(v) => v[i],
            SelectionVector::Narrow(v) => v[i] as u64,
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        match self {
            SelectionVector::Wide(v) => Box::new(v.iter().copied()),
            SelectionVector::Narrow(v) => Box::new(v.iter().map(|&i| i as u64)),
        }
    }
}

/// Convert a wide selection to the narrow kernel width. Value-preserving when
/// every index fits under `limit`; otherwise `IndexOverflow`. The null-pad
/// sentinel is not an index and passes through unchecked.
pub fn narrow_indices(s: &SelectionVector, limit: u64) -> Result<SelectionVector> {
    let limit = limit.min(i32::MAX as u64);
    match s {
        SelectionVector::Narrow(v) => Ok(SelectionVector::Narrow(v.clone())),
        SelectionVector::Wide(v) => {
            let mut out = Vec::with_capacity(v.len());
            for &ix in v {
                if ix == NULL_INDEX {
                    out.push(-1);
                    continue;
                }
                if ix > limit {
                    return Err(Error::IndexOverflow { index: ix, limit });
                }
                out.push(ix as i32);
            }
            Ok(SelectionVector::Narrow(out))
        }
    }
}

/// out[i] = c[s[i]], validity included.
pub fn gather(c: &Column, s: &SelectionVector) -> Result<Column> {
    let mut b = ColumnBuilder::new(*c.dtype());
    for ix in s.iter() {
        if ix >= c.len() as u64 {
            return Err(Error::IndexOutOfRange {
                index: ix,
                len: c.len(),
            });
        }
        b.push(c.datum(ix as usize));
    }
    Ok(b.finish())
}

/// Like `gather`, but the sentinel produces a null row (left-join padding).
/// In narrow vectors the sentinel is -1.
pub fn gather_padded(c: &Column, s: &SelectionVector) -> Result<Column> {
    let mut b = ColumnBuilder::new(*c.dtype());
    for i in 0..s.len() {
        let raw = match s {
            SelectionVector::Wide(v) => v[i],
            SelectionVector::Narrow(v) => {
                if v[i] < 0 {
                    NULL_INDEX
                } else {
                    v[i] as u64
                }
            }
        };
        if raw == NULL_INDEX {
            b.push(Datum::Null);
            continue;
        }
        if raw >= c.len() as u64 {
            return Err(Error::IndexOutOfRange {
                index: raw,
                len: c.len(),
            });
        }
        b.push(c.datum(raw as usize));
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DEFAULT_NARROW_INDEX_LIMIT;

    #[test]
    fn gather_reorders_values() {
        let c = Column::from_i64(vec![Some(10), Some(20), Some(30)]);
        let out = gather(&c, &SelectionVector::Wide(vec![2, 0])).unwrap();
        assert_eq!(out.datum(0), Datum::Int64(30));
        assert_eq!(out.datum(1), Datum::Int64(10));
    }

    #[test]
    fn gather_identity_is_bitwise_equal() {
        let c = Column::from_i64(vec![Some(10), None, Some(30)]);
        let idx: Vec<u64> = (0..c.len() as u64).collect();
        let out = gather(&c, &SelectionVector::Wide(idx)).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn gather_strings_recomputes_offsets() {
        let c = Column::from_str(vec![Some("a"), Some("bb"), None]);
        let out = gather(&c, &SelectionVector::Wide(vec![1, 2])).unwrap();
        assert_eq!(out.datum(0), Datum::Utf8("bb".into()));
        assert_eq!(out.datum(1), Datum::Null);
        match out.values() {
            crate::columnar::Values::Utf8 { offsets, .. } => {
                assert_eq!(offsets, &vec![0, 2, 2]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn gather_checks_bounds() {
        let c = Column::from_i64(vec![Some(1)]);
        let err = gather(&c, &SelectionVector::Wide(vec![1])).unwrap_err();
        assert_eq!(err.kind(), "IndexOutOfRange");
    }

    #[test]
    fn narrow_preserves_values_under_limit() {
        let s = SelectionVector::Wide(vec![0, 5, 7]);
        let n = narrow_indices(&s, DEFAULT_NARROW_INDEX_LIMIT).unwrap();
        assert_eq!(n, SelectionVector::Narrow(vec![0, 5, 7]));
    }

    #[test]
    fn narrow_overflows_past_limit() {
        let s = SelectionVector::Wide(vec![300]);
        let err = narrow_indices(&s, 255).unwrap_err();
        assert_eq!(err.kind(), "IndexOverflow");
    }

    #[test]
    fn narrow_of_empty_is_empty() {
        let s = SelectionVector::Wide(vec![]);
        assert_eq!(
            narrow_indices(&s, 255).unwrap(),
            SelectionVector::Narrow(vec![])
        );
    }

    #[test]
    fn padded_gather_emits_nulls_for_sentinel() {
        let c = Column::from_i64(vec![Some(10), Some(20)]);
        let out = gather_padded(&c, &SelectionVector::Wide(vec![1, NULL_INDEX])).unwrap();
        assert_eq!(out.datum(0), Datum::Int64(20));
        assert_eq!(out.datum(1), Datum::Null);
    }
}
