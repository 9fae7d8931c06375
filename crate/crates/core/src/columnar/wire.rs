//! Deterministic little-endian batch encoding, the payload of exchange
//! frames and of on-disk table files. The layout is normative and documented
//! in docs/wire_format.md:
//!
//! ```text
//! batch   := column_count:u32 column*
//! column  := dtype_tag:u8 [precision:u8 scale:u8]   (decimal only)
//!            row_count:u64 validity_flag:u8
//!            validity_bytes[ceil(rows/8)]            (flag = 1 only)
//!            payload
//! payload := fixed-width values                      (8/16/4/1 bytes each)
//!          | offsets[(rows+1) * u64] string_bytes    (strings)
//! ```
//! No padding anywhere; all integers little-endian.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::DataType;

use super::batch::Batch;
use super::column::{Column, Values};

const TAG_INT64: u8 = 0;
const TAG_FLOAT64: u8 = 1;
const TAG_DECIMAL: u8 = 2;
const TAG_DATE32: u8 = 3;
const TAG_BOOL: u8 = 4;
const TAG_UTF8: u8 = 5;

pub fn serialize_batch(b: &Batch) -> Vec<u8> {
    let mut out = Vec::with_capacity(serialized_batch_len(b));
    out.extend_from_slice(&(b.num_columns() as u32).to_le_bytes());
    for c in b.columns() {
        serialize_column(c, &mut out);
    }
    out
}

/// Exact encoded size, from the layout.
pub fn serialized_batch_len(b: &Batch) -> usize {
    let mut n = 4;
    for c in b.columns() {
        n += match c.dtype() {
            DataType::Decimal { .. } => 3,
            _ => 1,
        };
        n += 8 + 1; // row count + validity flag
        if c.validity().is_some() {
            n += c.len().div_ceil(8);
        }
        n += match c.values() {
            Values::Int64(v) => 8 * v.len(),
            Values::Float64(v) => 8 * v.len(),
            Values::Decimal(v) => 16 * v.len(),
            Values::Date32(v) => 4 * v.len(),
            Values::Bool(v) => v.len(),
            Values::Utf8 { offsets, bytes } => 8 * offsets.len() + bytes.len(),
        };
    }
    n
}

fn serialize_column(c: &Column, out: &mut Vec<u8>) {
    match c.dtype() {
        DataType::Int64 => out.push(TAG_INT64),
        DataType::Float64 => out.push(TAG_FLOAT64),
        DataType::Decimal { precision, scale } => {
            out.push(TAG_DECIMAL);
            out.push(*precision);
            out.push(*scale);
        }
        DataType::Date32 => out.push(TAG_DATE32),
        DataType::Bool => out.push(TAG_BOOL),
        DataType::Utf8 => out.push(TAG_UTF8),
    }
    out.extend_from_slice(&(c.len() as u64).to_le_bytes());
    match c.validity() {
        Some(bits) => {
            out.push(1);
            out.extend_from_slice(&bits[..c.len().div_ceil(8)]);
        }
        None => out.push(0),
    }
    match c.values() {
        Values::Int64(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Values::Float64(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Values::Decimal(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Values::Date32(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Values::Bool(v) => out.extend_from_slice(v),
        Values::Utf8 { offsets, bytes } => {
            for x in offsets {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(bytes);
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Syntax(format!(
                "batch payload truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn deserialize_batch(buf: &[u8]) -> Result<Batch> {
    let mut cur = Cursor { buf, pos: 0 };
    let ncols = cur.u32()? as usize;
    let mut columns = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        columns.push(Arc::new(deserialize_column(&mut cur)?));
    }
    if cur.pos != buf.len() {
        return Err(Error::Syntax(format!(
            "trailing bytes after batch payload: {} of {}",
            cur.pos,
            buf.len()
        )));
    }
    let rows = columns.first().map_or(0, |c: &Arc<Column>| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::SchemaMismatch(
            "batch columns disagree on row count".to_string(),
        ));
    }
    Ok(Batch::new(columns))
}

fn deserialize_column(cur: &mut Cursor<'_>) -> Result<Column> {
    let tag = cur.u8()?;
    let dtype = match tag {
        TAG_INT64 => DataType::Int64,
        TAG_FLOAT64 => DataType::Float64,
        TAG_DECIMAL => {
            let precision = cur.u8()?;
            let scale = cur.u8()?;
            DataType::Decimal { precision, scale }
        }
        TAG_DATE32 => DataType::Date32,
        TAG_BOOL => DataType::Bool,
        TAG_UTF8 => DataType::Utf8,
        other => return Err(Error::Syntax(format!("unknown column dtype tag {other}"))),
    };
    let rows = cur.u64()? as usize;
    let validity = match cur.u8()? {
        0 => None,
        1 => Some(cur.take(rows.div_ceil(8))?.to_vec()),
        other => {
            return Err(Error::Syntax(format!(
                "invalid validity-present flag {other}"
            )))
        }
    };
    let values = match dtype {
        DataType::Int64 => {
            let raw = cur.take(8 * rows)?;
            Values::Int64(
                raw.chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        DataType::Float64 => {
            let raw = cur.take(8 * rows)?;
            Values::Float64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        DataType::Decimal { .. } => {
            let raw = cur.take(16 * rows)?;
            Values::Decimal(
                raw.chunks_exact(16)
                    .map(|c| i128::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        DataType::Date32 => {
            let raw = cur.take(4 * rows)?;
            Values::Date32(
                raw.chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        DataType::Bool => Values::Bool(cur.take(rows)?.to_vec()),
        DataType::Utf8 => {
            let raw = cur.take(8 * (rows + 1))?;
            let offsets: Vec<u64> = raw
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Syntax("string offsets not monotone from 0".into()));
            }
            let bytes = cur.take(offsets[rows] as usize)?.to_vec();
            Values::Utf8 { offsets, bytes }
        }
    };
    Ok(Column::new(dtype, rows, validity, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::concat_batches;
    use crate::types::Datum;

    fn round_trip(b: &Batch) -> Batch {
        deserialize_batch(&serialize_batch(b)).unwrap()
    }

    #[test]
    fn int64_with_null_round_trips() {
        let b = Batch::from_columns(vec![Column::from_i64(vec![Some(1), None, Some(-3)])]);
        let out = round_trip(&b);
        assert_eq!(out.rows(), 3);
        assert_eq!(out.row(1), vec![Datum::Null]);
        assert_eq!(serialize_batch(&b), serialize_batch(&out));
    }

    #[test]
    fn empty_two_column_batch_round_trips() {
        let b = Batch::empty(&[DataType::Int64, DataType::Utf8]);
        let out = round_trip(&b);
        assert_eq!(out.rows(), 0);
        assert_eq!(out.schema(), b.schema());
    }

    #[test]
    fn encoded_length_matches_layout_table() {
        // INT64 column, 4 rows, no nulls:
        // 4 (col count) + 1 (tag) + 8 (rows) + 1 (flag) + 4*8 (payload) = 46.
        let b = Batch::from_columns(vec![Column::from_i64(vec![
            Some(1),
            Some(2),
            Some(3),
            Some(4),
        ])]);
        let bytes = serialize_batch(&b);
        assert_eq!(bytes.len(), 46);
        assert_eq!(bytes.len(), serialized_batch_len(&b));
    }

    #[test]
    fn decimal_tag_carries_precision_and_scale() {
        let c = Column::from_datums(
            DataType::Decimal {
                precision: 12,
                scale: 2,
            },
            vec![Datum::Decimal(1234)],
        );
        let b = Batch::from_columns(vec![c]);
        let out = round_trip(&b);
        assert_eq!(
            out.schema()[0],
            DataType::Decimal {
                precision: 12,
                scale: 2
            }
        );
        assert_eq!(out.datum(0, 0), Datum::Decimal(1234));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let b = Batch::from_columns(vec![Column::from_i64(vec![Some(1), Some(2)])]);
        let bytes = serialize_batch(&b);
        assert!(deserialize_batch(&bytes[..bytes.len() - 1]).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(deserialize_batch(&extended).is_err());
    }

    #[test]
    fn multi_chunk_concat_then_round_trip() {
        let parts = vec![
            Batch::from_columns(vec![Column::from_str(vec![Some("a"), None])]),
            Batch::from_columns(vec![Column::from_str(vec![Some("bcd")])]),
        ];
        let b = concat_batches(&[DataType::Utf8], &parts).unwrap();
        let out = round_trip(&b);
        assert_eq!(out.datum(0, 2), Datum::Utf8("bcd".into()));
        assert_eq!(out.datum(0, 1), Datum::Null);
    }
}
