//! A column is a typed value buffer plus an optional validity bitmap
//! (bit i = row i, least-significant bit first; 1 = valid). A missing bitmap
//! means all rows are valid. Strings use a monotone 64-bit offsets array and
//! a shared byte buffer.

use crate::types::{DataType, Datum};

pub fn bitmap_get(bits: &[u8], i: usize) -> bool {
    bits[i / 8] & (1 << (i % 8)) != 0
}

pub fn bitmap_set(bits: &mut [u8], i: usize, valid: bool) {
    if valid {
        bits[i / 8] |= 1 << (i % 8);
    } else {
        bits[i / 8] &= !(1 << (i % 8));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Decimal(Vec<i128>),
    Date32(Vec<i32>),
    Bool(Vec<u8>),
    Utf8 { offsets: Vec<u64>, bytes: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    dtype: DataType,
    len: usize,
    validity: Option<Vec<u8>>,
    values: Values,
}

impl Column {
    pub fn new(dtype: DataType, len: usize, validity: Option<Vec<u8>>, values: Values) -> Column {
        let col = Column {
            dtype,
            len,
            validity,
            values,
        };
        col.check();
        col
    }

    fn check(&self) {
        if let Some(v) = &self.validity {
            assert!(v.len() >= self.len.div_ceil(8), "validity bitmap too short");
        }
        match (&self.dtype, &self.values) {
            (DataType::Int64, Values::Int64(v)) => assert_eq!(v.len(), self.len),
            (DataType::Float64, Values::Float64(v)) => assert_eq!(v.len(), self.len),
            (DataType::Decimal { .. }, Values::Decimal(v)) => assert_eq!(v.len(), self.len),
            (DataType::Date32, Values::Date32(v)) => assert_eq!(v.len(), self.len),
            (DataType::Bool, Values::Bool(v)) => assert_eq!(v.len(), self.len),
            (DataType::Utf8, Values::Utf8 { offsets, bytes }) => {
                assert_eq!(offsets.len(), self.len + 1);
                assert_eq!(offsets[0], 0);
                assert!(offsets.windows(2).all(|w| w[0] <= w[1]));
                assert_eq!(*offsets.last().unwrap() as usize, bytes.len());
            }
            (t, v) => panic!("column dtype {t:?} does not match payload {v:?}"),
        }
    }

    pub fn dtype(&self) -> &DataType {
        &self.dtype
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn validity(&self) -> Option<&[u8]> {
        self.validity.as_deref()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        match &self.validity {
            Some(bits) => bitmap_get(bits, i),
            None => true,
        }
    }

    pub fn null_count(&self) -> usize {
        match &self.validity {
            None => 0,
            Some(_) => (0..self.len).filter(|&i| !self.is_valid(i)).count(),
        }
    }

    /// Owned scalar at row `i`. Slow path; kernels use the typed buffers.
    pub fn datum(&self, i: usize) -> Datum {
        if !self.is_valid(i) {
            return Datum::Null;
        }
        match &self.values {
            Values::Int64(v) => Datum::Int64(v[i]),
            Values::Float64(v) => Datum::Float64(v[i]),
            Values::Decimal(v) => Datum::Decimal(v[i]),
            Values::Date32(v) => Datum::Date32(v[i]),
            Values::Bool(v) => Datum::Bool(v[i] != 0),
            Values::Utf8 { offsets, bytes } => {
                let s = &bytes[offsets[i] as usize..offsets[i + 1] as usize];
                Datum::Utf8(String::from_utf8_lossy(s).into_owned())
            }
        }
    }

    /// String bytes at row `i` (valid rows only).
    pub fn str_at(&self, i: usize) -> &[u8] {
        match &self.values {
            Values::Utf8 { offsets, bytes } => &bytes[offsets[i] as usize..offsets[i + 1] as usize],
            _ => panic!("str_at on non-string column"),
        }
    }

    /// Logical byte size by layout: validity bytes plus payload bytes.
    pub fn byte_size(&self) -> u64 {
        let validity = match &self.validity {
            Some(_) => self.len.div_ceil(8) as u64,
            None => 0,
        };
        let payload = match &self.values {
            Values::Int64(v) => 8 * v.len() as u64,
            Values::Float64(v) => 8 * v.len() as u64,
            Values::Decimal(v) => 16 * v.len() as u64,
            Values::Date32(v) => 4 * v.len() as u64,
            Values::Bool(v) => v.len() as u64,
            Values::Utf8 { offsets, bytes } => 8 * offsets.len() as u64 + bytes.len() as u64,
        };
        validity + payload
    }

    /// Copy out rows `[offset, offset+len)`.
    pub fn slice(&self, offset: usize, len: usize) -> Column {
        assert!(offset + len <= self.len);
        let mut b = ColumnBuilder::new(self.dtype);
        for i in offset..offset + len {
            b.push(self.datum(i));
        }
        b.finish()
    }
}

/// Single-owner builder; a finished column is immutable.
pub struct ColumnBuilder {
    dtype: DataType,
    len: usize,
    nulls: Vec<usize>,
    values: Values,
}

impl ColumnBuilder {
    pub fn new(dtype: DataType) -> ColumnBuilder {
        let values = match dtype {
            DataType::Int64 => Values::Int64(Vec::new()),
            DataType::Float64 => Values::Float64(Vec::new()),
            DataType::Decimal { .. } => Values::Decimal(Vec::new()),
            DataType::Date32 => Values::Date32(Vec::new()),
            DataType::Bool => Values::Bool(Vec::new()),
            DataType::Utf8 => Values::Utf8 {
                offsets: vec![0],
                bytes: Vec::new(),
            },
        };
        ColumnBuilder {
            dtype,
            len: 0,
            nulls: Vec::new(),
            values,
        }
    }

    pub fn push(&mut self, d: Datum) {
        if d.is_null() {
            self.nulls.push(self.len);
            self.push_default();
        } else {
            match (&mut self.values, d) {
                (Values::Int64(v), Datum::Int64(x)) => v.push(x),
                (Values::Float64(v), Datum::Float64(x)) => v.push(x),
                (Values::Decimal(v), Datum::Decimal(x)) => v.push(x),
                (Values::Date32(v), Datum::Date32(x)) => v.push(x),
                (Values::Bool(v), Datum::Bool(x)) => v.push(x as u8),
                (Values::Utf8 { offsets, bytes }, Datum::Utf8(s)) => {
                    bytes.extend_from_slice(s.as_bytes());
                    offsets.push(bytes.len() as u64);
                }
                (v, d) => panic!("datum {d:?} does not fit column payload {v:?}"),
            }
        }
        self.len += 1;
    }

    fn push_default(&mut self) {
        match &mut self.values {
            Values::Int64(v) => v.push(0),
            Values::Float64(v) => v.push(0.0),
            Values::Decimal(v) => v.push(0),
            Values::Date32(v) => v.push(0),
            Values::Bool(v) => v.push(0),
            Values::Utf8 { offsets, bytes } => offsets.push(bytes.len() as u64),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn finish(self) -> Column {
        let validity = if self.nulls.is_empty() {
            None
        } else {
            let mut bits = vec![0xffu8; self.len.div_ceil(8)];
            // Clear trailing bits past len for a canonical encoding.
            for i in self.len..bits.len() * 8 {
                bitmap_set(&mut bits, i, false);
            }
            for i in self.nulls {
                bitmap_set(&mut bits, i, false);
            }
            Some(bits)
        };
        Column::new(self.dtype, self.len, validity, self.values)
    }
}

/// Convenience constructors used heavily in tests.
impl Column {
    pub fn from_datums(dtype: DataType, datums: Vec<Datum>) -> Column {
        let mut b = ColumnBuilder::new(dtype);
        for d in datums {
            b.push(d);
        }
        b.finish()
    }

    pub fn from_i64(values: Vec<Option<i64>>) -> Column {
        Column::from_datums(
            DataType::Int64,
            values
                .into_iter()
                .map(|v| v.map_or(Datum::Null, Datum::Int64))
                .collect(),
        )
    }

    pub fn from_f64(values: Vec<Option<f64>>) -> Column {
        Column::from_datums(
            DataType::Float64,
            values
                .into_iter()
                .map(|v| v.map_or(Datum::Null, Datum::Float64))
                .collect(),
        )
    }

    pub fn from_str(values: Vec<Option<&str>>) -> Column {
        Column::from_datums(
            DataType::Utf8,
            values
                .into_iter()
                .map(|v| v.map_or(Datum::Null, |s| Datum::Utf8(s.to_string())))
                .collect(),
        )
    }

    pub fn from_bool(values: Vec<Option<bool>>) -> Column {
        Column::from_datums(
            DataType::Bool,
            values
                .into_iter()
                .map(|v| v.map_or(Datum::Null, Datum::Bool))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_tracks_nulls_in_bitmap() {
        let c = Column::from_i64(vec![Some(1), None, Some(3)]);
        assert_eq!(c.len(), 3);
        assert!(c.is_valid(0));
        assert!(!c.is_valid(1));
        assert!(c.is_valid(2));
        assert_eq!(c.null_count(), 1);
        assert_eq!(c.datum(1), Datum::Null);
        assert_eq!(c.datum(2), Datum::Int64(3));
    }

    #[test]
    fn all_valid_column_has_no_bitmap() {
        let c = Column::from_i64(vec![Some(1), Some(2)]);
        assert!(c.validity().is_none());
    }

    #[test]
    fn string_offsets_skip_null_rows() {
        let c = Column::from_str(vec![Some("a"), Some("bb"), None]);
        match c.values() {
            Values::Utf8 { offsets, .. } => assert_eq!(offsets, &vec![0, 1, 3, 3]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn byte_size_matches_layout() {
        // 4 rows int64, no nulls: 4 * 8 = 32.
        let c = Column::from_i64(vec![Some(1), Some(2), Some(3), Some(4)]);
        assert_eq!(c.byte_size(), 32);
        // With a null: + ceil(4/8) = 1 validity byte.
        let c = Column::from_i64(vec![Some(1), None, Some(3), Some(4)]);
        assert_eq!(c.byte_size(), 33);
        // Strings: offsets (len+1)*8 + bytes.
        let c = Column::from_str(vec![Some("ab"), Some("c")]);
        assert_eq!(c.byte_size(), 3 * 8 + 3);
    }
}
