//! Scalar type system: data types, owned scalar values, ordering, and the
//! canonical key hash used for join placement and shuffle partitioning.
//!
//! Decimals are fixed-point `i128` values scaled by `10^scale`. Dates are
//! days since the Unix epoch.

use std::cmp::Ordering;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DECIMAL_PRECISION: u8 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    Int64,
    Float64,
    Decimal { precision: u8, scale: u8 },
    Date32,
    Bool,
    Utf8,
}

impl DataType {
    /// Fixed payload width in bytes; `None` for variable-width (strings).
    pub fn fixed_width(&self) -> Option<usize> {
        match self {
            DataType::Int64 | DataType::Float64 => Some(8),
            DataType::Decimal { .. } => Some(16),
            DataType::Date32 => Some(4),
            DataType::Bool => Some(1),
            DataType::Utf8 => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            DataType::Int64 | DataType::Float64 | DataType::Decimal { .. }
        )
    }

    pub fn scale(&self) -> u8 {
        match self {
            DataType::Decimal { scale, .. } => *scale,
            _ => 0,
        }
    }

    /// Two types that may be compared with each other.
    pub fn comparable_with(&self, other: &DataType) -> bool {
        if self.is_numeric() && other.is_numeric() {
            return true;
        }
        match (self, other) {
            (DataType::Date32, DataType::Date32) => true,
            (DataType::Bool, DataType::Bool) => true,
            (DataType::Utf8, DataType::Utf8) => true,
            _ => false,
        }
    }

    /// The type-name grammar used by plan documents and schema files:
    /// `int64 | float64 | decimal(p,s) | date32 | bool | string`.
    pub fn parse_name(name: &str) -> Result<DataType> {
        let n = name.trim();
        match n {
            "int64" => return Ok(DataType::Int64),
            "float64" => return Ok(DataType::Float64),
            "date32" => return Ok(DataType::Date32),
            "bool" => return Ok(DataType::Bool),
            "string" => return Ok(DataType::Utf8),
            _ => {}
        }
        if let Some(rest) = n.strip_prefix("decimal(") {
            if let Some(args) = rest.strip_suffix(')') {
                if let Some((p, s)) = args.split_once(',') {
                    let precision: u8 = p
                        .trim()
                        .parse()
                        .map_err(|_| Error::Syntax(format!("bad decimal precision in {n}")))?;
                    let scale: u8 = s
                        .trim()
                        .parse()
                        .map_err(|_| Error::Syntax(format!("bad decimal scale in {n}")))?;
                    if precision == 0 || precision > MAX_DECIMAL_PRECISION || scale > precision {
                        return Err(Error::Syntax(format!(
                            "decimal({precision},{scale}) outside supported range (precision <= {MAX_DECIMAL_PRECISION}, scale <= precision)"
                        )));
                    }
                    return Ok(DataType::Decimal { precision, scale });
                }
            }
        }
        Err(Error::Syntax(format!("unknown type name: {name}")))
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Int64 => write!(f, "int64"),
            DataType::Float64 => write!(f, "float64"),
            DataType::Decimal { precision, scale } => write!(f, "decimal({precision},{scale})"),
            DataType::Date32 => write!(f, "date32"),
            DataType::Bool => write!(f, "bool"),
            DataType::Utf8 => write!(f, "string"),
        }
    }
}

/// Owned scalar value. The carrying type (notably decimal scale) lives in the
/// surrounding `DataType`, not in the value.
#[derive(Debug, Clone, PartialEq)]
pub enum Datum {
    Null,
    Int64(i64),
    Float64(f64),
    Decimal(i128),
    Date32(i32),
    Bool(bool),
    Utf8(String),
}

impl Datum {
    pub fn is_null(&self) -> bool {
        matches!(self, Datum::Null)
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Datum::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

/// Total order over two non-null datums of the same type. Floats order NaN
/// after every number and treat all NaNs as equal; -0.0 equals 0.0.
pub fn datum_cmp(a: &Datum, b: &Datum) -> Ordering {
    match (a, b) {
        (Datum::Int64(x), Datum::Int64(y)) => x.cmp(y),
        (Datum::Float64(x), Datum::Float64(y)) => float_cmp(*x, *y),
        (Datum::Decimal(x), Datum::Decimal(y)) => x.cmp(y),
        (Datum::Date32(x), Datum::Date32(y)) => x.cmp(y),
        (Datum::Bool(x), Datum::Bool(y)) => x.cmp(y),
        (Datum::Utf8(x), Datum::Utf8(y)) => x.as_bytes().cmp(y.as_bytes()),
        _ => panic!("datum_cmp on mismatched or null datums: {a:?} vs {b:?}"),
    }
}

pub fn float_cmp(x: f64, y: f64) -> Ordering {
    match (x.is_nan(), y.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => x.partial_cmp(&y).unwrap(),
    }
}

// ---------------------------------------------------------------------------
// Canonical bytes and the key hash.
//
// Every key value has one canonical little-endian byte encoding. The key hash
// is 64-bit FNV-1a over those bytes; null hashes to the constant 0. Multi-key
// rows combine as h = h * 31 + column_hash. This function decides both hash
// join bucket placement and shuffle partition placement, so it must be stable
// across nodes and releases.
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Canonical encoding of a non-null datum, appended to `out`.
/// Floats normalize -0.0 to 0.0 and all NaNs to one bit pattern so that
/// values that compare equal hash equal.
pub fn append_canonical_bytes(d: &Datum, out: &mut Vec<u8>) {
    match d {
        Datum::Int64(v) => out.extend_from_slice(&v.to_le_bytes()),
        Datum::Float64(v) => {
            let canon = if v.is_nan() {
                f64::NAN.to_bits()
            } else if *v == 0.0 {
                0.0f64.to_bits()
            } else {
                v.to_bits()
            };
            out.extend_from_slice(&canon.to_le_bytes());
        }
        Datum::Decimal(v) => out.extend_from_slice(&v.to_le_bytes()),
        Datum::Date32(v) => out.extend_from_slice(&v.to_le_bytes()),
        Datum::Bool(v) => out.push(*v as u8),
        Datum::Utf8(s) => out.extend_from_slice(s.as_bytes()),
        Datum::Null => unreachable!("null has no canonical bytes"),
    }
}

/// Hash of a single key value: FNV-1a of the canonical bytes, 0 for null.
pub fn datum_key_hash(d: &Datum) -> u64 {
    if d.is_null() {
        return 0;
    }
    let mut buf = Vec::with_capacity(16);
    append_canonical_bytes(d, &mut buf);
    fnv1a64(&buf)
}

/// Combine per-column hashes of one row into the row key hash.
pub fn combine_key_hashes<I: IntoIterator<Item = u64>>(columns: I) -> u64 {
    let mut h = 0u64;
    for ch in columns {
        h = h.wrapping_mul(31).wrapping_add(ch);
    }
    h
}

// ---------------------------------------------------------------------------
// Decimal parse/format
// ---------------------------------------------------------------------------

/// Parse a plain decimal string ("12", "-3.50") into an `i128` scaled by
/// `10^scale`. More fractional digits than the scale is an error; fewer are
/// zero-padded.
pub fn parse_decimal(text: &str, scale: u8) -> std::result::Result<i128, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty decimal".to_string());
    }
    let (neg, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("not a decimal: {text}"));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("not a decimal: {text}"));
    }
    if frac_part.len() > scale as usize {
        return Err(format!(
            "too many fractional digits for scale {scale}: {text}"
        ));
    }
    let mut value: i128 = 0;
    for b in int_part.bytes().chain(frac_part.bytes()) {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as i128))
            .ok_or_else(|| format!("decimal out of range: {text}"))?;
    }
    for _ in frac_part.len()..scale as usize {
        value = value
            .checked_mul(10)
            .ok_or_else(|| format!("decimal out of range: {text}"))?;
    }
    Ok(if neg { -value } else { value })
}

/// Format a scaled decimal with exactly `scale` fractional digits.
pub fn format_decimal(value: i128, scale: u8) -> String {
    let neg = value < 0;
    let mag = value.unsigned_abs();
    let pow = 10u128.pow(scale as u32);
    let int_part = mag / pow;
    let sign = if neg { "-" } else { "" };
    if scale == 0 {
        format!("{sign}{int_part}")
    } else {
        format!(
            "{sign}{int_part}.{frac:0>width$}",
            frac = mag % pow,
            width = scale as usize
        )
    }
}

pub fn pow10_i128(scale: u8) -> i128 {
    10i128.pow(scale as u32)
}

// ---------------------------------------------------------------------------
// Date parse/format (days since 1970-01-01)
// ---------------------------------------------------------------------------

const UNIX_EPOCH_CE_DAYS: i32 = 719_162; // NaiveDate 1970-01-01 num_days_from_ce - 1

pub fn parse_date(text: &str) -> std::result::Result<i32, String> {
    let d = NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .map_err(|e| format!("invalid date {text}: {e}"))?;
    Ok(d.num_days_from_ce() - 1 - UNIX_EPOCH_CE_DAYS)
}

pub fn format_date(days: i32) -> String {
    match NaiveDate::from_num_days_from_ce_opt(days + UNIX_EPOCH_CE_DAYS + 1) {
        Some(d) => d.format("%Y-%m-%d").to_string(),
        None => format!("#days:{days}"),
    }
}

// ---------------------------------------------------------------------------
// Datum rendering in the CSV dialect
// ---------------------------------------------------------------------------

/// Render a datum the way result CSV and key canonicalization print it.
/// Nulls render as the empty string.
pub fn format_datum(d: &Datum, dtype: &DataType) -> String {
    match d {
        Datum::Null => String::new(),
        Datum::Int64(v) => v.to_string(),
        Datum::Float64(v) => {
            if v.is_nan() {
                "NaN".to_string()
            } else {
                format!("{v}")
            }
        }
        Datum::Decimal(v) => format_decimal(*v, dtype.scale()),
        Datum::Date32(v) => format_date(*v),
        Datum::Bool(v) => v.to_string(),
        Datum::Utf8(s) => s.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_names_round_trip() {
        for name in ["int64", "float64", "decimal(12,2)", "date32", "bool", "string"] {
            let t = DataType::parse_name(name).unwrap();
            assert_eq!(t.to_string(), name);
        }
        assert!(DataType::parse_name("decimal(19,2)").is_err());
        assert!(DataType::parse_name("decimal(4,9)").is_err());
        assert!(DataType::parse_name("list").is_err());
    }

    #[test]
    fn decimal_parse_and_format() {
        assert_eq!(parse_decimal("12.34", 2).unwrap(), 1234);
        assert_eq!(parse_decimal("-0.5", 2).unwrap(), -50);
        assert_eq!(parse_decimal("7", 2).unwrap(), 700);
        assert!(parse_decimal("1.234", 2).is_err());
        assert!(parse_decimal("abc", 2).is_err());
        assert_eq!(format_decimal(-50, 2), "-0.50");
        assert_eq!(format_decimal(1234, 2), "12.34");
        assert_eq!(format_decimal(7, 0), "7");
    }

    #[test]
    fn date_round_trip() {
        assert_eq!(parse_date("1970-01-01").unwrap(), 0);
        assert_eq!(parse_date("1970-01-02").unwrap(), 1);
        assert_eq!(parse_date("1969-12-31").unwrap(), -1);
        let d = parse_date("1998-09-02").unwrap();
        assert_eq!(format_date(d), "1998-09-02");
        assert!(parse_date("1998-13-02").is_err());
    }

    #[test]
    fn null_hashes_to_zero_and_zero_float_normalizes() {
        assert_eq!(datum_key_hash(&Datum::Null), 0);
        assert_eq!(
            datum_key_hash(&Datum::Float64(0.0)),
            datum_key_hash(&Datum::Float64(-0.0))
        );
        assert_ne!(
            datum_key_hash(&Datum::Int64(1)),
            datum_key_hash(&Datum::Int64(2))
        );
    }

    #[test]
    fn fnv_reference_vector() {
        // Known FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn float_ordering_is_total() {
        assert_eq!(float_cmp(f64::NAN, f64::NAN), Ordering::Equal);
        assert_eq!(float_cmp(1.0, f64::NAN), Ordering::Less);
        assert_eq!(float_cmp(f64::NAN, 1e300), Ordering::Greater);
        assert_eq!(float_cmp(-0.0, 0.0), Ordering::Equal);
    }
}
