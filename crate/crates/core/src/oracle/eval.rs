//! Scalar expression evaluation over one row. Deliberately independent of
//! the vectorized implementation: same semantics, different code path.

use std::cmp::Ordering;

use crate::plan::{ArithOp, BoolOpKind, CmpOp, TypedExpr, TypedExprKind};
use crate::types::{datum_cmp, float_cmp, pow10_i128, DataType, Datum};

pub fn eval_datum(e: &TypedExpr, row: &[Datum]) -> Datum {
    match &e.kind {
        TypedExprKind::ColumnRef(ordinal) => row[*ordinal].clone(),
        TypedExprKind::Literal(v) => v.clone(),
        TypedExprKind::Arith { op, left, right } => {
            let l = eval_datum(left, row);
            let r = eval_datum(right, row);
            if l.is_null() || r.is_null() {
                return Datum::Null;
            }
            arith(*op, &l, &left.dtype, &r, &right.dtype, &e.dtype)
        }
        TypedExprKind::Compare { op, left, right } => {
            let l = eval_datum(left, row);
            let r = eval_datum(right, row);
            if l.is_null() || r.is_null() {
                return Datum::Null;
            }
            match compare(&l, &left.dtype, &r, &right.dtype) {
                Some(ord) => Datum::Bool(op.eval(ord)),
                None => Datum::Null,
            }
        }
        TypedExprKind::BoolOp { op, args } => {
            let vals: Vec<Datum> = args.iter().map(|a| eval_datum(a, row)).collect();
            match op {
                BoolOpKind::Not => match vals[0] {
                    Datum::Bool(b) => Datum::Bool(!b),
                    _ => Datum::Null,
                },
                BoolOpKind::And => {
                    if vals.iter().any(|v| v.as_bool() == Some(false)) {
                        Datum::Bool(false)
                    } else if vals.iter().any(|v| v.is_null()) {
                        Datum::Null
                    } else {
                        Datum::Bool(true)
                    }
                }
                BoolOpKind::Or => {
                    if vals.iter().any(|v| v.as_bool() == Some(true)) {
                        Datum::Bool(true)
                    } else if vals.iter().any(|v| v.is_null()) {
                        Datum::Null
                    } else {
                        Datum::Bool(false)
                    }
                }
            }
        }
        TypedExprKind::Like { input, pattern } => match eval_datum(input, row) {
            Datum::Utf8(s) => {
                let text: Vec<char> = s.chars().collect();
                let pat: Vec<char> = pattern.chars().collect();
                Datum::Bool(like_match_chars(&pat, 0, &text, 0))
            }
            _ => Datum::Null,
        },
        TypedExprKind::Case { branches, otherwise } => {
            for (when, then) in branches {
                if eval_datum(when, row).as_bool() == Some(true) {
                    return eval_datum(then, row);
                }
            }
            match otherwise {
                Some(o) => eval_datum(o, row),
                None => Datum::Null,
            }
        }
        TypedExprKind::Cast { input } => {
            let v = eval_datum(input, row);
            if v.is_null() {
                return Datum::Null;
            }
            cast(&v, &input.dtype, &e.dtype)
        }
    }
}

fn to_f64(d: &Datum, t: &DataType) -> f64 {
    match d {
        Datum::Int64(v) => *v as f64,
        Datum::Float64(v) => *v,
        Datum::Decimal(v) => *v as f64 / pow10_i128(t.scale()) as f64,
        other => panic!("numeric promotion of {other:?}"),
    }
}

fn to_scaled(d: &Datum, t: &DataType, target_scale: u8) -> Option<i128> {
    let (v, s) = match d {
        Datum::Int64(v) => (*v as i128, 0u8),
        Datum::Decimal(v) => (*v, t.scale()),
        other => panic!("decimal alignment of {other:?}"),
    };
    v.checked_mul(pow10_i128(target_scale - s))
}

fn arith(
    op: ArithOp,
    l: &Datum,
    lt: &DataType,
    r: &Datum,
    rt: &DataType,
    out: &DataType,
) -> Datum {
    match out {
        DataType::Int64 => {
            let (a, b) = match (l, r) {
                (Datum::Int64(a), Datum::Int64(b)) => (*a, *b),
                _ => unreachable!(),
            };
            let v = match op {
                ArithOp::Add => a.checked_add(b),
                ArithOp::Sub => a.checked_sub(b),
                ArithOp::Mul => a.checked_mul(b),
                ArithOp::Div => a.checked_div(b),
            };
            v.map_or(Datum::Null, Datum::Int64)
        }
        DataType::Float64 => {
            let a = to_f64(l, lt);
            let b = to_f64(r, rt);
            match op {
                ArithOp::Add => Datum::Float64(a + b),
                ArithOp::Sub => Datum::Float64(a - b),
                ArithOp::Mul => Datum::Float64(a * b),
                ArithOp::Div => {
                    if b == 0.0 {
                        Datum::Null
                    } else {
                        Datum::Float64(a / b)
                    }
                }
            }
        }
        DataType::Decimal { scale, .. } => {
            let v = match op {
                ArithOp::Add | ArithOp::Sub => {
                    let a = to_scaled(l, lt, *scale);
                    let b = to_scaled(r, rt, *scale);
                    match (a, b, op) {
                        (Some(a), Some(b), ArithOp::Add) => a.checked_add(b),
                        (Some(a), Some(b), ArithOp::Sub) => a.checked_sub(b),
                        _ => None,
                    }
                }
                ArithOp::Mul => {
                    let a = to_scaled(l, lt, lt.scale());
                    let b = to_scaled(r, rt, rt.scale());
                    match (a, b) {
                        (Some(a), Some(b)) => a.checked_mul(b),
                        _ => None,
                    }
                }
                ArithOp::Div => unreachable!("decimal division types as float64"),
            };
            v.map_or(Datum::Null, Datum::Decimal)
        }
        other => panic!("arith output type {other}"),
    }
}

/// Comparison under the engine's promotion rule: int64 pairs compare as
/// i64, equal-scale decimal pairs as i128, any other numeric mix as f64;
/// date/bool/string compare directly.
pub fn compare(l: &Datum, lt: &DataType, r: &Datum, rt: &DataType) -> Option<Ordering> {
    match (l, r) {
        (Datum::Int64(a), Datum::Int64(b)) => Some(a.cmp(b)),
        (Datum::Decimal(a), Datum::Decimal(b)) if lt.scale() == rt.scale() => Some(a.cmp(b)),
        (Datum::Date32(a), Datum::Date32(b)) => Some(a.cmp(b)),
        (Datum::Bool(a), Datum::Bool(b)) => Some(a.cmp(b)),
        (Datum::Utf8(a), Datum::Utf8(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
        _ if lt.is_numeric() && rt.is_numeric() => {
            Some(float_cmp(to_f64(l, lt), to_f64(r, rt)))
        }
        _ => None,
    }
}

fn round_div(v: i128, divisor: i128) -> i128 {
    let half = divisor / 2;
    if v >= 0 {
        (v + half) / divisor
    } else {
        (v - half) / divisor
    }
}

fn cast(v: &Datum, from: &DataType, to: &DataType) -> Datum {
    if from == to {
        return v.clone();
    }
    match (v, to) {
        (Datum::Int64(x), DataType::Float64) => Datum::Float64(*x as f64),
        (Datum::Int64(x), DataType::Decimal { scale, .. }) => (*x as i128)
            .checked_mul(pow10_i128(*scale))
            .map_or(Datum::Null, Datum::Decimal),
        (Datum::Int64(x), DataType::Date32) => i32::try_from(*x).map_or(Datum::Null, Datum::Date32),
        (Datum::Float64(x), DataType::Int64) => {
            if x.is_finite() && x.abs() < i64::MAX as f64 {
                Datum::Int64(x.round() as i64)
            } else {
                Datum::Null
            }
        }
        (Datum::Float64(x), DataType::Decimal { scale, .. }) => {
            let scaled = x * pow10_i128(*scale) as f64;
            if scaled.is_finite() && scaled.abs() < i128::MAX as f64 {
                Datum::Decimal(scaled.round() as i128)
            } else {
                Datum::Null
            }
        }
        (Datum::Decimal(x), DataType::Float64) => {
            Datum::Float64(*x as f64 / pow10_i128(from.scale()) as f64)
        }
        (Datum::Decimal(x), DataType::Int64) => {
            i64::try_from(round_div(*x, pow10_i128(from.scale()))).map_or(Datum::Null, Datum::Int64)
        }
        (Datum::Decimal(x), DataType::Decimal { scale, .. }) => {
            let fs = from.scale();
            if *scale >= fs {
                x.checked_mul(pow10_i128(scale - fs))
                    .map_or(Datum::Null, Datum::Decimal)
            } else {
                Datum::Decimal(round_div(*x, pow10_i128(fs - scale)))
            }
        }
        (Datum::Date32(x), DataType::Int64) => Datum::Int64(*x as i64),
        _ => Datum::Null,
    }
}

/// Simple backtracking LIKE matcher over char slices (% and _ with
/// backslash escape).
pub fn like_match_chars(pat: &[char], p: usize, text: &[char], t: usize) -> bool {
    if p == pat.len() {
        return t == text.len();
    }
    match pat[p] {
        '%' => {
            for skip in 0..=(text.len() - t) {
                if like_match_chars(pat, p + 1, text, t + skip) {
                    return true;
                }
            }
            false
        }
        '_' => t < text.len() && like_match_chars(pat, p + 1, text, t + 1),
        '\\' => {
            let lit = if p + 1 < pat.len() { pat[p + 1] } else { '\\' };
            let next = (p + 2).min(pat.len());
            t < text.len() && text[t] == lit && like_match_chars(pat, next, text, t + 1)
        }
        c => t < text.len() && text[t] == c && like_match_chars(pat, p + 1, text, t + 1),
    }
}

/// Row ordering used for oracle sorts and merges; same null placement rules
/// as the kernel sort.
pub fn row_cmp(a: &[Datum], b: &[Datum], keys: &[crate::plan::SortKey]) -> Ordering {
    for k in keys {
        let (x, y) = (&a[k.ordinal], &b[k.ordinal]);
        let ord = match (x.is_null(), y.is_null()) {
            (true, true) => Ordering::Equal,
            (true, false) => {
                if k.nulls_first {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
            (false, true) => {
                if k.nulls_first {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
            (false, false) => {
                let o = datum_cmp(x, y);
                if k.descending {
                    o.reverse()
                } else {
                    o
                }
            }
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}
