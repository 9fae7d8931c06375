//! Columnar expression evaluation with three-valued null semantics:
//! any null operand yields null except the AND/OR identities
//! (null AND false = false, null OR true = true); division by zero and
//! unrepresentable results yield null.

use crate::columnar::{bitmap_set, Batch, Column, ColumnBuilder, SelectionVector, Values};
use crate::error::{Error, Result};
use crate::plan::{ArithOp, BoolOpKind, CmpOp, TypedExpr, TypedExprKind};
use crate::types::{float_cmp, pow10_i128, DataType, Datum};

pub fn eval(e: &TypedExpr, b: &Batch) -> Result<Column> {
    match &e.kind {
        TypedExprKind::ColumnRef(ordinal) => Ok(b.column(*ordinal).as_ref().clone()),
        TypedExprKind::Literal(value) => {
            let mut builder = ColumnBuilder::new(e.dtype);
            for _ in 0..b.rows() {
                builder.push(value.clone());
            }
            Ok(builder.finish())
        }
        TypedExprKind::Arith { op, left, right } => {
            let l = eval(left, b)?;
            let r = eval(right, b)?;
            eval_arith(*op, &l, &r, &e.dtype)
        }
        TypedExprKind::Compare { op, left, right } => {
            let l = eval(left, b)?;
            let r = eval(right, b)?;
            eval_compare(*op, &l, &r)
        }
        TypedExprKind::BoolOp { op, args } => {
            let cols: Vec<Column> = args.iter().map(|a| eval(a, b)).collect::<Result<_>>()?;
            Ok(eval_bool(*op, &cols, b.rows()))
        }
        TypedExprKind::Like { input, pattern } => {
            let c = eval(input, b)?;
            Ok(eval_like(&c, pattern))
        }
        TypedExprKind::Case { branches, otherwise } => {
            let conds: Vec<Column> = branches
                .iter()
                .map(|(w, _)| eval(w, b))
                .collect::<Result<_>>()?;
            let thens: Vec<Column> = branches
                .iter()
                .map(|(_, t)| eval(t, b))
                .collect::<Result<_>>()?;
            let other = otherwise.as_ref().map(|o| eval(o, b)).transpose()?;
            let mut builder = ColumnBuilder::new(e.dtype);
            for row in 0..b.rows() {
                let mut chosen = None;
                for (c, t) in conds.iter().zip(&thens) {
                    if c.is_valid(row) && c.datum(row).as_bool() == Some(true) {
                        chosen = Some(t.datum(row));
                        break;
                    }
                }
                let value = chosen.unwrap_or_else(|| {
                    other.as_ref().map_or(Datum::Null, |o| o.datum(row))
                });
                builder.push(value);
            }
            Ok(builder.finish())
        }
        TypedExprKind::Cast { input } => {
            let c = eval(input, b)?;
            eval_cast(&c, &e.dtype)
        }
    }
}

/// Ascending indices of true predicate rows (nulls excluded).
pub fn filter_indices(predicate: &Column) -> SelectionVector {
    let mut out = Vec::new();
    if let Values::Bool(vals) = predicate.values() {
        for (i, &v) in vals.iter().enumerate() {
            if v != 0 && predicate.is_valid(i) {
                out.push(i as u64);
            }
        }
    } else {
        panic!("filter predicate must be a bool column");
    }
    SelectionVector::Wide(out)
}

fn assemble(dtype: DataType, values: Values, valid: Vec<bool>) -> Column {
    let len = valid.len();
    let validity = if valid.iter().all(|&v| v) {
        None
    } else {
        let mut bits = vec![0u8; len.div_ceil(8)];
        for (i, &v) in valid.iter().enumerate() {
            bitmap_set(&mut bits, i, v);
        }
        Some(bits)
    };
    Column::new(dtype, len, validity, values)
}

fn valids(c: &Column) -> Vec<bool> {
    (0..c.len()).map(|i| c.is_valid(i)).collect()
}

/// Promote a numeric column to f64 values (validity handled separately).
fn to_f64(c: &Column) -> Vec<f64> {
    match c.values() {
        Values::Int64(v) => v.iter().map(|&x| x as f64).collect(),
        Values::Float64(v) => v.clone(),
        Values::Decimal(v) => {
            let div = pow10_i128(c.dtype().scale()) as f64;
            v.iter().map(|&x| x as f64 / div).collect()
        }
        _ => panic!("numeric promotion of non-numeric column"),
    }
}

/// Decimal/int payload rescaled to `target_scale`. Unrepresentable values
/// turn invalid (practically unreachable at supported precisions).
fn to_scaled_i128(c: &Column, target_scale: u8, valid: &mut [bool]) -> Vec<i128> {
    let (vals, scale): (Vec<i128>, u8) = match c.values() {
        Values::Int64(v) => (v.iter().map(|&x| x as i128).collect(), 0),
        Values::Decimal(v) => (v.clone(), c.dtype().scale()),
        _ => panic!("decimal alignment of non-decimal column"),
    };
    let mul = pow10_i128(target_scale - scale);
    vals.into_iter()
        .enumerate()
        .map(|(i, x)| match x.checked_mul(mul) {
            Some(v) => v,
            None => {
                valid[i] = false;
                0
            }
        })
        .collect()
}

fn eval_arith(op: ArithOp, l: &Column, r: &Column, out_type: &DataType) -> Result<Column> {
    let n = l.len();
    let mut valid: Vec<bool> = valids(l)
        .into_iter()
        .zip(valids(r))
        .map(|(a, b)| a && b)
        .collect();

    match out_type {
        DataType::Int64 => {
            let (lv, rv) = match (l.values(), r.values()) {
                (Values::Int64(a), Values::Int64(b)) => (a, b),
                _ => unreachable!("int64 arith over non-int columns"),
            };
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let v = if !valid[i] {
                    None
                } else {
                    match op {
                        ArithOp::Add => lv[i].checked_add(rv[i]),
                        ArithOp::Sub => lv[i].checked_sub(rv[i]),
                        ArithOp::Mul => lv[i].checked_mul(rv[i]),
                        ArithOp::Div => lv[i].checked_div(rv[i]),
                    }
                };
                match v {
                    Some(x) => out.push(x),
                    None => {
                        valid[i] = false;
                        out.push(0);
                    }
                }
            }
            Ok(assemble(DataType::Int64, Values::Int64(out), valid))
        }
        DataType::Float64 => {
            let lv = to_f64(l);
            let rv = to_f64(r);
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                if !valid[i] {
                    out.push(0.0);
                    continue;
                }
                let v = match op {
                    ArithOp::Add => lv[i] + rv[i],
                    ArithOp::Sub => lv[i] - rv[i],
                    ArithOp::Mul => lv[i] * rv[i],
                    ArithOp::Div => {
                        if rv[i] == 0.0 {
                            valid[i] = false;
                            0.0
                        } else {
                            lv[i] / rv[i]
                        }
                    }
                };
                out.push(v);
            }
            Ok(assemble(DataType::Float64, Values::Float64(out), valid))
        }
        DataType::Decimal { scale, .. } => {
            let out = match op {
                ArithOp::Add | ArithOp::Sub => {
                    let lv = to_scaled_i128(l, *scale, &mut valid);
                    let rv = to_scaled_i128(r, *scale, &mut valid);
                    let mut out = Vec::with_capacity(n);
                    for i in 0..n {
                        let v = if !valid[i] {
                            Some(0)
                        } else if op == ArithOp::Add {
                            lv[i].checked_add(rv[i])
                        } else {
                            lv[i].checked_sub(rv[i])
                        };
                        match v {
                            Some(x) => out.push(x),
                            None => {
                                valid[i] = false;
                                out.push(0);
                            }
                        }
                    }
                    out
                }
                ArithOp::Mul => {
                    // Scales add under multiplication; no re-alignment needed.
                    let lv = to_scaled_i128(l, l.dtype().scale(), &mut valid);
                    let rv = to_scaled_i128(r, r.dtype().scale(), &mut valid);
                    let mut out = Vec::with_capacity(n);
                    for i in 0..n {
                        match if valid[i] { lv[i].checked_mul(rv[i]) } else { Some(0) } {
                            Some(x) => out.push(x),
                            None => {
                                valid[i] = false;
                                out.push(0);
                            }
                        }
                    }
                    out
                }
                ArithOp::Div => unreachable!("decimal division lowers to float64"),
            };
            Ok(assemble(*out_type, Values::Decimal(out), valid))
        }
        other => Err(Error::TypeMismatch(format!("arith result type {other}"))),
    }
}

fn eval_compare(op: CmpOp, l: &Column, r: &Column) -> Result<Column> {
    let n = l.len();
    let valid: Vec<bool> = valids(l)
        .into_iter()
        .zip(valids(r))
        .map(|(a, b)| a && b)
        .collect();
    let mut out = vec![0u8; n];

    let lt = l.dtype();
    let rt = r.dtype();
    match (l.values(), r.values()) {
        (Values::Int64(a), Values::Int64(b)) => {
            for i in 0..n {
                out[i] = op.eval(a[i].cmp(&b[i])) as u8;
            }
        }
        (Values::Date32(a), Values::Date32(b)) => {
            for i in 0..n {
                out[i] = op.eval(a[i].cmp(&b[i])) as u8;
            }
        }
        (Values::Bool(a), Values::Bool(b)) => {
            for i in 0..n {
                out[i] = op.eval(a[i].cmp(&b[i])) as u8;
            }
        }
        (Values::Utf8 { .. }, Values::Utf8 { .. }) => {
            for i in 0..n {
                if valid[i] {
                    out[i] = op.eval(l.str_at(i).cmp(r.str_at(i))) as u8;
                }
            }
        }
        (Values::Decimal(a), Values::Decimal(b)) if lt.scale() == rt.scale() => {
            for i in 0..n {
                out[i] = op.eval(a[i].cmp(&b[i])) as u8;
            }
        }
        _ if lt.is_numeric() && rt.is_numeric() => {
            // Mixed numeric families compare as float64.
            let a = to_f64(l);
            let b = to_f64(r);
            for i in 0..n {
                out[i] = op.eval(float_cmp(a[i], b[i])) as u8;
            }
        }
        _ => {
            return Err(Error::TypeMismatch(format!(
                "compare over {lt} and {rt}"
            )))
        }
    }
    Ok(assemble(DataType::Bool, Values::Bool(out), valid))
}

/// Kleene logic. AND: false wins over null; OR: true wins over null.
fn eval_bool(op: BoolOpKind, cols: &[Column], rows: usize) -> Column {
    let mut out = vec![0u8; rows];
    let mut valid = vec![true; rows];
    match op {
        BoolOpKind::Not => {
            let c = &cols[0];
            for i in 0..rows {
                if c.is_valid(i) {
                    out[i] = match c.values() {
                        Values::Bool(v) => (v[i] == 0) as u8,
                        _ => unreachable!(),
                    };
                } else {
                    valid[i] = false;
                }
            }
        }
        BoolOpKind::And | BoolOpKind::Or => {
            let dominant = matches!(op, BoolOpKind::Or); // true dominates OR, false AND
            for i in 0..rows {
                let mut any_null = false;
                let mut decided = false;
                for c in cols {
                    let (v, ok) = match c.values() {
                        Values::Bool(vals) => (vals[i] != 0, c.is_valid(i)),
                        _ => unreachable!(),
                    };
                    if !ok {
                        any_null = true;
                    } else if v == dominant {
                        decided = true;
                        break;
                    }
                }
                if decided {
                    out[i] = dominant as u8;
                } else if any_null {
                    valid[i] = false;
                } else {
                    out[i] = (!dominant) as u8;
                }
            }
        }
    }
    assemble(DataType::Bool, Values::Bool(out), valid)
}

// --------------------------------------------------------------------------
// LIKE: % and _ wildcards with backslash escape, no character classes.
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum LikeTok {
    Any,        // _
    Many,       // %
    Lit(char),
}

pub(crate) fn compile_like(pattern: &str) -> Vec<LikeTok> {
    let mut toks = Vec::with_capacity(pattern.len());
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        match c {
            '%' => toks.push(LikeTok::Many),
            '_' => toks.push(LikeTok::Any),
            '\\' => {
                // Trailing backslash matches a literal backslash.
                toks.push(LikeTok::Lit(chars.next().unwrap_or('\\')));
            }
            other => toks.push(LikeTok::Lit(other)),
        }
    }
    toks
}

pub(crate) fn like_match(toks: &[LikeTok], text: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    let (mut s, mut p) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None; // (pattern pos after %, text pos)
    while s < chars.len() {
        if p < toks.len()
            && match toks[p] {
                LikeTok::Any => true,
                LikeTok::Lit(c) => c == chars[s],
                LikeTok::Many => false,
            }
        {
            s += 1;
            p += 1;
        } else if p < toks.len() && toks[p] == LikeTok::Many {
            star = Some((p + 1, s));
            p += 1;
        } else if let Some((sp, ss)) = star {
            p = sp;
            s = ss + 1;
            star = Some((sp, ss + 1));
        } else {
            return false;
        }
    }
    while p < toks.len() && toks[p] == LikeTok::Many {
        p += 1;
    }
    p == toks.len()
}

fn eval_like(c: &Column, pattern: &str) -> Column {
    let toks = compile_like(pattern);
    let n = c.len();
    let mut out = vec![0u8; n];
    let mut valid = vec![true; n];
    for i in 0..n {
        if !c.is_valid(i) {
            valid[i] = false;
            continue;
        }
        let text = std::str::from_utf8(c.str_at(i)).unwrap_or("");
        out[i] = like_match(&toks, text) as u8;
    }
    assemble(DataType::Bool, Values::Bool(out), valid)
}

// --------------------------------------------------------------------------
// Casts: numeric family conversions round half away from zero when losing
// fractional digits; unrepresentable values become null.
// --------------------------------------------------------------------------

fn round_div_i128(v: i128, divisor: i128) -> i128 {
    let half = divisor / 2;
    if v >= 0 {
        (v + half) / divisor
    } else {
        (v - half) / divisor
    }
}

fn f64_to_i128(v: f64) -> Option<i128> {
    if !v.is_finite() || v.abs() >= i128::MAX as f64 {
        return None;
    }
    Some(v.round() as i128)
}

fn eval_cast(c: &Column, target: &DataType) -> Result<Column> {
    if c.dtype() == target {
        return Ok(c.clone());
    }
    let n = c.len();
    let mut builder = ColumnBuilder::new(*target);
    for i in 0..n {
        if !c.is_valid(i) {
            builder.push(Datum::Null);
            continue;
        }
        let d = cast_datum(&c.datum(i), c.dtype(), target);
        builder.push(d);
    }
    Ok(builder.finish())
}

/// Scalar cast used by both the column loop above and literal handling.
pub(crate) fn cast_datum(d: &Datum, from: &DataType, to: &DataType) -> Datum {
    if from == to {
        return d.clone();
    }
    match (d, to) {
        (Datum::Int64(v), DataType::Float64) => Datum::Float64(*v as f64),
        (Datum::Int64(v), DataType::Decimal { scale, .. }) => {
            match (*v as i128).checked_mul(pow10_i128(*scale)) {
                Some(x) => Datum::Decimal(x),
                None => Datum::Null,
            }
        }
        (Datum::Int64(v), DataType::Date32) => {
            i32::try_from(*v).map_or(Datum::Null, Datum::Date32)
        }
        (Datum::Float64(v), DataType::Int64) => {
            if v.is_finite() && v.abs() < i64::MAX as f64 {
                Datum::Int64(v.round() as i64)
            } else {
                Datum::Null
            }
        }
        (Datum::Float64(v), DataType::Decimal { scale, .. }) => {
            f64_to_i128(v * pow10_i128(*scale) as f64).map_or(Datum::Null, Datum::Decimal)
        }
        (Datum::Decimal(v), DataType::Float64) => {
            Datum::Float64(*v as f64 / pow10_i128(from.scale()) as f64)
        }
        (Datum::Decimal(v), DataType::Int64) => {
            let r = round_div_i128(*v, pow10_i128(from.scale()));
            i64::try_from(r).map_or(Datum::Null, Datum::Int64)
        }
        (Datum::Decimal(v), DataType::Decimal { scale, .. }) => {
            let from_scale = from.scale();
            if *scale >= from_scale {
                v.checked_mul(pow10_i128(scale - from_scale))
                    .map_or(Datum::Null, Datum::Decimal)
            } else {
                Datum::Decimal(round_div_i128(*v, pow10_i128(from_scale - scale)))
            }
        }
        (Datum::Date32(v), DataType::Int64) => Datum::Int64(*v as i64),
        _ => Datum::Null,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Expr;

    fn batch_i64(vals: Vec<Option<i64>>) -> Batch {
        Batch::from_columns(vec![Column::from_i64(vals)])
    }

    fn lit_i64(v: i64) -> Expr {
        Expr::Literal {
            dtype: DataType::Int64,
            value: Datum::Int64(v),
        }
    }

    #[test]
    fn col_plus_one_propagates_null() {
        let b = batch_i64(vec![Some(1), Some(2), None]);
        let e = Expr::Arith {
            op: ArithOp::Add,
            left: Box::new(Expr::ColumnRef(0)),
            right: Box::new(lit_i64(1)),
        }
        .type_check(b.schema())
        .unwrap();
        let out = eval(&e, &b).unwrap();
        assert_eq!(out.datum(0), Datum::Int64(2));
        assert_eq!(out.datum(1), Datum::Int64(3));
        assert_eq!(out.datum(2), Datum::Null);
    }

    #[test]
    fn division_by_zero_is_null() {
        let b = batch_i64(vec![Some(10), Some(7)]);
        let e = Expr::Arith {
            op: ArithOp::Div,
            left: Box::new(Expr::ColumnRef(0)),
            right: Box::new(lit_i64(0)),
        }
        .type_check(b.schema())
        .unwrap();
        let out = eval(&e, &b).unwrap();
        assert_eq!(out.datum(0), Datum::Null);
        assert_eq!(out.datum(1), Datum::Null);
    }

    #[test]
    fn kleene_identities() {
        let null_and_false = Batch::from_columns(vec![
            Column::from_bool(vec![None, None]),
            Column::from_bool(vec![Some(false), Some(true)]),
        ]);
        let e = Expr::BoolOp {
            op: BoolOpKind::And,
            args: vec![Expr::ColumnRef(0), Expr::ColumnRef(1)],
        }
        .type_check(null_and_false.schema())
        .unwrap();
        let out = eval(&e, &null_and_false).unwrap();
        // null AND false = false; null AND true = null.
        assert_eq!(out.datum(0), Datum::Bool(false));
        assert_eq!(out.datum(1), Datum::Null);

        let e = Expr::BoolOp {
            op: BoolOpKind::Or,
            args: vec![Expr::ColumnRef(0), Expr::ColumnRef(1)],
        }
        .type_check(null_and_false.schema())
        .unwrap();
        let out = eval(&e, &null_and_false).unwrap();
        // null OR false = null; null OR true = true.
        assert_eq!(out.datum(0), Datum::Null);
        assert_eq!(out.datum(1), Datum::Bool(true));
    }

    #[test]
    fn like_prefix_pattern() {
        let b = Batch::from_columns(vec![Column::from_str(vec![
            Some("PROMO A"),
            Some("X"),
            None,
        ])]);
        let e = Expr::Like {
            input: Box::new(Expr::ColumnRef(0)),
            pattern: "PROMO%".to_string(),
        }
        .type_check(b.schema())
        .unwrap();
        let out = eval(&e, &b).unwrap();
        assert_eq!(out.datum(0), Datum::Bool(true));
        assert_eq!(out.datum(1), Datum::Bool(false));
        assert_eq!(out.datum(2), Datum::Null);
    }

    #[test]
    fn like_wildcards_and_escapes() {
        let cases = [
            ("%", "", true),
            ("_", "", false),
            ("a_c", "abc", true),
            ("a_c", "ac", false),
            ("%bc%", "xxbcyy", true),
            ("a%z", "az", true),
            ("a%z", "a123z", true),
            ("a%z", "a123y", false),
            ("100\\%", "100%", true),
            ("100\\%", "1000", false),
            ("%a%b%", "xaybz", true),
        ];
        for (pat, text, want) in cases {
            let toks = compile_like(pat);
            assert_eq!(like_match(&toks, text), want, "pattern {pat} text {text}");
        }
    }

    #[test]
    fn filter_excludes_nulls() {
        let pred = Column::from_bool(vec![Some(true), Some(false), None, Some(true)]);
        let sel = filter_indices(&pred);
        assert_eq!(sel, SelectionVector::Wide(vec![0, 3]));
    }

    #[test]
    fn decimal_multiply_adds_scales() {
        let dec2 = DataType::Decimal {
            precision: 12,
            scale: 2,
        };
        let b = Batch::from_columns(vec![
            Column::from_datums(dec2, vec![Datum::Decimal(150), Datum::Decimal(200)]), // 1.50, 2.00
            Column::from_datums(dec2, vec![Datum::Decimal(10), Datum::Decimal(25)]),   // 0.10, 0.25
        ]);
        let e = Expr::Arith {
            op: ArithOp::Mul,
            left: Box::new(Expr::ColumnRef(0)),
            right: Box::new(Expr::ColumnRef(1)),
        }
        .type_check(b.schema())
        .unwrap();
        assert_eq!(e.dtype.scale(), 4);
        let out = eval(&e, &b).unwrap();
        assert_eq!(out.datum(0), Datum::Decimal(1500)); // 0.1500
        assert_eq!(out.datum(1), Datum::Decimal(5000)); // 0.5000
    }

    #[test]
    fn cast_rounding_half_away() {
        assert_eq!(
            cast_datum(&Datum::Float64(2.5), &DataType::Float64, &DataType::Int64),
            Datum::Int64(3)
        );
        assert_eq!(
            cast_datum(&Datum::Float64(-2.5), &DataType::Float64, &DataType::Int64),
            Datum::Int64(-3)
        );
        let dec2 = DataType::Decimal { precision: 12, scale: 2 };
        let dec0 = DataType::Decimal { precision: 12, scale: 0 };
        assert_eq!(cast_datum(&Datum::Decimal(250), &dec2, &dec0), Datum::Decimal(3));
        assert_eq!(cast_datum(&Datum::Decimal(-250), &dec2, &dec0), Datum::Decimal(-3));
        assert_eq!(cast_datum(&Datum::Decimal(249), &dec2, &DataType::Int64), Datum::Int64(2));
    }
}
