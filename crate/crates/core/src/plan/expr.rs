//! Expression trees and the arithmetic/comparison typing rules shared by the
//! validator, the vectorized kernels, and the reference executor.

use crate::error::{Error, Result};
use crate::types::{DataType, Datum, MAX_DECIMAL_PRECISION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn name(&self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
            ArithOp::Div => "div",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn name(&self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
        }
    }

    pub fn eval(&self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOpKind {
    And,
    Or,
    Not,
}

/// Untyped expression as parsed from a plan document.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    ColumnRef(usize),
    Literal { dtype: DataType, value: Datum },
    Arith { op: ArithOp, left: Box<Expr>, right: Box<Expr> },
    Compare { op: CmpOp, left: Box<Expr>, right: Box<Expr> },
    BoolOp { op: BoolOpKind, args: Vec<Expr> },
    Like { input: Box<Expr>, pattern: String },
    Case { branches: Vec<(Expr, Expr)>, otherwise: Option<Box<Expr>> },
    Cast { target: DataType, input: Box<Expr> },
}

/// Expression annotated with its output type at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedExpr {
    pub kind: TypedExprKind,
    pub dtype: DataType,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypedExprKind {
    ColumnRef(usize),
    Literal(Datum),
    Arith { op: ArithOp, left: Box<TypedExpr>, right: Box<TypedExpr> },
    Compare { op: CmpOp, left: Box<TypedExpr>, right: Box<TypedExpr> },
    BoolOp { op: BoolOpKind, args: Vec<TypedExpr> },
    Like { input: Box<TypedExpr>, pattern: String },
    Case { branches: Vec<(TypedExpr, TypedExpr)>, otherwise: Option<Box<TypedExpr>> },
    Cast { input: Box<TypedExpr> },
}

/// Result type of an arithmetic operation, or `TypeMismatch`.
///
/// Rules: int64 with int64 stays int64 (integer division); float64 with any
/// numeric is float64; decimals add/sub at the max scale, multiply at the
/// summed scale, and divide as float64; int64 mixes with decimal as a
/// scale-0 decimal.
pub fn arith_result_type(op: ArithOp, left: &DataType, right: &DataType) -> Result<DataType> {
    use DataType::*;
    let fail = || {
        Err(Error::TypeMismatch(format!(
            "{} over {left} and {right}",
            op.name()
        )))
    };
    if !left.is_numeric() || !right.is_numeric() {
        return fail();
    }
    if matches!(left, Float64) || matches!(right, Float64) {
        return Ok(Float64);
    }
    let as_decimal = |t: &DataType| match t {
        Decimal { precision, scale } => Some((*precision, *scale)),
        Int64 => None,
        _ => unreachable!(),
    };
    match (as_decimal(left), as_decimal(right)) {
        (None, None) => Ok(Int64),
        (l, r) => {
            let (_, ls) = l.unwrap_or((MAX_DECIMAL_PRECISION, 0));
            let (_, rs) = r.unwrap_or((MAX_DECIMAL_PRECISION, 0));
            match op {
                ArithOp::Add | ArithOp::Sub => Ok(Decimal {
                    precision: MAX_DECIMAL_PRECISION,
                    scale: ls.max(rs),
                }),
                ArithOp::Mul => {
                    let scale = ls + rs;
                    if scale > MAX_DECIMAL_PRECISION {
                        return Err(Error::TypeMismatch(format!(
                            "decimal product scale {scale} exceeds {MAX_DECIMAL_PRECISION}"
                        )));
                    }
                    Ok(Decimal {
                        precision: MAX_DECIMAL_PRECISION,
                        scale,
                    })
                }
                ArithOp::Div => Ok(Float64),
            }
        }
    }
}

/// Casts the engine supports: identity, and conversions among the numeric
/// family plus int64 <-> date32.
pub fn cast_supported(from: &DataType, to: &DataType) -> bool {
    use DataType::*;
    if from == to {
        return true;
    }
    match (from, to) {
        (Int64 | Float64 | Decimal { .. }, Int64 | Float64 | Decimal { .. }) => true,
        (Int64, Date32) | (Date32, Int64) => true,
        _ => false,
    }
}

impl Expr {
    /// Type-check against an input schema, producing the annotated tree.
    pub fn type_check(&self, input: &[DataType]) -> Result<TypedExpr> {
        match self {
            Expr::ColumnRef(ordinal) => {
                let dtype = *input.get(*ordinal).ok_or(Error::OrdinalOutOfRange {
                    ordinal: *ordinal,
                    arity: input.len(),
                })?;
                Ok(TypedExpr {
                    kind: TypedExprKind::ColumnRef(*ordinal),
                    dtype,
                })
            }
            Expr::Literal { dtype, value } => Ok(TypedExpr {
                kind: TypedExprKind::Literal(value.clone()),
                dtype: *dtype,
            }),
            Expr::Arith { op, left, right } => {
                let l = left.type_check(input)?;
                let r = right.type_check(input)?;
                let dtype = arith_result_type(*op, &l.dtype, &r.dtype)?;
                Ok(TypedExpr {
                    kind: TypedExprKind::Arith {
                        op: *op,
                        left: Box::new(l),
                        right: Box::new(r),
                    },
                    dtype,
                })
            }
            Expr::Compare { op, left, right } => {
                let l = left.type_check(input)?;
                let r = right.type_check(input)?;
                if !l.dtype.comparable_with(&r.dtype) {
                    return Err(Error::TypeMismatch(format!(
                        "cannot compare {} with {}",
                        l.dtype, r.dtype
                    )));
                }
                Ok(TypedExpr {
                    kind: TypedExprKind::Compare {
                        op: *op,
                        left: Box::new(l),
                        right: Box::new(r),
                    },
                    dtype: DataType::Bool,
                })
            }
            Expr::BoolOp { op, args } => {
                let typed: Vec<TypedExpr> = args
                    .iter()
                    .map(|a| a.type_check(input))
                    .collect::<Result<_>>()?;
                for t in &typed {
                    if t.dtype != DataType::Bool {
                        return Err(Error::TypeMismatch(format!(
                            "boolean operator over {}",
                            t.dtype
                        )));
                    }
                }
                Ok(TypedExpr {
                    kind: TypedExprKind::BoolOp {
                        op: *op,
                        args: typed,
                    },
                    dtype: DataType::Bool,
                })
            }
            Expr::Like { input: arg, pattern } => {
                let t = arg.type_check(input)?;
                if t.dtype != DataType::Utf8 {
                    return Err(Error::TypeMismatch(format!("like over {}", t.dtype)));
                }
                Ok(TypedExpr {
                    kind: TypedExprKind::Like {
                        input: Box::new(t),
                        pattern: pattern.clone(),
                    },
                    dtype: DataType::Bool,
                })
            }
            Expr::Case { branches, otherwise } => {
                let mut typed_branches = Vec::with_capacity(branches.len());
                let mut out_type: Option<DataType> = None;
                for (when, then) in branches {
                    let w = when.type_check(input)?;
                    if w.dtype != DataType::Bool {
                        return Err(Error::TypeMismatch(format!(
                            "case condition of type {}",
                            w.dtype
                        )));
                    }
                    let t = then.type_check(input)?;
                    match &out_type {
                        None => out_type = Some(t.dtype),
                        Some(existing) if *existing == t.dtype => {}
                        Some(existing) => {
                            return Err(Error::TypeMismatch(format!(
                                "case branches disagree: {} vs {}",
                                existing, t.dtype
                            )))
                        }
                    }
                    typed_branches.push((w, t));
                }
                let typed_otherwise = match otherwise {
                    Some(e) => {
                        let t = e.type_check(input)?;
                        match &out_type {
                            None => out_type = Some(t.dtype),
                            Some(existing) if *existing == t.dtype => {}
                            Some(existing) => {
                                return Err(Error::TypeMismatch(format!(
                                    "case else disagrees: {} vs {}",
                                    existing, t.dtype
                                )))
                            }
                        }
                        Some(Box::new(t))
                    }
                    None => None,
                };
                let dtype = out_type
                    .ok_or_else(|| Error::Syntax("case with no branches".to_string()))?;
                Ok(TypedExpr {
                    kind: TypedExprKind::Case {
                        branches: typed_branches,
                        otherwise: typed_otherwise,
                    },
                    dtype,
                })
            }
            Expr::Cast { target, input: arg } => {
                let t = arg.type_check(input)?;
                if !cast_supported(&t.dtype, target) {
                    return Err(Error::TypeMismatch(format!(
                        "cast {} to {target} unsupported",
                        t.dtype
                    )));
                }
                Ok(TypedExpr {
                    kind: TypedExprKind::Cast { input: Box::new(t) },
                    dtype: *target,
                })
            }
        }
    }
}

impl TypedExpr {
    /// Source type of a cast node (needed to interpret the input payload).
    pub fn cast_source(&self) -> Option<&DataType> {
        match &self.kind {
            TypedExprKind::Cast { input } => Some(&input.dtype),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(p: u8, s: u8) -> DataType {
        DataType::Decimal {
            precision: p,
            scale: s,
        }
    }

    #[test]
    fn arith_typing_table() {
        use ArithOp::*;
        use DataType::*;
        assert_eq!(arith_result_type(Add, &Int64, &Int64).unwrap(), Int64);
        assert_eq!(arith_result_type(Div, &Int64, &Int64).unwrap(), Int64);
        assert_eq!(arith_result_type(Add, &Int64, &Float64).unwrap(), Float64);
        assert_eq!(
            arith_result_type(Add, &dec(12, 2), &dec(12, 4)).unwrap(),
            dec(18, 4)
        );
        assert_eq!(
            arith_result_type(Mul, &dec(12, 2), &dec(12, 2)).unwrap(),
            dec(18, 4)
        );
        assert_eq!(
            arith_result_type(Div, &dec(12, 2), &dec(12, 2)).unwrap(),
            Float64
        );
        assert_eq!(
            arith_result_type(Mul, &Int64, &dec(12, 2)).unwrap(),
            dec(18, 2)
        );
        assert!(arith_result_type(Mul, &dec(18, 10), &dec(18, 10)).is_err());
        assert!(arith_result_type(Add, &Date32, &Int64).is_err());
        assert!(arith_result_type(Add, &Utf8, &Utf8).is_err());
    }

    #[test]
    fn compare_requires_same_family() {
        let schema = [DataType::Utf8, DataType::Int64];
        let bad = Expr::Compare {
            op: CmpOp::Eq,
            left: Box::new(Expr::ColumnRef(0)),
            right: Box::new(Expr::ColumnRef(1)),
        };
        assert_eq!(bad.type_check(&schema).unwrap_err().kind(), "TypeMismatch");
        let ok = Expr::Compare {
            op: CmpOp::Lt,
            left: Box::new(Expr::ColumnRef(1)),
            right: Box::new(Expr::Literal {
                dtype: DataType::Float64,
                value: Datum::Float64(1.5),
            }),
        };
        assert_eq!(ok.type_check(&schema).unwrap().dtype, DataType::Bool);
    }

    #[test]
    fn ordinal_out_of_range_detected() {
        let e = Expr::ColumnRef(3);
        let err = e.type_check(&[DataType::Int64]).unwrap_err();
        assert_eq!(err.kind(), "OrdinalOutOfRange");
    }
}
