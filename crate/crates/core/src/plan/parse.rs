//! Plan-document parser. The grammar is documented in docs/plan_format.md;
//! parse(print(parse(d))) is the identity on the relation graph.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{parse_date, parse_decimal, DataType, Datum};

use super::expr::{ArithOp, BoolOpKind, CmpOp, Expr};
use super::graph::{
    AggFn, AggPhase, ExchangePattern, JoinType, Measure, PlanGraph, RelNode, SortKey,
};

pub fn parse_plan(document: &[u8]) -> Result<PlanGraph> {
    let text = std::str::from_utf8(document)
        .map_err(|e| Error::Syntax(format!("document is not utf-8: {e}")))?;
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Syntax(format!("malformed document: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Syntax("top level must be an object".to_string()))?;
    let catalog_ref = obj
        .get("catalog_ref")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Syntax("missing string field catalog_ref".to_string()))?
        .to_string();
    let root_val = obj
        .get("root")
        .ok_or_else(|| Error::Syntax("missing field root".to_string()))?;
    let root = parse_node(root_val)?;
    Ok(PlanGraph { catalog_ref, root })
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, kind: &str, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::Syntax(format!("{kind} node missing field {name}")))
}

fn usize_array(v: &Value, what: &str) -> Result<Vec<usize>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Syntax(format!("{what} must be an array")))?;
    arr.iter()
        .map(|x| {
            x.as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| Error::Syntax(format!("{what} entries must be non-negative integers")))
        })
        .collect()
}

fn parse_inputs(obj: &serde_json::Map<String, Value>, kind: &str, expected: usize) -> Result<Vec<RelNode>> {
    let inputs = match obj.get("inputs") {
        Some(v) => v
            .as_array()
            .ok_or_else(|| Error::Syntax(format!("{kind} inputs must be an array")))?
            .clone(),
        None => Vec::new(),
    };
    if inputs.len() != expected {
        return Err(Error::Syntax(format!(
            "{kind} expects {expected} input(s), found {}",
            inputs.len()
        )));
    }
    inputs.iter().map(parse_node).collect()
}

fn parse_node(v: &Value) -> Result<RelNode> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Syntax("plan node must be an object".to_string()))?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Syntax("plan node missing string field kind".to_string()))?;

    match kind {
        "read" => {
            let table = field(obj, kind, "table")?
                .as_str()
                .ok_or_else(|| Error::Syntax("read table must be a string".to_string()))?
                .to_string();
            let columns = usize_array(field(obj, kind, "columns")?, "read columns")?;
            let predicate = match obj.get("predicate") {
                Some(Value::Null) | None => None,
                Some(p) => Some(parse_expr(p)?),
            };
            let inputs = parse_inputs(obj, kind, 0)?;
            debug_assert!(inputs.is_empty());
            Ok(RelNode::Read {
                table,
                columns,
                predicate,
            })
        }
        "filter" => {
            let mut inputs = parse_inputs(obj, kind, 1)?;
            let predicate = parse_expr(field(obj, kind, "predicate")?)?;
            Ok(RelNode::Filter {
                input: Box::new(inputs.remove(0)),
                predicate,
            })
        }
        "project" => {
            let mut inputs = parse_inputs(obj, kind, 1)?;
            let exprs_val = field(obj, kind, "exprs")?
                .as_array()
                .ok_or_else(|| Error::Syntax("project exprs must be an array".to_string()))?
                .clone();
            if exprs_val.is_empty() {
                return Err(Error::Syntax("project with no expressions".to_string()));
            }
            let exprs = exprs_val.iter().map(parse_expr).collect::<Result<_>>()?;
            Ok(RelNode::Project {
                input: Box::new(inputs.remove(0)),
                exprs,
            })
        }
        "hash_join" => {
            let mut inputs = parse_inputs(obj, kind, 2)?;
            let join_type = match field(obj, kind, "join_type")?.as_str() {
                Some("inner") => JoinType::Inner,
                Some("left") => JoinType::Left,
                Some("semi") => JoinType::Semi,
                Some("anti") => JoinType::Anti,
                other => {
                    return Err(Error::Syntax(format!(
                        "unknown join_type {other:?} (expected inner|left|semi|anti)"
                    )))
                }
            };
            let keys_val = field(obj, kind, "keys")?
                .as_array()
                .ok_or_else(|| Error::Syntax("hash_join keys must be an array".to_string()))?
                .clone();
            if keys_val.is_empty() {
                return Err(Error::Syntax("hash_join requires at least one key pair".to_string()));
            }
            let mut keys = Vec::with_capacity(keys_val.len());
            for k in &keys_val {
                let pair = usize_array(k, "hash_join key pair")?;
                if pair.len() != 2 {
                    return Err(Error::Syntax(
                        "hash_join key pair must be [left, right]".to_string(),
                    ));
                }
                keys.push((pair[0], pair[1]));
            }
            let right = inputs.remove(1);
            let left = inputs.remove(0);
            Ok(RelNode::HashJoin {
                left: Box::new(left),
                right: Box::new(right),
                join_type,
                keys,
            })
        }
        "nested_loop_join" => {
            let mut inputs = parse_inputs(obj, kind, 2)?;
            let condition = parse_expr(field(obj, kind, "condition")?)?;
            let right = inputs.remove(1);
            let left = inputs.remove(0);
            Ok(RelNode::NestedLoopJoin {
                left: Box::new(left),
                right: Box::new(right),
                condition,
            })
        }
        "aggregate" => {
            let mut inputs = parse_inputs(obj, kind, 1)?;
            let phase = match obj.get("phase").and_then(Value::as_str) {
                None | Some("single") => AggPhase::Single,
                Some("partial") => AggPhase::Partial,
                Some("final") => AggPhase::Final,
                Some(other) => {
                    return Err(Error::Syntax(format!(
                        "unknown aggregate phase {other} (expected single|partial|final)"
                    )))
                }
            };
            let group_keys = usize_array(field(obj, kind, "group_keys")?, "group_keys")?;
            let measures_val = field(obj, kind, "measures")?
                .as_array()
                .ok_or_else(|| Error::Syntax("aggregate measures must be an array".to_string()))?
                .clone();
            let mut measures = Vec::with_capacity(measures_val.len());
            for m in &measures_val {
                let mobj = m
                    .as_object()
                    .ok_or_else(|| Error::Syntax("measure must be an object".to_string()))?;
                let agg = match mobj.get("fn").and_then(Value::as_str) {
                    Some("sum") => AggFn::Sum,
                    Some("count") => AggFn::Count,
                    Some("min") => AggFn::Min,
                    Some("max") => AggFn::Max,
                    Some("avg") => AggFn::Avg,
                    other => return Err(Error::UnknownFunction(format!("aggregate fn {other:?}"))),
                };
                let input = match mobj.get("expr") {
                    Some(Value::Null) | None => None,
                    Some(e) => Some(parse_expr(e)?),
                };
                measures.push(Measure { agg, input });
            }
            if measures.is_empty() {
                return Err(Error::Syntax("aggregate with no measures".to_string()));
            }
            Ok(RelNode::Aggregate {
                input: Box::new(inputs.remove(0)),
                phase,
                group_keys,
                measures,
            })
        }
        "sort" => {
            let mut inputs = parse_inputs(obj, kind, 1)?;
            let keys = parse_sort_keys(field(obj, kind, "keys")?)?;
            Ok(RelNode::Sort {
                input: Box::new(inputs.remove(0)),
                keys,
            })
        }
        "limit" => {
            let mut inputs = parse_inputs(obj, kind, 1)?;
            let n = field(obj, kind, "n")?
                .as_u64()
                .ok_or_else(|| Error::Syntax("limit n must be a non-negative integer".to_string()))?;
            Ok(RelNode::Limit {
                input: Box::new(inputs.remove(0)),
                n,
            })
        }
        "exchange" => {
            let mut inputs = parse_inputs(obj, kind, 1)?;
            let pattern = match field(obj, kind, "pattern")?.as_str() {
                Some("broadcast") => ExchangePattern::Broadcast,
                Some("shuffle") => ExchangePattern::Shuffle,
                Some("merge") => ExchangePattern::Merge,
                Some("multicast") => ExchangePattern::Multicast,
                other => {
                    return Err(Error::Syntax(format!(
                        "unknown exchange pattern {other:?}"
                    )))
                }
            };
            let keys = match obj.get("keys") {
                Some(v) => usize_array(v, "exchange keys")?,
                None => Vec::new(),
            };
            let targets = match obj.get("targets") {
                Some(v) => usize_array(v, "exchange targets")?
                    .into_iter()
                    .map(|t| t as u16)
                    .collect(),
                None => Vec::new(),
            };
            let input = inputs.remove(0);
            match pattern {
                ExchangePattern::Shuffle if keys.is_empty() => {
                    return Err(Error::Syntax("shuffle exchange requires keys".to_string()))
                }
                ExchangePattern::Multicast if targets.is_empty() => {
                    return Err(Error::Syntax(
                        "multicast exchange requires targets".to_string(),
                    ))
                }
                ExchangePattern::Merge => {
                    if !matches!(input, RelNode::Sort { .. }) {
                        return Err(Error::Syntax(
                            "merge exchange input must be a sort".to_string(),
                        ));
                    }
                }
                _ => {}
            }
            Ok(RelNode::Exchange {
                input: Box::new(input),
                pattern,
                keys,
                targets,
            })
        }
        other => Err(Error::UnknownRelation(other.to_string())),
    }
}

fn parse_sort_keys(v: &Value) -> Result<Vec<SortKey>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Syntax("sort keys must be an array".to_string()))?;
    if arr.is_empty() {
        return Err(Error::Syntax("sort requires at least one key".to_string()));
    }
    arr.iter()
        .map(|k| {
            let obj = k
                .as_object()
                .ok_or_else(|| Error::Syntax("sort key must be an object".to_string()))?;
            let ordinal = obj
                .get("ordinal")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Syntax("sort key missing ordinal".to_string()))?
                as usize;
            let descending = match obj.get("order").and_then(Value::as_str) {
                None | Some("asc") => false,
                Some("desc") => true,
                Some(other) => {
                    return Err(Error::Syntax(format!("unknown sort order {other}")))
                }
            };
            let nulls_first = match obj.get("nulls").and_then(Value::as_str) {
                None | Some("last") => false,
                Some("first") => true,
                Some(other) => {
                    return Err(Error::Syntax(format!("unknown nulls placement {other}")))
                }
            };
            Ok(SortKey {
                ordinal,
                descending,
                nulls_first,
            })
        })
        .collect()
}

pub(super) fn parse_expr(v: &Value) -> Result<Expr> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Syntax("expression must be an object".to_string()))?;
    let op = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Syntax("expression missing string field op".to_string()))?;

    let args = |expected: usize| -> Result<Vec<Expr>> {
        let arr = obj
            .get("args")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Syntax(format!("{op} expression missing args array")))?;
        if arr.len() != expected {
            return Err(Error::Syntax(format!(
                "{op} expects {expected} argument(s), found {}",
                arr.len()
            )));
        }
        arr.iter().map(parse_expr).collect()
    };

    match op {
        "col" => {
            let ordinal = obj
                .get("ordinal")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Syntax("col expression missing ordinal".to_string()))?;
            Ok(Expr::ColumnRef(ordinal as usize))
        }
        "lit" => {
            let type_name = obj
                .get("type")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Syntax("literal missing type".to_string()))?;
            let dtype = DataType::parse_name(type_name)?;
            let value = parse_literal_value(obj.get("value").unwrap_or(&Value::Null), &dtype)?;
            Ok(Expr::Literal { dtype, value })
        }
        "add" | "sub" | "mul" | "div" => {
            let mut a = args(2)?;
            let right = a.remove(1);
            let left = a.remove(0);
            let op = match op {
                "add" => ArithOp::Add,
                "sub" => ArithOp::Sub,
                "mul" => ArithOp::Mul,
                _ => ArithOp::Div,
            };
            Ok(Expr::Arith {
                op,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        "eq" | "ne" | "lt" | "le" | "gt" | "ge" => {
            let mut a = args(2)?;
            let right = a.remove(1);
            let left = a.remove(0);
            let op = match op {
                "eq" => CmpOp::Eq,
                "ne" => CmpOp::Ne,
                "lt" => CmpOp::Lt,
                "le" => CmpOp::Le,
                "gt" => CmpOp::Gt,
                _ => CmpOp::Ge,
            };
            Ok(Expr::Compare {
                op,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        "and" | "or" => {
            let arr = obj
                .get("args")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Syntax(format!("{op} expression missing args array")))?;
            if arr.len() < 2 {
                return Err(Error::Syntax(format!("{op} expects at least 2 arguments")));
            }
            let parsed = arr.iter().map(parse_expr).collect::<Result<_>>()?;
            Ok(Expr::BoolOp {
                op: if op == "and" { BoolOpKind::And } else { BoolOpKind::Or },
                args: parsed,
            })
        }
        "not" => {
            let parsed = args(1)?;
            Ok(Expr::BoolOp {
                op: BoolOpKind::Not,
                args: parsed,
            })
        }
        "like" => {
            let mut parsed = args(1)?;
            let pattern = obj
                .get("pattern")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Syntax("like missing pattern".to_string()))?
                .to_string();
            Ok(Expr::Like {
                input: Box::new(parsed.remove(0)),
                pattern,
            })
        }
        "case" => {
            let branches_val = obj
                .get("branches")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Syntax("case missing branches".to_string()))?;
            if branches_val.is_empty() {
                return Err(Error::Syntax("case with no branches".to_string()));
            }
            let mut branches = Vec::with_capacity(branches_val.len());
            for b in branches_val {
                let bobj = b
                    .as_object()
                    .ok_or_else(|| Error::Syntax("case branch must be an object".to_string()))?;
                let when = parse_expr(
                    bobj.get("when")
                        .ok_or_else(|| Error::Syntax("case branch missing when".to_string()))?,
                )?;
                let then = parse_expr(
                    bobj.get("then")
                        .ok_or_else(|| Error::Syntax("case branch missing then".to_string()))?,
                )?;
                branches.push((when, then));
            }
            let otherwise = match obj.get("else") {
                Some(Value::Null) | None => None,
                Some(e) => Some(Box::new(parse_expr(e)?)),
            };
            Ok(Expr::Case {
                branches,
                otherwise,
            })
        }
        "cast" => {
            let mut parsed = args(1)?;
            let type_name = obj
                .get("type")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Syntax("cast missing type".to_string()))?;
            Ok(Expr::Cast {
                target: DataType::parse_name(type_name)?,
                input: Box::new(parsed.remove(0)),
            })
        }
        other => Err(Error::UnknownFunction(other.to_string())),
    }
}

fn parse_literal_value(v: &Value, dtype: &DataType) -> Result<Datum> {
    if v.is_null() {
        return Ok(Datum::Null);
    }
    let bad = |msg: &str| Error::Syntax(format!("literal of type {dtype}: {msg}: {v}"));
    match dtype {
        DataType::Int64 => v.as_i64().map(Datum::Int64).ok_or_else(|| bad("expected integer")),
        DataType::Float64 => v
            .as_f64()
            .map(Datum::Float64)
            .ok_or_else(|| bad("expected number")),
        DataType::Decimal { scale, .. } => {
            let s = v.as_str().ok_or_else(|| bad("expected decimal string"))?;
            parse_decimal(s, *scale)
                .map(Datum::Decimal)
                .map_err(|e| bad(&e))
        }
        DataType::Date32 => {
            let s = v.as_str().ok_or_else(|| bad("expected date string"))?;
            parse_date(s).map(Datum::Date32).map_err(|e| bad(&e))
        }
        DataType::Bool => v.as_bool().map(Datum::Bool).ok_or_else(|| bad("expected bool")),
        DataType::Utf8 => v
            .as_str()
            .map(|s| Datum::Utf8(s.to_string()))
            .ok_or_else(|| bad("expected string")),
    }
}
