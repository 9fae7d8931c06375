//! Canonical plan-document printer: the inverse of the parser up to JSON
//! formatting, so parse -> print -> parse is the identity on the graph.

use serde_json::{json, Map, Value};

use crate::types::{format_date, format_decimal, DataType, Datum};

use super::expr::{BoolOpKind, Expr};
use super::graph::{PlanGraph, RelNode};

pub fn print_plan(plan: &PlanGraph) -> String {
    let doc = json!({
        "catalog_ref": plan.catalog_ref,
        "root": node_value(&plan.root),
    });
    serde_json::to_string_pretty(&doc).expect("plan serialization cannot fail")
}

fn node_value(node: &RelNode) -> Value {
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::String(node.kind_name().into()));
    match node {
        RelNode::Read {
            table,
            columns,
            predicate,
        } => {
            obj.insert("table".into(), Value::String(table.clone()));
            obj.insert("columns".into(), json!(columns));
            if let Some(p) = predicate {
                obj.insert("predicate".into(), expr_value(p));
            }
            obj.insert("inputs".into(), json!([]));
        }
        RelNode::Filter { input, predicate } => {
            obj.insert("predicate".into(), expr_value(predicate));
            obj.insert("inputs".into(), json!([node_value(input)]));
        }
        RelNode::Project { input, exprs } => {
            obj.insert(
                "exprs".into(),
                Value::Array(exprs.iter().map(expr_value).collect()),
            );
            obj.insert("inputs".into(), json!([node_value(input)]));
        }
        RelNode::HashJoin {
            left,
            right,
            join_type,
            keys,
        } => {
            obj.insert("join_type".into(), Value::String(join_type.name().into()));
            obj.insert(
                "keys".into(),
                Value::Array(keys.iter().map(|(l, r)| json!([l, r])).collect()),
            );
            obj.insert("inputs".into(), json!([node_value(left), node_value(right)]));
        }
        RelNode::NestedLoopJoin {
            left,
            right,
            condition,
        } => {
            obj.insert("condition".into(), expr_value(condition));
            obj.insert("inputs".into(), json!([node_value(left), node_value(right)]));
        }
        RelNode::Aggregate {
            input,
            phase,
            group_keys,
            measures,
        } => {
            obj.insert("phase".into(), Value::String(phase.name().into()));
            obj.insert("group_keys".into(), json!(group_keys));
            obj.insert(
                "measures".into(),
                Value::Array(
                    measures
                        .iter()
                        .map(|m| {
                            let mut mv = Map::new();
                            mv.insert("fn".into(), Value::String(m.agg.name().into()));
                            if let Some(e) = &m.input {
                                mv.insert("expr".into(), expr_value(e));
                            }
                            Value::Object(mv)
                        })
                        .collect(),
                ),
            );
            obj.insert("inputs".into(), json!([node_value(input)]));
        }
        RelNode::Sort { input, keys } => {
            obj.insert(
                "keys".into(),
                Value::Array(
                    keys.iter()
                        .map(|k| {
                            json!({
                                "ordinal": k.ordinal,
                                "order": if k.descending { "desc" } else { "asc" },
                                "nulls": if k.nulls_first { "first" } else { "last" },
                            })
                        })
                        .collect(),
                ),
            );
            obj.insert("inputs".into(), json!([node_value(input)]));
        }
        RelNode::Limit { input, n } => {
            obj.insert("n".into(), json!(n));
            obj.insert("inputs".into(), json!([node_value(input)]));
        }
        RelNode::Exchange {
            input,
            pattern,
            keys,
            targets,
        } => {
            obj.insert("pattern".into(), Value::String(pattern.name().into()));
            if !keys.is_empty() {
                obj.insert("keys".into(), json!(keys));
            }
            if !targets.is_empty() {
                obj.insert("targets".into(), json!(targets));
            }
            obj.insert("inputs".into(), json!([node_value(input)]));
        }
    }
    Value::Object(obj)
}

fn expr_value(e: &Expr) -> Value {
    match e {
        Expr::ColumnRef(ordinal) => json!({"op": "col", "ordinal": ordinal}),
        Expr::Literal { dtype, value } => {
            json!({"op": "lit", "type": dtype.to_string(), "value": literal_value(dtype, value)})
        }
        Expr::Arith { op, left, right } => {
            json!({"op": op.name(), "args": [expr_value(left), expr_value(right)]})
        }
        Expr::Compare { op, left, right } => {
            json!({"op": op.name(), "args": [expr_value(left), expr_value(right)]})
        }
        Expr::BoolOp { op, args } => {
            let name = match op {
                BoolOpKind::And => "and",
                BoolOpKind::Or => "or",
                BoolOpKind::Not => "not",
            };
            json!({"op": name, "args": args.iter().map(expr_value).collect::<Vec<_>>()})
        }
        Expr::Like { input, pattern } => {
            json!({"op": "like", "pattern": pattern, "args": [expr_value(input)]})
        }
        Expr::Case { branches, otherwise } => {
            let mut obj = Map::new();
            obj.insert("op".into(), Value::String("case".into()));
            obj.insert(
                "branches".into(),
                Value::Array(
                    branches
                        .iter()
                        .map(|(w, t)| json!({"when": expr_value(w), "then": expr_value(t)}))
                        .collect(),
                ),
            );
            if let Some(o) = otherwise {
                obj.insert("else".into(), expr_value(o));
            }
            Value::Object(obj)
        }
        Expr::Cast { target, input } => {
            json!({"op": "cast", "type": target.to_string(), "args": [expr_value(input)]})
        }
    }
}

fn literal_value(dtype: &DataType, value: &Datum) -> Value {
    match value {
        Datum::Null => Value::Null,
        Datum::Int64(v) => json!(v),
        Datum::Float64(v) => json!(v),
        Datum::Decimal(v) => Value::String(format_decimal(*v, dtype.scale())),
        Datum::Date32(v) => Value::String(format_date(*v)),
        Datum::Bool(v) => json!(v),
        Datum::Utf8(s) => Value::String(s.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_plan;
    use super::*;

    const Q6_LIKE_DOC: &str = r#"{
      "catalog_ref": "default",
      "root": {
        "kind": "aggregate",
        "phase": "single",
        "group_keys": [],
        "measures": [{"fn": "sum", "expr": {"op": "mul", "args": [{"op": "col", "ordinal": 1}, {"op": "col", "ordinal": 2}]}}],
        "inputs": [{
          "kind": "filter",
          "predicate": {"op": "and", "args": [
            {"op": "ge", "args": [{"op": "col", "ordinal": 0}, {"op": "lit", "type": "date32", "value": "1994-01-01"}]},
            {"op": "lt", "args": [{"op": "col", "ordinal": 0}, {"op": "lit", "type": "date32", "value": "1995-01-01"}]},
            {"op": "le", "args": [{"op": "col", "ordinal": 2}, {"op": "lit", "type": "decimal(12,2)", "value": "0.07"}]},
            {"op": "lt", "args": [{"op": "col", "ordinal": 3}, {"op": "lit", "type": "decimal(12,2)", "value": "24.00"}]}
          ]},
          "inputs": [{
            "kind": "read",
            "table": "lineitem",
            "columns": [7, 2, 3, 1],
            "inputs": []
          }]
        }]
      }
    }"#;

    #[test]
    fn minimal_read_parses() {
        let doc = br#"{"catalog_ref": "c", "root": {"kind": "read", "table": "t", "columns": [0], "inputs": []}}"#;
        let plan = parse_plan(doc).unwrap();
        assert_eq!(plan.root.node_count(), 1);
        assert_eq!(plan.root.kind_name(), "read");
    }

    #[test]
    fn missing_filter_child_is_syntax_error() {
        let doc = br#"{"catalog_ref": "c", "root": {"kind": "filter", "predicate": {"op": "col", "ordinal": 0}, "inputs": []}}"#;
        let err = parse_plan(doc).unwrap_err();
        assert_eq!(err.kind(), "SyntaxError");
    }

    #[test]
    fn q6_shape_has_three_nodes() {
        let plan = parse_plan(Q6_LIKE_DOC.as_bytes()).unwrap();
        assert_eq!(plan.root.node_count(), 3);
    }

    #[test]
    fn unknown_kind_is_unknown_relation() {
        let doc = br#"{"catalog_ref": "c", "root": {"kind": "window", "inputs": []}}"#;
        let err = parse_plan(doc).unwrap_err();
        assert_eq!(err.kind(), "UnknownRelation");
        assert!(err.triggers_fallback());
    }

    #[test]
    fn unknown_expr_op_is_unknown_function() {
        let doc = br#"{"catalog_ref": "c", "root": {"kind": "filter", "predicate": {"op": "regexp", "args": []}, "inputs": [{"kind": "read", "table": "t", "columns": [0], "inputs": []}]}}"#;
        let err = parse_plan(doc).unwrap_err();
        assert_eq!(err.kind(), "UnknownFunction");
    }

    #[test]
    fn merge_exchange_requires_sort_child() {
        let doc = br#"{"catalog_ref": "c", "root": {"kind": "exchange", "pattern": "merge",
            "inputs": [{"kind": "read", "table": "t", "columns": [0], "inputs": []}]}}"#;
        let err = parse_plan(doc).unwrap_err();
        assert_eq!(err.kind(), "SyntaxError");
    }

    #[test]
    fn parse_print_parse_is_identity() {
        let plan = parse_plan(Q6_LIKE_DOC.as_bytes()).unwrap();
        let printed = print_plan(&plan);
        let again = parse_plan(printed.as_bytes()).unwrap();
        assert_eq!(plan, again);
        // And printing is a fixed point.
        assert_eq!(printed, print_plan(&again));
    }
}
