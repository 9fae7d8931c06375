//! Plan-document ingestion: parse the structured-text plan format into a
//! relational graph, type-check it against a catalog into a physical plan,
//! and split the physical plan into exchange-separated fragments.

mod expr;
mod fragment;
mod graph;
mod parse;
mod print;
mod validate;

pub use expr::{
    arith_result_type, ArithOp, BoolOpKind, CmpOp, Expr, TypedExpr, TypedExprKind,
};
pub use fragment::{reassemble, split_fragments, ExchangeEdge, Fragment, FragmentSet};
pub use graph::{
    AggFn, AggPhase, ExchangePattern, JoinType, Measure, PlanGraph, RelNode, SortKey,
};
pub use parse::parse_plan;
pub use print::print_plan;
pub use validate::{validate_plan, PhysKind, PhysNode, PhysicalPlan, TypedMeasure};
