//! The untyped relational graph produced by plan parsing.

use super::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinType {
    Inner,
    Left,
    Semi,
    Anti,
}

impl JoinType {
    pub fn name(&self) -> &'static str {
        match self {
            JoinType::Inner => "inner",
            JoinType::Left => "left",
            JoinType::Semi => "semi",
            JoinType::Anti => "anti",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFn {
    Sum,
    Count,
    Min,
    Max,
    Avg,
}

impl AggFn {
    pub fn name(&self) -> &'static str {
        match self {
            AggFn::Sum => "sum",
            AggFn::Count => "count",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::Avg => "avg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggPhase {
    Single,
    Partial,
    Final,
}

impl AggPhase {
    pub fn name(&self) -> &'static str {
        match self {
            AggPhase::Single => "single",
            AggPhase::Partial => "partial",
            AggPhase::Final => "final",
        }
    }
}

/// One aggregate measure. `input` is required for single/partial phases
/// (except `count`, where omission means count-rows) and must be omitted in
/// the final phase, which consumes accumulator columns positionally.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub agg: AggFn,
    pub input: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub ordinal: usize,
    pub descending: bool,
    pub nulls_first: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangePattern {
    Broadcast,
    Shuffle,
    Merge,
    Multicast,
}

impl ExchangePattern {
    pub fn name(&self) -> &'static str {
        match self {
            ExchangePattern::Broadcast => "broadcast",
            ExchangePattern::Shuffle => "shuffle",
            ExchangePattern::Merge => "merge",
            ExchangePattern::Multicast => "multicast",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelNode {
    Read {
        table: String,
        columns: Vec<usize>,
        predicate: Option<Expr>,
    },
    Filter {
        input: Box<RelNode>,
        predicate: Expr,
    },
    Project {
        input: Box<RelNode>,
        exprs: Vec<Expr>,
    },
    HashJoin {
        left: Box<RelNode>,
        right: Box<RelNode>,
        join_type: JoinType,
        keys: Vec<(usize, usize)>,
    },
    /// Join with an arbitrary boolean condition over the concatenated
    /// schemas. Only the reference executor runs this relation; the native
    /// engine reports it as unregistered, which reroutes the query.
    NestedLoopJoin {
        left: Box<RelNode>,
        right: Box<RelNode>,
        condition: Expr,
    },
    Aggregate {
        input: Box<RelNode>,
        phase: AggPhase,
        group_keys: Vec<usize>,
        measures: Vec<Measure>,
    },
    Sort {
        input: Box<RelNode>,
        keys: Vec<SortKey>,
    },
    Limit {
        input: Box<RelNode>,
        n: u64,
    },
    Exchange {
        input: Box<RelNode>,
        pattern: ExchangePattern,
        keys: Vec<usize>,
        targets: Vec<u16>,
    },
}

impl RelNode {
    pub fn kind_name(&self) -> &'static str {
        match self {
            RelNode::Read { .. } => "read",
            RelNode::Filter { .. } => "filter",
            RelNode::Project { .. } => "project",
            RelNode::HashJoin { .. } => "hash_join",
            RelNode::NestedLoopJoin { .. } => "nested_loop_join",
            RelNode::Aggregate { .. } => "aggregate",
            RelNode::Sort { .. } => "sort",
            RelNode::Limit { .. } => "limit",
            RelNode::Exchange { .. } => "exchange",
        }
    }

    pub fn inputs(&self) -> Vec<&RelNode> {
        match self {
            RelNode::Read { .. } => vec![],
            RelNode::Filter { input, .. }
            | RelNode::Project { input, .. }
            | RelNode::Aggregate { input, .. }
            | RelNode::Sort { input, .. }
            | RelNode::Limit { input, .. }
            | RelNode::Exchange { input, .. } => vec![input],
            RelNode::HashJoin { left, right, .. } => vec![left, right],
            RelNode::NestedLoopJoin { left, right, .. } => vec![left, right],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.inputs().iter().map(|n| n.node_count()).sum::<usize>()
    }
}

/// A parsed plan document: the relation tree plus the catalog label it was
/// authored against (informational).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGraph {
    pub catalog_ref: String,
    pub root: RelNode,
}
