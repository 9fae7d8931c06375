//! Split a physical plan into fragments at exchange boundaries. Each
//! fragment is a maximal exchange-free subtree; exchange nodes become the
//! cut edges of the fragment DAG.

use crate::error::Result;

use super::graph::ExchangePattern;
use super::validate::{PhysKind, PhysNode, PhysicalPlan};
use super::SortKey;

#[derive(Debug, Clone)]
pub struct ExchangeEdge {
    pub id: u32,
    pub pattern: ExchangePattern,
    pub keys: Vec<usize>,
    pub targets: Vec<u16>,
    pub sort_keys: Option<Vec<SortKey>>,
    pub producer: u32,
    pub consumer: u32,
    pub schema: Vec<crate::types::DataType>,
}

#[derive(Debug, Clone)]
pub struct Fragment {
    pub id: u32,
    pub root: PhysNode,
    pub input_exchanges: Vec<u32>,
    pub output_exchange: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct FragmentSet {
    /// Topologically ordered: producers precede consumers; the plan root
    /// fragment is last.
    pub fragments: Vec<Fragment>,
    pub edges: Vec<ExchangeEdge>,
}

impl FragmentSet {
    pub fn root_fragment(&self) -> &Fragment {
        self.fragments.last().expect("fragment set is never empty")
    }

    pub fn edge(&self, id: u32) -> &ExchangeEdge {
        self.edges
            .iter()
            .find(|e| e.id == id)
            .expect("edge ids are dense")
    }
}

struct Splitter {
    fragments: Vec<Fragment>,
    edges: Vec<ExchangeEdge>,
    next_exchange: u32,
}

pub fn split_fragments(plan: &PhysicalPlan) -> Result<FragmentSet> {
    let mut s = Splitter {
        fragments: Vec::new(),
        edges: Vec::new(),
        next_exchange: 0,
    };
    let mut root_inputs = Vec::new();
    let root = s.rewrite(&plan.root, &mut root_inputs);
    let root_id = s.fragments.len() as u32;
    s.fragments.push(Fragment {
        id: root_id,
        root,
        input_exchanges: root_inputs,
        output_exchange: None,
    });
    // Consumer ids were unknown while cutting; fix them up now.
    for f in &s.fragments {
        for &e in &f.input_exchanges {
            s.edges[e as usize].consumer = f.id;
        }
    }
    Ok(FragmentSet {
        fragments: s.fragments,
        edges: s.edges,
    })
}

impl Splitter {
    /// Rewrite a subtree, cutting at every Exchange node. Cut children become
    /// fragments of their own (producers), and the Exchange node itself is
    /// replaced by an ExchangeSource leaf in the consumer.
    fn rewrite(&mut self, node: &PhysNode, inputs_of_fragment: &mut Vec<u32>) -> PhysNode {
        if let PhysKind::Exchange {
            input,
            pattern,
            keys,
            targets,
            sort_keys,
        } = &node.kind
        {
            let exchange_id = self.next_exchange;
            self.next_exchange += 1;
            let mut child_inputs = Vec::new();
            let child_root = self.rewrite(input, &mut child_inputs);
            let producer_id = self.fragments.len() as u32;
            self.fragments.push(Fragment {
                id: producer_id,
                root: child_root,
                input_exchanges: child_inputs,
                output_exchange: Some(exchange_id),
            });
            self.edges.push(ExchangeEdge {
                id: exchange_id,
                pattern: *pattern,
                keys: keys.clone(),
                targets: targets.clone(),
                sort_keys: sort_keys.clone(),
                producer: producer_id,
                consumer: u32::MAX, // patched by split_fragments
                schema: node.schema.clone(),
            });
            inputs_of_fragment.push(exchange_id);
            return PhysNode {
                id: node.id,
                schema: node.schema.clone(),
                kind: PhysKind::ExchangeSource { exchange_id },
            };
        }

        let kind = match &node.kind {
            PhysKind::Read { .. } | PhysKind::ExchangeSource { .. } => node.kind.clone(),
            PhysKind::Filter { input, predicate } => PhysKind::Filter {
                input: Box::new(self.rewrite(input, inputs_of_fragment)),
                predicate: predicate.clone(),
            },
            PhysKind::Project { input, exprs } => PhysKind::Project {
                input: Box::new(self.rewrite(input, inputs_of_fragment)),
                exprs: exprs.clone(),
            },
            PhysKind::HashJoin {
                left,
                right,
                join_type,
                keys,
                build_right,
            } => PhysKind::HashJoin {
                left: Box::new(self.rewrite(left, inputs_of_fragment)),
                right: Box::new(self.rewrite(right, inputs_of_fragment)),
                join_type: *join_type,
                keys: keys.clone(),
                build_right: *build_right,
            },
            PhysKind::NestedLoopJoin {
                left,
                right,
                condition,
            } => PhysKind::NestedLoopJoin {
                left: Box::new(self.rewrite(left, inputs_of_fragment)),
                right: Box::new(self.rewrite(right, inputs_of_fragment)),
                condition: condition.clone(),
            },
            PhysKind::Aggregate {
                input,
                phase,
                group_keys,
                measures,
                strategy,
            } => PhysKind::Aggregate {
                input: Box::new(self.rewrite(input, inputs_of_fragment)),
                phase: *phase,
                group_keys: group_keys.clone(),
                measures: measures.clone(),
                strategy: *strategy,
            },
            PhysKind::Sort { input, keys } => PhysKind::Sort {
                input: Box::new(self.rewrite(input, inputs_of_fragment)),
                keys: keys.clone(),
            },
            PhysKind::Limit { input, n } => PhysKind::Limit {
                input: Box::new(self.rewrite(input, inputs_of_fragment)),
                n: *n,
            },
            PhysKind::Exchange { .. } => unreachable!("handled above"),
        };
        PhysNode {
            id: node.id,
            schema: node.schema.clone(),
            kind,
        }
    }
}

/// Inline every fragment back at its exchange edge, reproducing the original
/// plan graph (used by the reassembly property test).
pub fn reassemble(set: &FragmentSet) -> PhysNode {
    fn inline(node: &PhysNode, set: &FragmentSet) -> PhysNode {
        if let PhysKind::ExchangeSource { exchange_id } = &node.kind {
            let edge = set.edge(*exchange_id);
            let producer = &set.fragments[edge.producer as usize];
            let child = inline(&producer.root, set);
            return PhysNode {
                id: node.id,
                schema: node.schema.clone(),
                kind: PhysKind::Exchange {
                    input: Box::new(child),
                    pattern: edge.pattern,
                    keys: edge.keys.clone(),
                    targets: edge.targets.clone(),
                    sort_keys: edge.sort_keys.clone(),
                },
            };
        }
        let mut out = node.clone();
        out.kind = match &node.kind {
            PhysKind::Filter { input, predicate } => PhysKind::Filter {
                input: Box::new(inline(input, set)),
                predicate: predicate.clone(),
            },
            PhysKind::Project { input, exprs } => PhysKind::Project {
                input: Box::new(inline(input, set)),
                exprs: exprs.clone(),
            },
            PhysKind::HashJoin {
                left,
                right,
                join_type,
                keys,
                build_right,
            } => PhysKind::HashJoin {
                left: Box::new(inline(left, set)),
                right: Box::new(inline(right, set)),
                join_type: *join_type,
                keys: keys.clone(),
                build_right: *build_right,
            },
            PhysKind::NestedLoopJoin {
                left,
                right,
                condition,
            } => PhysKind::NestedLoopJoin {
                left: Box::new(inline(left, set)),
                right: Box::new(inline(right, set)),
                condition: condition.clone(),
            },
            PhysKind::Aggregate {
                input,
                phase,
                group_keys,
                measures,
                strategy,
            } => PhysKind::Aggregate {
                input: Box::new(inline(input, set)),
                phase: *phase,
                group_keys: group_keys.clone(),
                measures: measures.clone(),
                strategy: *strategy,
            },
            PhysKind::Sort { input, keys } => PhysKind::Sort {
                input: Box::new(inline(input, set)),
                keys: keys.clone(),
            },
            PhysKind::Limit { input, n } => PhysKind::Limit {
                input: Box::new(inline(input, set)),
                n: *n,
            },
            other => other.clone(),
        };
        out
    }
    inline(&set.root_fragment().root, set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{Catalog, TableSchema};
    use crate::plan::{parse_plan, validate_plan};
    use crate::types::DataType;

    fn catalog() -> Catalog {
        let mut c = Catalog::default();
        c.insert(
            "t",
            TableSchema::new(vec![("a", DataType::Int64, true), ("v", DataType::Int64, true)]),
        )
        .unwrap();
        c.insert(
            "u",
            TableSchema::new(vec![("b", DataType::Int64, true), ("w", DataType::Int64, true)]),
        )
        .unwrap();
        c
    }

    fn split(doc: &str) -> FragmentSet {
        let plan = parse_plan(doc.as_bytes()).unwrap();
        let phys = validate_plan(&plan, &catalog(), None).unwrap();
        split_fragments(&phys).unwrap()
    }

    #[test]
    fn no_exchange_yields_one_fragment() {
        let set = split(
            r#"{"catalog_ref": "c", "root": {"kind": "read", "table": "t", "columns": [0], "inputs": []}}"#,
        );
        assert_eq!(set.fragments.len(), 1);
        assert!(set.edges.is_empty());
    }

    #[test]
    fn shuffle_before_final_aggregate_cuts_once() {
        let set = split(
            r#"{"catalog_ref": "c", "root": {"kind": "aggregate", "phase": "final", "group_keys": [0],
                "measures": [{"fn": "sum"}],
                "inputs": [{"kind": "exchange", "pattern": "shuffle", "keys": [0],
                    "inputs": [{"kind": "aggregate", "phase": "partial", "group_keys": [0],
                        "measures": [{"fn": "sum", "expr": {"op": "col", "ordinal": 1}}],
                        "inputs": [{"kind": "read", "table": "t", "columns": [0, 1], "inputs": []}]}]}]}}"#,
        );
        assert_eq!(set.fragments.len(), 2);
        assert_eq!(set.edges.len(), 1);
        let e = &set.edges[0];
        assert_eq!(e.producer, 0);
        assert_eq!(e.consumer, 1);
        assert!(matches!(e.pattern, ExchangePattern::Shuffle));
    }

    #[test]
    fn join_with_both_inputs_shuffled_yields_three_fragments() {
        let set = split(
            r#"{"catalog_ref": "c", "root": {"kind": "hash_join", "join_type": "inner", "keys": [[0, 0]],
                "inputs": [
                    {"kind": "exchange", "pattern": "shuffle", "keys": [0],
                     "inputs": [{"kind": "read", "table": "t", "columns": [0, 1], "inputs": []}]},
                    {"kind": "exchange", "pattern": "shuffle", "keys": [0],
                     "inputs": [{"kind": "read", "table": "u", "columns": [0, 1], "inputs": []}]}
                ]}}"#,
        );
        assert_eq!(set.fragments.len(), 3);
        assert_eq!(set.edges.len(), 2);
        assert!(set
            .edges
            .iter()
            .all(|e| matches!(e.pattern, ExchangePattern::Shuffle)));
        // Both consumed by the root fragment.
        assert!(set.edges.iter().all(|e| e.consumer == 2));
    }

    #[test]
    fn reassembly_reproduces_the_plan() {
        let doc = r#"{"catalog_ref": "c", "root": {"kind": "aggregate", "phase": "final", "group_keys": [0],
            "measures": [{"fn": "sum"}],
            "inputs": [{"kind": "exchange", "pattern": "shuffle", "keys": [0],
                "inputs": [{"kind": "aggregate", "phase": "partial", "group_keys": [0],
                    "measures": [{"fn": "sum", "expr": {"op": "col", "ordinal": 1}}],
                    "inputs": [{"kind": "read", "table": "t", "columns": [0, 1], "inputs": []}]}]}]}}"#;
        let plan = parse_plan(doc.as_bytes()).unwrap();
        let phys = validate_plan(&plan, &catalog(), None).unwrap();
        let set = split_fragments(&phys).unwrap();
        let rebuilt = reassemble(&set);
        assert_eq!(rebuilt, phys.root);
    }

    #[test]
    fn every_exchange_becomes_exactly_one_edge() {
        let doc = r#"{"catalog_ref": "c", "root": {"kind": "hash_join", "join_type": "inner", "keys": [[0, 0]],
            "inputs": [
                {"kind": "exchange", "pattern": "shuffle", "keys": [0],
                 "inputs": [{"kind": "read", "table": "t", "columns": [0, 1], "inputs": []}]},
                {"kind": "exchange", "pattern": "broadcast",
                 "inputs": [{"kind": "read", "table": "u", "columns": [0, 1], "inputs": []}]}
            ]}}"#;
        let plan = parse_plan(doc.as_bytes()).unwrap();
        let phys = validate_plan(&plan, &catalog(), None).unwrap();
        fn count_exchanges(n: &PhysNode) -> usize {
            let own = matches!(n.kind, PhysKind::Exchange { .. }) as usize;
            own + n.inputs().iter().map(|i| count_exchanges(i)).sum::<usize>()
        }
        let set = split_fragments(&phys).unwrap();
        assert_eq!(set.edges.len(), count_exchanges(&phys.root));
    }
}
