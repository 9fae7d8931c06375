//! Decompose a fragment's plan subtree into a pipeline DAG. Pipeline
//! breakers (join build, aggregate, sort) terminate one pipeline and source
//! a later one; filter, project, probe and limit stay in-pipeline.

use crate::config::GroupStrategy;
use crate::error::{Error, Result};
use crate::plan::{AggPhase, JoinType, PhysKind, PhysNode, SortKey, TypedExpr, TypedMeasure};
use crate::types::DataType;

#[derive(Debug, Clone)]
pub enum SourceSpec {
    /// Scan of a cached base table (the node-local partition).
    Table { node_id: u32, name: String, columns: Vec<usize> },
    /// Scan of a received exchange temp table.
    ExchangeRecv { exchange_id: u32 },
    /// Output of an earlier pipeline's breaker sink.
    Breaker { pipeline: usize },
}

#[derive(Debug, Clone)]
pub enum OpSpec {
    Filter {
        node_id: u32,
        predicate: TypedExpr,
    },
    Project {
        node_id: u32,
        exprs: Vec<TypedExpr>,
    },
    /// Probe against the join table sealed by `build_pipeline`.
    JoinProbe {
        node_id: u32,
        join_type: JoinType,
        probe_key_ordinals: Vec<usize>,
        build_pipeline: usize,
        output_schema: Vec<DataType>,
    },
    Limit {
        node_id: u32,
        n: u64,
        gate: usize,
    },
}

#[derive(Debug, Clone)]
pub enum SinkSpec {
    /// Buffer the stream; the sealed table becomes the fragment output.
    FragmentOut { schema: Vec<DataType> },
    JoinBuild {
        node_id: u32,
        key_ordinals: Vec<usize>,
        input_schema: Vec<DataType>,
    },
    Aggregate {
        node_id: u32,
        phase: AggPhase,
        group_keys: Vec<usize>,
        measures: Vec<TypedMeasure>,
        strategy: GroupStrategy,
        input_schema: Vec<DataType>,
        /// Accumulator-layout schema buffered between tasks and seal.
        acc_schema: Vec<DataType>,
        output_schema: Vec<DataType>,
    },
    Sort {
        node_id: u32,
        keys: Vec<SortKey>,
        schema: Vec<DataType>,
    },
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub id: usize,
    pub source: SourceSpec,
    pub ops: Vec<OpSpec>,
    pub sink: SinkSpec,
    /// Pipelines whose sinks must seal before this pipeline's tasks enter
    /// the queue (breaker inputs and join builds).
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentOutput {
    /// A dedicated pipeline with a FragmentOut sink.
    Pipeline(usize),
    /// The plan root is itself a breaker; its sealed output is the result.
    Breaker(usize),
}

#[derive(Debug, Clone)]
pub struct PipelineDag {
    pub pipelines: Vec<Pipeline>,
    pub output: FragmentOutput,
    pub limit_gates: usize,
    pub output_schema: Vec<DataType>,
}

struct Stream {
    source: SourceSpec,
    ops: Vec<OpSpec>,
    deps: Vec<usize>,
    schema: Vec<DataType>,
}

struct Builder {
    pipelines: Vec<Pipeline>,
    limit_gates: usize,
}

impl Builder {
    fn close(&mut self, stream: Stream, sink: SinkSpec) -> usize {
        let id = self.pipelines.len();
        self.pipelines.push(Pipeline {
            id,
            source: stream.source,
            ops: stream.ops,
            sink,
            deps: stream.deps,
        });
        id
    }

    fn walk(&mut self, node: &PhysNode) -> Result<Stream> {
        match &node.kind {
            PhysKind::Read {
                table,
                columns,
                predicate,
            } => {
                let mut ops = Vec::new();
                if let Some(p) = predicate {
                    ops.push(OpSpec::Filter {
                        node_id: node.id,
                        predicate: p.clone(),
                    });
                }
                Ok(Stream {
                    source: SourceSpec::Table {
                        node_id: node.id,
                        name: table.clone(),
                        columns: columns.clone(),
                    },
                    ops,
                    deps: Vec::new(),
                    schema: node.schema.clone(),
                })
            }
            PhysKind::ExchangeSource { exchange_id } => Ok(Stream {
                source: SourceSpec::ExchangeRecv {
                    exchange_id: *exchange_id,
                },
                ops: Vec::new(),
                deps: Vec::new(),
                schema: node.schema.clone(),
            }),
            PhysKind::Filter { input, predicate } => {
                let mut s = self.walk(input)?;
                s.ops.push(OpSpec::Filter {
                    node_id: node.id,
                    predicate: predicate.clone(),
                });
                s.schema = node.schema.clone();
                Ok(s)
            }
            PhysKind::Project { input, exprs } => {
                let mut s = self.walk(input)?;
                s.ops.push(OpSpec::Project {
                    node_id: node.id,
                    exprs: exprs.clone(),
                });
                s.schema = node.schema.clone();
                Ok(s)
            }
            PhysKind::Limit { input, n } => {
                let mut s = self.walk(input)?;
                let gate = self.limit_gates;
                self.limit_gates += 1;
                s.ops.push(OpSpec::Limit {
                    node_id: node.id,
                    n: *n,
                    gate,
                });
                s.schema = node.schema.clone();
                Ok(s)
            }
            PhysKind::HashJoin {
                left,
                right,
                join_type,
                keys,
                ..
            } => {
                // Build side is the right child; its pipeline must seal
                // before any probe task runs.
                let build_stream = self.walk(right)?;
                let build_schema = build_stream.schema.clone();
                let build_pipeline = self.close(
                    build_stream,
                    SinkSpec::JoinBuild {
                        node_id: node.id,
                        key_ordinals: keys.iter().map(|&(_, r)| r).collect(),
                        input_schema: build_schema,
                    },
                );
                let mut s = self.walk(left)?;
                s.deps.push(build_pipeline);
                s.ops.push(OpSpec::JoinProbe {
                    node_id: node.id,
                    join_type: *join_type,
                    probe_key_ordinals: keys.iter().map(|&(l, _)| l).collect(),
                    build_pipeline,
                    output_schema: node.schema.clone(),
                });
                s.schema = node.schema.clone();
                Ok(s)
            }
            PhysKind::Aggregate {
                input,
                phase,
                group_keys,
                measures,
                strategy,
            } => {
                let child = self.walk(input)?;
                let input_schema = child.schema.clone();
                let mut acc_schema: Vec<DataType> =
                    group_keys.iter().map(|&k| input_schema[k]).collect();
                for m in measures {
                    acc_schema.extend_from_slice(&m.acc_types);
                }
                let deps = vec![self.close(
                    child,
                    SinkSpec::Aggregate {
                        node_id: node.id,
                        phase: *phase,
                        group_keys: group_keys.clone(),
                        measures: measures.clone(),
                        strategy: *strategy,
                        input_schema,
                        acc_schema,
                        output_schema: node.schema.clone(),
                    },
                )];
                Ok(Stream {
                    source: SourceSpec::Breaker { pipeline: deps[0] },
                    ops: Vec::new(),
                    deps,
                    schema: node.schema.clone(),
                })
            }
            PhysKind::Sort { input, keys } => {
                let child = self.walk(input)?;
                let deps = vec![self.close(
                    child,
                    SinkSpec::Sort {
                        node_id: node.id,
                        keys: keys.clone(),
                        schema: node.schema.clone(),
                    },
                )];
                Ok(Stream {
                    source: SourceSpec::Breaker { pipeline: deps[0] },
                    ops: Vec::new(),
                    deps,
                    schema: node.schema.clone(),
                })
            }
            PhysKind::NestedLoopJoin { .. } => Err(Error::UnknownRelation(
                "nested_loop_join".to_string(),
            )),
            PhysKind::Exchange { .. } => Err(Error::UnsupportedFeature(
                "exchange node inside a fragment".to_string(),
            )),
        }
    }
}

/// Build the pipeline DAG for one fragment subtree (exchange endpoints
/// appear as sources; the fragment output is buffered by the final sink).
pub fn build_pipelines(root: &PhysNode) -> Result<PipelineDag> {
    let mut b = Builder {
        pipelines: Vec::new(),
        limit_gates: 0,
    };
    let stream = b.walk(root)?;
    let output_schema = stream.schema.clone();
    let output = if stream.ops.is_empty() {
        if let SourceSpec::Breaker { pipeline } = stream.source {
            FragmentOutput::Breaker(pipeline)
        } else {
            let schema = stream.schema.clone();
            FragmentOutput::Pipeline(b.close(stream, SinkSpec::FragmentOut { schema }))
        }
    } else {
        let schema = stream.schema.clone();
        FragmentOutput::Pipeline(b.close(stream, SinkSpec::FragmentOut { schema }))
    };
    Ok(PipelineDag {
        pipelines: b.pipelines,
        output,
        limit_gates: b.limit_gates,
        output_schema,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{Catalog, TableSchema};
    use crate::plan::{parse_plan, validate_plan};

    fn catalog() -> Catalog {
        let mut c = Catalog::default();
        for (name, cols) in [
            ("t", vec![("a", DataType::Int64), ("v", DataType::Int64)]),
            ("u", vec![("b", DataType::Int64), ("w", DataType::Int64)]),
        ] {
            c.insert(
                name,
                TableSchema::new(cols.into_iter().map(|(n, t)| (n, t, true)).collect()),
            )
            .unwrap();
        }
        c
    }

    fn dag_for(doc: &str) -> PipelineDag {
        let plan = parse_plan(doc.as_bytes()).unwrap();
        let phys = validate_plan(&plan, &catalog(), None).unwrap();
        build_pipelines(&phys.root).unwrap()
    }

    #[test]
    fn filter_reduce_is_one_pipeline() {
        let dag = dag_for(
            r#"{"catalog_ref": "c", "root": {"kind": "aggregate", "group_keys": [],
                "measures": [{"fn": "sum", "expr": {"op": "col", "ordinal": 1}}],
                "inputs": [{"kind": "filter",
                    "predicate": {"op": "lt", "args": [{"op": "col", "ordinal": 0}, {"op": "lit", "type": "int64", "value": 10}]},
                    "inputs": [{"kind": "read", "table": "t", "columns": [0, 1], "inputs": []}]}]}}"#,
        );
        assert_eq!(dag.pipelines.len(), 1);
        assert_eq!(dag.output, FragmentOutput::Breaker(0));
    }

    #[test]
    fn join_is_two_pipelines_with_build_dependency() {
        let dag = dag_for(
            r#"{"catalog_ref": "c", "root": {"kind": "hash_join", "join_type": "inner", "keys": [[0, 0]],
                "inputs": [
                    {"kind": "read", "table": "t", "columns": [0, 1], "inputs": []},
                    {"kind": "read", "table": "u", "columns": [0, 1], "inputs": []}
                ]}}"#,
        );
        assert_eq!(dag.pipelines.len(), 2);
        assert!(matches!(dag.pipelines[0].sink, SinkSpec::JoinBuild { .. }));
        assert_eq!(dag.pipelines[1].deps, vec![0]);
        assert_eq!(dag.output, FragmentOutput::Pipeline(1));
    }

    #[test]
    fn q3_shape_is_five_pipelines() {
        // Two joins + aggregate + sort + limit: build, build, probe+agg,
        // sort, limited result.
        let dag = dag_for(
            r#"{"catalog_ref": "c", "root": {"kind": "limit", "n": 10, "inputs": [
                {"kind": "sort", "keys": [{"ordinal": 1, "order": "desc", "nulls": "last"}], "inputs": [
                    {"kind": "aggregate", "group_keys": [0], "measures": [{"fn": "sum", "expr": {"op": "col", "ordinal": 1}}], "inputs": [
                        {"kind": "hash_join", "join_type": "inner", "keys": [[0, 0]], "inputs": [
                            {"kind": "hash_join", "join_type": "inner", "keys": [[0, 0]], "inputs": [
                                {"kind": "read", "table": "t", "columns": [0, 1], "inputs": []},
                                {"kind": "read", "table": "u", "columns": [0, 1], "inputs": []}
                            ]},
                            {"kind": "read", "table": "u", "columns": [0, 1], "inputs": []}
                        ]}
                    ]}
                ]}
            ]}}"#,
        );
        assert_eq!(dag.pipelines.len(), 5);
        let sinks: Vec<&str> = dag
            .pipelines
            .iter()
            .map(|p| match p.sink {
                SinkSpec::JoinBuild { .. } => "build",
                SinkSpec::Aggregate { .. } => "agg",
                SinkSpec::Sort { .. } => "sort",
                SinkSpec::FragmentOut { .. } => "out",
            })
            .collect();
        assert_eq!(sinks, vec!["build", "build", "agg", "sort", "out"]);
        // Dependency spine is linear: limit pipeline depends on sort,
        // sort on agg, agg probe on both builds (inner join first).
        assert_eq!(dag.pipelines[4].deps, vec![3]);
        assert_eq!(dag.pipelines[3].deps, vec![2]);
        assert_eq!(dag.pipelines[2].deps, vec![1, 0]);
    }

    #[test]
    fn nested_loop_join_is_unregistered() {
        let plan = parse_plan(
            br#"{"catalog_ref": "c", "root": {"kind": "nested_loop_join",
                "condition": {"op": "lt", "args": [{"op": "col", "ordinal": 0}, {"op": "col", "ordinal": 2}]},
                "inputs": [
                    {"kind": "read", "table": "t", "columns": [0, 1], "inputs": []},
                    {"kind": "read", "table": "u", "columns": [0, 1], "inputs": []}
                ]}}"#,
        )
        .unwrap();
        let phys = validate_plan(&plan, &catalog(), None).unwrap();
        let err = build_pipelines(&phys.root).unwrap_err();
        assert_eq!(err.kind(), "UnknownRelation");
        assert!(err.triggers_fallback());
    }
}
