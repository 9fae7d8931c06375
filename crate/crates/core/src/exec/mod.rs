//! Pipeline decomposition and push-based execution over a worker pool with a
//! shared FIFO task queue.

mod pipeline;
mod profile;
mod run;

pub use pipeline::{build_pipelines, FragmentOutput, OpSpec, Pipeline, PipelineDag, SinkSpec, SourceSpec};
pub use profile::{Category, ProfEvent, ProfileReport, Profiler};
pub use run::{execute_fragment, EventKind, ExecEnv, ExecStats, TaskEvent};
