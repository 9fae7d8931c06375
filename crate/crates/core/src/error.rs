//! Engine-wide error type.
//!
//! A subset of errors ("fallback triggers") reroute a query to the reference
//! executor instead of surfacing to the caller; see [`Error::triggers_fallback`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Plan document
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown relation kind: {0}")]
    UnknownRelation(String),
    #[error("unknown function: {0}")]
    UnknownFunction(String),

    // Validation
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("missing table: {0}")]
    MissingTable(String),
    #[error("column ordinal {ordinal} out of range (arity {arity})")]
    OrdinalOutOfRange { ordinal: usize, arity: usize },

    // Columnar / kernels
    #[error("row index {index} out of range (length {len})")]
    IndexOutOfRange { index: u64, len: usize },
    #[error("row index {index} exceeds narrow index limit {limit}")]
    IndexOverflow { index: u64, limit: u64 },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("integer accumulator overflow in {0}")]
    AccumulatorOverflow(&'static str),
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    // Buffer manager
    #[error("caching region full: need {needed} bytes, {available} available")]
    CacheFull { needed: u64, available: u64 },
    #[error("processing region exhausted: need {needed} bytes, {available} available")]
    ProcessingExhausted { needed: u64, available: u64 },

    // Ingestion
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    // Exchange / transport
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backpressure timeout on exchange {exchange} to node {target}")]
    BackpressureTimeout { exchange: u32, target: u16 },
    #[error("sequence gap in exchange {exchange} stream from node {producer}: expected {expected}, got {got}")]
    SequenceGap {
        exchange: u32,
        producer: u16,
        expected: u32,
        got: u32,
    },
    #[error("unknown temp table entry: query {query}, exchange {exchange}")]
    UnknownEntry { query: u64, exchange: u32 },

    // Coordinator
    #[error("no alive nodes")]
    NoAliveNodes,
    #[error("dispatch timeout: {0}")]
    DispatchTimeout(String),
    #[error("node {0} lost during query execution")]
    NodeLost(u16),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("coordinator unreachable at {0}")]
    CoordinatorUnreachable(String),

    #[error("query cancelled")]
    Cancelled,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that reroute the query to the reference executor
    /// rather than surfacing to the caller.
    pub fn triggers_fallback(&self) -> bool {
        matches!(
            self,
            Error::UnknownRelation(_)
                | Error::UnsupportedFeature(_)
                | Error::IndexOverflow { .. }
                | Error::ProcessingExhausted { .. }
                | Error::CacheFull { .. }
        )
    }

    /// Short stable name for reporting (FFI codes, fallback reasons, logs).
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax(_) => "SyntaxError",
            Error::UnknownRelation(_) => "UnknownRelation",
            Error::UnknownFunction(_) => "UnknownFunction",
            Error::TypeMismatch(_) => "TypeMismatch",
            Error::MissingTable(_) => "MissingTable",
            Error::OrdinalOutOfRange { .. } => "OrdinalOutOfRange",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::IndexOverflow { .. } => "IndexOverflow",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::AccumulatorOverflow(_) => "AccumulatorOverflow",
            Error::UnsupportedFeature(_) => "UnsupportedFeature",
            Error::CacheFull { .. } => "CacheFull",
            Error::ProcessingExhausted { .. } => "ProcessingExhausted",
            Error::Parse { .. } => "ParseError",
            Error::Transport(_) => "TransportError",
            Error::BackpressureTimeout { .. } => "BackpressureTimeout",
            Error::SequenceGap { .. } => "SequenceGap",
            Error::UnknownEntry { .. } => "UnknownEntry",
            Error::NoAliveNodes => "NoAliveNodes",
            Error::DispatchTimeout(_) => "DispatchTimeout",
            Error::NodeLost(_) => "NodeLost",
            Error::Bind { .. } => "BindError",
            Error::CoordinatorUnreachable(_) => "CoordinatorUnreachable",
            Error::Cancelled => "Cancelled",
            Error::Io(_) => "IoError",
        }
    }

    /// True for errors caused by user input (bad documents, missing files,
    /// missing tables) as opposed to internal failures. Drives CLI exit codes.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax(_)
                | Error::UnknownRelation(_)
                | Error::UnknownFunction(_)
                | Error::TypeMismatch(_)
                | Error::MissingTable(_)
                | Error::OrdinalOutOfRange { .. }
                | Error::Parse { .. }
                | Error::SchemaMismatch(_)
                | Error::Io(_)
        )
    }
}
