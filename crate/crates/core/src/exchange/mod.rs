//! Inter-fragment data movement: the wire frame format, pluggable
//! point-to-point transports (in-process loopback and TCP), hash
//! partitioning, the four exchange patterns, credit-based backpressure, and
//! the temp-table registry for received intermediates.

mod frame;
mod inbox;
mod registry;
mod service;
mod transport;

pub use frame::{ExchangeFrame, FRAME_HEADER_LEN, FRAME_MAGIC, FRAME_VERSION};
pub use inbox::ExchangeInbox;
pub use registry::TempTableRegistry;
pub use service::{
    assemble_collect, assemble_merge, exchange_send, partition_batch, CreditBook, SendPlan,
    DEFAULT_INFLIGHT_WINDOW,
};
pub use transport::{
    decode_message, encode_message, LoopbackFabric, LoopbackEndpoint, TcpTransport, Transport,
    WireMessage, COORDINATOR_NODE,
};
