//! Columnar data model: validity-bitmap vectors, fixed-schema batches,
//! selection vectors, the wire encoding, and CSV ingestion.

mod batch;
mod column;
pub mod csv;
mod selection;
mod table;
mod wire;

pub use batch::{concat_batches, Batch};
pub use column::{bitmap_get, bitmap_set, Column, ColumnBuilder, Values};
pub use selection::{gather, gather_padded, narrow_indices, SelectionVector, NULL_INDEX};
pub use table::{Catalog, ColumnDef, Table, TableSchema};
pub use wire::{deserialize_batch, serialize_batch, serialized_batch_len};
