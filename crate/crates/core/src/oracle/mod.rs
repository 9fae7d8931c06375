//! Row-at-a-time reference executor. Shares the plan IR and the columnar
//! ingestion with the native engine but none of the vectorized kernel code;
//! it defines the semantics every kernel is tested against and serves as the
//! fallback path for failed or unsupported plans.

mod eval;
mod rows;

pub use eval::{eval_datum, like_match_chars, row_cmp};
pub use rows::{oracle_execute, RowAcc, TableSource};
