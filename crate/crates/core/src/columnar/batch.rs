//! Fixed-schema batches: the unit pushed through pipelines and shipped
//! between nodes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{DataType, Datum};

use super::column::{Column, ColumnBuilder};

#[derive(Debug, Clone)]
pub struct Batch {
    schema: Vec<DataType>,
    columns: Vec<Arc<Column>>,
    rows: usize,
}

impl Batch {
    pub fn new(columns: Vec<Arc<Column>>) -> Batch {
        let rows = columns.first().map_or(0, |c| c.len());
        for c in &columns {
            assert_eq!(c.len(), rows, "batch columns must share a row count");
        }
        let schema = columns.iter().map(|c| *c.dtype()).collect();
        Batch {
            schema,
            columns,
            rows,
        }
    }

    pub fn from_columns(columns: Vec<Column>) -> Batch {
        Batch::new(columns.into_iter().map(Arc::new).collect())
    }

    /// A zero-row batch with the given schema.
    pub fn empty(schema: &[DataType]) -> Batch {
        Batch::new(
            schema
                .iter()
                .map(|t| Arc::new(ColumnBuilder::new(*t).finish()))
                .collect(),
        )
    }

    pub fn schema(&self) -> &[DataType] {
        &self.schema
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, i: usize) -> &Arc<Column> {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Arc<Column>] {
        &self.columns
    }

    pub fn byte_size(&self) -> u64 {
        self.columns.iter().map(|c| c.byte_size()).sum()
    }

    pub fn datum(&self, col: usize, row: usize) -> Datum {
        self.columns[col].datum(row)
    }

    pub fn row(&self, i: usize) -> Vec<Datum> {
        self.columns.iter().map(|c| c.datum(i)).collect()
    }

    pub fn slice(&self, offset: usize, len: usize) -> Batch {
        Batch::new(
            self.columns
                .iter()
                .map(|c| Arc::new(c.slice(offset, len)))
                .collect(),
        )
    }

    /// Split into chunks of at most `max_rows` rows. A zero-row batch yields
    /// itself so schema information survives.
    pub fn chunked(&self, max_rows: usize) -> Vec<Batch> {
        if self.rows <= max_rows {
            return vec![self.clone()];
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.rows {
            let len = max_rows.min(self.rows - start);
            out.push(self.slice(start, len));
            start += len;
        }
        out
    }
}

/// Concatenate batches of identical schema, preserving row order.
pub fn concat_batches(schema: &[DataType], batches: &[Batch]) -> Result<Batch> {
    for b in batches {
        if b.schema() != schema {
            return Err(Error::SchemaMismatch(format!(
                "concat over differing schemas: {:?} vs {:?}",
                schema,
                b.schema()
            )));
        }
    }
    if batches.len() == 1 {
        return Ok(batches[0].clone());
    }
    let mut builders: Vec<ColumnBuilder> = schema.iter().map(|t| ColumnBuilder::new(*t)).collect();
    for b in batches {
        for (c, builder) in b.columns().iter().zip(builders.iter_mut()) {
            for i in 0..c.len() {
                builder.push(c.datum(i));
            }
        }
    }
    Ok(Batch::from_columns(
        builders.into_iter().map(|b| b.finish()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b2(a: i64, b: i64) -> Batch {
        Batch::from_columns(vec![Column::from_i64(vec![Some(a), Some(b)])])
    }

    #[test]
    fn concat_identity_on_single_batch() {
        let b = b2(1, 2);
        let out = concat_batches(b.schema(), &[b.clone()]).unwrap();
        assert_eq!(out.rows(), 2);
        assert_eq!(out.datum(0, 0), Datum::Int64(1));
    }

    #[test]
    fn concat_preserves_row_order() {
        let out = concat_batches(&[DataType::Int64], &[b2(1, 2), b2(3, 4)]).unwrap();
        assert_eq!(out.rows(), 4);
        let vals: Vec<_> = (0..4).map(|i| out.datum(0, i)).collect();
        assert_eq!(
            vals,
            vec![
                Datum::Int64(1),
                Datum::Int64(2),
                Datum::Int64(3),
                Datum::Int64(4)
            ]
        );
    }

    #[test]
    fn concat_rejects_schema_mismatch() {
        let a = b2(1, 2);
        let b = Batch::from_columns(vec![Column::from_f64(vec![Some(1.0)])]);
        let err = concat_batches(a.schema(), &[a.clone(), b]).unwrap_err();
        assert_eq!(err.kind(), "SchemaMismatch");
    }

    #[test]
    fn chunking_covers_all_rows() {
        let b = concat_batches(&[DataType::Int64], &[b2(1, 2), b2(3, 4), b2(5, 6)]).unwrap();
        let chunks = b.chunked(4);
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].rows(), 4);
        assert_eq!(chunks[1].rows(), 2);
        assert_eq!(chunks[1].datum(0, 1), Datum::Int64(6));
    }
}
