//! Named tables (sealed batch lists) and the catalog of table schemas.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::DataType;

use super::batch::Batch;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(with = "dtype_name")]
    pub dtype: DataType,
    #[serde(default = "default_true")]
    pub nullable: bool,
}

fn default_true() -> bool {
    true
}

mod dtype_name {
    use super::DataType;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DataType, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DataType, D::Error> {
        let name = String::deserialize(d)?;
        DataType::parse_name(&name).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnDef>,
}

impl TableSchema {
    pub fn new(columns: Vec<(&str, DataType, bool)>) -> TableSchema {
        TableSchema {
            columns: columns
                .into_iter()
                .map(|(name, dtype, nullable)| ColumnDef {
                    name: name.to_string(),
                    dtype,
                    nullable,
                })
                .collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn dtypes(&self) -> Vec<DataType> {
        self.columns.iter().map(|c| c.dtype).collect()
    }

    pub fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate column name {}",
                    c.name
                )));
            }
        }
        Ok(())
    }
}

/// A sealed table: immutable batches of one schema.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub schema: TableSchema,
    pub batches: Vec<Arc<Batch>>,
}

impl Table {
    pub fn new(name: &str, schema: TableSchema, batches: Vec<Batch>) -> Result<Table> {
        schema.check()?;
        let dtypes = schema.dtypes();
        for b in &batches {
            if b.schema() != dtypes.as_slice() {
                return Err(Error::SchemaMismatch(format!(
                    "batch schema {:?} does not match table {} schema {:?}",
                    b.schema(),
                    name,
                    dtypes
                )));
            }
        }
        Ok(Table {
            name: name.to_string(),
            schema,
            batches: batches.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.batches.iter().map(|b| b.rows()).sum()
    }

    pub fn byte_size(&self) -> u64 {
        self.batches.iter().map(|b| b.byte_size()).sum()
    }

    /// Row range `[start, end)` as a new table (used for node placement).
    pub fn row_range(&self, start: usize, end: usize) -> Table {
        let mut out = Vec::new();
        let mut base = 0;
        for b in &self.batches {
            let lo = start.max(base).min(base + b.rows());
            let hi = end.max(base).min(base + b.rows());
            if hi > lo {
                out.push(b.slice(lo - base, hi - lo));
            }
            base += b.rows();
        }
        Table {
            name: self.name.clone(),
            schema: self.schema.clone(),
            batches: out.into_iter().map(Arc::new).collect(),
        }
    }
}

/// Table-name -> schema map. BTreeMap keeps iteration deterministic.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub tables: BTreeMap<String, TableSchema>,
}

impl Catalog {
    pub fn get(&self, name: &str) -> Result<&TableSchema> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::MissingTable(name.to_string()))
    }

    pub fn insert(&mut self, name: &str, schema: TableSchema) -> Result<()> {
        schema.check()?;
        self.tables.insert(name.to_string(), schema);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::Column;
    use crate::types::Datum;

    #[test]
    fn duplicate_column_names_rejected() {
        let schema = TableSchema::new(vec![
            ("a", DataType::Int64, true),
            ("a", DataType::Int64, true),
        ]);
        assert!(schema.check().is_err());
    }

    #[test]
    fn row_range_spans_batches() {
        let schema = TableSchema::new(vec![("v", DataType::Int64, false)]);
        let batches = vec![
            Batch::from_columns(vec![Column::from_i64(vec![Some(0), Some(1), Some(2)])]),
            Batch::from_columns(vec![Column::from_i64(vec![Some(3), Some(4)])]),
        ];
        let t = Table::new("t", schema, batches).unwrap();
        let sliced = t.row_range(2, 4);
        assert_eq!(sliced.rows(), 2);
        assert_eq!(sliced.batches[0].datum(0, 0), Datum::Int64(2));
        assert_eq!(sliced.batches[1].datum(0, 0), Datum::Int64(3));
    }
}
