//! CSV ingestion and result printing.
//!
//! Dialect: UTF-8, comma separator, optional header row, RFC-4180 quoting.
//! An empty field is null (consequently empty strings read back as null).
//! Dates are `YYYY-MM-DD`, decimals plain digit strings, bools true/false.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::types::{format_datum, parse_date, parse_decimal, DataType, Datum};

use super::batch::Batch;
use super::column::ColumnBuilder;
use super::table::TableSchema;

#[derive(Debug)]
pub struct CsvReadSummary {
    pub rows: usize,
    pub batches: Vec<Batch>,
}

pub fn read_csv<R: Read>(
    reader: R,
    schema: &TableSchema,
    has_header: bool,
    batch_size: usize,
) -> Result<CsvReadSummary> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);

    let dtypes = schema.dtypes();
    let new_builders =
        |dtypes: &[DataType]| -> Vec<ColumnBuilder> { dtypes.iter().map(|t| ColumnBuilder::new(*t)).collect() };
    let mut builders = new_builders(&dtypes);
    let mut pending = 0usize;
    let mut batches = Vec::new();
    let mut rows = 0usize;

    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| Error::Parse {
            row: rows + 1,
            col: 0,
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let row_no = rows + 1;
        if record.len() != schema.arity() {
            return Err(Error::Parse {
                row: row_no,
                col: record.len(),
                message: format!(
                    "expected {} fields, found {}",
                    schema.arity(),
                    record.len()
                ),
            });
        }
        for (i, field) in record.iter().enumerate() {
            let def = &schema.columns[i];
            if field.is_empty() {
                if !def.nullable {
                    return Err(Error::Parse {
                        row: row_no,
                        col: i + 1,
                        message: format!("null in non-nullable column {}", def.name),
                    });
                }
                builders[i].push(Datum::Null);
                continue;
            }
            let parsed = parse_field(field, &def.dtype).map_err(|message| Error::Parse {
                row: row_no,
                col: i + 1,
                message,
            })?;
            builders[i].push(parsed);
        }
        rows += 1;
        pending += 1;
        if pending == batch_size {
            let full = std::mem::replace(&mut builders, new_builders(&dtypes));
            batches.push(Batch::from_columns(
                full.into_iter().map(|b| b.finish()).collect(),
            ));
            pending = 0;
        }
    }

    if pending > 0 || batches.is_empty() {
        batches.push(Batch::from_columns(
            builders.into_iter().map(|b| b.finish()).collect(),
        ));
    }
    Ok(CsvReadSummary { rows, batches })
}

fn parse_field(field: &str, dtype: &DataType) -> std::result::Result<Datum, String> {
    match dtype {
        DataType::Int64 => field
            .trim()
            .parse::<i64>()
            .map(Datum::Int64)
            .map_err(|e| format!("invalid int64 {field:?}: {e}")),
        DataType::Float64 => field
            .trim()
            .parse::<f64>()
            .map(Datum::Float64)
            .map_err(|e| format!("invalid float64 {field:?}: {e}")),
        DataType::Decimal { scale, .. } => parse_decimal(field, *scale).map(Datum::Decimal),
        DataType::Date32 => parse_date(field).map(Datum::Date32),
        DataType::Bool => match field.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(Datum::Bool(true)),
            "false" => Ok(Datum::Bool(false)),
            _ => Err(format!("invalid bool {field:?}")),
        },
        DataType::Utf8 => Ok(Datum::Utf8(field.to_string())),
    }
}

/// Write batches as CSV (no header; plans produce unnamed columns).
pub fn write_csv<W: Write>(out: W, schema: &[DataType], batches: &[Batch]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    for b in batches {
        for row in 0..b.rows() {
            let fields: Vec<String> = (0..b.num_columns())
                .map(|c| format_datum(&b.datum(c, row), &schema[c]))
                .collect();
            w.write_record(&fields)
                .map_err(|e| Error::Transport(format!("csv write: {e}")))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn batches_to_csv_string(schema: &[DataType], batches: &[Batch]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, schema, batches).expect("csv to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_ab() -> TableSchema {
        TableSchema::new(vec![
            ("a", DataType::Int64, true),
            ("b", DataType::Utf8, true),
        ])
    }

    #[test]
    fn empty_field_reads_as_null() {
        let data = "1,x\n2,\n3,z\n";
        let s = read_csv(data.as_bytes(), &schema_ab(), false, 1024).unwrap();
        assert_eq!(s.rows, 3);
        let b = &s.batches[0];
        assert_eq!(b.datum(1, 1), Datum::Null);
        assert_eq!(b.datum(0, 1), Datum::Int64(2));
    }

    #[test]
    fn malformed_date_reports_exact_position() {
        let schema = TableSchema::new(vec![("d", DataType::Date32, true)]);
        let data = "1994-01-01\n1994-13-01\n";
        let err = read_csv(data.as_bytes(), &schema, false, 1024).unwrap_err();
        match err {
            Error::Parse { row, col, .. } => {
                assert_eq!((row, col), (2, 1));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_row_is_skipped_when_flagged() {
        let data = "a,b\n1,x\n";
        let s = read_csv(data.as_bytes(), &schema_ab(), true, 1024).unwrap();
        assert_eq!(s.rows, 1);
    }

    #[test]
    fn batch_size_chunks_input() {
        let data = "1,x\n2,y\n3,z\n";
        let s = read_csv(data.as_bytes(), &schema_ab(), false, 2).unwrap();
        assert_eq!(s.batches.len(), 2);
        assert_eq!(s.batches[0].rows(), 2);
        assert_eq!(s.batches[1].rows(), 1);
    }

    #[test]
    fn quoted_fields_keep_commas() {
        let data = "1,\"x,y\"\n";
        let s = read_csv(data.as_bytes(), &schema_ab(), false, 16).unwrap();
        assert_eq!(s.batches[0].datum(1, 0), Datum::Utf8("x,y".into()));
    }

    #[test]
    fn write_round_trips_through_read() {
        let schema = schema_ab();
        let data = "1,x\n,\"q w\"\n3,\n";
        let s = read_csv(data.as_bytes(), &schema, false, 1024).unwrap();
        let text = batches_to_csv_string(&schema.dtypes(), &s.batches);
        let again = read_csv(text.as_bytes(), &schema, false, 1024).unwrap();
        assert_eq!(again.rows, 3);
        for r in 0..3 {
            assert_eq!(s.batches[0].row(r), again.batches[0].row(r));
        }
    }

    #[test]
    fn decimal_and_bool_fields() {
        let schema = TableSchema::new(vec![
            ("d", DataType::Decimal { precision: 12, scale: 2 }, true),
            ("f", DataType::Bool, true),
        ]);
        let s = read_csv("0.05,true\n12,false\n".as_bytes(), &schema, false, 16).unwrap();
        assert_eq!(s.batches[0].datum(0, 0), Datum::Decimal(5));
        assert_eq!(s.batches[0].datum(0, 1), Datum::Decimal(1200));
        assert_eq!(s.batches[0].datum(1, 1), Datum::Bool(false));
        assert!(read_csv("1.234,true\n".as_bytes(), &schema, false, 16).is_err());
    }
}
