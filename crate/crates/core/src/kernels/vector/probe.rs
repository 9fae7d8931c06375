//! Hash-join probe: hash each probe row, chase the build chain, verify key
//! equality, emit index pairs per join type in probe-major order.

use std::sync::Arc;

use crate::columnar::{Column, SelectionVector, NULL_INDEX};
use crate::error::{Error, Result};
use crate::kernels::join::{row_key_hash, JoinTable};
use crate::plan::JoinType;

pub fn probe(
    table: &JoinTable,
    probe_keys: &[Arc<Column>],
    join_type: JoinType,
    narrow_limit: u64,
) -> Result<(SelectionVector, SelectionVector)> {
    let narrow_limit = narrow_limit.min(i32::MAX as u64);
    let rows = probe_keys.first().map_or(0, |c| c.len());
    let mut build_out: Vec<u64> = Vec::new();
    let mut probe_out: Vec<u64> = Vec::new();

    let check = |ix: u64| -> Result<u64> {
        if ix != NULL_INDEX && ix > narrow_limit {
            return Err(Error::IndexOverflow {
                index: ix,
                limit: narrow_limit,
            });
        }
        Ok(ix)
    };

    for probe_row in 0..rows {
        let null_key = probe_keys.iter().any(|c| !c.is_valid(probe_row));
        let mut matched = false;
        if !null_key && table.rows() > 0 {
            let hash = row_key_hash(probe_keys, probe_row);
            for build_row in table.candidates(hash) {
                if table.is_null_keyed(build_row)
                    || !table.keys_match(build_row, probe_keys, probe_row)
                {
                    continue;
                }
                matched = true;
                match join_type {
                    JoinType::Inner | JoinType::Left => {
                        build_out.push(check(build_row as u64)?);
                        probe_out.push(check(probe_row as u64)?);
                    }
                    JoinType::Semi => {
                        probe_out.push(check(probe_row as u64)?);
                        break;
                    }
                    JoinType::Anti => break,
                }
            }
        }
        if !matched {
            match join_type {
                JoinType::Left => {
                    build_out.push(NULL_INDEX);
                    probe_out.push(check(probe_row as u64)?);
                }
                JoinType::Anti => {
                    probe_out.push(check(probe_row as u64)?);
                }
                JoinType::Inner | JoinType::Semi => {}
            }
        }
    }
    Ok((
        SelectionVector::Wide(build_out),
        SelectionVector::Wide(probe_out),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::Batch;
    use crate::config::DEFAULT_NARROW_INDEX_LIMIT;

    fn build_table(keys: Vec<Option<i64>>) -> JoinTable {
        JoinTable::build(Batch::from_columns(vec![Column::from_i64(keys)]), &[0])
    }

    fn probe_cols(keys: Vec<Option<i64>>) -> Vec<Arc<Column>> {
        vec![Arc::new(Column::from_i64(keys))]
    }

    fn run(
        build: Vec<Option<i64>>,
        probe_keys: Vec<Option<i64>>,
        jt: JoinType,
    ) -> (Vec<u64>, Vec<u64>) {
        let t = build_table(build);
        let (b, p) = probe(&t, &probe_cols(probe_keys), jt, DEFAULT_NARROW_INDEX_LIMIT).unwrap();
        match (b, p) {
            (SelectionVector::Wide(b), SelectionVector::Wide(p)) => (b, p),
            _ => unreachable!(),
        }
    }

    #[test]
    fn inner_emits_matching_pairs() {
        let (b, p) = run(vec![Some(1), Some(2)], vec![Some(2), Some(3)], JoinType::Inner);
        assert_eq!(b, vec![1]);
        assert_eq!(p, vec![0]);
    }

    #[test]
    fn anti_emits_unmatched_probe_rows() {
        let (_, p) = run(vec![Some(1), Some(2)], vec![Some(2), Some(3)], JoinType::Anti);
        assert_eq!(p, vec![1]);
    }

    #[test]
    fn duplicate_build_keys_all_match() {
        let (b, mut p) = run(vec![Some(1), Some(2), Some(2)], vec![Some(2)], JoinType::Inner);
        let mut bs = b.clone();
        bs.sort();
        assert_eq!(bs, vec![1, 2]);
        p.dedup();
        assert_eq!(p, vec![0]);
    }

    #[test]
    fn null_never_equals_null() {
        let (b, p) = run(vec![None, Some(1)], vec![None], JoinType::Inner);
        assert!(b.is_empty() && p.is_empty());
        let (_, p) = run(vec![None, Some(1)], vec![None], JoinType::Anti);
        assert_eq!(p, vec![0]);
    }

    #[test]
    fn left_pads_unmatched_with_sentinel() {
        let (b, p) = run(vec![Some(1)], vec![Some(1), Some(9)], JoinType::Left);
        assert_eq!(p, vec![0, 1]);
        assert_eq!(b[0], 0);
        assert_eq!(b[1], NULL_INDEX);
    }

    #[test]
    fn empty_build_inner_yields_nothing() {
        let (b, p) = run(vec![], vec![Some(1), Some(2)], JoinType::Inner);
        assert!(b.is_empty() && p.is_empty());
    }

    #[test]
    fn narrow_limit_overflows_on_build_index() {
        let t = build_table((0..300).map(Some).collect());
        let err = probe(&t, &probe_cols(vec![Some(299)]), JoinType::Inner, 255).unwrap_err();
        assert_eq!(err.kind(), "IndexOverflow");
    }
}
