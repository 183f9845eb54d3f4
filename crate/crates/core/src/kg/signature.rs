use crate::math::Matrix;

use super::Triple;

/// Per-entity relation-incidence frequencies: the first `|R|` columns count
/// appearances as head of each relation, the last `|R|` as tail; each row is
/// normalized to sum to one (all-zero for isolated entities).
#[derive(Debug, Clone, PartialEq)]
pub struct TypeSignatures {
    num_relations: usize,
    table: Matrix,
}

impl TypeSignatures {
    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_entities(&self) -> usize {
        self.table.rows()
    }

    /// Signature of `entity` (length `2|R|`).
    pub fn of(&self, entity: usize) -> &[f64] {
        self.table.row(entity)
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }
}

/// Builds signatures from train ∪ valid. Test triples must never be passed.
pub fn infer_type_signatures(
    train: &[Triple],
    valid: &[Triple],
    num_entities: usize,
    num_relations: usize,
) -> TypeSignatures {
    let mut table = Matrix::zeros(num_entities, 2 * num_relations);
    for t in train.iter().chain(valid) {
        let h = table.get(t.head, t.relation);
        table.set(t.head, t.relation, h + 1.0);
        let col = num_relations + t.relation;
        let v = table.get(t.tail, col);
        table.set(t.tail, col, v + 1.0);
    }
    for e in 0..num_entities {
        let row = table.row_mut(e);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            for x in row.iter_mut() {
                *x /= total;
            }
        }
    }
    TypeSignatures {
        num_relations,
        table,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_head_incidence() {
        let s = infer_type_signatures(&[Triple::new(0, 0, 1)], &[], 3, 2);
        assert_eq!(s.of(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.of(1), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.of(2), &[0.0; 4]);
    }

    #[test]
    fn head_and_tail_mix() {
        let s = infer_type_signatures(&[Triple::new(0, 0, 1)], &[Triple::new(2, 1, 0)], 3, 2);
        assert_eq!(s.of(0), &[0.5, 0.0, 0.0, 0.5]);
    }

    proptest! {
        #[test]
        fn rows_normalized(raw in proptest::collection::vec((0usize..15, 0usize..4, 0usize..15), 0..50)) {
            let train: Vec<Triple> = raw.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect();
            let s = infer_type_signatures(&train, &[], 15, 4);
            for e in 0..15 {
                let row = s.of(e);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
                let total: f64 = row.iter().sum();
                let incident = train.iter().any(|t| t.head == e || t.tail == e);
                if incident {
                    prop_assert!((total - 1.0).abs() < 1e-12);
                } else {
                    prop_assert_eq!(total, 0.0);
                }
            }
        }
    }
}
