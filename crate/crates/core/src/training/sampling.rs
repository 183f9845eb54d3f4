use rand::Rng as _;

use super::config::CorruptionSide;
use super::TrainError;
use crate::kg::{FilterIndex, Triple};
use crate::seed::Rng;

/// Resampling attempts per negative when negatives are filtered.
const FILTER_ATTEMPTS: usize = 10;

/// Uniform entity in `0..n` other than `exclude`.
fn other_entity(n: usize, exclude: usize, rng: &mut Rng) -> usize {
    let x = rng.gen_range(0..n - 1);
    if x >= exclude {
        x + 1
    } else {
        x
    }
}

fn corrupt(pos: Triple, n: usize, side: CorruptionSide, rng: &mut Rng) -> Triple {
    let head_side = match side {
        CorruptionSide::Head => true,
        CorruptionSide::Tail => false,
        CorruptionSide::Both => rng.gen_bool(0.5),
    };
    if head_side {
        Triple::new(other_entity(n, pos.head, rng), pos.relation, pos.tail)
    } else {
        Triple::new(pos.head, pos.relation, other_entity(n, pos.tail, rng))
    }
}

/// Draws `n_neg` corruptions per positive, returned flat in batch order
/// (`negatives[i * n_neg + j]` belongs to `batch[i]`).
///
/// The replaced slot never keeps its original entity. With `known` given,
/// corruptions that are known-true triples are redrawn a bounded number of
/// times; otherwise negatives may coincide with true triples.
pub fn sample_negatives(
    batch: &[Triple],
    n_neg: usize,
    num_entities: usize,
    side: CorruptionSide,
    known: Option<&FilterIndex>,
    rng: &mut Rng,
) -> Result<Vec<Triple>, TrainError> {
    if num_entities < 2 {
        return Err(TrainError::Sampling(format!(
            "need at least 2 entities to corrupt a triple, have {num_entities}"
        )));
    }
    if n_neg == 0 {
        return Err(TrainError::Sampling("n_neg must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(batch.len() * n_neg);
    for &pos in batch {
        for _ in 0..n_neg {
            let mut neg = corrupt(pos, num_entities, side, rng);
            if let Some(f) = known {
                let mut tries = 1;
                while f.contains(&neg) && tries < FILTER_ATTEMPTS {
                    neg = corrupt(pos, num_entities, side, rng);
                    tries += 1;
                }
            }
            out.push(neg);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    #[test]
    fn two_entities_tail_corruption_is_forced() {
        let mut rng = rng_for(1, "t");
        let negs =
            sample_negatives(&[Triple::new(0, 0, 1)], 5, 2, CorruptionSide::Tail, None, &mut rng).unwrap();
        assert!(negs.iter().all(|t| *t == Triple::new(0, 0, 0)));
    }

    #[test]
    fn cardinality_and_exclusion() {
        let mut rng = rng_for(2, "t");
        let batch = [Triple::new(3, 1, 4), Triple::new(0, 0, 9)];
        let negs = sample_negatives(&batch, 4, 10, CorruptionSide::Both, None, &mut rng).unwrap();
        assert_eq!(negs.len(), 8);
        for (i, n) in negs.iter().enumerate() {
            let p = batch[i / 4];
            assert_eq!(n.relation, p.relation);
            let head_changed = n.head != p.head;
            let tail_changed = n.tail != p.tail;
            assert!(head_changed ^ tail_changed);
        }
    }

    #[test]
    fn deterministic_stream() {
        let batch = [Triple::new(1, 0, 2)];
        let a = sample_negatives(&batch, 50, 30, CorruptionSide::Both, None, &mut rng_for(5, "s")).unwrap();
        let b = sample_negatives(&batch, 50, 30, CorruptionSide::Both, None, &mut rng_for(5, "s")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_entities() {
        let mut rng = rng_for(1, "t");
        assert!(sample_negatives(&[Triple::new(0, 0, 0)], 1, 1, CorruptionSide::Both, None, &mut rng).is_err());
    }

    #[test]
    fn filtering_avoids_known_triples_when_possible() {
        let known = FilterIndex::build([&[Triple::new(0, 0, 1), Triple::new(0, 0, 2)][..]]);
        let mut rng = rng_for(3, "t");
        let negs = sample_negatives(
            &[Triple::new(0, 0, 1)],
            200,
            4,
            CorruptionSide::Tail,
            Some(&known),
            &mut rng,
        )
        .unwrap();
        let hits = negs.iter().filter(|t| known.contains(t)).count();
        assert!(hits <= 1, "{hits} known negatives");
    }
}
