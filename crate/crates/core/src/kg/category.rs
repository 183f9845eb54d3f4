use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::Triple;

/// Averages at or below this count as "1", above as "N".
pub const CATEGORY_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CategoryKind {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl CategoryKind {
    pub fn label(self) -> &'static str {
        match self {
            CategoryKind::OneToOne => "1-to-1",
            CategoryKind::OneToMany => "1-to-N",
            CategoryKind::ManyToOne => "N-to-1",
            CategoryKind::ManyToMany => "N-to-N",
        }
    }

    fn from_averages(tails_per_head: f64, heads_per_tail: f64) -> Self {
        let many_tails = tails_per_head > CATEGORY_THRESHOLD;
        let many_heads = heads_per_tail > CATEGORY_THRESHOLD;
        match (many_heads, many_tails) {
            (false, false) => CategoryKind::OneToOne,
            (false, true) => CategoryKind::OneToMany,
            (true, false) => CategoryKind::ManyToOne,
            (true, true) => CategoryKind::ManyToMany,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationCategory {
    pub kind: CategoryKind,
    pub avg_tails_per_head: f64,
    pub avg_heads_per_tail: f64,
}

/// Classifies every relation that occurs in `train`. Relations absent from
/// `train` are not in the map.
pub fn classify_relations(train: &[Triple]) -> BTreeMap<usize, RelationCategory> {
    let distinct: HashSet<Triple> = train.iter().copied().collect();
    let mut counts: BTreeMap<usize, (usize, BTreeSet<usize>, BTreeSet<usize>)> = BTreeMap::new();
    for t in &distinct {
        let e = counts.entry(t.relation).or_default();
        e.0 += 1;
        e.1.insert(t.head);
        e.2.insert(t.tail);
    }
    counts
        .into_iter()
        .map(|(r, (n, heads, tails))| {
            let tph = n as f64 / heads.len() as f64;
            let hpt = n as f64 / tails.len() as f64;
            (
                r,
                RelationCategory {
                    kind: CategoryKind::from_averages(tph, hpt),
                    avg_tails_per_head: tph,
                    avg_heads_per_tail: hpt,
                },
            )
        })
        .collect()
}
