use std::collections::{BTreeSet, HashMap};

use super::Triple;

/// Known-true completions over every split, keyed by the query side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterIndex {
    tails_of: HashMap<(usize, usize), BTreeSet<usize>>,
    heads_of: HashMap<(usize, usize), BTreeSet<usize>>,
}

impl FilterIndex {
    pub fn build<'a>(splits: impl IntoIterator<Item = &'a [Triple]>) -> Self {
        let mut index = Self::default();
        for split in splits {
            for t in split {
                index.insert(*t);
            }
        }
        index
    }

    pub fn insert(&mut self, t: Triple) {
        self.tails_of
            .entry((t.head, t.relation))
            .or_default()
            .insert(t.tail);
        self.heads_of
            .entry((t.relation, t.tail))
            .or_default()
            .insert(t.head);
    }

    /// Known tails of `(head, relation, ?)`.
    pub fn tails(&self, head: usize, relation: usize) -> Option<&BTreeSet<usize>> {
        self.tails_of.get(&(head, relation))
    }

    /// Known heads of `(?, relation, tail)`.
    pub fn heads(&self, relation: usize, tail: usize) -> Option<&BTreeSet<usize>> {
        self.heads_of.get(&(relation, tail))
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.tails(t.head, t.relation)
            .is_some_and(|s| s.contains(&t.tail))
    }

    pub fn is_empty(&self) -> bool {
        self.tails_of.is_empty()
    }

    /// Number of distinct `(head, relation)` keys.
    pub fn num_tail_keys(&self) -> usize {
        self.tails_of.len()
    }

    pub fn num_head_keys(&self) -> usize {
        self.heads_of.len()
    }
}
