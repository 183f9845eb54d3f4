//! Family-tree knowledge graphs for desk-scale experiments.
//!
//! Founding couples spawn children; every child except those in the last
//! generation marries an entity from outside the tree, forming the next
//! generation's couple. New families are added until the entity budget is
//! spent. Facts are derived from the tree so that the inverse, symmetric and
//! compositional closure rules hold exactly:
//!
//! - `parent_of(a, b)` ⇔ `child_of(b, a)`
//! - `sibling_of` and `spouse_of` are symmetric
//! - `parent_of(a, b) ∧ parent_of(b, c)` ⇒ `grandparent_of(a, c)`

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{KgError, KnowledgeGraph, Triple, Vocabulary};
use crate::seed::rng_for;

pub const PARENT_OF: usize = 0;
pub const CHILD_OF: usize = 1;
pub const SIBLING_OF: usize = 2;
pub const GRANDPARENT_OF: usize = 3;
pub const SPOUSE_OF: usize = 4;

pub const SYNTHETIC_RELATIONS: [&str; 5] = [
    "parent_of",
    "child_of",
    "sibling_of",
    "grandparent_of",
    "spouse_of",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub entities: usize,
    /// Generations per family, founders included.
    pub depth: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    /// Children per couple are drawn uniformly from `1..=max_children`.
    pub max_children: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            entities: 200,
            depth: 4,
            train_frac: 0.8,
            valid_frac: 0.1,
            test_frac: 0.1,
            max_children: 3,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), KgError> {
        let fr = [self.train_frac, self.valid_frac, self.test_frac];
        if fr.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(KgError::Config("split fractions must be non-negative".into()));
        }
        if fr.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(KgError::Config(format!(
                "split fractions sum to {} (must be <= 1)",
                fr.iter().sum::<f64>()
            )));
        }
        if self.entities < 2 {
            return Err(KgError::Config("need at least 2 entities".into()));
        }
        if self.depth < 2 {
            return Err(KgError::Config("depth must be at least 2".into()));
        }
        if self.max_children < 1 {
            return Err(KgError::Config("max_children must be at least 1".into()));
        }
        Ok(())
    }

    /// Provenance line written at the top of generated files.
    pub fn provenance(&self, seed: u64) -> String {
        format!(
            "synthetic family KG entities={} depth={} max_children={} splits={}/{}/{} seed={}",
            self.entities,
            self.depth,
            self.max_children,
            self.train_frac,
            self.valid_frac,
            self.test_frac,
            seed
        )
    }
}

struct Tree {
    parents: Vec<Option<(usize, usize)>>,
    spouse: Vec<Option<usize>>,
}

impl Tree {
    fn add_person(&mut self, parents: Option<(usize, usize)>) -> usize {
        self.parents.push(parents);
        self.spouse.push(None);
        self.parents.len() - 1
    }

    fn len(&self) -> usize {
        self.parents.len()
    }
}

fn grow_tree(cfg: &SyntheticConfig, rng: &mut crate::seed::Rng) -> Tree {
    let budget = cfg.entities;
    let mut tree = Tree {
        parents: Vec::new(),
        spouse: Vec::new(),
    };
    while tree.len() < budget {
        let a = tree.add_person(None);
        if tree.len() >= budget {
            break;
        }
        let b = tree.add_person(None);
        tree.spouse[a] = Some(b);
        tree.spouse[b] = Some(a);
        let mut couples = vec![(a, b)];
        'generations: for generation in 1..cfg.depth {
            let mut next = Vec::new();
            for &(p, q) in &couples {
                let n = rng.gen_range(1..=cfg.max_children);
                for _ in 0..n {
                    if tree.len() >= budget {
                        break 'generations;
                    }
                    let child = tree.add_person(Some((p, q)));
                    if generation + 1 < cfg.depth && tree.len() < budget {
                        let s = tree.add_person(None);
                        tree.spouse[child] = Some(s);
                        tree.spouse[s] = Some(child);
                        next.push((child, s));
                    }
                }
            }
            couples = next;
        }
    }
    tree
}

fn derive_facts(tree: &Tree) -> Vec<Triple> {
    let mut facts = BTreeSet::new();
    let n = tree.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in 0..n {
        if let Some((p, q)) = tree.parents[c] {
            for parent in [p, q] {
                facts.insert(Triple::new(parent, PARENT_OF, c));
                facts.insert(Triple::new(c, CHILD_OF, parent));
                children[parent].push(c);
            }
        }
        if let Some(s) = tree.spouse[c] {
            facts.insert(Triple::new(c, SPOUSE_OF, s));
        }
    }
    for c in 0..n {
        if let Some((p, _)) = tree.parents[c] {
            for &sib in &children[p] {
                if sib != c && tree.parents[sib] == tree.parents[c] {
                    facts.insert(Triple::new(c, SIBLING_OF, sib));
                }
            }
        }
    }
    for a in 0..n {
        for &b in &children[a] {
            for &c in &children[b] {
                facts.insert(Triple::new(a, GRANDPARENT_OF, c));
            }
        }
    }
    facts.into_iter().collect()
}

/// Generates a family-tree knowledge graph with disjoint train/valid/test
/// splits. Deterministic under `seed`. Valid/test triples whose entities do
/// not occur in train are moved to train, so every evaluated entity and
/// relation is seen during training.
pub fn generate_synthetic_kg(cfg: &SyntheticConfig, seed: u64) -> Result<KnowledgeGraph, KgError> {
    cfg.validate()?;
    let mut tree_rng = rng_for(seed, "synthetic/tree");
    let tree = grow_tree(cfg, &mut tree_rng);
    let mut facts = derive_facts(&tree);

    let mut split_rng = rng_for(seed, "synthetic/split");
    facts.shuffle(&mut split_rng);
    let total = facts.len();
    let portion = |f: f64| (f * total as f64).round() as usize;
    let n_train = portion(cfg.train_frac).min(total);
    let n_valid = portion(cfg.valid_frac).min(total - n_train);
    let n_test = portion(cfg.test_frac).min(total - n_train - n_valid);

    let mut train: Vec<Triple> = facts[..n_train].to_vec();
    let held_valid = &facts[n_train..n_train + n_valid];
    let held_test = &facts[n_train + n_valid..n_train + n_valid + n_test];

    let mut seen_entities: HashSet<usize> = train.iter().flat_map(|t| [t.head, t.tail]).collect();
    let mut seen_relations: HashSet<usize> = train.iter().map(|t| t.relation).collect();
    let mut keep = |held: &[Triple], train: &mut Vec<Triple>| -> Vec<Triple> {
        let mut kept = Vec::new();
        for t in held {
            if seen_entities.contains(&t.head)
                && seen_entities.contains(&t.tail)
                && seen_relations.contains(&t.relation)
            {
                kept.push(*t);
            } else {
                train.push(*t);
                seen_entities.insert(t.head);
                seen_entities.insert(t.tail);
                seen_relations.insert(t.relation);
            }
        }
        kept
    };
    let valid = keep(held_valid, &mut train);
    let test = keep(held_test, &mut train);

    let names: Vec<String> = (0..tree.len()).map(|i| format!("person_{i:04}")).collect();
    let relations = SYNTHETIC_RELATIONS.iter().map(|s| s.to_string()).collect();
    let vocab = Vocabulary::from_names(names, relations)?;
    KnowledgeGraph::new(vocab, train, valid, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_facts(kg: &KnowledgeGraph) -> HashSet<Triple> {
        kg.train.iter().chain(&kg.valid).chain(&kg.test).copied().collect()
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SyntheticConfig::default();
        let a = generate_synthetic_kg(&cfg, 7).unwrap();
        let b = generate_synthetic_kg(&cfg, 7).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.valid, b.valid);
        assert_eq!(a.test, b.test);
        let c = generate_synthetic_kg(&cfg, 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn default_size_is_desk_scale() {
        let kg = generate_synthetic_kg(&SyntheticConfig::default(), 7).unwrap();
        assert_eq!(kg.num_entities(), 200);
        let total = kg.train.len() + kg.valid.len() + kg.test.len();
        assert!((700..=1400).contains(&total), "{total} facts");
        assert!(kg.valid.len() > 50 && kg.test.len() > 50);
    }

    #[test]
    fn closure_rules_hold() {
        for seed in 0..5 {
            let kg = generate_synthetic_kg(&SyntheticConfig::default(), seed).unwrap();
            let facts = all_facts(&kg);
            for t in &facts {
                match t.relation {
                    PARENT_OF => assert!(facts.contains(&Triple::new(t.tail, CHILD_OF, t.head))),
                    CHILD_OF => assert!(facts.contains(&Triple::new(t.tail, PARENT_OF, t.head))),
                    SIBLING_OF | SPOUSE_OF => {
                        assert!(facts.contains(&Triple::new(t.tail, t.relation, t.head)))
                    }
                    _ => {}
                }
            }
            for ab in facts.iter().filter(|t| t.relation == PARENT_OF) {
                for bc in facts.iter().filter(|t| t.relation == PARENT_OF && t.head == ab.tail) {
                    assert!(facts.contains(&Triple::new(ab.head, GRANDPARENT_OF, bc.tail)));
                }
            }
        }
    }

    #[test]
    fn splits_disjoint_and_transductive() {
        let kg = generate_synthetic_kg(&SyntheticConfig::default(), 3).unwrap();
        let train: HashSet<_> = kg.train.iter().copied().collect();
        let valid: HashSet<_> = kg.valid.iter().copied().collect();
        assert!(kg.valid.iter().all(|t| !train.contains(t)));
        assert!(kg.test.iter().all(|t| !train.contains(t) && !valid.contains(t)));
        let ents: HashSet<usize> = kg.train.iter().flat_map(|t| [t.head, t.tail]).collect();
        let rels: HashSet<usize> = kg.train.iter().map(|t| t.relation).collect();
        for t in kg.test.iter().chain(&kg.valid) {
            assert!(ents.contains(&t.head) && ents.contains(&t.tail) && rels.contains(&t.relation));
        }
    }

    #[test]
    fn rejects_oversized_splits() {
        let cfg = SyntheticConfig {
            train_frac: 0.9,
            valid_frac: 0.2,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic_kg(&cfg, 1), Err(KgError::Config(_))));
    }
}
