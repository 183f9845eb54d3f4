//! Structural perturbations of the training split and the robustness
//! experiment that retrains each model on every perturbed graph.

mod report;

pub use report::{robustness_experiment, RobustnessReport, RobustnessRow, BASE_CONDITION};

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KnowledgeGraph, Triple, TypeSignatures, Vocabulary};
use crate::math::cosine;
use crate::seed::rng_for;

/// Cosine similarity a counterfactual endpoint needs with the relation's
/// signature centroid.
pub const PLAUSIBILITY_THRESHOLD: f64 = 0.5;
/// Sampling attempts allowed per requested counterfactual.
pub const ATTEMPTS_PER_EDIT: usize = 100;
pub const DEFAULT_RATIO: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("invalid perturbation spec: {0}")]
    Spec(String),
    #[error("counterfactual sampler exhausted {attempts} attempts (relation '{relation}')")]
    Exhausted { relation: String, attempts: usize },
    #[error("{model} / {condition}: {source}")]
    Run {
        model: String,
        condition: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PerturbationKind {
    EdgeAddition,
    EdgeDeletion,
    InverseRelationFlip,
    RelationSwap,
    CounterfactualInjection,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::EdgeAddition,
        PerturbationKind::EdgeDeletion,
        PerturbationKind::InverseRelationFlip,
        PerturbationKind::RelationSwap,
        PerturbationKind::CounterfactualInjection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::EdgeAddition => "edge-addition",
            PerturbationKind::EdgeDeletion => "edge-deletion",
            PerturbationKind::InverseRelationFlip => "inverse-flip",
            PerturbationKind::RelationSwap => "relation-swap",
            PerturbationKind::CounterfactualInjection => "counterfactual",
        }
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PerturbationKind::ALL.iter().map(|k| k.name()).collect();
                PerturbError::Spec(format!("unknown perturbation '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Which triples an inverse flip rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipTarget {
    /// Any triple `(h, r, t)` becomes `(t, r, h)`.
    All,
    /// Only triples of `relation`, rewritten as `(t, inverse, h)`.
    Pair { relation: usize, inverse: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Fraction of the training split affected, in (0, 1].
    pub ratio: f64,
    pub seed: u64,
    pub flip: FlipTarget,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, seed: u64) -> Self {
        Self {
            kind,
            ratio: DEFAULT_RATIO,
            seed,
            flip: FlipTarget::All,
        }
    }

    /// `max(1, round(ratio · n_train))`.
    pub fn edit_count(&self, n_train: usize) -> Result<usize, PerturbError> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(PerturbError::Spec(format!("ratio {} outside (0, 1]", self.ratio)));
        }
        Ok(((self.ratio * n_train as f64).round() as usize).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Add,
    Del,
    Mod,
    /// A rewrite whose result was already present; the source triple is
    /// dropped and no duplicate is created.
    Merge,
}

impl EditOp {
    pub fn label(self) -> &'static str {
        match self {
            EditOp::Add => "add",
            EditOp::Del => "del",
            EditOp::Mod => "mod",
            EditOp::Merge => "merge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub op: EditOp,
    pub before: Option<Triple>,
    pub after: Option<Triple>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditLog {
    pub edits: Vec<Edit>,
}

impl EditLog {
    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn count(&self, op: EditOp) -> usize {
        self.edits.iter().filter(|e| e.op == op).count()
    }

    /// TSV with columns `op, before_head, before_relation, before_tail,
    /// after_head, after_relation, after_tail`; absent sides are `-`.
    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let mut s = String::from("op\tbefore_head\tbefore_relation\tbefore_tail\tafter_head\tafter_relation\tafter_tail\n");
        let side = |t: Option<Triple>| match t {
            Some(t) => format!(
                "{}\t{}\t{}",
                vocab.entity_name(t.head),
                vocab.relation_name(t.relation),
                vocab.entity_name(t.tail)
            ),
            None => "-\t-\t-".to_owned(),
        };
        for e in &self.edits {
            let _ = writeln!(s, "{}\t{}\t{}", e.op.label(), side(e.before), side(e.after));
        }
        s
    }
}

/// Per-relation mean signature of heads and of tails over `train`.
fn centroids(train: &[Triple], sig: &TypeSignatures, nr: usize) -> BTreeMap<usize, (Vec<f64>, Vec<f64>)> {
    let width = sig.of(0).len();
    let mut acc: BTreeMap<usize, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for t in train.iter().filter(|t| t.relation < nr) {
        let entry = acc
            .entry(t.relation)
            .or_insert_with(|| (vec![0.0; width], vec![0.0; width], 0));
        for (a, b) in entry.0.iter_mut().zip(sig.of(t.head)) {
            *a += b;
        }
        for (a, b) in entry.1.iter_mut().zip(sig.of(t.tail)) {
            *a += b;
        }
        entry.2 += 1;
    }
    acc.into_iter()
        .map(|(r, (mut h, mut t, n))| {
            for x in h.iter_mut().chain(t.iter_mut()) {
                *x /= n as f64;
            }
            (r, (h, t))
        })
        .collect()
}

/// Rewrites `(before → after)` in the working set. Returns the op logged.
fn rewrite(out: &mut Vec<Option<Triple>>, present: &mut HashSet<Triple>, idx: usize, after: Triple) -> EditOp {
    let before = out[idx].expect("index selected once");
    present.remove(&before);
    if present.contains(&after) {
        out[idx] = None;
        EditOp::Merge
    } else {
        present.insert(after);
        out[idx] = Some(after);
        EditOp::Mod
    }
}

/// Applies `spec` to `train`. `kg` supplies the vocabulary and every known
/// triple; `signatures` is needed only for counterfactual injection. Valid
/// and test are never touched.
pub fn apply_perturbation(
    train: &[Triple],
    kg: &KnowledgeGraph,
    spec: &PerturbationSpec,
    signatures: Option<&TypeSignatures>,
) -> Result<(Vec<Triple>, EditLog), PerturbError> {
    let k = spec.edit_count(train.len())?;
    let ne = kg.num_entities();
    let nr = kg.base_relations;
    let mut rng = rng_for(spec.seed, &format!("perturb/{}", spec.kind.name()));
    let mut log = EditLog::default();
    let known: HashSet<Triple> = kg
        .train
        .iter()
        .chain(&kg.valid)
        .chain(&kg.test)
        .chain(train)
        .copied()
        .collect();

    match spec.kind {
        PerturbationKind::EdgeDeletion => {
            if k > train.len() {
                return Err(PerturbError::Spec(format!("cannot delete {k} of {} triples", train.len())));
            }
            let mut drop = vec![false; train.len()];
            for i in sample(&mut rng, train.len(), k).into_iter() {
                drop[i] = true;
                log.edits.push(Edit {
                    op: EditOp::Del,
                    before: Some(train[i]),
                    after: None,
                });
            }
            let kept = train
                .iter()
                .zip(&drop)
                .filter(|(_, d)| !**d)
                .map(|(t, _)| *t)
                .collect();
            Ok((kept, log))
        }
        PerturbationKind::EdgeAddition => {
            let total = ne * ne * nr;
            let available = total.saturating_sub(known.iter().filter(|t| t.relation < nr).count());
            if k > available {
                return Err(PerturbError::Spec(format!(
                    "cannot add {k} triples: only {available} unseen candidates"
                )));
            }
            let mut added = HashSet::new();
            let mut out = train.to_vec();
            if available < 4 * k {
                let mut pool: Vec<Triple> = (0..ne)
                    .flat_map(|h| (0..nr).flat_map(move |r| (0..ne).map(move |t| Triple::new(h, r, t))))
                    .filter(|t| !known.contains(t))
                    .collect();
                pool.shuffle(&mut rng);
                pool.truncate(k);
                added.extend(pool.iter().copied());
                out.extend(&pool);
                log.edits.extend(pool.iter().map(|t| Edit {
                    op: EditOp::Add,
                    before: None,
                    after: Some(*t),
                }));
            } else {
                while added.len() < k {
                    let t = Triple::new(rng.gen_range(0..ne), rng.gen_range(0..nr), rng.gen_range(0..ne));
                    if !known.contains(&t) && added.insert(t) {
                        out.push(t);
                        log.edits.push(Edit {
                            op: EditOp::Add,
                            before: None,
                            after: Some(t),
                        });
                    }
                }
            }
            Ok((out, log))
        }
        PerturbationKind::InverseRelationFlip | PerturbationKind::RelationSwap => {
            let candidates: Vec<usize> = match (spec.kind, spec.flip) {
                (PerturbationKind::InverseRelationFlip, FlipTarget::All) => {
                    (0..train.len()).filter(|&i| train[i].head != train[i].tail).collect()
                }
                (PerturbationKind::InverseRelationFlip, FlipTarget::Pair { relation, inverse }) => {
                    if relation >= nr || inverse >= nr {
                        return Err(PerturbError::Spec("flip relation index out of range".into()));
                    }
                    (0..train.len()).filter(|&i| train[i].relation == relation).collect()
                }
                _ => {
                    if nr < 2 {
                        return Err(PerturbError::Spec("relation swap needs at least two relations".into()));
                    }
                    (0..train.len()).collect()
                }
            };
            if k > candidates.len() {
                return Err(PerturbError::Spec(format!(
                    "cannot rewrite {k} triples: only {} candidates",
                    candidates.len()
                )));
            }
            let mut out: Vec<Option<Triple>> = train.iter().copied().map(Some).collect();
            let mut present: HashSet<Triple> = train.iter().copied().collect();
            let chosen: Vec<usize> = sample(&mut rng, candidates.len(), k)
                .into_iter()
                .map(|j| candidates[j])
                .collect();
            for idx in chosen {
                let before = out[idx].expect("each index chosen once");
                let after = match (spec.kind, spec.flip) {
                    (PerturbationKind::InverseRelationFlip, FlipTarget::All) => {
                        Triple::new(before.tail, before.relation, before.head)
                    }
                    (PerturbationKind::InverseRelationFlip, FlipTarget::Pair { inverse, .. }) => {
                        Triple::new(before.tail, inverse, before.head)
                    }
                    _ => {
                        let mut r = rng.gen_range(0..nr - 1);
                        if r >= before.relation {
                            r += 1;
                        }
                        Triple::new(before.head, r, before.tail)
                    }
                };
                let op = rewrite(&mut out, &mut present, idx, after);
                log.edits.push(Edit {
                    op,
                    before: Some(before),
                    after: Some(after),
                });
            }
            Ok((out.into_iter().flatten().collect(), log))
        }
        PerturbationKind::CounterfactualInjection => {
            let sig = signatures.ok_or_else(|| {
                PerturbError::Spec("counterfactual injection needs type signatures".into())
            })?;
            let cents = centroids(train, sig, nr);
            if cents.is_empty() {
                return Err(PerturbError::Spec("training split has no relations".into()));
            }
            let relations: Vec<usize> = cents.keys().copied().collect();
            // Entities plausible as head / tail of each relation.
            let plausible: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = cents
                .iter()
                .map(|(&r, (hc, tc))| {
                    let heads = (0..ne).filter(|&e| cosine(sig.of(e), hc) >= PLAUSIBILITY_THRESHOLD).collect();
                    let tails = (0..ne).filter(|&e| cosine(sig.of(e), tc) >= PLAUSIBILITY_THRESHOLD).collect();
                    (r, (heads, tails))
                })
                .collect();
            let budget = ATTEMPTS_PER_EDIT * k;
            let mut attempts = 0;
            let mut added = HashSet::new();
            let mut out = train.to_vec();
            let mut last_relation = relations[0];
            while added.len() < k {
                if attempts == budget {
                    return Err(PerturbError::Exhausted {
                        relation: kg.vocab.relation_name(last_relation).to_owned(),
                        attempts,
                    });
                }
                attempts += 1;
                let r = relations[rng.gen_range(0..relations.len())];
                last_relation = r;
                let (heads, tails) = &plausible[&r];
                if heads.is_empty() || tails.is_empty() {
                    continue;
                }
                let t = Triple::new(heads[rng.gen_range(0..heads.len())], r, tails[rng.gen_range(0..tails.len())]);
                if known.contains(&t) || added.contains(&t) {
                    continue;
                }
                added.insert(t);
                out.push(t);
                log.edits.push(Edit {
                    op: EditOp::Add,
                    before: None,
                    after: Some(t),
                });
            }
            Ok((out, log))
        }
    }
}

/// Cosine of `e`'s signature with the head (or tail) centroid of `relation`
/// over `train`; used to audit counterfactual plausibility.
pub fn plausibility(
    train: &[Triple],
    sig: &TypeSignatures,
    nr: usize,
    t: Triple,
) -> Option<(f64, f64)> {
    let cents = centroids(train, sig, nr);
    cents
        .get(&t.relation)
        .map(|(hc, tc)| (cosine(sig.of(t.head), hc), cosine(sig.of(t.tail), tc)))
}
