//! Mechanical checks of the model's expressivity construction and its
//! inference-pattern constructions on small instances.
//!
//! Everything here runs on verification-mode parameters: the raw scoring
//! equation with unconstrained widths `w` and biases `b`, λ fixed to 1. The
//! production model reaches `w` and `b` only through softplus/sigmoid, which
//! the construction's additive updates can leave.

mod patterns;

pub use patterns::{
    make_composed, make_disjoint, make_hierarchy, make_inverse, make_symmetric, verify_pattern,
    PatternKind, PatternWitness, RelationFragment,
};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::Triple;
use crate::math::Matrix;
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum FormalError {
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Verification-mode RelatE parameters. Each entity and relation has a phase
/// vector and a modulus vector of `width` entries; `bias` and `scale` are the
/// raw `b` and `w` of the modulus term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRelate {
    pub gamma: f64,
    pub entity_phase: Matrix,
    pub entity_modulus: Matrix,
    pub relation_phase: Matrix,
    pub relation_modulus: Matrix,
    pub bias: Matrix,
    pub scale: Matrix,
    pub lambda_mod: Vec<f64>,
    pub lambda_phase: Vec<f64>,
}

impl RawRelate {
    pub fn width(&self) -> usize {
        self.entity_modulus.cols()
    }

    pub fn modulus_score(&self, t: Triple) -> f64 {
        let h = self.entity_modulus.row(t.head);
        let tl = self.entity_modulus.row(t.tail);
        let r = self.relation_modulus.row(t.relation);
        let b = self.bias.row(t.relation);
        let w = self.scale.row(t.relation);
        (0..h.len())
            .map(|i| w[i] * (h[i] * (r[i] + b[i]) - tl[i] * (1.0 - b[i])).abs())
            .sum()
    }

    pub fn phase_score(&self, t: Triple) -> f64 {
        let h = self.entity_phase.row(t.head);
        let tl = self.entity_phase.row(t.tail);
        let r = self.relation_phase.row(t.relation);
        (0..h.len())
            .map(|i| (((h[i] + r[i]) - tl[i]) / 2.0).sin().abs())
            .sum()
    }

    pub fn score(&self, t: Triple) -> f64 {
        self.gamma
            - (self.lambda_mod[t.relation] * self.modulus_score(t)
                + self.lambda_phase[t.relation] * self.phase_score(t))
    }
}

/// A truth value for every triple over `entities × relations × entities`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTable {
    pub entities: usize,
    pub relations: usize,
    values: Vec<bool>,
}

impl TruthTable {
    pub fn all_true(entities: usize, relations: usize) -> Self {
        Self {
            entities,
            relations,
            values: vec![true; entities * entities * relations],
        }
    }

    /// Each triple true with probability 1/2.
    pub fn random(entities: usize, relations: usize, rng: &mut crate::seed::Rng) -> Self {
        let mut tt = Self::all_true(entities, relations);
        for v in &mut tt.values {
            *v = rng.gen_bool(0.5);
        }
        tt
    }

    fn index(&self, t: Triple) -> usize {
        (t.head * self.relations + t.relation) * self.entities + t.tail
    }

    pub fn get(&self, t: Triple) -> bool {
        self.values[self.index(t)]
    }

    pub fn set(&mut self, t: Triple, value: bool) {
        let i = self.index(t);
        self.values[i] = value;
    }

    /// All triples in (head, relation, tail) lexicographic order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        let (ne, nr) = (self.entities, self.relations);
        (0..ne).flat_map(move |h| (0..nr).flat_map(move |r| (0..ne).map(move |t| Triple::new(h, r, t))))
    }
}

/// Modulus coordinate reserved for a (relation, tail) pair.
pub fn surgery_dimension(relation: usize, tail: usize, entities: usize) -> usize {
    relation * entities + tail
}

/// How the per-step adjustment constant is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Adjustment {
    /// `max(f, 0) / (smallest |w| at the surged coordinate) + γ + 1`, where
    /// `f` is the target triple's current score.
    PerStep,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryStep {
    pub triple: Triple,
    pub dimension: usize,
    pub constant: f64,
    pub score_before: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    pub triple: Triple,
    pub truth: bool,
    pub score: f64,
}

/// Outcome of the construction plus exhaustive verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationCertificate {
    pub entities: usize,
    pub relations: usize,
    /// Entries per phase and per modulus vector (`|E|·|R|`).
    pub width: usize,
    pub gamma: f64,
    pub params: RawRelate,
    pub steps: Vec<SurgeryStep>,
    pub scores: Vec<ScoredTriple>,
    pub min_true_score: Option<f64>,
    pub max_false_score: Option<f64>,
    /// True triples scoring ≤ γ and false triples scoring ≥ 0.
    pub offending: Vec<Triple>,
    pub valid: bool,
}

fn score_table(params: &RawRelate, tt: &TruthTable) -> Vec<ScoredTriple> {
    tt.triples()
        .map(|t| ScoredTriple {
            triple: t,
            truth: tt.get(t),
            score: params.score(t),
        })
        .collect()
}

impl SeparationCertificate {
    fn from_params(tt: &TruthTable, params: RawRelate, steps: Vec<SurgeryStep>) -> Self {
        let scores = score_table(&params, tt);
        let gamma = params.gamma;
        let fold = |truth: bool, pick: fn(f64, f64) -> f64| {
            scores
                .iter()
                .filter(|s| s.truth == truth)
                .map(|s| s.score)
                .reduce(pick)
        };
        let min_true_score = fold(true, f64::min);
        let max_false_score = fold(false, f64::max);
        let offending: Vec<Triple> = scores
            .iter()
            .filter(|s| if s.truth { !(s.score > gamma) } else { !(s.score < 0.0) })
            .map(|s| s.triple)
            .collect();
        Self {
            entities: tt.entities,
            relations: tt.relations,
            width: params.width(),
            gamma,
            valid: offending.is_empty(),
            params,
            steps,
            scores,
            min_true_score,
            max_false_score,
            offending,
        }
    }

    /// Recomputes every score from the stored parameters and checks it
    /// against the stored table within `tol`, and the validity flag against
    /// the recomputed scores.
    pub fn reverify(&self, tol: f64) -> bool {
        self.scores.iter().all(|s| {
            let fresh = self.params.score(s.triple);
            let ok = if s.truth { fresh > self.gamma } else { fresh < 0.0 };
            (fresh - s.score).abs() <= tol && (ok || !self.valid)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// The all-true starting point: unit entity moduli, relation modulus 2,
/// `b = 0`, `w = −1`, zero phases, λ = 1. Every triple then scores
/// `γ + |E||R|`.
pub fn base_case(entities: usize, relations: usize, gamma: f64) -> RawRelate {
    let width = entities * relations;
    RawRelate {
        gamma,
        entity_phase: Matrix::zeros(entities, width),
        entity_modulus: Matrix::filled(entities, width, 1.0),
        relation_phase: Matrix::zeros(relations, width),
        relation_modulus: Matrix::filled(relations, width, 2.0),
        bias: Matrix::zeros(relations, width),
        scale: Matrix::filled(relations, width, -1.0),
        lambda_mod: vec![1.0; relations],
        lambda_phase: vec![1.0; relations],
    }
}

const MIN_WIDTH_FLOOR: f64 = 1e-9;

/// Runs the four-step surgery for every false triple, in table order,
/// starting from [`base_case`], then verifies exhaustively. Triples already
/// scoring below zero when reached are skipped. Failures are reported in the
/// certificate, never repaired.
pub fn construct_expressive_embedding(
    tt: &TruthTable,
    gamma: f64,
    adjustment: Adjustment,
) -> Result<SeparationCertificate, FormalError> {
    if tt.entities == 0 || tt.relations == 0 {
        return Err(FormalError::Invalid("truth table must have entities and relations".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(FormalError::Invalid("gamma must be positive".into()));
    }
    if let Adjustment::Fixed(c) = adjustment {
        if !(c.is_finite() && c > 0.0) {
            return Err(FormalError::Invalid("adjustment constant must be positive".into()));
        }
    }
    let mut p = base_case(tt.entities, tt.relations, gamma);
    let mut steps = Vec::new();
    let targets: Vec<Triple> = tt.triples().filter(|t| !tt.get(*t)).collect();
    for t in targets {
        let f = p.score(t);
        if f < 0.0 {
            continue;
        }
        let dim = surgery_dimension(t.relation, t.tail, tt.entities);
        let c = match adjustment {
            Adjustment::Fixed(c) => c,
            Adjustment::PerStep => {
                let min_w = (0..tt.relations)
                    .map(|x| p.scale.get(x, dim).abs())
                    .fold(f64::INFINITY, f64::min)
                    .max(MIN_WIDTH_FLOOR);
                f.max(0.0) / min_w + gamma + 1.0
            }
        };
        // Step 1: raise the tail's modulus at the surged coordinate.
        let v = p.entity_modulus.get(t.tail, dim);
        p.entity_modulus.set(t.tail, dim, v + c);
        // Step 2: lower every other entity at the same coordinate.
        for e in (0..tt.entities).filter(|&e| e != t.tail) {
            let v = p.entity_modulus.get(e, dim);
            p.entity_modulus.set(e, dim, v - c);
        }
        // Step 3: the target relation's width and bias.
        let w = p.scale.get(t.relation, dim);
        p.scale.set(t.relation, dim, w + c);
        let b = p.bias.get(t.relation, dim);
        p.bias.set(t.relation, dim, b + c);
        // Step 4: every other relation's width.
        for x in (0..tt.relations).filter(|&x| x != t.relation) {
            let w = p.scale.get(x, dim);
            p.scale.set(x, dim, w + c);
        }
        steps.push(SurgeryStep {
            triple: t,
            dimension: dim,
            constant: c,
            score_before: f,
        });
    }
    Ok(SeparationCertificate::from_params(tt, p, steps))
}

/// Summary of a batch of random truth tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityReport {
    pub entities: usize,
    pub relations: usize,
    pub width: usize,
    pub gamma: f64,
    pub seed: u64,
    pub trials: usize,
    pub valid: usize,
    /// Per trial: number of false triples, validity and the offending triples.
    pub outcomes: Vec<TrialOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub false_triples: usize,
    pub valid: bool,
    pub min_true_score: Option<f64>,
    pub max_false_score: Option<f64>,
    pub offending: Vec<Triple>,
}

impl ExpressivityReport {
    pub fn summary_line(&self) -> String {
        format!("{}/{} certificates valid", self.valid, self.trials)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Truth table for trial `i` under `seed`.
pub fn trial_table(entities: usize, relations: usize, seed: u64, trial: usize) -> TruthTable {
    let mut rng = rng_for(seed, &format!("formal/truth-table/{trial}"));
    TruthTable::random(entities, relations, &mut rng)
}

pub fn run_expressivity_trials(
    entities: usize,
    relations: usize,
    trials: usize,
    seed: u64,
    gamma: f64,
) -> Result<ExpressivityReport, FormalError> {
    let mut outcomes = Vec::with_capacity(trials);
    for i in 0..trials {
        let tt = trial_table(entities, relations, seed, i);
        let cert = construct_expressive_embedding(&tt, gamma, Adjustment::PerStep)?;
        outcomes.push(TrialOutcome {
            trial: i,
            false_triples: tt.triples().filter(|t| !tt.get(*t)).count(),
            valid: cert.valid,
            min_true_score: cert.min_true_score,
            max_false_score: cert.max_false_score,
            offending: cert.offending,
        });
    }
    Ok(ExpressivityReport {
        entities,
        relations,
        width: entities * relations,
        gamma,
        seed,
        trials,
        valid: outcomes.iter().filter(|o| o.valid).count(),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_case_scores_above_margin() {
        let p = base_case(3, 2, 1.0);
        for h in 0..3 {
            for r in 0..2 {
                for t in 0..3 {
                    assert_eq!(p.score(Triple::new(h, r, t)), 1.0 + 6.0);
                }
            }
        }
    }

    #[test]
    fn all_true_table_is_certified_by_base_case() {
        let tt = TruthTable::all_true(3, 2);
        let cert = construct_expressive_embedding(&tt, 1.0, Adjustment::PerStep).unwrap();
        assert!(cert.valid);
        assert!(cert.steps.is_empty());
        assert_eq!(cert.width, 6);
        assert_eq!(cert.min_true_score, Some(7.0));
        assert_eq!(cert.max_false_score, None);
        assert!(cert.reverify(1e-9));
    }

    #[test]
    fn surged_false_triple_drops_below_zero() {
        for target in TruthTable::all_true(3, 2).triples() {
            let mut tt = TruthTable::all_true(3, 2);
            tt.set(target, false);
            let cert = construct_expressive_embedding(&tt, 1.0, Adjustment::PerStep).unwrap();
            assert_eq!(cert.steps.len(), 1);
            assert_eq!(cert.steps[0].dimension, surgery_dimension(target.relation, target.tail, 3));
            let s = cert.scores.iter().find(|s| s.triple == target).unwrap();
            assert!(s.score < 0.0, "{target:?} scored {}", s.score);
        }
    }

    #[test]
    fn failures_are_listed_not_patched() {
        let mut tt = TruthTable::all_true(3, 2);
        tt.set(Triple::new(0, 0, 1), false);
        let cert = construct_expressive_embedding(&tt, 1.0, Adjustment::PerStep).unwrap();
        let recomputed: Vec<Triple> = cert
            .scores
            .iter()
            .filter(|s| if s.truth { s.score <= 1.0 } else { s.score >= 0.0 })
            .map(|s| s.triple)
            .collect();
        assert_eq!(cert.offending, recomputed);
        assert_eq!(cert.valid, recomputed.is_empty());
        assert!(cert.reverify(1e-9));
    }

    #[test]
    fn dimension_bound() {
        for (e, r) in [(2, 1), (3, 2), (4, 3)] {
            let tt = trial_table(e, r, 5, 0);
            let cert = construct_expressive_embedding(&tt, 1.0, Adjustment::PerStep).unwrap();
            assert!(cert.width <= e * r);
            assert_eq!(cert.params.entity_phase.cols(), e * r);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let tt = TruthTable::all_true(2, 1);
        assert!(construct_expressive_embedding(&tt, 0.0, Adjustment::PerStep).is_err());
        assert!(construct_expressive_embedding(&tt, 1.0, Adjustment::Fixed(-1.0)).is_err());
    }

    #[test]
    fn trials_are_deterministic() {
        let a = run_expressivity_trials(3, 2, 5, 1, 1.0).unwrap();
        let b = run_expressivity_trials(3, 2, 5, 1, 1.0).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn certificate_json_round_trips() {
        let tt = trial_table(3, 2, 2, 0);
        let cert = construct_expressive_embedding(&tt, 1.0, Adjustment::PerStep).unwrap();
        let back: SeparationCertificate = serde_json::from_str(&cert.to_json()).unwrap();
        assert_eq!(back, cert);
    }
}
