use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::FormalError;
use crate::seed::{rng_for, Rng};

/// Relation parameters in verification mode: phase shift, modulus, raw bias
/// `b` and raw width `w`, one entry per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationFragment {
    pub phase: Vec<f64>,
    pub modulus: Vec<f64>,
    pub bias: Vec<f64>,
    pub width: Vec<f64>,
}

impl RelationFragment {
    /// Zero bias and unit width.
    pub fn plain(phase: Vec<f64>, modulus: Vec<f64>) -> Self {
        let k = phase.len();
        Self {
            phase,
            modulus,
            bias: vec![0.0; k],
            width: vec![1.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    /// `Σ |sin((h + r − t)/2)|`.
    pub fn phase_score(&self, h: &[f64], t: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| (((h[i] + self.phase[i]) - t[i]) / 2.0).sin().abs())
            .sum()
    }

    /// `Σ w |h (r + b) − t (1 − b)|`.
    pub fn modulus_score(&self, h: &[f64], t: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| {
                let b = self.bias[i];
                self.width[i] * (h[i] * (self.modulus[i] + b) - t[i] * (1.0 - b)).abs()
            })
            .sum()
    }
}

pub fn make_symmetric(k: usize) -> RelationFragment {
    RelationFragment::plain(vec![0.0; k], vec![1.0; k])
}

/// Negated phase; modulus, bias and width unchanged.
pub fn make_inverse(r1: &RelationFragment) -> RelationFragment {
    RelationFragment {
        phase: r1.phase.iter().map(|x| -x).collect(),
        ..r1.clone()
    }
}

/// Phases add and moduli multiply elementwise.
pub fn make_composed(r1: &RelationFragment, r2: &RelationFragment) -> Result<RelationFragment, FormalError> {
    if r1.len() != r2.len() {
        return Err(FormalError::Invalid("relations differ in length".into()));
    }
    Ok(RelationFragment::plain(
        r1.phase.iter().zip(&r2.phase).map(|(a, b)| a + b).collect(),
        r1.modulus.iter().zip(&r2.modulus).map(|(a, b)| a * b).collect(),
    ))
}

/// The super-relation: sub modulus and width both scaled by `scale`.
pub fn make_hierarchy(sub: &RelationFragment, scale: f64) -> Result<RelationFragment, FormalError> {
    if !(scale.is_finite() && scale > 1.0) {
        return Err(FormalError::Invalid("hierarchy scale must exceed 1".into()));
    }
    Ok(RelationFragment {
        phase: sub.phase.clone(),
        modulus: sub.modulus.iter().map(|m| m * scale).collect(),
        bias: sub.bias.clone(),
        width: sub.width.iter().map(|w| w * scale).collect(),
    })
}

/// Orthogonal phase vectors: π on the first half of the coordinates for
/// `r1`, on the second half for `r2`.
pub fn make_disjoint(k: usize) -> Result<(RelationFragment, RelationFragment), FormalError> {
    if k < 2 {
        return Err(FormalError::Invalid("disjointness needs at least two coordinates".into()));
    }
    let half = k / 2;
    let r1 = (0..k).map(|i| if i < half { PI } else { 0.0 }).collect();
    let r2 = (0..k).map(|i| if i < half { 0.0 } else { PI }).collect();
    Ok((
        RelationFragment::plain(r1, vec![1.0; k]),
        RelationFragment::plain(r2, vec![1.0; k]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternKind {
    Symmetry,
    AntiSymmetry,
    Inversion,
    Hierarchy,
    Composition,
    Disjointness,
}

impl PatternKind {
    pub const ALL: [PatternKind; 6] = [
        PatternKind::Symmetry,
        PatternKind::AntiSymmetry,
        PatternKind::Inversion,
        PatternKind::Hierarchy,
        PatternKind::Composition,
        PatternKind::Disjointness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Symmetry => "symmetry",
            PatternKind::AntiSymmetry => "anti-symmetry",
            PatternKind::Inversion => "inversion",
            PatternKind::Hierarchy => "hierarchy",
            PatternKind::Composition => "composition",
            PatternKind::Disjointness => "disjointness",
        }
    }
}

impl std::str::FromStr for PatternKind {
    type Err = FormalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatternKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| FormalError::Invalid(format!("unknown pattern '{s}'")))
    }
}

/// Result of checking one pattern construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternWitness {
    pub kind: PatternKind,
    /// What was checked. Hierarchy and disjointness carry our own
    /// formalization and say so here.
    pub statement: String,
    pub relations: Vec<RelationFragment>,
    pub trials: usize,
    pub tolerance: f64,
    /// Largest identity violation (for anti-symmetry: the largest score gap
    /// found, which must exceed the tolerance).
    pub max_residual: f64,
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
    pub residual: f64,
}

fn random_phase(k: usize, rng: &mut Rng) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(-PI..PI)).collect()
}

fn random_modulus(k: usize, rng: &mut Rng) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(0.5..2.0)).collect()
}

/// Checks `kind`'s identity over `trials` random (or gridded) entity pairs
/// in `k` coordinates.
pub fn verify_pattern(
    kind: PatternKind,
    k: usize,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<PatternWitness, FormalError> {
    if !(tolerance > 0.0) {
        return Err(FormalError::Invalid("tolerance must be positive".into()));
    }
    if k == 0 || trials == 0 {
        return Err(FormalError::Invalid("k and trials must be positive".into()));
    }
    let mut rng = rng_for(seed, &format!("formal/pattern/{}", kind.name()));
    let mut worst: Option<Counterexample> = None;
    let mut max_residual = 0.0f64;
    let mut track = |h: &[f64], t: &[f64], residual: f64, worst: &mut Option<Counterexample>| {
        if residual > max_residual || worst.is_none() {
            max_residual = max_residual.max(residual);
            *worst = Some(Counterexample {
                head: h.to_vec(),
                tail: t.to_vec(),
                residual,
            });
        }
    };

    let (statement, relations, passed) = match kind {
        PatternKind::Symmetry => {
            let r = make_symmetric(k);
            for _ in 0..trials {
                let (h, t) = (random_phase(k, &mut rng), random_phase(k, &mut rng));
                let res = (r.phase_score(&h, &t) - r.phase_score(&t, &h)).abs();
                track(&h, &t, res, &mut worst);
            }
            (
                "phase_score(h,r,t) = phase_score(t,r,h) for zero-phase r".to_owned(),
                vec![r],
                max_residual <= tolerance,
            )
        }
        PatternKind::AntiSymmetry => {
            let phase: Vec<f64> = (0..k)
                .map(|_| {
                    let x: f64 = rng.gen_range(0.1..PI - 0.1);
                    if rng.gen_bool(0.5) {
                        x
                    } else {
                        x + PI + 0.05
                    }
                })
                .collect();
            let r = RelationFragment::plain(phase, vec![1.0; k]);
            let mut found = false;
            for _ in 0..trials {
                let (h, t) = (random_phase(k, &mut rng), random_phase(k, &mut rng));
                let gap = (r.phase_score(&h, &t) - r.phase_score(&t, &h)).abs();
                track(&h, &t, gap, &mut worst);
                if gap > tolerance {
                    found = true;
                    break;
                }
            }
            (
                "exists (h,t) with phase_score(h,r,t) ≠ phase_score(t,r,h) for r with phases outside {0, π}".to_owned(),
                vec![r],
                found,
            )
        }
        PatternKind::Inversion => {
            let r1 = RelationFragment::plain(random_phase(k, &mut rng), random_modulus(k, &mut rng));
            let r2 = make_inverse(&r1);
            for _ in 0..trials {
                let (h, t) = (random_phase(k, &mut rng), random_phase(k, &mut rng));
                let res = (r1.phase_score(&h, &t) - r2.phase_score(&t, &h)).abs();
                track(&h, &t, res, &mut worst);
            }
            (
                "phase_score(h,r1,t) = phase_score(t,r2,h) with r2 = inverse(r1)".to_owned(),
                vec![r1, r2],
                max_residual <= tolerance,
            )
        }
        PatternKind::Composition => {
            let r1 = RelationFragment::plain(random_phase(k, &mut rng), random_modulus(k, &mut rng));
            let r2 = RelationFragment::plain(random_phase(k, &mut rng), random_modulus(k, &mut rng));
            let r3 = make_composed(&r1, &r2)?;
            for _ in 0..trials {
                let hp = random_phase(k, &mut rng);
                let mp: Vec<f64> = (0..k).map(|i| hp[i] + r1.phase[i]).collect();
                let tp: Vec<f64> = (0..k).map(|i| mp[i] + r2.phase[i]).collect();
                let hm = random_modulus(k, &mut rng);
                let mm: Vec<f64> = (0..k).map(|i| hm[i] * r1.modulus[i]).collect();
                let tm: Vec<f64> = (0..k).map(|i| mm[i] * r2.modulus[i]).collect();
                let res = r3.phase_score(&hp, &tp).max(r3.modulus_score(&hm, &tm));
                track(&hp, &tp, res, &mut worst);
            }
            (
                "chains with zero r1 and r2 residuals give phase and modulus residual ≈ 0 under r3 = compose(r1, r2)"
                    .to_owned(),
                vec![r1, r2, r3],
                max_residual <= tolerance,
            )
        }
        PatternKind::Hierarchy => {
            let scale = rng.gen_range(1.5..3.0);
            let sub = RelationFragment::plain(random_phase(k, &mut rng), random_modulus(k, &mut rng));
            let sup = make_hierarchy(&sub, scale)?;
            for _ in 0..trials {
                let hm = random_modulus(k, &mut rng);
                let tm: Vec<f64> = (0..k).map(|i| hm[i] * sub.modulus[i]).collect();
                let bound: f64 = (0..k)
                    .map(|i| scale * (scale - 1.0) * sub.width[i] * (hm[i] * sub.modulus[i]).abs())
                    .sum();
                let sub_res = sub.modulus_score(&hm, &tm);
                let excess = (sup.modulus_score(&hm, &tm) - bound).max(0.0) / (1.0 + bound);
                track(&hm, &tm, excess.max(sub_res), &mut worst);
            }
            (
                "formalization: for t = h∘r_sub (zero sub mismatch), the super mismatch is at most s(s−1)·Σ w|h∘r_sub|"
                    .to_owned(),
                vec![sub, sup],
                max_residual <= tolerance,
            )
        }
        PatternKind::Disjointness => {
            let (r1, r2) = make_disjoint(k)?;
            // Grid over head phases; tails are the r1-aligned partners.
            let steps = (trials as f64).sqrt().ceil() as usize;
            let mut min_r2 = f64::INFINITY;
            let mut max_r1 = 0.0f64;
            for a in 0..steps {
                for b in 0..steps {
                    let x = -PI + 2.0 * PI * a as f64 / steps as f64;
                    let y = -PI + 2.0 * PI * b as f64 / steps as f64;
                    let h: Vec<f64> = (0..k).map(|i| if i % 2 == 0 { x } else { y }).collect();
                    let t: Vec<f64> = (0..k).map(|i| h[i] + r1.phase[i]).collect();
                    let aligned = r1.phase_score(&h, &t);
                    let other = r2.phase_score(&h, &t);
                    max_r1 = max_r1.max(aligned);
                    if other < min_r2 {
                        min_r2 = other;
                        worst = Some(Counterexample {
                            head: h,
                            tail: t,
                            residual: other,
                        });
                    }
                }
            }
            max_residual = max_r1;
            (
                format!(
                    "formalization: every r1-aligned pair (phase_score ≤ tol under r1) has phase_score > tol under r2; \
                     min r2 score on grid = {min_r2:.6}"
                ),
                vec![r1, r2],
                max_r1 <= tolerance && min_r2 > tolerance,
            )
        }
    };
    Ok(PatternWitness {
        kind,
        statement,
        relations,
        trials,
        tolerance,
        max_residual,
        passed,
        counterexample: if passed && kind != PatternKind::AntiSymmetry { None } else { worst },
    })
}
