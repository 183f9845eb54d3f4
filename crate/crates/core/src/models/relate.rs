//! RelatE: phase-modulus decomposition.
//!
//! Each entity and relation carries a phase vector and a modulus vector of
//! width `d/2`. For a triple `(h, r, t)`:
//!
//! ```text
//! modulus(h,r,t) = Σ_i w_i · | h_i^m · (r_i^m + b_i) − t_i^m · (1 − b_i) |
//! phase(h,r,t)   = Σ_i | sin((h_i^p + r_i^p − t_i^p) / 2) |
//! score(h,r,t)   = γ − (λ_m · modulus + λ_p · phase)
//! ```
//!
//! with `w = softplus(width_raw)`, `b = sigmoid(bias_raw)` and
//! `λ = softplus(lambda_raw)` per relation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{type_bias_term, uniform_matrix, Gradients, KgeModel, ModelError, ScoreModel, TypeContext};
use crate::kg::Triple;
use crate::math::{sigmoid, sign0, softplus, softplus_inv, Matrix};
use crate::seed::rng_for;

const ENTITY_PHASE: usize = 0;
const ENTITY_MODULUS: usize = 1;
const RELATION_PHASE: usize = 2;
const RELATION_MODULUS: usize = 3;
const RELATION_BIAS: usize = 4;
const RELATION_WIDTH: usize = 5;
const LAMBDA_MOD: usize = 6;
const LAMBDA_PHASE: usize = 7;
const HEAD_PROTO: usize = 8;
const TAIL_PROTO: usize = 9;

const TENSOR_NAMES: [&str; 10] = [
    "entity_phase",
    "entity_modulus",
    "relation_phase",
    "relation_modulus",
    "relation_bias_raw",
    "relation_width_raw",
    "lambda_mod_raw",
    "lambda_phase_raw",
    "head_type_proto",
    "tail_type_proto",
];

/// Initialization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelateHyper {
    pub gamma: f64,
    /// Initial value of `softplus(width_raw)`.
    pub init_relation_width: f64,
    /// Initial value of `softplus(lambda_mod_raw)`.
    pub modulus_weight: f64,
}

impl Default for RelateHyper {
    fn default() -> Self {
        Self {
            gamma: 12.0,
            init_relation_width: 0.03,
            modulus_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelateParams {
    pub entity_phase: Matrix,
    pub entity_modulus: Matrix,
    pub relation_phase: Matrix,
    pub relation_modulus: Matrix,
    pub relation_bias_raw: Matrix,
    pub relation_width_raw: Matrix,
    /// `|R| × 1`.
    pub lambda_mod_raw: Matrix,
    /// `|R| × 1`.
    pub lambda_phase_raw: Matrix,
    /// `|R| × 2|R|`.
    pub head_type_proto: Matrix,
    /// `|R| × 2|R|`.
    pub tail_type_proto: Matrix,
    pub gamma: f64,
    pub dim: usize,
}

impl RelateParams {
    /// Random initialization, deterministic under `seed`.
    ///
    /// Phases are uniform in `[−π, π)`, moduli uniform in `[0.5, 1.5)`, bias
    /// raw zero (`b = 0.5`), widths and λ set through `softplus⁻¹`, and type
    /// prototypes zero.
    pub fn init(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        hyper: &RelateHyper,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if dim < 2 || dim % 2 != 0 {
            return Err(ModelError::Config(format!(
                "dim must be even and positive (got {dim})"
            )));
        }
        if hyper.init_relation_width <= 0.0 || hyper.modulus_weight <= 0.0 {
            return Err(ModelError::Config(
                "initial relation width and modulus weight must be positive".into(),
            ));
        }
        let k = dim / 2;
        let mut rng = rng_for(seed, "relate/init");
        let entity_phase = uniform_matrix(num_entities, k, -PI, PI, &mut rng);
        let entity_modulus = uniform_matrix(num_entities, k, 0.5, 1.5, &mut rng);
        let relation_phase = uniform_matrix(num_relations, k, -PI, PI, &mut rng);
        let relation_modulus = uniform_matrix(num_relations, k, 0.5, 1.5, &mut rng);
        Ok(Self {
            entity_phase,
            entity_modulus,
            relation_phase,
            relation_modulus,
            relation_bias_raw: Matrix::zeros(num_relations, k),
            relation_width_raw: Matrix::filled(num_relations, k, softplus_inv(hyper.init_relation_width)),
            lambda_mod_raw: Matrix::filled(num_relations, 1, softplus_inv(hyper.modulus_weight)),
            lambda_phase_raw: Matrix::filled(num_relations, 1, softplus_inv(1.0)),
            head_type_proto: Matrix::zeros(num_relations, 2 * num_relations),
            tail_type_proto: Matrix::zeros(num_relations, 2 * num_relations),
            gamma: hyper.gamma,
            dim,
        })
    }

    /// Working width `d/2` of every phase/modulus vector.
    pub fn half_dim(&self) -> usize {
        self.dim / 2
    }

    pub fn lambda_mod(&self, r: usize) -> f64 {
        softplus(self.lambda_mod_raw.get(r, 0))
    }

    pub fn lambda_phase(&self, r: usize) -> f64 {
        softplus(self.lambda_phase_raw.get(r, 0))
    }

    /// `γ − (λ_m · modulus + λ_p · phase)`, without the type-bias term.
    pub fn base_score(&self, t: Triple) -> f64 {
        let m = modulus_score(self, t);
        let p = phase_score(self, t);
        self.gamma - (self.lambda_mod(t.relation) * m + self.lambda_phase(t.relation) * p)
    }

    /// Accumulates `Σ weight · sign · ∂score/∂θ` over the listed entries.
    pub fn grad(&self, entries: &[(Triple, f64, f64)], ctx: Option<&TypeContext<'_>>) -> Gradients {
        let mut g = self.new_gradients();
        for &(t, weight, sign) in entries {
            self.accumulate_grad(t, weight * sign, ctx, &mut g);
        }
        g
    }

    fn relation_terms(&self, r: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.half_dim();
        let mut shift = Vec::with_capacity(k);
        let mut keep = Vec::with_capacity(k);
        let mut width = Vec::with_capacity(k);
        let rm = self.relation_modulus.row(r);
        let br = self.relation_bias_raw.row(r);
        let wr = self.relation_width_raw.row(r);
        for i in 0..k {
            let b = sigmoid(br[i]);
            shift.push(rm[i] + b);
            keep.push(1.0 - b);
            width.push(softplus(wr[i]));
        }
        (shift, keep, width)
    }
}

/// Weighted L1 modulus mismatch for `t`.
pub fn modulus_score(p: &RelateParams, t: Triple) -> f64 {
    let h = p.entity_modulus.row(t.head);
    let tl = p.entity_modulus.row(t.tail);
    let rm = p.relation_modulus.row(t.relation);
    let br = p.relation_bias_raw.row(t.relation);
    let wr = p.relation_width_raw.row(t.relation);
    let mut sum = 0.0;
    for i in 0..h.len() {
        let b = sigmoid(br[i]);
        let w = softplus(wr[i]);
        sum += w * (h[i] * (rm[i] + b) - tl[i] * (1.0 - b)).abs();
    }
    sum
}

/// Sum of `|sin(half phase residual)|` for `t`.
pub fn phase_score(p: &RelateParams, t: Triple) -> f64 {
    let h = p.entity_phase.row(t.head);
    let tl = p.entity_phase.row(t.tail);
    let r = p.relation_phase.row(t.relation);
    let mut sum = 0.0;
    for i in 0..h.len() {
        sum += (((h[i] + r[i]) - tl[i]) / 2.0).sin().abs();
    }
    sum
}

impl ScoreModel for RelateParams {
    fn num_entities(&self) -> usize {
        self.entity_phase.rows()
    }

    fn num_relations(&self) -> usize {
        self.relation_phase.rows()
    }

    fn score(&self, t: Triple) -> f64 {
        self.base_score(t)
    }

    fn score_tails(&self, head: usize, relation: usize, out: &mut [f64]) {
        let k = self.half_dim();
        let (shift, keep, width) = self.relation_terms(relation);
        let hm = self.entity_modulus.row(head);
        let moved: Vec<f64> = (0..k).map(|i| hm[i] * shift[i]).collect();
        let hp = self.entity_phase.row(head);
        let rp = self.relation_phase.row(relation);
        let rotated: Vec<f64> = (0..k).map(|i| hp[i] + rp[i]).collect();
        let (lm, lp) = (self.lambda_mod(relation), self.lambda_phase(relation));
        for (e, o) in out.iter_mut().enumerate() {
            let tm = self.entity_modulus.row(e);
            let tp = self.entity_phase.row(e);
            let mut m = 0.0;
            for i in 0..k {
                m += width[i] * (moved[i] - tm[i] * keep[i]).abs();
            }
            let mut p = 0.0;
            for i in 0..k {
                p += ((rotated[i] - tp[i]) / 2.0).sin().abs();
            }
            *o = self.gamma - (lm * m + lp * p);
        }
    }

    fn score_heads(&self, relation: usize, tail: usize, out: &mut [f64]) {
        let k = self.half_dim();
        let (shift, keep, width) = self.relation_terms(relation);
        let tm = self.entity_modulus.row(tail);
        let target: Vec<f64> = (0..k).map(|i| tm[i] * keep[i]).collect();
        let tp = self.entity_phase.row(tail);
        let rp = self.relation_phase.row(relation);
        let (lm, lp) = (self.lambda_mod(relation), self.lambda_phase(relation));
        for (e, o) in out.iter_mut().enumerate() {
            let hm = self.entity_modulus.row(e);
            let hp = self.entity_phase.row(e);
            let mut m = 0.0;
            for i in 0..k {
                m += width[i] * (hm[i] * shift[i] - target[i]).abs();
            }
            let mut p = 0.0;
            for i in 0..k {
                p += (((hp[i] + rp[i]) - tp[i]) / 2.0).sin().abs();
            }
            *o = self.gamma - (lm * m + lp * p);
        }
    }
}

impl KgeModel for RelateParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.entity_phase,
            &self.entity_modulus,
            &self.relation_phase,
            &self.relation_modulus,
            &self.relation_bias_raw,
            &self.relation_width_raw,
            &self.lambda_mod_raw,
            &self.lambda_phase_raw,
            &self.head_type_proto,
            &self.tail_type_proto,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.entity_phase,
            &mut self.entity_modulus,
            &mut self.relation_phase,
            &mut self.relation_modulus,
            &mut self.relation_bias_raw,
            &mut self.relation_width_raw,
            &mut self.lambda_mod_raw,
            &mut self.lambda_phase_raw,
            &mut self.head_type_proto,
            &mut self.tail_type_proto,
        ]
    }

    fn tensor_names(&self) -> &'static [&'static str] {
        &TENSOR_NAMES
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn type_bias(&self, t: Triple, ctx: &TypeContext<'_>) -> f64 {
        type_bias_term(t, ctx, &self.head_type_proto, &self.tail_type_proto)
    }

    fn accumulate_grad(&self, t: Triple, coeff: f64, ctx: Option<&TypeContext<'_>>, g: &mut Gradients) {
        if coeff == 0.0 {
            return;
        }
        let k = self.half_dim();
        let r = t.relation;
        let lm = self.lambda_mod(r);
        let lp = self.lambda_phase(r);

        let hm = self.entity_modulus.row(t.head);
        let tm = self.entity_modulus.row(t.tail);
        let rm = self.relation_modulus.row(r);
        let br = self.relation_bias_raw.row(r);
        let wr = self.relation_width_raw.row(r);
        let hp = self.entity_phase.row(t.head);
        let tp = self.entity_phase.row(t.tail);
        let rp = self.relation_phase.row(r);

        let mut d_hm = vec![0.0; k];
        let mut d_tm = vec![0.0; k];
        let mut d_rm = vec![0.0; k];
        let mut d_b = vec![0.0; k];
        let mut d_w = vec![0.0; k];
        let mut d_phase = vec![0.0; k];
        let mut modulus = 0.0;
        let mut phase = 0.0;

        for i in 0..k {
            let b = sigmoid(br[i]);
            let w = softplus(wr[i]);
            let u = hm[i] * (rm[i] + b) - tm[i] * (1.0 - b);
            let s = sign0(u);
            modulus += w * u.abs();
            // score = γ − λm·Σ w|u| − λp·Σ|sin(x/2)|
            let gu = -coeff * lm * w * s;
            d_hm[i] = gu * (rm[i] + b);
            d_rm[i] = gu * hm[i];
            d_tm[i] = -gu * (1.0 - b);
            d_b[i] = gu * (hm[i] + tm[i]) * b * (1.0 - b);
            d_w[i] = -coeff * lm * u.abs() * sigmoid(wr[i]);

            let half = ((hp[i] + rp[i]) - tp[i]) / 2.0;
            let sn = half.sin();
            phase += sn.abs();
            d_phase[i] = -coeff * lp * sign0(sn) * half.cos() * 0.5;
        }

        add_row(g, ENTITY_MODULUS, t.head, &d_hm, 1.0);
        add_row(g, ENTITY_MODULUS, t.tail, &d_tm, 1.0);
        add_row(g, RELATION_MODULUS, r, &d_rm, 1.0);
        add_row(g, RELATION_BIAS, r, &d_b, 1.0);
        add_row(g, RELATION_WIDTH, r, &d_w, 1.0);
        add_row(g, ENTITY_PHASE, t.head, &d_phase, 1.0);
        add_row(g, RELATION_PHASE, r, &d_phase, 1.0);
        add_row(g, ENTITY_PHASE, t.tail, &d_phase, -1.0);

        let sig_mod = sigmoid(self.lambda_mod_raw.get(r, 0));
        let sig_phase = sigmoid(self.lambda_phase_raw.get(r, 0));
        g.tensors[LAMBDA_MOD].row_mut(r)[0] += -coeff * modulus * sig_mod;
        g.tensors[LAMBDA_PHASE].row_mut(r)[0] += -coeff * phase * sig_phase;

        if let Some(c) = ctx {
            let scale = coeff * c.scale();
            if scale != 0.0 {
                add_row(g, HEAD_PROTO, r, c.signatures.of(t.head), scale);
                add_row(g, TAIL_PROTO, r, c.signatures.of(t.tail), scale);
            }
        }
    }
}

fn add_row(g: &mut Gradients, tensor: usize, row: usize, values: &[f64], factor: f64) {
    for (d, v) in g.tensors[tensor].row_mut(row).iter_mut().zip(values) {
        *d += factor * v;
    }
}
