use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{uniform_matrix, Gradients, KgeModel, ModelError, ScoreModel, TypeContext};
use crate::kg::Triple;
use crate::math::Matrix;
use crate::seed::rng_for;

const TENSOR_NAMES: [&str; 2] = ["entity", "relation_phase"];

/// RotatE baseline on paired real coordinates. Entity columns `2i, 2i+1`
/// are the real and imaginary part of complex coordinate `i`; the relation
/// rotates each pair by its phase:
/// `γ − Σ_i ‖rot(h_i, θ_i) − t_i‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotateParams {
    pub entity: Matrix,
    pub relation_phase: Matrix,
    pub gamma: f64,
}

impl RotateParams {
    pub fn init(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        gamma: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if dim < 2 || dim % 2 != 0 {
            return Err(ModelError::Config(format!(
                "dim must be even and positive (got {dim})"
            )));
        }
        let range = (gamma + 2.0) / dim as f64;
        let mut rng = rng_for(seed, "rotate/init");
        Ok(Self {
            entity: uniform_matrix(num_entities, dim, -range, range, &mut rng),
            relation_phase: uniform_matrix(num_relations, dim / 2, -PI, PI, &mut rng),
            gamma,
        })
    }

    #[inline]
    fn residual(&self, h: &[f64], theta: f64, t: &[f64], i: usize) -> (f64, f64) {
        let (re, im) = (h[2 * i], h[2 * i + 1]);
        let (s, c) = theta.sin_cos();
        (re * c - im * s - t[2 * i], re * s + im * c - t[2 * i + 1])
    }
}

impl ScoreModel for RotateParams {
    fn num_entities(&self) -> usize {
        self.entity.rows()
    }

    fn num_relations(&self) -> usize {
        self.relation_phase.rows()
    }

    fn score(&self, t: Triple) -> f64 {
        let h = self.entity.row(t.head);
        let tl = self.entity.row(t.tail);
        let ph = self.relation_phase.row(t.relation);
        let mut dist = 0.0;
        for (i, &theta) in ph.iter().enumerate() {
            let (a, b) = self.residual(h, theta, tl, i);
            dist += a.hypot(b);
        }
        self.gamma - dist
    }
}

impl KgeModel for RotateParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.entity, &self.relation_phase]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.entity, &mut self.relation_phase]
    }

    fn tensor_names(&self) -> &'static [&'static str] {
        &TENSOR_NAMES
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn accumulate_grad(&self, t: Triple, coeff: f64, _ctx: Option<&TypeContext<'_>>, g: &mut Gradients) {
        if coeff == 0.0 {
            return;
        }
        let h = self.entity.row(t.head);
        let tl = self.entity.row(t.tail);
        let ph = self.relation_phase.row(t.relation);
        let k = ph.len();
        let mut dh = vec![0.0; 2 * k];
        let mut dt = vec![0.0; 2 * k];
        let mut dth = vec![0.0; k];
        for i in 0..k {
            let (a, b) = self.residual(h, ph[i], tl, i);
            let n = a.hypot(b);
            if n == 0.0 {
                continue;
            }
            // ∂score/∂a = −a/n, ∂score/∂b = −b/n
            let (ga, gb) = (-coeff * a / n, -coeff * b / n);
            let (s, c) = ph[i].sin_cos();
            let (re, im) = (h[2 * i], h[2 * i + 1]);
            dh[2 * i] = ga * c + gb * s;
            dh[2 * i + 1] = -ga * s + gb * c;
            dt[2 * i] = -ga;
            dt[2 * i + 1] = -gb;
            dth[i] = ga * (-re * s - im * c) + gb * (re * c - im * s);
        }
        for (x, v) in g.tensors[0].row_mut(t.head).iter_mut().zip(&dh) {
            *x += v;
        }
        for (x, v) in g.tensors[0].row_mut(t.tail).iter_mut().zip(&dt) {
            *x += v;
        }
        for (x, v) in g.tensors[1].row_mut(t.relation).iter_mut().zip(&dth) {
            *x += v;
        }
    }
}
