use serde::{Deserialize, Serialize};

use super::{uniform_matrix, Gradients, KgeModel, ModelError, ScoreModel, TypeContext};
use crate::kg::Triple;
use crate::math::{sign0, Matrix};
use crate::seed::rng_for;

const TENSOR_NAMES: [&str; 2] = ["entity", "relation"];

/// TransE baseline: `γ − ‖h + r − t‖₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransEParams {
    pub entity: Matrix,
    pub relation: Matrix,
    pub gamma: f64,
}

impl TransEParams {
    /// Uniform init in `±(γ + 2)/d`.
    pub fn init(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        gamma: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::Config("dim must be positive".into()));
        }
        let range = (gamma + 2.0) / dim as f64;
        let mut rng = rng_for(seed, "transe/init");
        Ok(Self {
            entity: uniform_matrix(num_entities, dim, -range, range, &mut rng),
            relation: uniform_matrix(num_relations, dim, -range, range, &mut rng),
            gamma,
        })
    }
}

impl ScoreModel for TransEParams {
    fn num_entities(&self) -> usize {
        self.entity.rows()
    }

    fn num_relations(&self) -> usize {
        self.relation.rows()
    }

    fn score(&self, t: Triple) -> f64 {
        let h = self.entity.row(t.head);
        let r = self.relation.row(t.relation);
        let tl = self.entity.row(t.tail);
        let mut dist = 0.0;
        for i in 0..h.len() {
            dist += ((h[i] + r[i]) - tl[i]).abs();
        }
        self.gamma - dist
    }
}

impl KgeModel for TransEParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.entity, &self.relation]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.entity, &mut self.relation]
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
        let r = self.relation.row(t.relation);
        let tl = self.entity.row(t.tail);
        let d: Vec<f64> = (0..h.len())
            .map(|i| -coeff * sign0((h[i] + r[i]) - tl[i]))
            .collect();
        for (x, v) in g.tensors[0].row_mut(t.head).iter_mut().zip(&d) {
            *x += v;
        }
        for (x, v) in g.tensors[1].row_mut(t.relation).iter_mut().zip(&d) {
            *x += v;
        }
        for (x, v) in g.tensors[0].row_mut(t.tail).iter_mut().zip(&d) {
            *x -= v;
        }
    }
}
