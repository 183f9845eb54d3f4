use crate::math::Matrix;
use crate::models::Gradients;

use super::TrainError;

/// Adam moments for every tensor of a model plus the shared step counter.
/// Updates are row-sparse: only rows touched by the gradient have their
/// moments and values changed; bias correction uses the global step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(tensors: &[&Matrix]) -> Self {
        Self::with_betas(tensors, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(tensors: &[&Matrix], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = |m: &&Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            m: tensors.iter().map(zeros).collect(),
            v: tensors.iter().map(zeros).collect(),
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    /// One update `θ ← θ − lr · m̂ / (√v̂ + ε)` on the touched rows.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &Gradients, lr: f64) -> Result<(), TrainError> {
        if params.len() != self.m.len() || grads.tensors.len() != self.m.len() {
            return Err(TrainError::Internal(format!(
                "adam: {} parameter tensors, {} gradient tensors, {} moment tensors",
                params.len(),
                grads.tensors.len(),
                self.m.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.shape() != self.m[i].shape() || grads.tensors[i].shape() != self.m[i].shape() {
                return Err(TrainError::Internal(format!("adam: shape mismatch in tensor {i}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = &grads.tensors[i];
            for &r in g.touched_rows() {
                let gr = g.row(r);
                let m = self.m[i].row_mut(r);
                for (mj, &gj) in m.iter_mut().zip(gr) {
                    *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                }
                let v = self.v[i].row_mut(r);
                for (vj, &gj) in v.iter_mut().zip(gr) {
                    *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                }
                let m = self.m[i].row(r);
                let v = self.v[i].row(r);
                for ((x, &mj), &vj) in p.row_mut(r).iter_mut().zip(m).zip(v) {
                    let m_hat = mj / c1;
                    let v_hat = vj / c2;
                    *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Matrix::filled(2, 2, 1.5);
        let before = p.clone();
        let mut st = AdamState::new(&[&p]);
        let g = Gradients::for_tensors(&[&p]);
        st.step(&mut [&mut p], &g, 0.1).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Matrix::filled(1, 1, 0.0);
        let mut st = AdamState::new(&[&p]);
        let mut g = Gradients::for_tensors(&[&p]);
        g.tensors[0].row_mut(0)[0] = 1.0;
        st.step(&mut [&mut p], &g, 1e-3).unwrap();
        // m̂ = 1, v̂ = 1  →  Δ = −η / (1 + ε)
        assert!((p.get(0, 0) + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn untouched_rows_frozen() {
        let mut p = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        let mut st = AdamState::new(&[&p]);
        let mut g = Gradients::for_tensors(&[&p]);
        g.tensors[0].row_mut(1)[0] = 0.5;
        st.step(&mut [&mut p], &g, 0.1).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(2, 0), 3.0);
        assert_ne!(p.get(1, 0), 2.0);
        assert_eq!(st.m[0].get(0, 0), 0.0);
        assert_eq!(st.v[0].get(2, 0), 0.0);
    }

    #[test]
    fn shape_mismatch_is_internal_error() {
        let mut p = Matrix::zeros(2, 2);
        let q = Matrix::zeros(3, 2);
        let mut st = AdamState::new(&[&q]);
        let g = Gradients::for_tensors(&[&q]);
        assert!(matches!(st.step(&mut [&mut p], &g, 0.1), Err(TrainError::Internal(_))));
    }
}
