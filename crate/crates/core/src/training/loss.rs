use crate::math::Matrix;
use crate::models::Gradients;

/// Self-adversarial weights: `softmax(α · scores)`. Treated as constants by
/// the gradient code.
pub fn adversarial_weights(neg_scores: &[f64], alpha: f64) -> Vec<f64> {
    if neg_scores.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<f64> = neg_scores.iter().map(|s| alpha * s).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `Σ_j weights_j · max(0, f_negs_j − f_pos + margin)`.
pub fn margin_loss(f_pos: f64, f_negs: &[f64], weights: &[f64], margin: f64) -> f64 {
    f_negs
        .iter()
        .zip(weights)
        .map(|(&f, &w)| w * (f - f_pos + margin).max(0.0))
        .sum()
}

/// `weight · Σ |θ|³` over every entry of every tensor.
pub fn l3_penalty(tensors: &[&Matrix], weight: f64) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    weight
        * tensors
            .iter()
            .flat_map(|m| m.as_slice())
            .map(|x| x.abs().powi(3))
            .sum::<f64>()
}

/// Adds `∂(l3_penalty)/∂θ = 3 · weight · sign(θ) · θ²` into `grad`.
pub fn l3_grad(tensors: &[&Matrix], weight: f64, grad: &mut Gradients) {
    if weight == 0.0 {
        return;
    }
    for (m, g) in tensors.iter().zip(grad.tensors.iter_mut()) {
        for r in 0..m.rows() {
            let src = m.row(r);
            for (d, &x) in g.row_mut(r).iter_mut().zip(src) {
                *d += 3.0 * weight * x * x.abs();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_scores_give_uniform_weights() {
        assert_eq!(adversarial_weights(&[0.0, 0.0], 1.0), vec![0.5, 0.5]);
        let w = adversarial_weights(&[3.0, -7.0, 100.0], 0.0);
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_of_ten_and_zero() {
        let w = adversarial_weights(&[10.0, 0.0], 1.0);
        let e10 = 10f64.exp();
        assert!((w[0] - e10 / (e10 + 1.0)).abs() < 1e-15);
        assert!((w[1] - 1.0 / (e10 + 1.0)).abs() < 1e-15);
        assert!((w[0] - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(margin_loss(8.0, &[2.0], &[1.0], 12.0), 6.0);
        assert_eq!(margin_loss(20.0, &[2.0, 5.0], &[0.5, 0.5], 12.0), 0.0);
        assert_eq!(
            margin_loss(8.0, &[3.0, 3.0], &[0.5, 0.5], 12.0),
            margin_loss(8.0, &[3.0], &[1.0], 12.0)
        );
    }

    #[test]
    fn l3_values_and_gradient() {
        let zero = Matrix::zeros(2, 3);
        assert_eq!(l3_penalty(&[&zero], 1.0), 0.0);
        let two = Matrix::filled(1, 1, 2.0);
        assert_eq!(l3_penalty(&[&two], 1.0), 8.0);
        let neg = Matrix::filled(1, 1, -2.0);
        let mut g = Gradients::for_tensors(&[&neg]);
        l3_grad(&[&neg], 1.0, &mut g);
        assert_eq!(g.tensors[0].get(0, 0), -12.0);
    }

    proptest! {
        #[test]
        fn weights_normalized(scores in proptest::collection::vec(-50.0f64..50.0, 1..40), alpha in 0.0f64..5.0) {
            let w = adversarial_weights(&scores, alpha);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn loss_nonnegative(
            pos in -30.0f64..30.0,
            negs in proptest::collection::vec(-30.0f64..30.0, 1..20),
            margin in 0.0f64..20.0,
        ) {
            let w = adversarial_weights(&negs, 1.0);
            prop_assert!(margin_loss(pos, &negs, &w, margin) >= 0.0);
        }
    }
}
