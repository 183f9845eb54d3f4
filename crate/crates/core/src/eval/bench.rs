use std::hint::black_box;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::kg::Triple;
use crate::models::ScoreModel;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::Bench("x and y lengths differ".into()));
    }
    if xs.len() < 2 {
        return Err(EvalError::Bench("need ≥ 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(EvalError::Bench("need ≥ 2 distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_res == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub dim: usize,
    /// Minimum over repetitions of the mean time per scored triple.
    pub seconds_per_triple: f64,
    /// Mean over repetitions, for reference.
    pub mean_seconds_per_triple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub n_triples: usize,
    pub repetitions: usize,
    pub points: Vec<EfficiencyPoint>,
    pub fit: LinearFit,
}

impl EfficiencyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:>6} {:>16} {:>16}\n", "dim", "min ns/triple", "mean ns/triple");
        for p in &self.points {
            s.push_str(&format!(
                "{:>6} {:>16.2} {:>16.2}\n",
                p.dim,
                p.seconds_per_triple * 1e9,
                p.mean_seconds_per_triple * 1e9
            ));
        }
        s.push_str(&format!(
            "fit: {:.4} ns/dim, intercept {:.2} ns, R² = {:.5}\n",
            self.fit.slope * 1e9,
            self.fit.intercept * 1e9,
            self.fit.r_squared
        ));
        s
    }
}

/// Times single-triple scoring at each dimension. `factory(d)` builds a
/// model of dimension `d`; `n_triples` random triples are scored per
/// repetition after one discarded warm-up pass.
pub fn bench_scaling<M, F>(
    factory: F,
    dims: &[usize],
    n_triples: usize,
    repetitions: usize,
    seed: u64,
) -> Result<EfficiencyReport, EvalError>
where
    M: ScoreModel,
    F: Fn(usize) -> M,
{
    if dims.len() < 2 {
        return Err(EvalError::Bench("need ≥ 2 points".into()));
    }
    if let Some(d) = dims.iter().find(|d| **d == 0 || **d % 2 != 0) {
        return Err(EvalError::Bench(format!("dimension {d} must be even and positive")));
    }
    if n_triples == 0 || repetitions == 0 {
        return Err(EvalError::Bench("n_triples and repetitions must be positive".into()));
    }
    let mut points = Vec::with_capacity(dims.len());
    for &d in dims {
        let model = factory(d);
        let mut rng = rng_for(seed, &format!("bench/triples/{d}"));
        let (ne, nr) = (model.num_entities(), model.num_relations());
        let triples: Vec<Triple> = (0..n_triples)
            .map(|_| Triple::new(rng.gen_range(0..ne), rng.gen_range(0..nr), rng.gen_range(0..ne)))
            .collect();
        let pass = || {
            let start = Instant::now();
            let mut acc = 0.0;
            for t in &triples {
                acc += model.score(black_box(*t));
            }
            black_box(acc);
            start.elapsed().as_secs_f64() / n_triples as f64
        };
        pass();
        let times: Vec<f64> = (0..repetitions).map(|_| pass()).collect();
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        points.push(EfficiencyPoint {
            dim: d,
            seconds_per_triple: min,
            mean_seconds_per_triple: mean,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.dim as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds_per_triple).collect();
    let fit = fit_linear(&xs, &ys)?;
    Ok(EfficiencyReport {
        n_triples,
        repetitions,
        points,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{RelateHyper, RelateParams};

    #[test]
    fn exact_line_fits_perfectly() {
        let f = fit_linear(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn single_point_rejected() {
        let err = fit_linear(&[1.0], &[2.0]).unwrap_err();
        assert!(err.to_string().contains("need ≥ 2 points"));
        let err = bench_scaling(
            |d| RelateParams::init(4, 2, d, &RelateHyper::default(), 0).unwrap(),
            &[64],
            10,
            1,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("need ≥ 2 points"));
    }

    #[test]
    fn bench_runs_and_reports_positive_times() {
        let rep = bench_scaling(
            |d| RelateParams::init(16, 2, d, &RelateHyper::default(), 0).unwrap(),
            &[8, 16],
            200,
            2,
            0,
        )
        .unwrap();
        assert_eq!(rep.points.len(), 2);
        assert!(rep.points.iter().all(|p| p.seconds_per_triple > 0.0));
    }
}
