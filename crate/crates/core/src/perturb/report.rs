use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{apply_perturbation, PerturbError, PerturbationSpec};
use crate::eval::EvalOptions;
use crate::kg::{infer_type_signatures, KnowledgeGraph};
use crate::models::ModelKind;
use crate::seed::derive_seed;
use crate::training::{train_model, TrainConfig};

pub const BASE_CONDITION: &str = "base";

/// One (model, condition) cell, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub model: String,
    /// `base` or a perturbation name.
    pub condition: String,
    pub base_mrr: f64,
    pub base_hits10: f64,
    pub mrr: f64,
    pub hits10: f64,
    /// `base − perturbed`; positive means degradation.
    pub delta_mrr: f64,
    pub delta_hits10: f64,
    /// `(base − perturbed) / base · 100`; absent when base is 0.
    pub delta_mrr_pct: Option<f64>,
    pub delta_hits10_pct: Option<f64>,
}

impl RobustnessRow {
    fn new(model: &str, condition: &str, base: (f64, f64), pert: (f64, f64)) -> Self {
        let pct = |b: f64, p: f64| (b > 0.0).then(|| (b - p) / b * 100.0);
        Self {
            model: model.to_owned(),
            condition: condition.to_owned(),
            base_mrr: base.0,
            base_hits10: base.1,
            mrr: pert.0,
            hits10: pert.1,
            delta_mrr: base.0 - pert.0,
            delta_hits10: base.1 - pert.1,
            delta_mrr_pct: pct(base.0, pert.0),
            delta_hits10_pct: pct(base.1, pert.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<RobustnessRow>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl RobustnessReport {
    pub fn row(&self, model: &str, condition: &str) -> Option<&RobustnessRow> {
        self.rows.iter().find(|r| r.model == model && r.condition == condition)
    }

    /// One line per (model, condition).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "model,condition,base_mrr,base_hits10,mrr,hits10,delta_mrr,delta_hits10,delta_mrr_pct,delta_hits10_pct\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.model,
                r.condition,
                r.base_mrr,
                r.base_hits10,
                r.mrr,
                r.hits10,
                r.delta_mrr,
                r.delta_hits10,
                opt(r.delta_mrr_pct),
                opt(r.delta_hits10_pct)
            );
        }
        s
    }

    /// Degradation matrix: rows are perturbations, two columns per model
    /// (percent ΔMRR and percent ΔHit@10).
    pub fn to_matrix_csv(&self) -> String {
        let mut models: Vec<&str> = Vec::new();
        let mut conditions: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
            if r.condition != BASE_CONDITION && !conditions.contains(&r.condition.as_str()) {
                conditions.push(&r.condition);
            }
        }
        let mut s = String::from("perturbation");
        for m in &models {
            let _ = write!(s, ",{m}_delta_mrr_pct,{m}_delta_hits10_pct");
        }
        s.push('\n');
        for c in &conditions {
            s.push_str(c);
            for m in &models {
                match self.row(m, c) {
                    Some(r) => {
                        let _ = write!(s, ",{},{}", opt(r.delta_mrr_pct), opt(r.delta_hits10_pct));
                    }
                    None => s.push_str(",,"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Trains every model on the clean graph and on each perturbed graph, for
/// every seed, and reports seed-averaged test metrics. The clean run is
/// shared across specs; perturbations are generated once per (spec, seed)
/// and shared across models.
pub fn robustness_experiment(
    models: &[ModelKind],
    kg: &KnowledgeGraph,
    specs: &[PerturbationSpec],
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<RobustnessReport, PerturbError> {
    if seeds.is_empty() {
        return Err(PerturbError::Spec("at least one seed is required".into()));
    }
    let sig = infer_type_signatures(&kg.train, &kg.valid, kg.num_entities(), kg.num_relations());
    // perturbed[spec][seed]
    let mut perturbed = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let s = PerturbationSpec {
                seed: derive_seed(spec.seed, &format!("run/{seed}")),
                ..spec.clone()
            };
            let (train, _) = apply_perturbation(&kg.train, kg, &s, Some(&sig))?;
            let graph = kg.with_train(train).map_err(|e| PerturbError::Run {
                model: "-".into(),
                condition: spec.kind.name().into(),
                source: Box::new(e),
            })?;
            per_seed.push(graph);
        }
        perturbed.push(per_seed);
    }

    let opts = EvalOptions {
        workers: config.workers,
    };
    let run = |kind: ModelKind, graph: &KnowledgeGraph, seed: u64, condition: &str| -> Result<(f64, f64), PerturbError> {
        let wrap = |e: Box<dyn std::error::Error + Send + Sync>| PerturbError::Run {
            model: kind.name().into(),
            condition: condition.into(),
            source: e,
        };
        let cfg = TrainConfig {
            seed,
            ..config.clone()
        };
        let trained = train_model(kind, &cfg, graph).map_err(|e| wrap(Box::new(e)))?;
        let rep = trained
            .evaluate(&graph.test, cfg.type_lambda, &opts)
            .map_err(|e| wrap(Box::new(e)))?;
        log::info!(
            "{} / {condition} / seed {seed}: test MRR {:.4}, Hit@10 {:.4}",
            kind.name(),
            rep.combined.mrr,
            rep.combined.hits_at(10)
        );
        Ok((rep.combined.mrr, rep.combined.hits_at(10)))
    };
    let mean = |xs: &[(f64, f64)]| {
        let n = xs.len() as f64;
        (xs.iter().map(|x| x.0).sum::<f64>() / n, xs.iter().map(|x| x.1).sum::<f64>() / n)
    };

    let mut rows = Vec::new();
    for &kind in models {
        let base: Vec<(f64, f64)> = seeds
            .iter()
            .map(|&s| run(kind, kg, s, BASE_CONDITION))
            .collect::<Result<_, _>>()?;
        let base = mean(&base);
        rows.push(RobustnessRow::new(kind.name(), BASE_CONDITION, base, base));
        for (spec, graphs) in specs.iter().zip(&perturbed) {
            let res: Vec<(f64, f64)> = seeds
                .iter()
                .zip(graphs)
                .map(|(&s, g)| run(kind, g, s, spec.kind.name()))
                .collect::<Result<_, _>>()?;
            rows.push(RobustnessRow::new(kind.name(), spec.kind.name(), base, mean(&res)));
        }
    }
    Ok(RobustnessReport {
        seeds: seeds.to_vec(),
        rows,
    })
}
