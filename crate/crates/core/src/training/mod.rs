//! Margin-ranking training with self-adversarial negatives, L3
//! regularization, warm-started type bias, sparse Adam and early stopping on
//! filtered validation MRR.

mod adam;
mod config;
mod loss;
mod sampling;

pub use adam::AdamState;
pub use config::{ConfigError, CorruptionSide, TrainConfig, CONFIG_KEYS};
pub use loss::{adversarial_weights, l3_grad, l3_penalty, margin_loss};
pub use sampling::sample_negatives;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{evaluate, EvalError, EvalOptions, EvaluationReport};
use crate::kg::{augment_reciprocal, infer_type_signatures, KnowledgeGraph, Triple, TypeSignatures};
use crate::models::{
    AnyModel, Gradients, KgeModel, ModelError, ModelKind, RelateHyper, RelateParams, RotateParams,
    TransEParams, TypeContext, WithContext,
};
use crate::seed::rng_for;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("negative sampling failed: {0}")]
    Sampling(String),
    #[error("non-finite loss at step {step} (batch {batch}): loss={loss}, grad norm={grad_norm}; parameter norms: {param_norms}")]
    NonFinite {
        step: usize,
        batch: usize,
        loss: f64,
        grad_norm: f64,
        param_norms: String,
    },
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("evaluation failed: {0}")]
    Eval(String),
}

/// One validation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    /// Number of optimizer steps taken.
    pub step: usize,
    /// Mean training loss since the previous point.
    pub loss: f64,
    pub valid_mrr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub points: Vec<HistoryPoint>,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&HistoryPoint> {
        self.points
            .iter()
            .fold(None, |best: Option<&HistoryPoint>, p| match best {
                Some(b) if b.valid_mrr >= p.valid_mrr => Some(b),
                _ => Some(p),
            })
    }

    /// CSV with columns `step,loss,valid_mrr,seconds`. Timing is written as
    /// zero when `timing` is false.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = String::from("step,loss,valid_mrr,seconds\n");
        for p in &self.points {
            let secs = if timing { p.seconds } else { 0.0 };
            s.push_str(&format!("{},{},{},{}\n", p.step, p.loss, p.valid_mrr, secs));
        }
        s
    }
}

/// The per-batch training objective: mean weighted hinge loss over the
/// positives plus the L3 penalty. Adversarial weights are inputs, so they
/// act as constants under differentiation.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub loss_margin: f64,
    pub adv_temperature: f64,
    pub l3_weight: f64,
    pub ctx: Option<TypeContext<'a>>,
}

impl Objective<'_> {
    /// Self-adversarial weights for every negative, flat in batch order.
    pub fn weights<M: KgeModel>(&self, model: &M, negatives: &[Triple], n_neg: usize) -> Vec<f64> {
        let scores: Vec<f64> = negatives
            .iter()
            .map(|t| model.score_with(*t, self.ctx.as_ref()))
            .collect();
        scores
            .chunks(n_neg)
            .flat_map(|c| adversarial_weights(c, self.adv_temperature))
            .collect()
    }

    /// Hinge part for a slice of positives, scaled by `scale`; gradient added
    /// into `grad` when given. Weights are recomputed from the current scores
    /// when `weights` is `None`.
    fn hinge<M: KgeModel>(
        &self,
        model: &M,
        positives: &[Triple],
        negatives: &[Triple],
        weights: Option<&[f64]>,
        scale: f64,
        mut grad: Option<&mut Gradients>,
    ) -> f64 {
        let n_neg = negatives.len() / positives.len().max(1);
        let ctx = self.ctx.as_ref();
        let mut total = 0.0;
        let mut f_negs = vec![0.0; n_neg];
        for (i, &pos) in positives.iter().enumerate() {
            let f_pos = model.score_with(pos, ctx);
            let negs = &negatives[i * n_neg..(i + 1) * n_neg];
            for (f, &neg) in f_negs.iter_mut().zip(negs) {
                *f = model.score_with(neg, ctx);
            }
            let owned;
            let w = match weights {
                Some(w) => &w[i * n_neg..(i + 1) * n_neg],
                None => {
                    owned = adversarial_weights(&f_negs, self.adv_temperature);
                    &owned[..]
                }
            };
            let mut pos_coeff = 0.0;
            for (j, &neg) in negs.iter().enumerate() {
                let slack = f_negs[j] - f_pos + self.loss_margin;
                if slack > 0.0 {
                    total += w[j] * slack;
                    if let Some(g) = grad.as_deref_mut() {
                        model.accumulate_grad(neg, scale * w[j], ctx, g);
                    }
                    pos_coeff -= scale * w[j];
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                model.accumulate_grad(pos, pos_coeff, ctx, g);
            }
        }
        total * scale
    }

    /// Objective value with the adversarial weights held fixed.
    pub fn value<M: KgeModel>(&self, model: &M, positives: &[Triple], negatives: &[Triple], weights: &[f64]) -> f64 {
        let scale = 1.0 / positives.len().max(1) as f64;
        self.hinge(model, positives, negatives, Some(weights), scale, None)
            + l3_penalty(&model.tensors(), self.l3_weight)
    }

    pub fn value_and_grad<M: KgeModel>(
        &self,
        model: &M,
        positives: &[Triple],
        negatives: &[Triple],
        weights: Option<&[f64]>,
    ) -> (f64, Gradients) {
        let mut grad = model.new_gradients();
        let scale = 1.0 / positives.len().max(1) as f64;
        let hinge = self.hinge(model, positives, negatives, weights, scale, Some(&mut grad));
        let tensors = model.tensors();
        l3_grad(&tensors, self.l3_weight, &mut grad);
        (hinge + l3_penalty(&tensors, self.l3_weight), grad)
    }

    /// Same as [`Objective::value_and_grad`], with the batch split across
    /// `pool` workers and the partial accumulators merged in chunk order.
    fn value_and_grad_parallel<M: KgeModel>(
        &self,
        model: &M,
        positives: &[Triple],
        negatives: &[Triple],
        weights: Option<&[f64]>,
        pool: &rayon::ThreadPool,
        workers: usize,
    ) -> (f64, Gradients) {
        use rayon::prelude::*;
        let n_neg = negatives.len() / positives.len().max(1);
        let scale = 1.0 / positives.len().max(1) as f64;
        let chunk = positives.len().div_ceil(workers).max(1);
        let parts: Vec<(f64, Gradients)> = pool.install(|| {
            positives
                .par_chunks(chunk)
                .enumerate()
                .map(|(c, pos)| {
                    let lo = c * chunk * n_neg;
                    let hi = lo + pos.len() * n_neg;
                    let mut g = model.new_gradients();
                    let w = weights.map(|w| &w[lo..hi]);
                    let v = self.hinge(model, pos, &negatives[lo..hi], w, scale, Some(&mut g));
                    (v, g)
                })
                .collect()
        });
        let mut grad = model.new_gradients();
        let mut value = 0.0;
        for (v, g) in &parts {
            value += v;
            grad.merge(g);
        }
        let tensors = model.tensors();
        l3_grad(&tensors, self.l3_weight, &mut grad);
        (value + l3_penalty(&tensors, self.l3_weight), grad)
    }
}

/// Applies reciprocal augmentation when the config asks for it.
pub fn prepare_graph(kg: &KnowledgeGraph, config: &TrainConfig) -> KnowledgeGraph {
    if config.reciprocal && !kg.reciprocal {
        augment_reciprocal(kg)
    } else {
        kg.clone()
    }
}

/// Type signatures from train ∪ valid, or `None` when the type term is off.
pub fn signatures_for(kg: &KnowledgeGraph, config: &TrainConfig) -> Option<TypeSignatures> {
    (config.type_lambda > 0.0)
        .then(|| infer_type_signatures(&kg.train, &kg.valid, kg.num_entities(), kg.num_relations()))
}

fn param_norms<M: KgeModel>(model: &M) -> String {
    model
        .tensor_names()
        .iter()
        .zip(model.tensors())
        .map(|(n, t)| format!("{n}={:.4e}", t.norm()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Outcome of a training run: the best-validation parameters and history.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub history: TrainHistory,
}

/// Trains `model` in place of a fresh start and returns the checkpoint with
/// the best filtered validation MRR. `kg` must already be augmented when
/// reciprocal training is on.
pub fn train<M: KgeModel>(
    config: &TrainConfig,
    kg: &KnowledgeGraph,
    signatures: Option<&TypeSignatures>,
    init: M,
) -> Result<Trained<M>, TrainError> {
    config.validate()?;
    let mut model = init;
    let mut history = TrainHistory::default();
    if config.max_steps == 0 || kg.train.is_empty() {
        return Ok(Trained { model, history });
    }

    let start = Instant::now();
    let warmup = config.effective_warmup();
    let n_neg = config.neg_samples;
    let mut order_rng = rng_for(config.seed, "train/order");
    let mut neg_rng = rng_for(config.seed, "train/negatives");
    let mut order: Vec<usize> = (0..kg.train.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;

    let valid_queries: Vec<Triple> = if kg.valid.len() > config.valid_subsample {
        let mut rng = rng_for(config.seed, "train/valid-subsample");
        let mut v = kg.valid.clone();
        v.shuffle(&mut rng);
        v.truncate(config.valid_subsample);
        v
    } else {
        kg.valid.clone()
    };

    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| TrainError::Internal(e.to_string()))?,
        )
    } else {
        None
    };
    let known = config.filter_negatives.then_some(&kg.filter);

    let mut adam = AdamState::new(&model.tensors());
    let mut best: Option<(f64, M)> = None;
    let mut bad_rounds = 0;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut batch_id = 0usize;

    let eval_opts = EvalOptions {
        workers: config.workers,
    };
    let validate = |model: &M| -> Result<f64, TrainError> {
        let ctx = signatures.map(|s| TypeContext {
            signatures: s,
            warm: 1.0,
            lambda: config.type_lambda,
        });
        let scorer = WithContext { model, ctx };
        let report = evaluate(&scorer, kg, &valid_queries, &eval_opts)
            .map_err(|e| TrainError::Eval(e.to_string()))?;
        Ok(report.combined.mrr)
    };

    for step in 0..config.max_steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(kg.train[order[cursor]]);
            cursor += 1;
        }
        let negatives = sample_negatives(&batch, n_neg, kg.num_entities(), config.corruption, known, &mut neg_rng)?;

        let ctx = signatures.map(|s| TypeContext {
            signatures: s,
            warm: TypeContext::warm_factor(step, warmup),
            lambda: config.type_lambda,
        });
        let objective = Objective {
            loss_margin: config.effective_loss_margin(),
            adv_temperature: config.adv_temperature,
            l3_weight: config.l3_weight,
            ctx,
        };
        let (loss, mut grad) = match &pool {
            Some(p) => objective.value_and_grad_parallel(&model, &batch, &negatives, None, p, config.workers),
            None => objective.value_and_grad(&model, &batch, &negatives, None),
        };
        let norm = grad.global_norm();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(TrainError::NonFinite {
                step,
                batch: batch_id,
                loss,
                grad_norm: norm,
                param_norms: param_norms(&model),
            });
        }
        if norm > config.clip_norm {
            grad.scale(config.clip_norm / norm);
        }
        adam.step(&mut model.tensors_mut(), &grad, config.lr)?;
        batch_id += 1;
        loss_sum += loss;
        loss_count += 1;

        let done = step + 1 == config.max_steps;
        if (step + 1) % config.valid_interval == 0 || done {
            if valid_queries.is_empty() {
                best = Some((f64::NAN, model.clone()));
                history.points.push(HistoryPoint {
                    step: step + 1,
                    loss: loss_sum / loss_count as f64,
                    valid_mrr: f64::NAN,
                    seconds: start.elapsed().as_secs_f64(),
                });
                loss_sum = 0.0;
                loss_count = 0;
                continue;
            }
            let mrr = validate(&model)?;
            history.points.push(HistoryPoint {
                step: step + 1,
                loss: loss_sum / loss_count as f64,
                valid_mrr: mrr,
                seconds: start.elapsed().as_secs_f64(),
            });
            log::info!("step {:>7}  loss {:.5}  valid MRR {:.4}", step + 1, loss_sum / loss_count as f64, mrr);
            loss_sum = 0.0;
            loss_count = 0;
            match &best {
                Some((b, _)) if mrr <= *b => {
                    bad_rounds += 1;
                    if bad_rounds >= config.patience {
                        log::info!("early stop after {} non-improving validations", bad_rounds);
                        break;
                    }
                }
                _ => {
                    best = Some((mrr, model.clone()));
                    bad_rounds = 0;
                }
            }
        }
    }
    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok(Trained { model, history })
}

/// Fresh parameters of the requested kind sized for `kg`.
pub fn init_model(kind: ModelKind, config: &TrainConfig, kg: &KnowledgeGraph) -> Result<AnyModel, TrainError> {
    let seed = crate::seed::derive_seed(config.seed, "model-init");
    let (ne, nr) = (kg.num_entities(), kg.num_relations());
    Ok(match kind {
        ModelKind::Relate => {
            let hyper = RelateHyper {
                gamma: config.margin,
                init_relation_width: config.init_relation_width,
                modulus_weight: config.modulus_weight,
            };
            AnyModel::Relate(RelateParams::init(ne, nr, config.dim, &hyper, seed)?)
        }
        ModelKind::TransE => AnyModel::TransE(TransEParams::init(ne, nr, config.dim, config.margin, seed)?),
        ModelKind::Rotate => AnyModel::Rotate(RotateParams::init(ne, nr, config.dim, config.margin, seed)?),
    })
}

/// Result of [`train_model`]: the model plus the graph and signatures it was
/// trained against.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: AnyModel,
    pub history: TrainHistory,
    pub graph: KnowledgeGraph,
    pub signatures: Option<TypeSignatures>,
}

/// End-to-end: optional reciprocal augmentation, signatures (RelatE only),
/// initialization and training.
pub fn train_model(kind: ModelKind, config: &TrainConfig, kg: &KnowledgeGraph) -> Result<TrainRun, TrainError> {
    config.validate()?;
    let graph = prepare_graph(kg, config);
    let signatures = match kind {
        ModelKind::Relate => signatures_for(&graph, config),
        _ => None,
    };
    let (model, history) = match init_model(kind, config, &graph)? {
        AnyModel::Relate(p) => {
            let t = train(config, &graph, signatures.as_ref(), p)?;
            (AnyModel::Relate(t.model), t.history)
        }
        AnyModel::TransE(p) => {
            let t = train(config, &graph, None, p)?;
            (AnyModel::TransE(t.model), t.history)
        }
        AnyModel::Rotate(p) => {
            let t = train(config, &graph, None, p)?;
            (AnyModel::Rotate(t.model), t.history)
        }
    };
    Ok(TrainRun {
        model,
        history,
        graph,
        signatures,
    })
}

impl TrainRun {
    /// Type context for scoring the trained model (full warm-up).
    pub fn context(&self, type_lambda: f64) -> Option<TypeContext<'_>> {
        self.signatures.as_ref().map(|s| TypeContext {
            signatures: s,
            warm: 1.0,
            lambda: type_lambda,
        })
    }

    /// Filtered evaluation of the trained model on `split`, scoring with the
    /// type bias when the run used it.
    pub fn evaluate(
        &self,
        split: &[Triple],
        type_lambda: f64,
        opts: &EvalOptions,
    ) -> Result<EvaluationReport, EvalError> {
        match &self.model {
            AnyModel::Relate(p) => {
                let scorer = WithContext {
                    model: p,
                    ctx: self.context(type_lambda),
                };
                evaluate(&scorer, &self.graph, split, opts)
            }
            other => evaluate(other, &self.graph, split, opts),
        }
    }
}
