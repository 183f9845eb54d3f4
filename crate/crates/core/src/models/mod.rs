//! Scoring models behind one interface: RelatE (phase-modulus), plus TransE
//! and RotatE as baselines.
//!
//! Every model stores its learnable state as an ordered list of matrices.
//! Gradients, Adam moments, L3 regularization and checkpoints all work on
//! that list, so they are shared across models.

mod checkpoint;
mod export;
mod grad;
mod relate;
mod rotate;
mod transe;

pub use checkpoint::{AnyModel, Checkpoint, ModelKind, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use export::{export_embeddings, import_embeddings, ImportedEmbeddings};
pub use grad::{Gradients, TensorGrad};
pub use relate::{modulus_score, phase_score, RelateHyper, RelateParams};
pub use rotate::RotateParams;
pub use transe::TransEParams;

use thiserror::Error;

use crate::kg::{Triple, TypeSignatures};
use crate::math::{dot, Matrix};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {message}")]
    Format {
        path: std::path::PathBuf,
        message: String,
    },
}

/// Type-bias context: fixed entity signatures, the warm-start factor and the
/// type weight. When supplied, RelatE adds
/// `warm · λ_type · (sig(h)·head_proto[r] + sig(t)·tail_proto[r])` to its score.
#[derive(Debug, Clone, Copy)]
pub struct TypeContext<'a> {
    pub signatures: &'a TypeSignatures,
    pub warm: f64,
    pub lambda: f64,
}

impl TypeContext<'_> {
    /// `min(1, step / warmup_steps)`; 1 when there is no warm-up.
    pub fn warm_factor(step: usize, warmup_steps: usize) -> f64 {
        if warmup_steps == 0 {
            1.0
        } else {
            (step as f64 / warmup_steps as f64).min(1.0)
        }
    }

    pub(crate) fn scale(&self) -> f64 {
        self.warm * self.lambda
    }
}

/// The type-bias term for one triple, given the relation's head and tail
/// prototype rows.
pub fn type_bias_term(
    triple: Triple,
    ctx: &TypeContext<'_>,
    head_proto: &Matrix,
    tail_proto: &Matrix,
) -> f64 {
    let scale = ctx.scale();
    if scale == 0.0 {
        return 0.0;
    }
    let sh = ctx.signatures.of(triple.head);
    let st = ctx.signatures.of(triple.tail);
    scale * (dot(sh, head_proto.row(triple.relation)) + dot(st, tail_proto.row(triple.relation)))
}

/// Triple plausibility; higher is more plausible.
pub trait ScoreModel: Sync {
    fn num_entities(&self) -> usize;
    fn num_relations(&self) -> usize;
    fn score(&self, triple: Triple) -> f64;

    /// Scores `(head, relation, e)` for every entity `e` into `out`.
    fn score_tails(&self, head: usize, relation: usize, out: &mut [f64]) {
        for (e, o) in out.iter_mut().enumerate() {
            *o = self.score(Triple::new(head, relation, e));
        }
    }

    /// Scores `(e, relation, tail)` for every entity `e` into `out`.
    fn score_heads(&self, relation: usize, tail: usize, out: &mut [f64]) {
        for (e, o) in out.iter_mut().enumerate() {
            *o = self.score(Triple::new(e, relation, tail));
        }
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn num_entities(&self) -> usize {
        (**self).num_entities()
    }
    fn num_relations(&self) -> usize {
        (**self).num_relations()
    }
    fn score(&self, triple: Triple) -> f64 {
        (**self).score(triple)
    }
    fn score_tails(&self, head: usize, relation: usize, out: &mut [f64]) {
        (**self).score_tails(head, relation, out)
    }
    fn score_heads(&self, relation: usize, tail: usize, out: &mut [f64]) {
        (**self).score_heads(relation, tail, out)
    }
}

/// A model trainable by the generic margin-ranking loop.
pub trait KgeModel: ScoreModel + Clone + Send {
    /// Learnable tensors in a fixed order.
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;
    /// Names matching [`KgeModel::tensors`], used in diagnostics and checkpoints.
    fn tensor_names(&self) -> &'static [&'static str];

    fn gamma(&self) -> f64;

    /// Score including the type-bias term when `ctx` is given. Models without
    /// type prototypes ignore the context.
    fn score_with(&self, triple: Triple, ctx: Option<&TypeContext<'_>>) -> f64 {
        match ctx {
            Some(c) => self.score(triple) + self.type_bias(triple, c),
            None => self.score(triple),
        }
    }

    /// Type-bias contribution under `ctx`; zero for models without prototypes.
    fn type_bias(&self, triple: Triple, ctx: &TypeContext<'_>) -> f64 {
        let _ = (triple, ctx);
        0.0
    }

    /// Adds `coeff · ∂score(triple)/∂θ` into `grad`.
    fn accumulate_grad(
        &self,
        triple: Triple,
        coeff: f64,
        ctx: Option<&TypeContext<'_>>,
        grad: &mut Gradients,
    );

    fn new_gradients(&self) -> Gradients {
        Gradients::for_tensors(&self.tensors())
    }
}

/// Scores through a model with a fixed type context.
pub struct WithContext<'a, M> {
    pub model: &'a M,
    pub ctx: Option<TypeContext<'a>>,
}

impl<M: KgeModel> ScoreModel for WithContext<'_, M> {
    fn num_entities(&self) -> usize {
        self.model.num_entities()
    }
    fn num_relations(&self) -> usize {
        self.model.num_relations()
    }
    fn score(&self, triple: Triple) -> f64 {
        self.model.score_with(triple, self.ctx.as_ref())
    }
    // Batched paths reuse the model's batched base scores, then add the
    // bias in the same order as `score_with`, so results stay bitwise equal.
    fn score_tails(&self, head: usize, relation: usize, out: &mut [f64]) {
        self.model.score_tails(head, relation, out);
        if let Some(c) = &self.ctx {
            for (e, o) in out.iter_mut().enumerate() {
                *o += self.model.type_bias(Triple::new(head, relation, e), c);
            }
        }
    }
    fn score_heads(&self, relation: usize, tail: usize, out: &mut [f64]) {
        self.model.score_heads(relation, tail, out);
        if let Some(c) = &self.ctx {
            for (e, o) in out.iter_mut().enumerate() {
                *o += self.model.type_bias(Triple::new(e, relation, tail), c);
            }
        }
    }
}

/// Uniform draw in `[lo, hi)` for every entry.
pub(crate) fn uniform_matrix(
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
    rng: &mut crate::seed::Rng,
) -> Matrix {
    use rand::Rng as _;
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}
