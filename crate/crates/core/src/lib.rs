//! RelatE knowledge-graph completion: phase-modulus embeddings, training,
//! filtered-ranking evaluation, robustness experiments and mechanical checks
//! of the model's expressivity and inference-pattern constructions.

pub mod cli;
pub mod eval;
pub mod io;
pub mod kg;
pub mod math;
pub mod models;
pub mod seed;
pub mod training;
pub mod formal;
pub mod perturb;
