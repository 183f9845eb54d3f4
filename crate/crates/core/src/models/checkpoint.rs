use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KgeModel, ModelError, RelateParams, RotateParams, ScoreModel, TransEParams};
use crate::kg::Triple;

pub const CHECKPOINT_FORMAT: &str = "relate-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Relate,
    TransE,
    Rotate,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Relate => "relate",
            ModelKind::TransE => "transe",
            ModelKind::Rotate => "rotate",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relate" => Ok(ModelKind::Relate),
            "transe" => Ok(ModelKind::TransE),
            "rotate" => Ok(ModelKind::Rotate),
            other => Err(format!("unknown model '{other}' (expected relate, transe or rotate)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of any supported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum AnyModel {
    Relate(RelateParams),
    TransE(TransEParams),
    Rotate(RotateParams),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Relate(_) => ModelKind::Relate,
            AnyModel::TransE(_) => ModelKind::TransE,
            AnyModel::Rotate(_) => ModelKind::Rotate,
        }
    }

    pub fn as_relate(&self) -> Option<&RelateParams> {
        match self {
            AnyModel::Relate(p) => Some(p),
            _ => None,
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            AnyModel::Relate($p) => $body,
            AnyModel::TransE($p) => $body,
            AnyModel::Rotate($p) => $body,
        }
    };
}

impl ScoreModel for AnyModel {
    fn num_entities(&self) -> usize {
        dispatch!(self, p => p.num_entities())
    }
    fn num_relations(&self) -> usize {
        dispatch!(self, p => p.num_relations())
    }
    fn score(&self, t: Triple) -> f64 {
        dispatch!(self, p => p.score(t))
    }
    fn score_tails(&self, head: usize, relation: usize, out: &mut [f64]) {
        dispatch!(self, p => p.score_tails(head, relation, out))
    }
    fn score_heads(&self, relation: usize, tail: usize, out: &mut [f64]) {
        dispatch!(self, p => p.score_heads(relation, tail, out))
    }
}

impl AnyModel {
    pub fn gamma(&self) -> f64 {
        dispatch!(self, p => p.gamma())
    }
}

/// Versioned model container: dimensions, vocabulary names, the settings the
/// model was trained with, and every tensor. Stored as JSON; floats
/// round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
    /// Relation count before reciprocal augmentation.
    pub base_relations: usize,
    pub reciprocal: bool,
    /// Training settings (free-form, informational).
    pub settings: serde_json::Value,
    pub model: AnyModel,
}

impl Checkpoint {
    pub fn new(
        model: AnyModel,
        dim: usize,
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        base_relations: usize,
        reciprocal: bool,
        settings: serde_json::Value,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            dim,
            entity_names,
            relation_names,
            base_relations,
            reciprocal,
            settings,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        crate::io::write_atomic_str(path, &self.to_json()).map_err(|e| ModelError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let format_err = |message: String| ModelError::Format {
            path: path.to_path_buf(),
            message,
        };
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(format_err(format!("unexpected format tag '{}'", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(format_err(format!("unsupported version {}", ckpt.version)));
        }
        if ckpt.model.num_entities() != ckpt.entity_names.len()
            || ckpt.model.num_relations() != ckpt.relation_names.len()
        {
            return Err(format_err("tensor shapes disagree with vocabulary".into()));
        }
        Ok(ckpt)
    }
}
