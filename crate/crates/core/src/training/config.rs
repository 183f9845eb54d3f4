use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Value {
        key: String,
        line: Option<usize>,
        message: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Which slot a negative sample corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionSide {
    /// Head or tail with equal probability, drawn per negative.
    Both,
    Head,
    Tail,
}

/// Training hyperparameters. File keys match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    /// γ inside the score.
    pub margin: f64,
    /// Hinge margin; `None` reuses `margin`.
    pub loss_margin: Option<f64>,
    pub adv_temperature: f64,
    pub neg_samples: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub valid_interval: usize,
    pub patience: usize,
    pub l3_weight: f64,
    pub type_lambda: f64,
    /// `None` means 10% of `max_steps`.
    pub warmup_steps: Option<usize>,
    pub init_relation_width: f64,
    pub modulus_weight: f64,
    pub seed: u64,
    pub reciprocal: bool,
    pub filter_negatives: bool,
    pub clip_norm: f64,
    pub workers: usize,
    /// Not a file key; set programmatically or from the command line.
    pub corruption: CorruptionSide,
    /// Validation queries sampled for early stopping (not a file key).
    pub valid_subsample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            lr: 0.02,
            margin: 12.0,
            loss_margin: None,
            adv_temperature: 1.0,
            neg_samples: 64,
            batch_size: 128,
            max_steps: 2000,
            valid_interval: 200,
            patience: 5,
            l3_weight: 1e-5,
            type_lambda: 0.05,
            warmup_steps: None,
            init_relation_width: 0.03,
            modulus_weight: 1.0,
            seed: 0,
            reciprocal: false,
            filter_negatives: false,
            clip_norm: 10.0,
            workers: 1,
            corruption: CorruptionSide::Both,
            valid_subsample: 1000,
        }
    }
}

/// Accepted file keys, in documentation order.
pub const CONFIG_KEYS: [&str; 20] = [
    "dim",
    "lr",
    "margin",
    "loss_margin",
    "adv_temperature",
    "neg_samples",
    "batch_size",
    "max_steps",
    "valid_interval",
    "patience",
    "l3_weight",
    "type_lambda",
    "warmup_steps",
    "init_relation_width",
    "modulus_weight",
    "seed",
    "reciprocal",
    "filter_negatives",
    "clip_norm",
    "workers",
];

impl TrainConfig {
    pub fn effective_loss_margin(&self) -> f64 {
        self.loss_margin.unwrap_or(self.margin)
    }

    pub fn effective_warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(self.max_steps / 10)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Parses flat `key=value` text. Blank lines and `#` comments are
    /// ignored; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut lines: HashMap<&'static str, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected key=value, found '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let known = CONFIG_KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.to_owned(),
                })?;
            lines.insert(known, line);
            cfg.set(known, value).map_err(|message| ConfigError::Value {
                key: key.to_owned(),
                line: Some(line),
                message,
            })?;
        }
        cfg.validate().map_err(|e| match e {
            ConfigError::Value { key, message, .. } => {
                let line = lines.get(key.as_str()).copied();
                ConfigError::Value { key, line, message }
            }
            other => other,
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}'"))
        }
        fn flag(v: &str) -> Result<bool, String> {
            match v.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(format!("expected true/false, found '{v}'")),
            }
        }
        match key {
            "dim" => self.dim = num(value)?,
            "lr" => self.lr = num(value)?,
            "margin" => self.margin = num(value)?,
            "loss_margin" => self.loss_margin = Some(num(value)?),
            "adv_temperature" => self.adv_temperature = num(value)?,
            "neg_samples" => self.neg_samples = num(value)?,
            "batch_size" => self.batch_size = num(value)?,
            "max_steps" => self.max_steps = num(value)?,
            "valid_interval" => self.valid_interval = num(value)?,
            "patience" => self.patience = num(value)?,
            "l3_weight" => self.l3_weight = num(value)?,
            "type_lambda" => self.type_lambda = num(value)?,
            "warmup_steps" => self.warmup_steps = Some(num(value)?),
            "init_relation_width" => self.init_relation_width = num(value)?,
            "modulus_weight" => self.modulus_weight = num(value)?,
            "seed" => self.seed = num(value)?,
            "reciprocal" => self.reciprocal = flag(value)?,
            "filter_negatives" => self.filter_negatives = flag(value)?,
            "clip_norm" => self.clip_norm = num(value)?,
            "workers" => self.workers = num(value)?,
            _ => unreachable!("key checked against CONFIG_KEYS"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| {
            Err(ConfigError::Value {
                key: key.to_owned(),
                line: None,
                message: message.to_owned(),
            })
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if self.dim == 0 || self.dim % 2 != 0 {
            return bad("dim", "dim must be even and positive");
        }
        if !positive(self.lr) {
            return bad("lr", "lr must be positive");
        }
        if !positive(self.margin) {
            return bad("margin", "margin must be positive");
        }
        if let Some(m) = self.loss_margin {
            if !(m.is_finite() && m >= 0.0) {
                return bad("loss_margin", "loss_margin must be non-negative");
            }
        }
        if !(self.adv_temperature.is_finite() && self.adv_temperature >= 0.0) {
            return bad("adv_temperature", "adv_temperature must be >= 0");
        }
        if self.neg_samples == 0 {
            return bad("neg_samples", "neg_samples must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "batch_size must be at least 1");
        }
        if self.valid_interval == 0 {
            return bad("valid_interval", "valid_interval must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience", "patience must be at least 1");
        }
        if !(self.l3_weight.is_finite() && self.l3_weight >= 0.0) {
            return bad("l3_weight", "l3_weight must be >= 0");
        }
        if !(self.type_lambda.is_finite() && self.type_lambda >= 0.0) {
            return bad("type_lambda", "type_lambda must be >= 0");
        }
        if !positive(self.init_relation_width) {
            return bad("init_relation_width", "init_relation_width must be positive");
        }
        if !positive(self.modulus_weight) {
            return bad("modulus_weight", "modulus_weight must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm", "clip_norm must be positive (inf disables clipping)");
        }
        if self.workers == 0 {
            return bad("workers", "workers must be at least 1");
        }
        Ok(())
    }

    /// Renders the config in file syntax (all keys).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        kv("dim", self.dim.to_string());
        kv("lr", self.lr.to_string());
        kv("margin", self.margin.to_string());
        if let Some(m) = self.loss_margin {
            kv("loss_margin", m.to_string());
        }
        kv("adv_temperature", self.adv_temperature.to_string());
        kv("neg_samples", self.neg_samples.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("max_steps", self.max_steps.to_string());
        kv("valid_interval", self.valid_interval.to_string());
        kv("patience", self.patience.to_string());
        kv("l3_weight", self.l3_weight.to_string());
        kv("type_lambda", self.type_lambda.to_string());
        if let Some(w) = self.warmup_steps {
            kv("warmup_steps", w.to_string());
        }
        kv("init_relation_width", self.init_relation_width.to_string());
        kv("modulus_weight", self.modulus_weight.to_string());
        kv("seed", self.seed.to_string());
        kv("reciprocal", self.reciprocal.to_string());
        kv("filter_negatives", self.filter_negatives.to_string());
        kv("clip_norm", self.clip_norm.to_string());
        kv("workers", self.workers.to_string());
        s
    }
}
