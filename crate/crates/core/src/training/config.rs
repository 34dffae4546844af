use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How the graph and knowledge vectors enter the choice score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Text vector only; graph and knowledge slots are zero.
    TextOnly,
    /// Plain concatenation `t : g : 𝒢`.
    BaseKnow,
    /// `t : ℰ·g : ℰ·𝒢` with ℰ the question's prediction entropy, re-measured
    /// once per master epoch.
    ActKnow,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::TextOnly, Mode::BaseKnow, Mode::ActKnow];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TextOnly => "text-only",
            Mode::BaseKnow => "base-know",
            Mode::ActKnow => "act-know",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (text-only, base-know, act-know)")))
    }
}

/// Which questions' entropies weight the training loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntropySource {
    /// Each training question uses its own entropy.
    Train,
    /// Every training question uses the mean entropy over the dev split.
    Dev,
}

impl EntropySource {
    pub fn as_str(self) -> &'static str {
        match self {
            EntropySource::Train => "train",
            EntropySource::Dev => "dev",
        }
    }
}

impl FromStr for EntropySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(EntropySource::Train),
            "dev" => Ok(EntropySource::Dev),
            _ => Err(Error::Config(format!("unknown entropy source {s:?} (train, dev)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub master_epochs: usize,
    pub sub_epochs: usize,
    /// Epochs of graph/knowledge training with the text encoder frozen,
    /// run before the main schedule. Skipped in text-only mode.
    pub pretrain_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub data_fraction: f64,
    pub temperature: f64,
    pub max_path_len: usize,
    pub max_nodes: usize,
    pub retrieval_k: usize,
    pub use_gcn: bool,
    pub use_er: bool,
    pub dim: usize,
    pub node_dim: usize,
    pub gcn_layers: usize,
    pub kg_dim: usize,
    pub kg_epochs: usize,
    pub entropy_source: EntropySource,
    /// Replaces every measured entropy with this value.
    pub entropy_override: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::ActKnow,
            master_epochs: 10,
            sub_epochs: 3,
            pretrain_epochs: 2,
            lr: 1e-3,
            weight_decay: 0.1,
            warmup_steps: 0,
            batch_size: 8,
            seed: 0,
            data_fraction: 1.0,
            temperature: 1.0,
            max_path_len: 2,
            max_nodes: 50,
            retrieval_k: 5,
            use_gcn: true,
            use_er: true,
            dim: 64,
            node_dim: 32,
            gcn_layers: 2,
            kg_dim: 16,
            kg_epochs: 100,
            entropy_source: EntropySource::Train,
            entropy_override: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value {value:?} for {key}"))),
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 23] = [
        "mode",
        "master_epochs",
        "sub_epochs",
        "pretrain_epochs",
        "lr",
        "weight_decay",
        "warmup_steps",
        "batch_size",
        "seed",
        "data_fraction",
        "temperature",
        "max_path_len",
        "max_nodes",
        "retrieval_k",
        "use_gcn",
        "use_er",
        "dim",
        "node_dim",
        "gcn_layers",
        "kg_dim",
        "kg_epochs",
        "entropy_source",
        "entropy_override",
    ];

    /// Sets one field from its textual form. `entropy_override = none`
    /// clears the override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.trim().parse()?,
            "master_epochs" => self.master_epochs = parse(key, value)?,
            "sub_epochs" => self.sub_epochs = parse(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "data_fraction" => self.data_fraction = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "max_path_len" => self.max_path_len = parse(key, value)?,
            "max_nodes" => self.max_nodes = parse(key, value)?,
            "retrieval_k" => self.retrieval_k = parse(key, value)?,
            "use_gcn" => self.use_gcn = parse_bool(key, value)?,
            "use_er" => self.use_er = parse_bool(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "node_dim" => self.node_dim = parse(key, value)?,
            "gcn_layers" => self.gcn_layers = parse(key, value)?,
            "kg_dim" => self.kg_dim = parse(key, value)?,
            "kg_epochs" => self.kg_epochs = parse(key, value)?,
            "entropy_source" => self.entropy_source = value.trim().parse()?,
            "entropy_override" => {
                self.entropy_override = match value.trim() {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Every field as `(key, value)` in [`TrainConfig::KEYS`] order; feeding
    /// the pairs back through [`TrainConfig::set`] reproduces `self`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        Self::KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "mode" => self.mode.to_string(),
                    "master_epochs" => self.master_epochs.to_string(),
                    "sub_epochs" => self.sub_epochs.to_string(),
                    "pretrain_epochs" => self.pretrain_epochs.to_string(),
                    "lr" => format!("{:?}", self.lr),
                    "weight_decay" => format!("{:?}", self.weight_decay),
                    "warmup_steps" => self.warmup_steps.to_string(),
                    "batch_size" => self.batch_size.to_string(),
                    "seed" => self.seed.to_string(),
                    "data_fraction" => format!("{:?}", self.data_fraction),
                    "temperature" => format!("{:?}", self.temperature),
                    "max_path_len" => self.max_path_len.to_string(),
                    "max_nodes" => self.max_nodes.to_string(),
                    "retrieval_k" => self.retrieval_k.to_string(),
                    "use_gcn" => self.use_gcn.to_string(),
                    "use_er" => self.use_er.to_string(),
                    "dim" => self.dim.to_string(),
                    "node_dim" => self.node_dim.to_string(),
                    "gcn_layers" => self.gcn_layers.to_string(),
                    "kg_dim" => self.kg_dim.to_string(),
                    "kg_epochs" => self.kg_epochs.to_string(),
                    "entropy_source" => self.entropy_source.as_str().to_string(),
                    "entropy_override" => self
                        .entropy_override
                        .map_or_else(|| "none".to_string(), |v| format!("{v:?}")),
                    _ => unreachable!("key list and match arms agree"),
                };
                (k, v)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return fail(format!("data_fraction must be in (0, 1], got {}", self.data_fraction));
        }
        if !(self.lr > 0.0) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.temperature > 0.0) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.batch_size == 0 || self.sub_epochs == 0 || self.master_epochs == 0 {
            return fail("batch_size, master_epochs and sub_epochs must be at least 1".into());
        }
        if self.max_nodes == 0 {
            return fail("max_nodes must be at least 1".into());
        }
        if self.max_path_len == 0 {
            return fail("max_path_len must be at least 1".into());
        }
        if self.retrieval_k == 0 {
            return fail("retrieval_k must be at least 1".into());
        }
        if self.dim == 0 || self.node_dim == 0 || self.gcn_layers == 0 {
            return fail("dim, node_dim and gcn_layers must be positive".into());
        }
        if self.kg_dim < 2 {
            return fail(format!("kg_dim must be at least 2, got {}", self.kg_dim));
        }
        if let Some(e) = self.entropy_override {
            if !(e.is_finite() && e >= 0.0) {
                return fail(format!("entropy_override must be finite and non-negative, got {e}"));
            }
        }
        Ok(())
    }

    /// Whether the graph and knowledge vectors are computed at all.
    pub fn knowledge(&self) -> (bool, bool) {
        match self.mode {
            Mode::TextOnly => (false, false),
            _ => (self.use_gcn, self.use_er),
        }
    }
}
