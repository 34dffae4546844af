//! Experiment settings. Later sources win: built-in defaults, then a
//! `key = value` file, then command-line flags. The seed falls back to
//! `ACTKNOW_SEED` when neither the file nor a flag sets it.

use std::fs;
use std::path::{Path, PathBuf};

use actknow_core::training::{Splits, TrainConfig};

use crate::CliError;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "ACTKNOW_SEED";

/// Keys accepted in a config file besides the training settings.
pub const PATH_KEYS: [&str; 9] = ["data", "kg", "corpus", "train", "dev", "test", "node_features", "dataset", "out"];
pub const LIST_KEYS: [&str; 3] = ["fractions", "seeds", "budgets"];

/// A public benchmark whose split sizes are known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnownDataset {
    ArcChallenge,
    OpenBookQa,
}

impl KnownDataset {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arc-challenge" | "arc_challenge" => Ok(KnownDataset::ArcChallenge),
            "openbookqa" | "obqa" => Ok(KnownDataset::OpenBookQa),
            other => Err(CliError::Config(format!(
                "unknown dataset {other:?} (arc-challenge, openbookqa)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KnownDataset::ArcChallenge => "ARC-Challenge",
            KnownDataset::OpenBookQa => "OpenBookQA",
        }
    }

    /// Published train/dev/test question counts.
    pub fn split_sizes(self) -> [usize; 3] {
        match self {
            KnownDataset::ArcChallenge => [1119, 299, 1172],
            KnownDataset::OpenBookQa => [4957, 500, 500],
        }
    }

    /// A warning when the loaded splits differ from the published sizes.
    pub fn size_warning(self, splits: &Splits) -> Option<String> {
        let got = [splits.train.len(), splits.dev.len(), splits.test.len()];
        let want = self.split_sizes();
        (got != want).then(|| {
            format!(
                "{} splits have {}/{}/{} questions (train/dev/test); the standard release has {}/{}/{}",
                self.name(),
                got[0],
                got[1],
                got[2],
                want[0],
                want[1],
                want[2]
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub kg: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub train_split: Option<PathBuf>,
    pub dev_split: Option<PathBuf>,
    pub test_split: Option<PathBuf>,
    /// Directory in the `gen-synth` layout; fills any path not set directly.
    pub data: Option<PathBuf>,
    pub node_features: Option<PathBuf>,
    pub dataset: Option<KnownDataset>,
    pub out: PathBuf,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub budgets: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            kg: None,
            corpus: None,
            train_split: None,
            dev_split: None,
            test_split: None,
            data: None,
            node_features: None,
            dataset: None,
            out: PathBuf::from("actknow-out"),
            fractions: vec![0.1, 0.2, 0.5, 1.0],
            seeds: vec![0, 1, 2, 3, 4],
            budgets: vec![5, 20, 50, 200],
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Applies one setting. Relative paths are taken from `base`.
    pub fn apply(&mut self, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let path = || base.join(value);
        match key {
            "data" => self.data = Some(path()),
            "kg" => self.kg = Some(path()),
            "corpus" => self.corpus = Some(path()),
            "train" => self.train_split = Some(path()),
            "dev" => self.dev_split = Some(path()),
            "test" => self.test_split = Some(path()),
            "node_features" => self.node_features = Some(path()),
            "out" => self.out = path(),
            "dataset" => self.dataset = Some(KnownDataset::parse(value)?),
            "fractions" => self.fractions = list(key, value)?,
            "seeds" => self.seeds = list(key, value)?,
            "budgets" => self.budgets = list(key, value)?,
            _ => self.train.set(key, value).map_err(CliError::from)?,
        }
        Ok(())
    }

    /// Builds the configuration from an optional file, flag overrides and
    /// the seed environment value.
    pub fn resolve(
        file: Option<&Path>,
        flags: &[(&str, String)],
        env_seed: Option<&str>,
    ) -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::default();
        let mut seed_given = false;
        if let Some(file) = file {
            let text = fs::read_to_string(file)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", file.display())))?;
            let base = file.parent().unwrap_or(Path::new(""));
            for (k, v) in parse_config_text(&text, &file.display().to_string())? {
                seed_given |= k == "seed";
                cfg.apply(&k, &v, base)?;
            }
        }
        for (k, v) in flags {
            seed_given |= *k == "seed";
            cfg.apply(k, v, Path::new(""))?;
        }
        if !seed_given {
            if let Some(s) = env_seed {
                cfg.train
                    .set("seed", s)
                    .map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not a seed")))?;
            }
        }
        if let Some(dir) = cfg.data.clone() {
            let fill = |slot: &mut Option<PathBuf>, name: &str| {
                if slot.is_none() {
                    *slot = Some(dir.join(name));
                }
            };
            fill(&mut cfg.kg, "kg.tsv");
            fill(&mut cfg.corpus, "corpus.txt");
            fill(&mut cfg.train_split, "train.jsonl");
            fill(&mut cfg.dev_split, "dev.jsonl");
            fill(&mut cfg.test_split, "test.jsonl");
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// The configured path for `flag`, which must exist.
    pub fn require(&self, slot: &Option<PathBuf>, flag: &str, what: &str) -> Result<PathBuf, CliError> {
        let path = slot
            .clone()
            .ok_or_else(|| CliError::Config(format!("missing --{flag} ({what}); set it or pass --data")))?;
        if !path.exists() {
            return Err(CliError::Config(format!("--{flag} {} does not exist", path.display())));
        }
        Ok(path)
    }

    /// Like [`ExperimentConfig::require`] but absent is allowed.
    pub fn optional(&self, slot: &Option<PathBuf>, flag: &str) -> Result<Option<PathBuf>, CliError> {
        match slot {
            Some(p) if !p.exists() => Err(CliError::Config(format!("--{flag} {} does not exist", p.display()))),
            other => Ok(other.clone()),
        }
    }

    /// Every setting as `key = value` lines, readable back as a config file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.train.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        let paths = [
            ("kg", &self.kg),
            ("corpus", &self.corpus),
            ("train", &self.train_split),
            ("dev", &self.dev_split),
            ("test", &self.test_split),
            ("node_features", &self.node_features),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                out.push_str(&format!("{k} = {}\n", p.display()));
            }
        }
        if let Some(d) = self.dataset {
            out.push_str(&format!("dataset = {}\n", d.name().to_ascii_lowercase()));
        }
        let join = |xs: Vec<String>| xs.join(",");
        out.push_str(&format!("fractions = {}\n", join(self.fractions.iter().map(|f| f.to_string()).collect())));
        out.push_str(&format!("seeds = {}\n", join(self.seeds.iter().map(|s| s.to_string()).collect())));
        out.push_str(&format!("budgets = {}\n", join(self.budgets.iter().map(|b| b.to_string()).collect())));
        out
    }
}
