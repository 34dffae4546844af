//! The work behind each subcommand, separated from argument parsing so the
//! sweeps can be driven directly on in-memory data.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use actknow_core::kg::read_embedding_text;
use actknow_core::nli::load_dataset;
use actknow_core::synth::{generate, verify, SyntheticSpec, VerifyReport};
use actknow_core::training::{
    evaluate, prepare, run_experiment, sample_fraction, stats_csv, train, Evaluation, Mode, ModelParams, Resources,
    Splits, TrainConfig,
};
use actknow_core::autodiff::Checkpoint;
use actknow_core::{Corpus, KnowledgeGraph, QaItem};
use rayon::prelude::*;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Everything read from disk for one experiment.
#[derive(Clone, Debug)]
pub struct Data {
    pub graph: KnowledgeGraph,
    pub corpus: Corpus,
    pub splits: Splits,
    pub node_overrides: Option<HashMap<String, Vec<f64>>>,
}

impl Data {
    pub fn resources(&self, config: &TrainConfig) -> Result<Resources, CliError> {
        Ok(Resources::build(
            self.graph.clone(),
            self.corpus.clone(),
            config,
            self.node_overrides.as_ref(),
        )?)
    }
}

fn load_split(cfg: &ExperimentConfig, slot: &Option<PathBuf>, flag: &str) -> Result<Vec<QaItem>, CliError> {
    match cfg.optional(slot, flag)? {
        Some(p) => Ok(load_dataset(&p)?),
        None => Ok(Vec::new()),
    }
}

/// Loads the KG, corpus and splits named in `cfg`. The training split is
/// required unless `need_train` is false.
pub fn load_data(cfg: &ExperimentConfig, need_train: bool) -> Result<Data, CliError> {
    let kg = cfg.require(&cfg.kg, "kg", "knowledge-graph TSV")?;
    let corpus = cfg.require(&cfg.corpus, "corpus", "one sentence per line")?;
    let train = if need_train {
        load_dataset(&cfg.require(&cfg.train_split, "train", "training questions JSONL")?)?
    } else {
        load_split(cfg, &cfg.train_split, "train")?
    };
    let splits = Splits {
        train,
        dev: load_split(cfg, &cfg.dev_split, "dev")?,
        test: load_split(cfg, &cfg.test_split, "test")?,
    };
    if let Some(d) = cfg.dataset {
        if let Some(w) = d.size_warning(&splits) {
            log::warn!("{w}");
        }
    }
    let node_overrides = match cfg.optional(&cfg.node_features, "node-features")? {
        Some(p) => Some(read_embedding_text(&p)?),
        None => None,
    };
    Ok(Data {
        graph: KnowledgeGraph::load_triples(&kg)?,
        corpus: Corpus::load(&corpus)?,
        splits,
        node_overrides,
    })
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Result of the `train` command.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub train_size: usize,
    pub best_epoch: usize,
    pub test: Option<Evaluation>,
}

/// Trains on the sampled fraction of the training split and writes
/// `checkpoint.txt`, `stats.csv` and `config.txt` under `cfg.out`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport, CliError> {
    let data = load_data(cfg, true)?;
    let resources = data.resources(&cfg.train)?;
    let picked = sample_fraction(&data.splits.train, cfg.train.data_fraction, cfg.train.seed)?;
    let subset: Vec<QaItem> = picked.iter().map(|&i| data.splits.train[i].clone()).collect();
    let train_ex = prepare(&subset, &resources, &cfg.train)?;
    let dev_ex = prepare(&data.splits.dev, &resources, &cfg.train)?;
    let outcome = train(&train_ex, &dev_ex, &resources, &cfg.train)?;
    let test = if data.splits.test.is_empty() {
        None
    } else {
        let test_ex = prepare(&data.splits.test, &resources, &cfg.train)?;
        Some(evaluate(&outcome.params, &test_ex, &cfg.train)?)
    };

    create_dir(&cfg.out)?;
    outcome
        .params
        .to_checkpoint(&cfg.train)
        .write(&cfg.out.join("checkpoint.txt"))?;
    write(&cfg.out.join("stats.csv"), &stats_csv(&outcome.stats))?;
    write(&cfg.out.join("config.txt"), &cfg.to_text())?;
    Ok(TrainReport {
        train_size: subset.len(),
        best_epoch: outcome.best_epoch,
        test,
    })
}

/// One JSON object per question: prediction, gold, entropy, logits and the
/// strongest attention targets for the predicted choice.
pub fn predictions_jsonl(eval: &Evaluation, graph: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for p in &eval.predictions {
        let graph_top = p.graph_top.map(|(e, w)| json!({"entity": graph.entity_label(e), "weight": w}));
        let entity_top = p
            .entity_top
            .map(|t| json!({"entity": graph.entity_label(t.id), "weight": t.weight}));
        let relation_top = p
            .relation_top
            .map(|t| json!({"relation": graph.relation_name(t.id), "weight": t.weight}));
        let row = json!({
            "id": p.id,
            "predicted": p.predicted,
            "gold": p.gold,
            "correct": p.correct(),
            "entropy": p.entropy,
            "logits": p.logits,
            "graph_top": graph_top,
            "entity_top": entity_top,
            "relation_top": relation_top,
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}

/// Evaluates a checkpoint on `split` (the test split when `None`) and
/// writes `predictions.jsonl` under `cfg.out`. Model settings come from the
/// checkpoint; only paths are taken from `cfg`.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, split: Option<&Path>) -> Result<Evaluation, CliError> {
    if !checkpoint.exists() {
        return Err(CliError::Config(format!("--checkpoint {} does not exist", checkpoint.display())));
    }
    let (params, train_cfg) = ModelParams::from_checkpoint(&Checkpoint::read(checkpoint)?)?;
    let data = load_data(cfg, false)?;
    let items = match split {
        Some(p) if !p.exists() => return Err(CliError::Config(format!("--split {} does not exist", p.display()))),
        Some(p) => load_dataset(p)?,
        None if data.splits.test.is_empty() => {
            return Err(CliError::Config("nothing to evaluate: pass --split or --test".into()))
        }
        None => data.splits.test.clone(),
    };
    let resources = data.resources(&train_cfg)?;
    let examples = prepare(&items, &resources, &train_cfg)?;
    let eval = evaluate(&params, &examples, &train_cfg)?;
    create_dir(&cfg.out)?;
    write(&cfg.out.join("predictions.jsonl"), &predictions_jsonl(&eval, &data.graph))?;
    Ok(eval)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub mode: Mode,
    pub seed: u64,
    pub accuracy: f64,
}

pub const SWEEP_HEADER: &str = "fraction,mode,seed,accuracy";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:.6}\n", r.fraction, r.mode, r.seed, r.accuracy));
    }
    out
}

fn check_seeds(seeds: &[u64]) -> Result<(), CliError> {
    if seeds.is_empty() {
        return Err(CliError::Config("need at least one seed".into()));
    }
    Ok(())
}

/// Resources depend on the seed (KG embeddings, node features), so they are
/// built once per seed and shared by every cell with that seed.
fn resources_by_seed(data: &Data, base: &TrainConfig, seeds: &[u64]) -> Result<HashMap<u64, Resources>, CliError> {
    let mut unique = seeds.to_vec();
    unique.sort_unstable();
    unique.dedup();
    unique
        .into_par_iter()
        .map(|seed| {
            let cfg = TrainConfig { seed, ..base.clone() };
            Ok((seed, data.resources(&cfg)?))
        })
        .collect()
}

/// Every (fraction, mode, seed) cell, run in parallel. Rows come back in
/// fraction order, then text-only, base-know, act-know, then seed order.
pub fn sweep_fraction(data: &Data, base: &TrainConfig, fractions: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>, CliError> {
    if fractions.is_empty() {
        return Err(CliError::Config("need at least one fraction".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(CliError::Config(format!("fractions must lie in (0, 1], got {f}")));
    }
    check_seeds(seeds)?;
    if data.splits.test.is_empty() {
        return Err(CliError::Config("sweeps need a test split".into()));
    }
    let resources = resources_by_seed(data, base, seeds)?;
    let cells: Vec<(f64, Mode, u64)> = fractions
        .iter()
        .flat_map(|&f| Mode::ALL.into_iter().flat_map(move |m| seeds.iter().map(move |&s| (f, m, s))))
        .collect();
    cells
        .into_par_iter()
        .map(|(fraction, mode, seed)| {
            let cfg = TrainConfig {
                data_fraction: fraction,
                mode,
                seed,
                ..base.clone()
            };
            let result = run_experiment(&resources[&seed], &data.splits, &cfg)?;
            log::info!("fraction {fraction} {mode} seed {seed}: {:.3}", result.test.accuracy);
            Ok(SweepRow {
                fraction,
                mode,
                seed,
                accuracy: result.test.accuracy,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub max_nodes: usize,
    /// Mean test accuracy over the seeds.
    pub accuracy: f64,
}

pub const ABLATION_HEADER: &str = "max_nodes,accuracy";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{:.6}\n", r.max_nodes, r.accuracy));
    }
    out
}

/// One full train and test evaluation per (budget, seed); budgets must be
/// positive and strictly ascending.
pub fn ablate_subgraph(data: &Data, base: &TrainConfig, budgets: &[usize], seeds: &[u64]) -> Result<Vec<AblationRow>, CliError> {
    if budgets.is_empty() {
        return Err(CliError::Config("need at least one node budget".into()));
    }
    if budgets.contains(&0) {
        return Err(CliError::Config("node budgets must be at least 1".into()));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!("node budgets must be strictly ascending, got {budgets:?}")));
    }
    check_seeds(seeds)?;
    if data.splits.test.is_empty() {
        return Err(CliError::Config("ablations need a test split".into()));
    }
    let resources = resources_by_seed(data, base, seeds)?;
    let cells: Vec<(usize, u64)> = budgets.iter().flat_map(|&b| seeds.iter().map(move |&s| (b, s))).collect();
    let accs: Vec<f64> = cells
        .into_par_iter()
        .map(|(max_nodes, seed)| {
            let cfg = TrainConfig {
                max_nodes,
                seed,
                ..base.clone()
            };
            let acc = run_experiment(&resources[&seed], &data.splits, &cfg)?.test.accuracy;
            log::info!("max_nodes {max_nodes} seed {seed}: {acc:.3}");
            Ok(acc)
        })
        .collect::<Result<_, CliError>>()?;
    Ok(budgets
        .iter()
        .zip(accs.chunks(seeds.len()))
        .map(|(&max_nodes, a)| AblationRow {
            max_nodes,
            accuracy: a.iter().sum::<f64>() / a.len() as f64,
        })
        .collect())
}

/// Loads data, runs the fraction sweep and writes `sweep_fraction.csv`.
pub fn cmd_sweep_fraction(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    let data = load_data(cfg, true)?;
    let rows = sweep_fraction(&data, &cfg.train, &cfg.fractions, &cfg.seeds)?;
    create_dir(&cfg.out)?;
    write(&cfg.out.join("sweep_fraction.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

/// Loads data, runs the node-budget ablation and writes
/// `ablate_subgraph.csv`.
pub fn cmd_ablate_subgraph(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>, CliError> {
    let data = load_data(cfg, true)?;
    let rows = ablate_subgraph(&data, &cfg.train, &cfg.budgets, &cfg.seeds)?;
    create_dir(&cfg.out)?;
    write(&cfg.out.join("ablate_subgraph.csv"), &ablation_csv(&rows))?;
    Ok(rows)
}

/// Writes the synthetic task to `out` and re-checks it exhaustively with
/// the same retrieval depth the model uses.
pub fn cmd_gen_synth(spec: &SyntheticSpec, out: &Path, retrieval_k: usize) -> Result<VerifyReport, CliError> {
    let task = generate(spec)?;
    task.write_to(out)?;
    let report = verify(
        &task.graph,
        &Corpus::new(task.corpus.clone()),
        &task.all_items(),
        spec.hop_depth,
        retrieval_k,
    )?;
    if !report.ok() {
        let detail = report.problems.first().cloned().unwrap_or_default();
        return Err(CliError::Runtime(format!(
            "generated task failed verification ({}/{} KG-answerable, {} lexically answerable): {detail}",
            report.kg_answerable, report.questions, report.lexically_answerable
        )));
    }
    Ok(report)
}
