//! Choice scoring, entropy measurement and the two training schedules.
//!
//! BaseKnow trains on `t : g : 𝒢` for `master_epochs × sub_epochs` epochs.
//! ActKnow measures each question's prediction entropy ℰ_j at the start of
//! every master epoch (eval mode, unweighted, no gradient), then runs
//! `sub_epochs` on the loss with `t : ℰ_j·g : ℰ_j·𝒢`. With ℰ_j ≡ 1 the two
//! schedules are the same computation.

mod config;
mod data;
mod model;

use rand::seq::SliceRandom;

pub use config::{EntropySource, Mode, TrainConfig};
pub use data::{prepare, sample_fraction, Example, Resources};
pub use model::{
    argmax, evaluate, predict, question_entropy, question_gradients, question_logits, score_question, BoundModel,
    ChoiceTrace, Evaluation, ModelParams, ParamGroup, Prediction, Scales, TopWeight,
};

use crate::autodiff::{Adam, AdamConfig, Tape};
use crate::encoders::{AttentionMode, Vocab};
use crate::error::{Error, Result};
use crate::nli::QaItem;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
        }
    }
}

/// One row of the per-epoch statistics table.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub split: Split,
    pub accuracy: f64,
    pub mean_entropy: f64,
    pub loss: f64,
}

pub const STATS_HEADER: &str = "epoch,split,accuracy,mean_entropy,loss";

impl EpochStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6}",
            self.epoch,
            self.split.as_str(),
            self.accuracy,
            self.mean_entropy,
            self.loss
        )
    }
}

pub fn stats_csv(stats: &[EpochStats]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for s in stats {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the master epoch with the best dev accuracy (the
    /// last epoch when there is no dev split).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub stats: Vec<EpochStats>,
    /// Mean training loss of every optimizer step, pre-training included.
    pub batch_losses: Vec<f64>,
    /// The per-question weights used in each master epoch.
    pub weights: Vec<Vec<f64>>,
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    params: ModelParams,
    adam: Adam,
    shuffle: Rng,
    noise: Rng,
    batch_losses: Vec<f64>,
}

impl Trainer<'_> {
    /// One pass over `examples` in a fresh shuffled order; returns the mean
    /// batch loss.
    fn epoch(&mut self, examples: &[Example], weights: &[f64], freeze_text: bool) -> Result<f64> {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut self.shuffle);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(self.config.batch_size) {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, self.config, freeze_text, true)?;
            let mut losses = Vec::with_capacity(batch.len());
            for &q in batch {
                let (logits, _) = question_logits(
                    &mut tape,
                    &bound,
                    &self.params,
                    &examples[q],
                    Scales::uniform(weights[q]),
                    AttentionMode::Train,
                    self.config.temperature,
                    &mut self.noise,
                )?;
                losses.push(tape.cross_entropy(logits, examples[q].item.answer_index)?);
            }
            let stacked = tape.concat(&losses)?;
            let loss = tape.mean(stacked)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Invalid(format!("training loss became {value}")));
            }
            tape.backward(loss)?;
            let grads = bound.gradients(&tape);
            self.adam.step(&mut self.params.trainable_mut(), &grads)?;
            self.batch_losses.push(value);
            total += value;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    fn entropies(&self, examples: &[Example]) -> Result<Vec<f64>> {
        examples
            .iter()
            .map(|ex| Ok(question_entropy(&score_question(&self.params, ex, self.config, Scales::ONE)?)))
            .collect()
    }

    fn weights(&self, train: &[Example], dev: &[Example]) -> Result<Vec<f64>> {
        if self.config.mode != Mode::ActKnow {
            return Ok(vec![1.0; train.len()]);
        }
        if let Some(v) = self.config.entropy_override {
            return Ok(vec![v; train.len()]);
        }
        match self.config.entropy_source {
            EntropySource::Train => self.entropies(train),
            EntropySource::Dev => {
                if dev.is_empty() {
                    return Err(Error::Config("entropy_source = dev needs a dev split".into()));
                }
                let e = self.entropies(dev)?;
                Ok(vec![e.iter().sum::<f64>() / e.len() as f64; train.len()])
            }
        }
    }
}

/// Trains from scratch on `train`, tracking dev accuracy per master epoch.
pub fn train(train: &[Example], dev: &[Example], resources: &Resources, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set has no questions".into()));
    }
    let vocab = Vocab::from_pairs(train.iter().flat_map(|ex| ex.pairs.iter()));
    let params = ModelParams::init(
        vocab,
        &resources.entities,
        &resources.relations,
        resources.node_features.clone(),
        config,
    )?;
    let adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            warmup_steps: config.warmup_steps,
            ..AdamConfig::default()
        },
        params.trainable().iter().map(|t| t.len()),
    )?;
    let mut trainer = Trainer {
        config,
        params,
        adam,
        shuffle: rng::stream(config.seed, "shuffle"),
        noise: rng::stream(config.seed, "gumbel"),
        batch_losses: Vec::new(),
    };

    let (use_gcn, use_er) = config.knowledge();
    if use_gcn || use_er {
        let ones = vec![1.0; train.len()];
        for e in 0..config.pretrain_epochs {
            let loss = trainer.epoch(train, &ones, true)?;
            log::debug!("pre-train epoch {} loss {loss:.4}", e + 1);
        }
    }

    let mut stats = Vec::new();
    let mut weights_log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for master in 1..=config.master_epochs {
        let weights = trainer.weights(train, dev)?;
        let mut loss = 0.0;
        for _ in 0..config.sub_epochs {
            loss = trainer.epoch(train, &weights, false)?;
        }
        weights_log.push(weights);

        let on_train = evaluate(&trainer.params, train, config)?;
        stats.push(EpochStats {
            epoch: master,
            split: Split::Train,
            accuracy: on_train.accuracy,
            mean_entropy: on_train.mean_entropy,
            loss,
        });
        let score = if dev.is_empty() {
            f64::NEG_INFINITY
        } else {
            let on_dev = evaluate(&trainer.params, dev, config)?;
            stats.push(EpochStats {
                epoch: master,
                split: Split::Dev,
                accuracy: on_dev.accuracy,
                mean_entropy: on_dev.mean_entropy,
                loss: on_dev.loss,
            });
            on_dev.accuracy
        };
        log::info!(
            "{} epoch {master}: train loss {loss:.4} acc {:.3}, dev acc {}",
            config.mode,
            on_train.accuracy,
            if dev.is_empty() { "-".to_string() } else { format!("{score:.3}") }
        );
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) || dev.is_empty() {
            best = Some((score, master, trainer.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one master epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        stats,
        batch_losses: trainer.batch_losses,
        weights: weights_log,
    })
}

/// Train, dev and test questions of one dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<QaItem>,
    pub dev: Vec<QaItem>,
    pub test: Vec<QaItem>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub outcome: TrainOutcome,
    pub test: Evaluation,
    pub train_size: usize,
}

/// Samples `config.data_fraction` of the training questions, trains and
/// evaluates the selected checkpoint on the test split.
pub fn run_experiment(resources: &Resources, splits: &Splits, config: &TrainConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let picked = sample_fraction(&splits.train, config.data_fraction, config.seed)?;
    let subset: Vec<QaItem> = picked.iter().map(|&i| splits.train[i].clone()).collect();
    let train_ex = prepare(&subset, resources, config)?;
    let dev_ex = prepare(&splits.dev, resources, config)?;
    let test_ex = prepare(&splits.test, resources, config)?;
    let outcome = train(&train_ex, &dev_ex, resources, config)?;
    let test = evaluate(&outcome.params, &test_ex, config)?;
    Ok(ExperimentResult {
        outcome,
        test,
        train_size: subset.len(),
    })
}
