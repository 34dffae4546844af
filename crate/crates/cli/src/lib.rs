//! Command-line harness: `train`, `eval`, `sweep-fraction`,
//! `ablate-subgraph` and `gen-synth`. Every command writes CSV or JSONL
//! artifacts under `--out`.

pub mod commands;
pub mod config;
pub mod stats;

use std::ffi::OsString;
use std::path::PathBuf;

use actknow_core::synth::SyntheticSpec;
use actknow_core::training::TrainConfig;
use clap::{Args, Parser, Subcommand};

pub use commands::{AblationRow, Data, SweepRow};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, settings or paths.
    #[error("{0}")]
    Config(String),
    /// Failures while reading data, training or writing results.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<actknow_core::Error> for CliError {
    fn from(e: actknow_core::Error) -> Self {
        match e {
            actknow_core::Error::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// One optional string flag per training setting, named after the setting
/// (`--master-epochs` sets `master_epochs`) and parsed by the same code as
/// the config file.
macro_rules! train_flags {
    ($($field:ident $(= $alias:literal)?),* $(,)?) => {
        #[derive(Args, Clone, Debug, Default)]
        pub struct TrainFlags {
            $(
                #[arg(long, value_name = "VALUE" $(, visible_alias = $alias)?)]
                pub $field: Option<String>,
            )*
        }

        impl TrainFlags {
            pub fn pairs(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.clone()));
                    }
                )*
                out
            }

            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];
        }
    };
}

train_flags!(
    mode,
    master_epochs,
    sub_epochs,
    pretrain_epochs,
    lr,
    weight_decay,
    warmup_steps,
    batch_size,
    seed,
    data_fraction = "fraction",
    temperature,
    max_path_len,
    max_nodes,
    retrieval_k,
    use_gcn,
    use_er,
    dim,
    node_dim,
    gcn_layers,
    kg_dim,
    kg_epochs,
    entropy_source,
    entropy_override,
);

#[derive(Args, Clone, Debug, Default)]
pub struct ExperimentArgs {
    /// `key = value` settings file; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory with kg.tsv, corpus.txt and train/dev/test.jsonl.
    #[arg(long, value_name = "DIR")]
    pub data: Option<String>,
    /// Knowledge graph, one `head<TAB>relation<TAB>tail` triple per line.
    #[arg(long, value_name = "FILE")]
    pub kg: Option<String>,
    /// Retrieval corpus, one sentence per line.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub train: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub dev: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub test: Option<String>,
    /// Text file of `label v1 v2 ...` rows replacing node features.
    #[arg(long, value_name = "FILE")]
    pub node_features: Option<String>,
    /// arc-challenge or openbookqa; warns when split sizes differ from the
    /// standard release.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Output directory, created if absent.
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Comma-separated data fractions for sweep-fraction.
    #[arg(long, value_name = "LIST")]
    pub fractions: Option<String>,
    /// Comma-separated seeds for sweeps and ablations.
    #[arg(long, value_name = "LIST")]
    pub seeds: Option<String>,
    /// Comma-separated ascending node budgets for ablate-subgraph.
    #[arg(long, value_name = "LIST")]
    pub budgets: Option<String>,
    #[command(flatten)]
    pub settings: TrainFlags,
}

impl ExperimentArgs {
    /// Resolves against the config file and `env_seed`.
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<ExperimentConfig, CliError> {
        let mut flags: Vec<(&str, String)> = Vec::new();
        let named = [
            ("data", &self.data),
            ("kg", &self.kg),
            ("corpus", &self.corpus),
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
            ("node_features", &self.node_features),
            ("dataset", &self.dataset),
            ("out", &self.out),
            ("fractions", &self.fractions),
            ("seeds", &self.seeds),
            ("budgets", &self.budgets),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                flags.push((k, v.clone()));
            }
        }
        flags.extend(self.settings.pairs());
        ExperimentConfig::resolve(self.config.as_deref(), &flags, env_seed)
    }
}

#[derive(Args, Clone, Debug)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Questions to evaluate; defaults to the test split.
    #[arg(long, value_name = "FILE")]
    pub split: Option<PathBuf>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Args, Clone, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub n_entities: Option<usize>,
    #[arg(long)]
    pub n_relations: Option<usize>,
    #[arg(long)]
    pub n_questions: Option<usize>,
    /// 1 or 2.
    #[arg(long)]
    pub hop_depth: Option<usize>,
    #[arg(long)]
    pub distractors: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adds noise fillers whose neighborhoods reach distractors.
    #[arg(long)]
    pub noisy: bool,
    /// Noise fillers per subject (overrides --noisy's default).
    #[arg(long)]
    pub noise_fillers: Option<usize>,
    /// Retrieval depth used when verifying the generated questions.
    #[arg(long, default_value_t = TrainConfig::default().retrieval_k)]
    pub retrieval_k: usize,
}

impl SynthArgs {
    pub fn spec(&self, env_seed: Option<&str>) -> Result<SyntheticSpec, CliError> {
        let mut spec = if self.noisy { SyntheticSpec::noisy() } else { SyntheticSpec::default() };
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut spec.n_entities, self.n_entities);
        set(&mut spec.n_relations, self.n_relations);
        set(&mut spec.n_questions, self.n_questions);
        set(&mut spec.hop_depth, self.hop_depth);
        set(&mut spec.distractors, self.distractors);
        set(&mut spec.noise_fillers_per_subject, self.noise_fillers);
        match (self.seed, env_seed) {
            (Some(s), _) => spec.seed = s,
            (None, Some(s)) => {
                spec.seed = s
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{}={s:?} is not a seed", config::SEED_ENV)))?
            }
            (None, None) => {}
        }
        Ok(spec)
    }
}

#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Train one model; writes checkpoint.txt, stats.csv and config.txt.
    Train(ExperimentArgs),
    /// Evaluate a checkpoint; writes predictions.jsonl.
    Eval(EvalArgs),
    /// Text-only, base-know and act-know over fractions and seeds; writes
    /// sweep_fraction.csv.
    SweepFraction(ExperimentArgs),
    /// One run per node budget; writes ablate_subgraph.csv.
    AblateSubgraph(ExperimentArgs),
    /// Write a synthetic KG, corpus and question splits, then verify them.
    GenSynth(SynthArgs),
}

#[derive(Parser, Clone, Debug)]
#[command(name = "actknow", version, about = "Knowledge-infused multiple-choice QA experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn env_seed() -> Option<String> {
    std::env::var(config::SEED_ENV).ok()
}

/// Runs a parsed command, printing a short summary to stdout.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let seed = env_seed();
    let seed = seed.as_deref();
    match &cli.command {
        Command::Train(args) => {
            let cfg = args.resolve(seed)?;
            let report = commands::cmd_train(&cfg)?;
            println!(
                "trained {} on {} questions; best dev epoch {}",
                cfg.train.mode, report.train_size, report.best_epoch
            );
            if let Some(test) = report.test {
                println!("test accuracy {:.4} (mean entropy {:.4})", test.accuracy, test.mean_entropy);
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Eval(args) => {
            let cfg = args.experiment.resolve(seed)?;
            let eval = commands::cmd_eval(&cfg, &args.checkpoint, args.split.as_deref())?;
            println!(
                "accuracy {:.4} over {} questions (mean entropy {:.4})",
                eval.accuracy,
                eval.predictions.len(),
                eval.mean_entropy
            );
            println!("wrote {}", cfg.out.join("predictions.jsonl").display());
        }
        Command::SweepFraction(args) => {
            let cfg = args.resolve(seed)?;
            let rows = commands::cmd_sweep_fraction(&cfg)?;
            print_sweep_summary(&rows, &cfg.fractions);
            println!("wrote {}", cfg.out.join("sweep_fraction.csv").display());
        }
        Command::AblateSubgraph(args) => {
            let cfg = args.resolve(seed)?;
            let rows = commands::cmd_ablate_subgraph(&cfg)?;
            for r in &rows {
                println!("max_nodes {:>5}: {:.4}", r.max_nodes, r.accuracy);
            }
            println!("wrote {}", cfg.out.join("ablate_subgraph.csv").display());
        }
        Command::GenSynth(args) => {
            let spec = args.spec(seed)?;
            let report = commands::cmd_gen_synth(&spec, &args.out, args.retrieval_k)?;
            println!(
                "{} questions: {} KG-answerable, {} lexically answerable, {} with a cued distractor",
                report.questions, report.kg_answerable, report.lexically_answerable, report.distractor_cued
            );
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}

fn print_sweep_summary(rows: &[SweepRow], fractions: &[f64]) {
    use actknow_core::training::Mode;
    for &f in fractions {
        let mean = |m| stats::mean_accuracy(rows, f, m).unwrap_or(f64::NAN);
        let (w, l) = stats::paired_record(rows, f, Mode::ActKnow, Mode::BaseKnow);
        println!(
            "fraction {f}: text-only {:.4}  base-know {:.4}  act-know {:.4}  (act vs base {w}-{l}, sign test p {:.3})",
            mean(Mode::TextOnly),
            mean(Mode::BaseKnow),
            mean(Mode::ActKnow),
            stats::sign_test(w, l)
        );
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 configuration error, 2 runtime error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
