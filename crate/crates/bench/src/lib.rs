//! Inputs shared by the benchmarks.

use actknow_core::encoders::Vocab;
use actknow_core::synth::{generate, SyntheticSpec};
use actknow_core::training::{prepare, Example, ModelParams, Resources, TrainConfig};
use actknow_core::Corpus;

/// The default synthetic task with its resources, prepared test questions
/// and freshly initialized parameters.
pub struct Workload {
    pub resources: Resources,
    pub config: TrainConfig,
    pub examples: Vec<Example>,
    pub params: ModelParams,
}

impl Workload {
    pub fn new(config: TrainConfig) -> Self {
        let task = generate(&SyntheticSpec::default()).expect("default task generates");
        let resources = Resources::build(task.graph, Corpus::new(task.corpus), &config, None).expect("resources");
        let examples = prepare(&task.splits.test, &resources, &config).expect("prepare");
        let vocab = Vocab::from_pairs(examples.iter().flat_map(|ex| ex.pairs.iter()));
        let params = ModelParams::init(
            vocab,
            &resources.entities,
            &resources.relations,
            resources.node_features.clone(),
            &config,
        )
        .expect("params");
        Workload {
            resources,
            config,
            examples,
            params,
        }
    }

    /// The question with the largest subgraph.
    pub fn largest(&self) -> &Example {
        self.examples
            .iter()
            .max_by_key(|ex| ex.subgraphs.iter().map(|s| s.len()).sum::<usize>())
            .expect("non-empty test split")
    }
}
