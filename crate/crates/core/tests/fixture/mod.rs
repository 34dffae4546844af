//! Small synthetic tasks and configurations for end-to-end tests.
#![allow(dead_code)]

use actknow_core::encoders::Vocab;
use actknow_core::synth::{generate, SyntheticSpec, SyntheticTask};
use actknow_core::training::{prepare, Example, ModelParams, Resources, TrainConfig};
use actknow_core::Corpus;

pub fn tiny_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_entities: 120,
        n_questions: 24,
        seed,
        ..SyntheticSpec::default()
    }
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        dim: 5,
        node_dim: 4,
        kg_dim: 3,
        kg_epochs: 3,
        max_nodes: 8,
        master_epochs: 2,
        sub_epochs: 2,
        pretrain_epochs: 1,
        batch_size: 4,
        ..TrainConfig::default()
    }
}

pub struct Prepared {
    pub task: SyntheticTask,
    pub resources: Resources,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

pub fn prepared(spec: &SyntheticSpec, config: &TrainConfig) -> Prepared {
    let task = generate(spec).unwrap();
    let resources = Resources::build(task.graph.clone(), Corpus::new(task.corpus.clone()), config, None).unwrap();
    let train = prepare(&task.splits.train, &resources, config).unwrap();
    let dev = prepare(&task.splits.dev, &resources, config).unwrap();
    let test = prepare(&task.splits.test, &resources, config).unwrap();
    Prepared {
        task,
        resources,
        train,
        dev,
        test,
    }
}

pub fn init_params(p: &Prepared, config: &TrainConfig) -> ModelParams {
    let vocab = Vocab::from_pairs(p.train.iter().chain(&p.test).flat_map(|ex| ex.pairs.iter()));
    ModelParams::init(
        vocab,
        &p.resources.entities,
        &p.resources.relations,
        p.resources.node_features.clone(),
        config,
    )
    .unwrap()
}

/// First example whose every choice has a non-empty subgraph with an edge.
pub fn connected_example(examples: &[Example]) -> &Example {
    examples
        .iter()
        .find(|ex| ex.subgraphs.iter().any(|s| !s.edges.is_empty()) && ex.subgraphs.iter().all(|s| !s.is_empty()))
        .expect("some question has a connected subgraph")
}
