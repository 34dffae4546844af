use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use crate::encoders::Vocab;
use crate::error::{Error, Result};
use crate::kg::{node_feature_table, train_kg_embeddings, EmbeddingTable, KgEmbeddingConfig, KnowledgeGraph};
use crate::nli::{convert, NliPair, QaItem};
use crate::retrieval::{Corpus, InvertedIndex};
use crate::rng;
use crate::subgraph::{extract, ConceptMatcher, ConceptMention, Subgraph, SubgraphConfig};

/// Everything question preparation and model initialization read: the
/// graph, its trained embeddings, node features and the retrieval index.
#[derive(Clone, Debug)]
pub struct Resources {
    pub graph: KnowledgeGraph,
    pub matcher: ConceptMatcher,
    pub corpus: Corpus,
    pub index: InvertedIndex,
    pub entities: EmbeddingTable,
    pub relations: EmbeddingTable,
    pub node_features: EmbeddingTable,
}

impl Resources {
    /// Trains the KG embeddings and draws node features, both seeded by
    /// `config.seed`.
    pub fn build(
        graph: KnowledgeGraph,
        corpus: Corpus,
        config: &TrainConfig,
        node_overrides: Option<&HashMap<String, Vec<f64>>>,
    ) -> Result<Self> {
        let index = InvertedIndex::build(&corpus)?;
        let (entities, relations) = train_kg_embeddings(
            &graph,
            &KgEmbeddingConfig {
                dim: config.kg_dim,
                epochs: config.kg_epochs,
                seed: config.seed,
                ..KgEmbeddingConfig::default()
            },
        )?;
        let node_features = node_feature_table(&graph, config.node_dim, config.seed, node_overrides)?;
        Ok(Resources {
            matcher: ConceptMatcher::new(&graph),
            graph,
            corpus,
            index,
            entities,
            relations,
            node_features,
        })
    }
}

/// A question with its per-choice pairs, mentions and subgraphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub item: QaItem,
    pub pairs: Vec<NliPair>,
    pub mentions: Vec<Vec<ConceptMention>>,
    pub subgraphs: Vec<Subgraph>,
}

impl Example {
    pub fn token_ids(&self, vocab: &Vocab) -> Result<Vec<Vec<usize>>> {
        self.pairs.iter().map(|p| vocab.pair_ids(p)).collect()
    }
}

pub fn prepare(items: &[QaItem], resources: &Resources, config: &TrainConfig) -> Result<Vec<Example>> {
    let sub_cfg = SubgraphConfig {
        max_path_len: config.max_path_len,
        max_nodes: config.max_nodes,
    };
    items
        .iter()
        .map(|item| {
            item.validate()?;
            let pairs = convert(item, &resources.index, &resources.corpus, config.retrieval_k)?;
            let mut mentions = Vec::with_capacity(pairs.len());
            let mut subgraphs = Vec::with_capacity(pairs.len());
            for pair in &pairs {
                let (m, s) = extract(&resources.graph, &resources.matcher, pair, sub_cfg)?;
                mentions.push(m);
                subgraphs.push(s);
            }
            Ok(Example {
                item: item.clone(),
                pairs,
                mentions,
                subgraphs,
            })
        })
        .collect()
}

/// Indices of a seeded subset of `⌊fraction · n⌋` questions, stratified by
/// gold answer index. Class quotas are `fraction · n_c` rounded down, with
/// the leftover slots going to the largest remainders (ties: lower answer
/// index). The result is sorted.
pub fn sample_fraction(items: &[QaItem], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("data fraction must be in (0, 1], got {fraction}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(item.answer_index).or_default().push(i);
    }
    let total = (fraction * items.len() as f64 + 1e-9).floor() as usize;
    let mut quotas: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&c, members)| {
            let exact = fraction * members.len() as f64;
            let base = (exact + 1e-9).floor() as usize;
            (c, base.min(members.len()), exact - base as f64)
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(quotas[a].0.cmp(&quotas[b].0)));
    for &slot in order.iter().cycle().take(order.len() * 2) {
        if assigned >= total {
            break;
        }
        if quotas[slot].1 < by_class[&quotas[slot].0].len() {
            quotas[slot].1 += 1;
            assigned += 1;
        }
    }
    let mut rng = rng::stream(seed, "sample");
    let mut chosen = Vec::with_capacity(total);
    for (class, quota, _) in quotas {
        let mut members = by_class[&class].clone();
        members.shuffle(&mut rng);
        chosen.extend(members.into_iter().take(quota));
    }
    chosen.sort_unstable();
    Ok(chosen)
}
