//! Concept linking, bounded depth-first path search between linked concepts,
//! and the symmetric-normalized adjacency the graph encoder consumes.

use std::collections::{HashMap, HashSet};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::nli::NliPair;
use crate::text::tokenize;

pub const DEFAULT_MAX_PATH_LEN: usize = 2;
pub const DEFAULT_MAX_NODES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MentionSource {
    Premise,
    Hypothesis,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptMention {
    pub entity: EntityId,
    /// Half-open token range `[start, end)` in the tokenized text.
    pub span: (usize, usize),
    pub source: MentionSource,
}

/// Exact-match lookup from tokenized entity labels to ids.
#[derive(Clone, Debug)]
pub struct ConceptMatcher {
    labels: HashMap<String, EntityId>,
    max_label_len: usize,
}

impl ConceptMatcher {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let mut labels = HashMap::new();
        let mut max_label_len = 0;
        for (id, label) in graph.entity_labels().iter().enumerate() {
            let tokens = tokenize(label);
            if tokens.is_empty() {
                continue;
            }
            max_label_len = max_label_len.max(tokens.len());
            labels.entry(tokens.join(" ")).or_insert(id);
        }
        ConceptMatcher {
            labels,
            max_label_len,
        }
    }

    /// Greedy left-to-right scan; at each position the longest matching
    /// n-gram wins and the scan resumes after it.
    pub fn identify(&self, text: &str, source: MentionSource) -> Vec<ConceptMention> {
        let tokens = tokenize(text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_label_len.min(tokens.len() - i);
            let hit = (1..=longest).rev().find_map(|n| {
                self.labels
                    .get(&tokens[i..i + n].join(" "))
                    .map(|&entity| (entity, n))
            });
            match hit {
                Some((entity, n)) => {
                    out.push(ConceptMention {
                        entity,
                        span: (i, i + n),
                        source,
                    });
                    i += n;
                }
                None => i += 1,
            }
        }
        out
    }

    /// Hypothesis mentions first, then premise mentions.
    pub fn identify_pair(&self, pair: &NliPair) -> Vec<ConceptMention> {
        let mut out = self.identify(&pair.hypothesis, MentionSource::Hypothesis);
        out.extend(self.identify(&pair.premise, MentionSource::Premise));
        out
    }
}

/// Convenience wrapper that builds a matcher for a single call.
pub fn identify_concepts(text: &str, graph: &KnowledgeGraph) -> Vec<ConceptMention> {
    ConceptMatcher::new(graph).identify(text, MentionSource::Hypothesis)
}

/// Distinct mention entities in first-seen order.
pub fn seed_entities(mentions: &[ConceptMention]) -> Vec<EntityId> {
    let mut seen = HashSet::new();
    mentions
        .iter()
        .map(|m| m.entity)
        .filter(|e| seen.insert(*e))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    /// Seeds first (in priority order), then path nodes as they were added.
    pub nodes: Vec<EntityId>,
    /// `(i, j, relation)` over node indices with `i < j`, one per KG triple
    /// between included nodes.
    pub edges: Vec<(usize, usize, RelationId)>,
    /// The connecting paths the search selected, as entity sequences.
    pub paths: Vec<Vec<EntityId>>,
    /// `C`: symmetric 0/1, zero diagonal.
    pub adjacency: Tensor,
    /// `C + I`.
    pub adjacency_hat: Tensor,
    /// `D̂^{-1/2} (C + I) D̂^{-1/2}`.
    pub normalized: Tensor,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn empty() -> Self {
        Subgraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            paths: Vec::new(),
            adjacency: Tensor::zeros(0, 0),
            adjacency_hat: Tensor::zeros(0, 0),
            normalized: Tensor::zeros(0, 0),
        }
    }

    /// Induced subgraph over `nodes` with every KG edge among them.
    pub fn induced(graph: &KnowledgeGraph, nodes: Vec<EntityId>, paths: Vec<Vec<EntityId>>) -> Result<Self> {
        let n = nodes.len();
        let position: HashMap<EntityId, usize> = nodes.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut edges = Vec::new();
        let mut c = Tensor::zeros(n, n);
        for (i, &e) in nodes.iter().enumerate() {
            for nb in graph.neighbors(e)? {
                let Some(&j) = position.get(&nb.entity) else { continue };
                c.set(i, j, 1.0);
                c.set(j, i, 1.0);
                // Each triple is seen from both endpoints; keep the head's view.
                if nb.direction == crate::kg::Direction::Outgoing {
                    edges.push((i.min(j), i.max(j), nb.relation));
                }
            }
        }
        edges.sort_unstable();
        let mut c_hat = c.clone();
        for i in 0..n {
            c_hat.set(i, i, 1.0);
        }
        let normalized = normalize_adjacency(&c)?;
        Ok(Subgraph {
            nodes,
            edges,
            paths,
            adjacency: c,
            adjacency_hat: c_hat,
            normalized,
        })
    }
}

/// Connects every unordered seed pair with the first depth-first path of
/// at most `max_path_len` edges. Pairs are visited as `(0,1), (0,2), (1,2),
/// (0,3), …`, so each seed is linked to all higher-priority seeds before the
/// next one is considered. Neighbors are explored in ascending id order and
/// a direct edge to the target is taken as soon as it is available. A path
/// is added only if its new nodes fit in `max_nodes`.
pub fn connect_concepts(
    graph: &KnowledgeGraph,
    seeds: &[EntityId],
    max_path_len: usize,
    max_nodes: usize,
) -> Result<Subgraph> {
    let seeds = checked_seeds(graph, seeds, max_path_len)?;
    if max_nodes < seeds.len() {
        return Err(Error::Config(format!(
            "max_nodes {max_nodes} is smaller than the {} seeds",
            seeds.len()
        )));
    }
    let mut growth = Growth::new(graph, max_path_len, max_nodes);
    for &s in &seeds {
        growth.admit(s);
    }
    for j in 1..seeds.len() {
        for i in 0..j {
            growth.connect(seeds[i], seeds[j]);
        }
    }
    growth.finish()
}

fn checked_seeds(graph: &KnowledgeGraph, seeds: &[EntityId], max_path_len: usize) -> Result<Vec<EntityId>> {
    if max_path_len == 0 {
        return Err(Error::Config("max_path_len must be at least 1".into()));
    }
    for &s in seeds {
        if s >= graph.num_entities() {
            return Err(Error::UnknownId { kind: "entity", id: s });
        }
    }
    let mut seen = HashSet::new();
    Ok(seeds.iter().copied().filter(|s| seen.insert(*s)).collect())
}

struct Growth<'a> {
    graph: &'a KnowledgeGraph,
    max_path_len: usize,
    max_nodes: usize,
    seen: HashSet<EntityId>,
    nodes: Vec<EntityId>,
    paths: Vec<Vec<EntityId>>,
}

impl<'a> Growth<'a> {
    fn new(graph: &'a KnowledgeGraph, max_path_len: usize, max_nodes: usize) -> Self {
        Growth {
            graph,
            max_path_len,
            max_nodes,
            seen: HashSet::new(),
            nodes: Vec::new(),
            paths: Vec::new(),
        }
    }

    fn full(&self) -> bool {
        self.nodes.len() >= self.max_nodes
    }

    fn admit(&mut self, e: EntityId) {
        if self.seen.insert(e) {
            self.nodes.push(e);
        }
    }

    fn connect(&mut self, a: EntityId, b: EntityId) {
        let Some(path) = dfs_path(self.graph, a, b, self.max_path_len) else { return };
        let fresh = path.iter().filter(|e| !self.seen.contains(e)).count();
        if self.nodes.len() + fresh > self.max_nodes {
            return;
        }
        for &e in &path {
            self.admit(e);
        }
        self.paths.push(path);
    }

    fn finish(self) -> Result<Subgraph> {
        Subgraph::induced(self.graph, self.nodes, self.paths)
    }
}

/// First simple path from `from` to `to` with at most `max_len` edges.
pub fn dfs_path(graph: &KnowledgeGraph, from: EntityId, to: EntityId, max_len: usize) -> Option<Vec<EntityId>> {
    fn go(
        graph: &KnowledgeGraph,
        to: EntityId,
        budget: usize,
        path: &mut Vec<EntityId>,
    ) -> bool {
        let here = *path.last().expect("non-empty path");
        let neighbors = graph.neighbors(here).unwrap_or(&[]);
        if neighbors.iter().any(|n| n.entity == to) {
            path.push(to);
            return true;
        }
        if budget <= 1 {
            return false;
        }
        let mut last = None;
        for n in neighbors {
            if last == Some(n.entity) || path.contains(&n.entity) {
                continue;
            }
            last = Some(n.entity);
            path.push(n.entity);
            if go(graph, to, budget - 1, path) {
                return true;
            }
            path.pop();
        }
        false
    }

    if from == to || max_len == 0 {
        return None;
    }
    let mut path = vec![from];
    go(graph, to, max_len, &mut path).then_some(path)
}

/// `D̂^{-1/2} (C + I) D̂^{-1/2}` for a symmetric 0/1 adjacency with zero
/// diagonal; `D̂` is the degree matrix of `C + I`.
pub fn normalize_adjacency(c: &Tensor) -> Result<Tensor> {
    let n = c.rows();
    if c.cols() != n {
        return Err(Error::shape("normalize_adjacency", format!("{:?} is not square", c.shape())));
    }
    for i in 0..n {
        if c.get(i, i) != 0.0 {
            return Err(Error::Invalid(format!("adjacency has a self-loop at {i}")));
        }
        for j in 0..n {
            let v = c.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(Error::Invalid(format!("adjacency entry ({i},{j}) = {v} is not 0/1")));
            }
            if v != c.get(j, i) {
                return Err(Error::Invalid(format!("adjacency is asymmetric at ({i},{j})")));
            }
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (1.0 + c.row(i).iter().sum::<f64>()).sqrt())
        .collect();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let hat = if i == j { 1.0 } else { c.get(i, j) };
            if hat != 0.0 {
                out.set(i, j, inv_sqrt[i] * hat * inv_sqrt[j]);
            }
        }
    }
    Ok(out)
}

/// Settings for turning a premise/hypothesis pair into a subgraph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubgraphConfig {
    pub max_path_len: usize,
    pub max_nodes: usize,
}

impl Default for SubgraphConfig {
    fn default() -> Self {
        SubgraphConfig {
            max_path_len: DEFAULT_MAX_PATH_LEN,
            max_nodes: DEFAULT_MAX_NODES,
        }
    }
}

/// Links concepts in `pair` and connects them. Seeds are admitted one at a
/// time in priority order (hypothesis mentions first), each followed by its
/// paths to the seeds admitted before it; a seed that no longer fits the
/// budget is dropped. Only the mentions of admitted seeds are returned, so
/// every returned mention is a subgraph node.
pub fn extract(
    graph: &KnowledgeGraph,
    matcher: &ConceptMatcher,
    pair: &NliPair,
    config: SubgraphConfig,
) -> Result<(Vec<ConceptMention>, Subgraph)> {
    if config.max_nodes == 0 {
        return Err(Error::Config("max_nodes must be at least 1".into()));
    }
    let mentions = matcher.identify_pair(pair);
    let seeds = checked_seeds(graph, &seed_entities(&mentions), config.max_path_len)?;
    let mut growth = Growth::new(graph, config.max_path_len, config.max_nodes);
    let mut admitted: Vec<EntityId> = Vec::new();
    for &s in &seeds {
        if !growth.seen.contains(&s) {
            if growth.full() {
                continue;
            }
            growth.admit(s);
        }
        for &a in &admitted {
            growth.connect(a, s);
        }
        admitted.push(s);
    }
    let kept: HashSet<EntityId> = admitted.iter().copied().collect();
    let mentions = mentions.into_iter().filter(|m| kept.contains(&m.entity)).collect();
    Ok((mentions, growth.finish()?))
}
