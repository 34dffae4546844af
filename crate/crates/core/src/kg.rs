//! Triple store standing in for a large commonsense graph: loading,
//! neighbor indexing, and locally trained entity/relation embeddings.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng;
use crate::text::normalize_label;

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// The queried entity is the head of the triple.
    Outgoing,
    /// The queried entity is the tail of the triple.
    Inverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Neighbor {
    pub entity: EntityId,
    pub relation: RelationId,
    pub direction: Direction,
}

/// Counts gathered while loading a triple file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub duplicates: usize,
    pub self_loops: usize,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    adjacency: Vec<Vec<Neighbor>>,
    report: LoadReport,
}

impl KnowledgeGraph {
    /// Builds a graph from `(head, relation, tail)` labels. Entity labels are
    /// normalized; duplicate triples and self-loops are dropped and counted.
    pub fn from_labeled<'a, I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut g = KnowledgeGraph {
            entities: Vec::new(),
            entity_index: HashMap::new(),
            relations: Vec::new(),
            relation_index: HashMap::new(),
            triples: Vec::new(),
            adjacency: Vec::new(),
            report: LoadReport::default(),
        };
        let mut seen = HashSet::new();
        for (h, r, t) in triples {
            g.report.lines += 1;
            let head = g.intern_entity(normalize_label(h));
            let tail = g.intern_entity(normalize_label(t));
            if head == tail {
                g.report.self_loops += 1;
                continue;
            }
            let relation = g.intern_relation(r.trim());
            let triple = Triple {
                head,
                relation,
                tail,
            };
            if seen.insert(triple) {
                g.triples.push(triple);
            } else {
                g.report.duplicates += 1;
            }
        }
        if g.triples.is_empty() {
            return Err(Error::Empty("knowledge graph has no triples".into()));
        }
        g.adjacency = vec![Vec::new(); g.entities.len()];
        for tr in &g.triples {
            g.adjacency[tr.head].push(Neighbor {
                entity: tr.tail,
                relation: tr.relation,
                direction: Direction::Outgoing,
            });
            g.adjacency[tr.tail].push(Neighbor {
                entity: tr.head,
                relation: tr.relation,
                direction: Direction::Inverse,
            });
        }
        for list in &mut g.adjacency {
            list.sort();
        }
        Ok(g)
    }

    fn intern_entity(&mut self, label: String) -> EntityId {
        if let Some(&id) = self.entity_index.get(&label) {
            return id;
        }
        let id = self.entities.len();
        self.entity_index.insert(label.clone(), id);
        self.entities.push(label);
        id
    }

    fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(name) {
            return id;
        }
        let id = self.relations.len();
        self.relation_index.insert(name.to_string(), id);
        self.relations.push(name.to_string());
        id
    }

    /// Parses `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
    pub fn parse_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |message: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            if fields.len() != 3 {
                return Err(bad(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err(bad("empty field".into()));
            }
            rows.push((fields[0], fields[1], fields[2]));
        }
        if rows.is_empty() {
            return Err(Error::Empty(format!("{origin}: no triples")));
        }
        Self::from_labeled(rows)
    }

    pub fn load_triples(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g = Self::parse_tsv(&text, &path.display().to_string())?;
        log::info!(
            "loaded {}: {} entities, {} relations, {} triples ({} duplicates, {} self-loops dropped)",
            path.display(),
            g.num_entities(),
            g.num_relations(),
            g.triples.len(),
            g.report.duplicates,
            g.report.self_loops
        );
        Ok(g)
    }

    pub fn report(&self) -> &LoadReport {
        &self.report
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_label(&self, id: EntityId) -> Option<&str> {
        self.entities.get(id).map(String::as_str)
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entities
    }

    pub fn relation_name(&self, id: RelationId) -> Option<&str> {
        self.relations.get(id).map(String::as_str)
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations
    }

    /// Looks an entity up by label (normalized before matching).
    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_index.get(&normalize_label(label)).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name.trim()).copied()
    }

    /// Neighbors in ascending (entity, relation) order, both directions.
    pub fn neighbors(&self, entity: EntityId) -> Result<&[Neighbor]> {
        self.adjacency
            .get(entity)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownId {
                kind: "entity",
                id: entity,
            })
    }

    /// True if some triple links `a` and `b` in either direction.
    pub fn connected(&self, a: EntityId, b: EntityId) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|ns| ns.iter().any(|n| n.entity == b))
    }

    /// Serializes back to the TSV format (one line per stored triple).
    pub fn to_tsv(&self) -> String {
        self.triples
            .iter()
            .map(|t| {
                format!(
                    "{}\t{}\t{}\n",
                    self.entities[t.head], self.relations[t.relation], self.entities[t.tail]
                )
            })
            .collect()
    }
}

/// One `dim`-length vector per vocabulary id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vectors: Tensor,
}

impl EmbeddingTable {
    pub fn new(vectors: Tensor) -> Result<Self> {
        if vectors.cols() == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if !vectors.is_finite() {
            return Err(Error::Invalid("embedding table has non-finite values".into()));
        }
        Ok(EmbeddingTable { vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.vectors
    }

    pub fn into_tensor(self) -> Tensor {
        self.vectors
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgEmbeddingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub margin: f64,
}

impl Default for KgEmbeddingConfig {
    fn default() -> Self {
        KgEmbeddingConfig {
            dim: 16,
            epochs: 100,
            seed: 0,
            lr: 0.05,
            margin: 1.0,
        }
    }
}

/// Bilinear-diagonal triple score `Σ_k e_h[k] · r[k] · e_t[k]`.
pub fn triple_score(
    entities: &EmbeddingTable,
    relations: &EmbeddingTable,
    head: EntityId,
    relation: RelationId,
    tail: EntityId,
) -> f64 {
    let (h, r, t) = (
        entities.vector(head),
        relations.vector(relation),
        entities.vector(tail),
    );
    h.iter().zip(r).zip(t).map(|((a, b), c)| a * b * c).sum()
}

/// Trains entity and relation vectors with a margin ranking loss against
/// uniformly corrupted triples (head or tail replaced), plain SGD, and
/// entity vectors projected back into the unit ball after each update.
pub fn train_kg_embeddings(
    graph: &KnowledgeGraph,
    config: &KgEmbeddingConfig,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    if config.dim < 2 {
        return Err(Error::Config(format!(
            "embedding dimension must be at least 2, got {}",
            config.dim
        )));
    }
    if graph.triples.is_empty() {
        return Err(Error::Empty("knowledge graph has no triples".into()));
    }
    let dim = config.dim;
    let n_ent = graph.num_entities();
    let mut init = rng::stream(config.seed, "kg-embedding-init");
    let std = 1.0 / (dim as f64).sqrt();
    let mut ent = Tensor::randn(n_ent, dim, std, &mut init);
    let mut rel = Tensor::randn(graph.num_relations(), dim, std, &mut init);
    for e in 0..n_ent {
        project_unit_ball(ent.row_mut(e));
    }

    let mut rng = rng::stream(config.seed, "kg-embedding-train");
    let mut order: Vec<usize> = (0..graph.triples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let pos = graph.triples[i];
            let neg = corrupt(pos, n_ent, &mut rng);
            let s_pos = score_raw(&ent, &rel, pos);
            let s_neg = score_raw(&ent, &rel, neg);
            if config.margin - s_pos + s_neg <= 0.0 {
                continue;
            }
            sgd_triple(&mut ent, &mut rel, pos, config.lr);
            sgd_triple(&mut ent, &mut rel, neg, -config.lr);
            for e in [pos.head, pos.tail, neg.head, neg.tail] {
                project_unit_ball(ent.row_mut(e));
            }
        }
    }
    Ok((EmbeddingTable::new(ent)?, EmbeddingTable::new(rel)?))
}

fn corrupt<R: Rng>(t: Triple, n_ent: usize, rng: &mut R) -> Triple {
    let replace_head = rng.random_bool(0.5);
    let current = if replace_head { t.head } else { t.tail };
    let mut other = rng.random_range(0..n_ent.max(2) - 1);
    if other >= current {
        other += 1;
    }
    let other = other.min(n_ent - 1);
    if replace_head {
        Triple { head: other, ..t }
    } else {
        Triple { tail: other, ..t }
    }
}

fn score_raw(ent: &Tensor, rel: &Tensor, t: Triple) -> f64 {
    let (h, r, tl) = (ent.row(t.head), rel.row(t.relation), ent.row(t.tail));
    h.iter().zip(r).zip(tl).map(|((a, b), c)| a * b * c).sum()
}

/// Moves the triple's vectors by `step` times the score gradient.
fn sgd_triple(ent: &mut Tensor, rel: &mut Tensor, t: Triple, step: f64) {
    let h = ent.row(t.head).to_vec();
    let r = rel.row(t.relation).to_vec();
    let tl = ent.row(t.tail).to_vec();
    for k in 0..h.len() {
        ent.row_mut(t.head)[k] += step * r[k] * tl[k];
        rel.row_mut(t.relation)[k] += step * h[k] * tl[k];
        ent.row_mut(t.tail)[k] += step * h[k] * r[k];
    }
}

fn project_unit_ball(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Reads `token v1 v2 ... vd` lines. All vectors must share one dimension.
pub fn read_embedding_text(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_text(&text, &path.display().to_string())
}

pub fn parse_embedding_text(text: &str, origin: &str) -> Result<HashMap<String, Vec<f64>>> {
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let bad = |message: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad number {f:?}"))))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(bad("token without values".into()));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(bad(format!("expected {d} values, found {}", values.len())))
            }
            _ => {}
        }
        out.insert(normalize_label(token), values);
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("{origin}: no embeddings")));
    }
    Ok(out)
}

/// Writes a table in the `label v1 ... vd` format. Spaces inside labels are
/// written as underscores so each line stays whitespace-delimited.
pub fn write_embedding_text(path: &Path, labels: &[String], table: &EmbeddingTable) -> Result<()> {
    let mut out = String::new();
    for (id, label) in labels.iter().enumerate() {
        out.push_str(&label.replace(' ', "_"));
        for v in table.vector(id) {
            out.push(' ');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Node-feature table for the graph encoder: a seeded Gaussian table of
/// `dim` columns (rows scaled to roughly unit norm). Entities present in
/// `overrides` take that vector instead.
pub fn node_feature_table(
    graph: &KnowledgeGraph,
    dim: usize,
    seed: u64,
    overrides: Option<&HashMap<String, Vec<f64>>>,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("node feature dimension must be positive".into()));
    }
    let mut rng = rng::stream(seed, "node-features");
    let mut table = Tensor::randn(graph.num_entities(), dim, 1.0 / (dim as f64).sqrt(), &mut rng);
    if let Some(map) = overrides {
        for (id, label) in graph.entities.iter().enumerate() {
            if let Some(v) = map.get(label) {
                if v.len() != dim {
                    return Err(Error::Config(format!(
                        "node feature override for {label:?} has {} values, expected {dim}",
                        v.len()
                    )));
                }
                table.row_mut(id).copy_from_slice(v);
            }
        }
    }
    EmbeddingTable::new(table)
}
