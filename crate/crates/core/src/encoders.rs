//! The three per-choice representations: a text vector `t`, an
//! attention-pooled graph vector `g` over GCN node states, and an external
//! knowledge vector `𝒢 = e : r` from attention over the full entity and
//! relation tables.
//!
//! Each encoder has a parameter struct, a `bind` that places those
//! parameters on a [`Tape`], and a tape-level forward. Value-level helpers
//! (`encode_text`, `gcn_forward`, ...) run a single forward on a fresh tape.

use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::{gumbel_softmax, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::kg::EmbeddingTable;
use crate::nli::NliPair;
use crate::subgraph::Subgraph;
use crate::text::tokenize;

pub const UNK: &str = "[UNK]";
pub const SEP: &str = "[SEP]";
pub const UNK_ID: usize = 0;
pub const SEP_ID: usize = 1;

/// Token vocabulary with reserved `[UNK]` (0) and `[SEP]` (1) entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocab {
    /// Reserved entries first, then `tokens` in first-seen order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [UNK, SEP] {
            v.insert(t);
        }
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    fn insert(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len());
            self.tokens.push(token.to_string());
        }
    }

    /// Vocabulary over every token of the given pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a NliPair>) -> Self {
        let mut v = Vocab::default();
        for p in pairs {
            for t in tokenize(&p.premise).iter().chain(&tokenize(&p.hypothesis)) {
                v.insert(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Ids of `premise [SEP] hypothesis`.
    pub fn pair_ids(&self, pair: &NliPair) -> Result<Vec<usize>> {
        let hyp = tokenize(&pair.hypothesis);
        if hyp.is_empty() {
            return Err(Error::Invalid(format!(
                "choice {} has an empty hypothesis",
                pair.choice_index
            )));
        }
        let mut ids: Vec<usize> = tokenize(&pair.premise).iter().map(|t| self.id(t)).collect();
        ids.push(SEP_ID);
        ids.extend(hyp.iter().map(|t| self.id(t)));
        Ok(ids)
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::randn(rows, cols, (2.0 / (rows + cols) as f64).sqrt(), rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextEncoderParams {
    pub token_embedding: Tensor,
    pub projection: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundText {
    pub token_embedding: Var,
    pub projection: Var,
    pub bias: Var,
}

impl TextEncoderParams {
    pub fn init<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        TextEncoderParams {
            token_embedding: Tensor::randn(vocab_size, dim, 1.0 / (dim as f64).sqrt(), rng),
            projection: glorot(dim, dim, rng),
            bias: Tensor::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundText {
        BoundText {
            token_embedding: tape.leaf(self.token_embedding.clone(), trainable),
            projection: tape.leaf(self.projection.clone(), trainable),
            bias: tape.leaf(self.bias.clone(), trainable),
        }
    }
}

/// `t = relu(mean(embeddings) · P + b)` over the given token ids.
pub fn text_forward(tape: &mut Tape, p: &BoundText, ids: &[usize]) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::Invalid("text encoder needs at least one token".into()));
    }
    let rows = tape.gather_rows(p.token_embedding, ids)?;
    let pooled = tape.mean_rows(rows)?;
    let projected = tape.matmul(pooled, p.projection)?;
    let shifted = tape.add(projected, p.bias)?;
    Ok(tape.relu(shifted))
}

pub fn encode_text(pair: &NliPair, vocab: &Vocab, params: &TextEncoderParams) -> Result<Tensor> {
    let ids = vocab.pair_ids(pair)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let t = text_forward(&mut tape, &bound, &ids)?;
    Ok(tape.value(t).clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    /// `W^ℓ`, each `in × out`.
    pub layers: Vec<Tensor>,
}

impl GcnParams {
    /// `node_dim → dim → … → dim` with `num_layers` weight matrices.
    pub fn init<R: Rng + ?Sized>(node_dim: usize, dim: usize, num_layers: usize, rng: &mut R) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Config("GCN needs at least one layer".into()));
        }
        let layers = (0..num_layers)
            .map(|l| glorot(if l == 0 { node_dim } else { dim }, dim, rng))
            .collect();
        Ok(GcnParams { layers })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.layers.iter().map(|w| tape.leaf(w.clone(), trainable)).collect()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Tensor::cols)
    }
}

/// `H^{ℓ+1} = σ(Â H^ℓ W^ℓ)` with ReLU between layers and identity after the
/// last. `a_norm` is `N × N`, `h0` is `N × node_dim`.
pub fn gcn_layers(tape: &mut Tape, a_norm: Var, h0: Var, layers: &[Var]) -> Result<Var> {
    let mut h = h0;
    for (l, &w) in layers.iter().enumerate() {
        let (hr, hc) = tape.value(h).shape();
        let (wr, _) = tape.value(w).shape();
        if hc != wr {
            return Err(Error::shape(
                "gcn_forward",
                format!("layer {l}: features {hr}x{hc} vs weights with {wr} rows"),
            ));
        }
        let hw = tape.matmul(h, w)?;
        let mixed = tape.matmul(a_norm, hw)?;
        h = if l + 1 < layers.len() { tape.relu(mixed) } else { mixed };
    }
    Ok(h)
}

/// Node features of `sub.nodes`, gathered from `features`.
pub fn subgraph_features(sub: &Subgraph, features: &EmbeddingTable) -> Result<Tensor> {
    features.as_tensor().gather_rows(&sub.nodes)
}

/// GCN output `G ∈ R^{N×D}` for a subgraph.
pub fn gcn_forward(sub: &Subgraph, features: &Tensor, params: &GcnParams) -> Result<Tensor> {
    if features.rows() != sub.len() {
        return Err(Error::shape(
            "gcn_forward",
            format!("{} feature rows for {} nodes", features.rows(), sub.len()),
        ));
    }
    let mut tape = Tape::new();
    let a = tape.constant(sub.normalized.clone());
    let h0 = tape.constant(features.clone());
    let layers = params.bind(&mut tape, false);
    let g = gcn_layers(&mut tape, a, h0, &layers)?;
    Ok(tape.value(g).clone())
}

/// Attention read-out: `α = softmax(t · G_kᵀ)`, `g = Σ_k α_k G_k`.
/// Returns `(g, α)`.
pub fn attention_pool(tape: &mut Tape, nodes: Var, query: Var) -> Result<(Var, Var)> {
    let (n, d) = tape.value(nodes).shape();
    if n == 0 {
        return Err(Error::Invalid("attention pooling over an empty subgraph".into()));
    }
    if tape.value(query).shape() != (1, d) {
        return Err(Error::shape(
            "graph_attention_pool",
            format!("query {:?} vs node dim {d}", tape.value(query).shape()),
        ));
    }
    let nodes_t = tape.transpose(nodes);
    let scores = tape.matmul(query, nodes_t)?;
    let alpha = tape.row_softmax(scores)?;
    let pooled = tape.matmul(alpha, nodes)?;
    Ok((pooled, alpha))
}

pub fn graph_attention_pool(g: &Tensor, t: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let nodes = tape.constant(g.clone());
    let query = tape.constant(t.clone());
    let (pooled, alpha) = attention_pool(&mut tape, nodes, query)?;
    Ok((tape.value(pooled).clone(), tape.value(alpha).clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMode {
    /// Gumbel-softmax over entities.
    Train,
    /// Plain softmax over entities.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErAttentionParams {
    /// Fixed `|E| × d_kg` entity table.
    pub entity_table: Tensor,
    /// Fixed `|R| × d_kg` relation table.
    pub relation_table: Tensor,
    /// Trainable `d_kg × d` projections into the text space.
    pub entity_proj: Tensor,
    pub relation_proj: Tensor,
}

impl ErAttentionParams {
    pub fn init<R: Rng + ?Sized>(
        entities: &EmbeddingTable,
        relations: &EmbeddingTable,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if entities.is_empty() || relations.is_empty() {
            return Err(Error::Empty("entity/relation tables must be non-empty".into()));
        }
        Ok(ErAttentionParams {
            entity_table: entities.as_tensor().clone(),
            relation_table: relations.as_tensor().clone(),
            entity_proj: glorot(entities.dim(), dim, rng),
            relation_proj: glorot(relations.dim(), dim, rng),
        })
    }

    /// Projected tables `E·P_e` and `R·P_r` on the tape; compute once per
    /// tape and share across choices.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundEr> {
        let e = tape.constant(self.entity_table.clone());
        let r = tape.constant(self.relation_table.clone());
        let entity_proj = tape.leaf(self.entity_proj.clone(), trainable);
        let relation_proj = tape.leaf(self.relation_proj.clone(), trainable);
        let entities = tape.matmul(e, entity_proj)?;
        let relations = tape.matmul(r, relation_proj)?;
        let entities_t = tape.transpose(entities);
        let relations_t = tape.transpose(relations);
        Ok(BoundEr {
            entity_proj,
            relation_proj,
            entities,
            relations,
            entities_t,
            relations_t,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundEr {
    pub entity_proj: Var,
    pub relation_proj: Var,
    entities: Var,
    relations: Var,
    entities_t: Var,
    relations_t: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ErOutput {
    /// `𝒢 = e : r`, `1 × 2d`.
    pub vector: Var,
    pub entity_weights: Var,
    pub relation_weights: Var,
}

/// Entity weights come from Gumbel-softmax in train mode and softmax in
/// eval mode; relation weights always from softmax.
pub fn er_attention_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    er: &BoundEr,
    t: Var,
    temperature: f64,
    mode: AttentionMode,
    rng: &mut R,
) -> Result<ErOutput> {
    let entity_scores = tape.matmul(t, er.entities_t)?;
    let entity_weights = match mode {
        AttentionMode::Train => gumbel_softmax(tape, entity_scores, temperature, rng)?,
        AttentionMode::Eval => tape.row_softmax(entity_scores)?,
    };
    let relation_scores = tape.matmul(t, er.relations_t)?;
    let relation_weights = tape.row_softmax(relation_scores)?;
    let e = tape.matmul(entity_weights, er.entities)?;
    let r = tape.matmul(relation_weights, er.relations)?;
    let vector = tape.concat(&[e, r])?;
    Ok(ErOutput {
        vector,
        entity_weights,
        relation_weights,
    })
}

/// Value-level ER attention; returns `(𝒢, entity weights, relation weights)`.
pub fn er_attention<R: Rng + ?Sized>(
    t: &Tensor,
    params: &ErAttentionParams,
    temperature: f64,
    mode: AttentionMode,
    rng: &mut R,
) -> Result<(Tensor, Tensor, Tensor)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false)?;
    let t = tape.constant(t.clone());
    let out = er_attention_forward(&mut tape, &bound, t, temperature, mode, rng)?;
    Ok((
        tape.value(out.vector).clone(),
        tape.value(out.entity_weights).clone(),
        tape.value(out.relation_weights).clone(),
    ))
}
