use rand::Rng;

use super::config::{Mode, TrainConfig};
use super::data::Example;
use crate::autodiff::{log_sum_exp, softmax, Checkpoint, Tape, Tensor, Var};
use crate::encoders::{
    attention_pool, er_attention_forward, gcn_layers, text_forward, AttentionMode, BoundEr, BoundText,
    ErAttentionParams, GcnParams, TextEncoderParams, Vocab,
};
use crate::error::{Error, Result};
use crate::kg::{EmbeddingTable, EntityId};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Text,
    Graph,
    Knowledge,
    Classifier,
}

/// Every parameter of the scorer plus the fixed tables it reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub vocab: Vocab,
    pub text: TextEncoderParams,
    pub gcn: GcnParams,
    pub er: ErAttentionParams,
    /// `4d × 1`; scores `t : g : 𝒢`.
    pub classifier: Tensor,
    /// Fixed GCN input features, one row per entity.
    pub node_features: EmbeddingTable,
}

impl ModelParams {
    pub fn init(
        vocab: Vocab,
        entities: &EmbeddingTable,
        relations: &EmbeddingTable,
        node_features: EmbeddingTable,
        config: &TrainConfig,
    ) -> Result<Self> {
        let d = config.dim;
        let text = TextEncoderParams::init(vocab.len(), d, &mut rng::stream(config.seed, "init-text"));
        let gcn = GcnParams::init(
            node_features.dim(),
            d,
            config.gcn_layers,
            &mut rng::stream(config.seed, "init-graph"),
        )?;
        let er = ErAttentionParams::init(entities, relations, d, &mut rng::stream(config.seed, "init-er"))?;
        let classifier = Tensor::randn(4 * d, 1, 0.05, &mut rng::stream(config.seed, "init-cls"));
        Ok(ModelParams {
            vocab,
            text,
            gcn,
            er,
            classifier,
            node_features,
        })
    }

    pub fn dim(&self) -> usize {
        self.text.dim()
    }

    /// Names and groups of the trainable tensors, in optimizer order.
    pub fn param_names(&self) -> Vec<(String, ParamGroup)> {
        let mut out = vec![
            ("text.embedding".to_string(), ParamGroup::Text),
            ("text.projection".to_string(), ParamGroup::Text),
            ("text.bias".to_string(), ParamGroup::Text),
        ];
        for l in 0..self.gcn.layers.len() {
            out.push((format!("gcn.{l}"), ParamGroup::Graph));
        }
        out.push(("er.entity_proj".to_string(), ParamGroup::Knowledge));
        out.push(("er.relation_proj".to_string(), ParamGroup::Knowledge));
        out.push(("classifier".to_string(), ParamGroup::Classifier));
        out
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.text.token_embedding, &self.text.projection, &self.text.bias];
        out.extend(self.gcn.layers.iter());
        out.extend([&self.er.entity_proj, &self.er.relation_proj, &self.classifier]);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.text.token_embedding,
            &mut self.text.projection,
            &mut self.text.bias,
        ];
        out.extend(self.gcn.layers.iter_mut());
        out.extend([&mut self.er.entity_proj, &mut self.er.relation_proj, &mut self.classifier]);
        out
    }

    /// Places the parameters on `tape`. Parts a configuration never reads
    /// are left off; `freeze_text` binds the text encoder as constants.
    pub fn bind(&self, tape: &mut Tape, config: &TrainConfig, freeze_text: bool, trainable: bool) -> Result<BoundModel> {
        let (use_gcn, use_er) = config.knowledge();
        let text = self.text.bind(tape, trainable && !freeze_text);
        let gcn = if use_gcn { self.gcn.bind(tape, trainable) } else { Vec::new() };
        let er = if use_er { Some(self.er.bind(tape, trainable)?) } else { None };
        let classifier = tape.leaf(self.classifier.clone(), trainable);

        let mut slots = Vec::new();
        let text_slot = |v: Var| (trainable && !freeze_text).then_some(v);
        slots.extend([
            text_slot(text.token_embedding),
            text_slot(text.projection),
            text_slot(text.bias),
        ]);
        for l in 0..self.gcn.layers.len() {
            slots.push(if trainable { gcn.get(l).copied() } else { None });
        }
        slots.push(er.filter(|_| trainable).map(|e| e.entity_proj));
        slots.push(er.filter(|_| trainable).map(|e| e.relation_proj));
        slots.push(trainable.then_some(classifier));
        Ok(BoundModel {
            text,
            gcn,
            er,
            classifier,
            slots,
        })
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (k, v) in config.entries() {
            ck.meta.insert(k.to_string(), v);
        }
        ck.meta.insert("gcn_layer_count".into(), self.gcn.layers.len().to_string());
        ck.lists.push(("vocab".into(), self.vocab.tokens().to_vec()));
        for ((name, _), t) in self.param_names().into_iter().zip(self.trainable()) {
            ck.tensors.push((name, t.clone()));
        }
        ck.tensors.push(("er.entity_table".into(), self.er.entity_table.clone()));
        ck.tensors.push(("er.relation_table".into(), self.er.relation_table.clone()));
        ck.tensors.push(("node_features".into(), self.node_features.as_tensor().clone()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, TrainConfig)> {
        let mut config = TrainConfig::default();
        for (k, v) in &ck.meta {
            if TrainConfig::KEYS.contains(&k.as_str()) {
                config.set(k, v)?;
            }
        }
        let layers: usize = ck
            .meta
            .get("gcn_layer_count")
            .ok_or_else(|| Error::Invalid("checkpoint is missing gcn_layer_count".into()))?
            .parse()
            .map_err(|_| Error::Invalid("bad gcn_layer_count in checkpoint".into()))?;
        let vocab_tokens = ck
            .list("vocab")
            .ok_or_else(|| Error::Invalid("checkpoint is missing the vocabulary".into()))?;
        let vocab = Vocab::from_tokens(vocab_tokens.iter().skip(2));
        if vocab.tokens() != vocab_tokens {
            return Err(Error::Invalid("checkpoint vocabulary is malformed".into()));
        }
        let t = |name: &str| ck.require_tensor(name).cloned();
        let params = ModelParams {
            vocab,
            text: TextEncoderParams {
                token_embedding: t("text.embedding")?,
                projection: t("text.projection")?,
                bias: t("text.bias")?,
            },
            gcn: GcnParams {
                layers: (0..layers).map(|l| t(&format!("gcn.{l}"))).collect::<Result<_>>()?,
            },
            er: ErAttentionParams {
                entity_table: t("er.entity_table")?,
                relation_table: t("er.relation_table")?,
                entity_proj: t("er.entity_proj")?,
                relation_proj: t("er.relation_proj")?,
            },
            classifier: t("classifier")?,
            node_features: EmbeddingTable::new(t("node_features")?)?,
        };
        if params.text.token_embedding.rows() != params.vocab.len()
            || params.classifier.shape() != (4 * params.dim(), 1)
        {
            return Err(Error::Invalid("checkpoint tensor shapes are inconsistent".into()));
        }
        Ok((params, config))
    }
}

/// Parameters placed on one tape.
#[derive(Clone, Debug)]
pub struct BoundModel {
    text: BoundText,
    gcn: Vec<Var>,
    er: Option<BoundEr>,
    classifier: Var,
    /// One entry per trainable tensor in optimizer order; `None` when that
    /// tensor is frozen or unused on this tape.
    pub slots: Vec<Option<Var>>,
}

impl BoundModel {
    /// Gradients per optimizer slot after `backward`.
    pub fn gradients(&self, tape: &Tape) -> Vec<Option<Tensor>> {
        self.slots
            .iter()
            .map(|s| s.and_then(|v| tape.grad_or_zeros(v)))
            .collect()
    }
}

/// Attention read-outs of one choice's forward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct ChoiceTrace {
    pub graph_attention: Option<Var>,
    pub entity_weights: Option<Var>,
    pub relation_weights: Option<Var>,
}

/// Scales applied to the graph and knowledge vectors of every choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scales {
    pub graph: f64,
    pub knowledge: f64,
}

impl Scales {
    pub const ONE: Scales = Scales::uniform(1.0);

    pub const fn uniform(v: f64) -> Self {
        Scales {
            graph: v,
            knowledge: v,
        }
    }
}

/// The `1 × m` choice logits `W · (t_i : α·g_i : β·𝒢_i)` of one question.
#[allow(clippy::too_many_arguments)]
pub fn question_logits<R: Rng + ?Sized>(
    tape: &mut Tape,
    bound: &BoundModel,
    params: &ModelParams,
    example: &Example,
    scales: Scales,
    attention: AttentionMode,
    temperature: f64,
    rng: &mut R,
) -> Result<(Var, Vec<ChoiceTrace>)> {
    let d = params.dim();
    let mut logits = Vec::with_capacity(example.pairs.len());
    let mut traces = Vec::with_capacity(example.pairs.len());
    for (choice, ids) in example.token_ids(&params.vocab)?.into_iter().enumerate() {
        let mut trace = ChoiceTrace::default();
        let t = text_forward(tape, &bound.text, &ids)?;

        let sub = &example.subgraphs[choice];
        let g = if bound.gcn.is_empty() || sub.is_empty() {
            tape.constant(Tensor::zeros(1, d))
        } else {
            let a = tape.constant(sub.normalized.clone());
            let h0 = tape.constant(params.node_features.as_tensor().gather_rows(&sub.nodes)?);
            let nodes = gcn_layers(tape, a, h0, &bound.gcn)?;
            let (pooled, alpha) = attention_pool(tape, nodes, t)?;
            trace.graph_attention = Some(alpha);
            pooled
        };
        let g = tape.scalar_mul(g, scales.graph);

        let k = match &bound.er {
            Some(er) => {
                let out = er_attention_forward(tape, er, t, temperature, attention, rng)?;
                trace.entity_weights = Some(out.entity_weights);
                trace.relation_weights = Some(out.relation_weights);
                out.vector
            }
            None => tape.constant(Tensor::zeros(1, 2 * d)),
        };
        let k = tape.scalar_mul(k, scales.knowledge);

        let joined = tape.concat(&[t, g, k])?;
        logits.push(tape.matmul(joined, bound.classifier)?);
        traces.push(trace);
    }
    Ok((tape.concat(&logits)?, traces))
}

/// Natural-log entropy of `softmax(logits)`, clamped to `[0, ln m]`.
pub fn question_entropy(logits: &[f64]) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let lse = log_sum_exp(logits);
    let s: f64 = logits
        .iter()
        .map(|x| {
            let lp = x - lse;
            -lp.exp() * lp
        })
        .sum();
    s.clamp(0.0, (logits.len() as f64).ln())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode logits of one question under the given scales.
pub fn score_question(params: &ModelParams, example: &Example, config: &TrainConfig, scales: Scales) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, config, false, false)?;
    // Eval mode never samples.
    let mut unused = rng::stream(0, "eval");
    let (logits, _) = question_logits(
        &mut tape,
        &bound,
        params,
        example,
        scales,
        AttentionMode::Eval,
        config.temperature,
        &mut unused,
    )?;
    Ok(tape.value(logits).data().to_vec())
}

/// Strongest attention weight and its target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopWeight {
    pub id: usize,
    pub weight: f64,
}

fn top_weight(values: &[f64]) -> Option<TopWeight> {
    (!values.is_empty()).then(|| {
        let id = argmax(values);
        TopWeight {
            id,
            weight: values[id],
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub predicted: usize,
    pub gold: usize,
    pub logits: Vec<f64>,
    /// Entropy of the unweighted pass; in act-know mode this is also the
    /// weight applied in the final pass.
    pub entropy: f64,
    /// Most-attended subgraph entity for the predicted choice.
    pub graph_top: Option<(EntityId, f64)>,
    /// Most-attended knowledge-graph entity and relation for the predicted choice.
    pub entity_top: Option<TopWeight>,
    pub relation_top: Option<TopWeight>,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.predicted == self.gold
    }
}

/// Eval-mode prediction. Act-know runs an unweighted pass to measure ℰ and
/// then scores with `(ℰ, ℰ)`; the other modes use a single pass.
pub fn predict(params: &ModelParams, example: &Example, config: &TrainConfig) -> Result<Prediction> {
    let first = score_question(params, example, config, Scales::ONE)?;
    let entropy = question_entropy(&first);
    let scales = match config.mode {
        Mode::ActKnow => Scales::uniform(config.entropy_override.unwrap_or(entropy)),
        Mode::BaseKnow | Mode::TextOnly => Scales::ONE,
    };

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, config, false, false)?;
    let mut unused = rng::stream(0, "eval");
    let (logits, traces) = question_logits(
        &mut tape,
        &bound,
        params,
        example,
        scales,
        AttentionMode::Eval,
        config.temperature,
        &mut unused,
    )?;
    let logits = tape.value(logits).data().to_vec();
    let predicted = argmax(&logits);
    let trace = traces[predicted];
    let sub = &example.subgraphs[predicted];
    let graph_top = trace
        .graph_attention
        .and_then(|a| top_weight(tape.value(a).data()))
        .map(|t| (sub.nodes[t.id], t.weight));
    let entity_top = trace.entity_weights.and_then(|w| top_weight(tape.value(w).data()));
    let relation_top = trace.relation_weights.and_then(|w| top_weight(tape.value(w).data()));
    Ok(Prediction {
        id: example.item.id.clone(),
        predicted,
        gold: example.item.answer_index,
        logits,
        entropy,
        graph_top,
        entity_top,
        relation_top,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_entropy: f64,
    /// Mean cross-entropy of the final logits against the gold choice.
    pub loss: f64,
    pub predictions: Vec<Prediction>,
}

pub fn evaluate(params: &ModelParams, examples: &[Example], config: &TrainConfig) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation set has no questions".into()));
    }
    let predictions = examples
        .iter()
        .map(|ex| predict(params, ex, config))
        .collect::<Result<Vec<_>>>()?;
    let n = predictions.len() as f64;
    let accuracy = predictions.iter().filter(|p| p.correct()).count() as f64 / n;
    let mean_entropy = predictions.iter().map(|p| p.entropy).sum::<f64>() / n;
    let loss = predictions
        .iter()
        .map(|p| -softmax(&p.logits)[p.gold].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / n;
    Ok(Evaluation {
        accuracy,
        mean_entropy,
        loss,
        predictions,
    })
}

/// A parameter's name, group and gradient.
pub type NamedGradient = (String, ParamGroup, Tensor);

/// Cross-entropy of one question and its gradient for every trainable
/// tensor (zeros where the loss does not reach). Attention runs in train
/// mode with Gumbel noise drawn from a stream fixed by `noise_seed`.
pub fn question_gradients(
    params: &ModelParams,
    example: &Example,
    config: &TrainConfig,
    scales: Scales,
    attention: AttentionMode,
    noise_seed: u64,
) -> Result<(f64, Vec<NamedGradient>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, config, false, true)?;
    let mut noise = rng::stream(noise_seed, "gumbel");
    let (logits, _) = question_logits(
        &mut tape,
        &bound,
        params,
        example,
        scales,
        attention,
        config.temperature,
        &mut noise,
    )?;
    let loss = tape.cross_entropy(logits, example.item.answer_index)?;
    tape.backward(loss)?;
    let grads = bound.gradients(&tape);
    let named = params
        .param_names()
        .into_iter()
        .zip(params.trainable())
        .zip(grads)
        .map(|(((name, group), p), g)| (name, group, g.unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))))
        .collect();
    Ok((tape.value(loss).item(), named))
}
