//! Central finite differences against tape gradients.

use actknow_core::autodiff::gumbel_softmax;
use actknow_core::encoders::{
    attention_pool, er_attention_forward, gcn_layers, text_forward, AttentionMode, ErAttentionParams, TextEncoderParams,
};
use actknow_core::rng::{self, Rng};
use actknow_core::training::{question_gradients, Mode, ParamGroup, Scales, TrainConfig};
use actknow_core::{EmbeddingTable, Tape, Tensor, Var};
use rand::Rng as _;

use crate::fixture;
use crate::oracles::{numeric_grad, rel_error};

pub const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

/// Instances checked and the largest relative error seen.
#[derive(Clone, Copy, Debug, Default)]
pub struct Tally {
    pub instances: usize,
    pub worst: f64,
}

impl Tally {
    fn add(&mut self, err: f64) {
        self.instances += 1;
        self.worst = self.worst.max(err);
    }

    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            instances: self.instances + other.instances,
            worst: self.worst.max(other.worst),
        }
    }
}

/// Builds an expression from `inputs` on a fresh tape and returns the
/// output plus the leaf standing for each input.
type Build = dyn Fn(&mut Tape, &[Tensor]) -> (Var, Vec<Var>);

fn randn(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::randn(rows, cols, 1.0, rng)
}

/// Reduces the output to `u · out · v` with fixed random `u`, `v`, then
/// compares tape gradients with central differences for every input.
fn check(name: &str, inputs: Vec<Tensor>, build: &Build, rng: &mut Rng) -> Result<f64, String> {
    let mut probe = Tape::new();
    let (out, _) = build(&mut probe, &inputs);
    let (r, c) = probe.value(out).shape();
    let u = randn(1, r, rng);
    let v = randn(c, 1, rng);
    let reduce = |tape: &mut Tape, out: Var| {
        let uu = tape.constant(u.clone());
        let vv = tape.constant(v.clone());
        let left = tape.matmul(uu, out).unwrap();
        tape.matmul(left, vv).unwrap()
    };

    let mut tape = Tape::new();
    let (out, leaves) = build(&mut tape, &inputs);
    let loss = reduce(&mut tape, out);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = leaves.iter().map(|&l| tape.grad_or_zeros(l).unwrap()).collect();

    let mut f = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let (out, _) = build(&mut tape, xs);
        let loss = reduce(&mut tape, out);
        tape.value(loss).item()
    };
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let n = numeric_grad(&mut f, &inputs, i, H);
        let err = rel_error(a, &n);
        if !(err < TOL) {
            return Err(format!("{name}: input {i} relative error {err:e}"));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

fn params(tape: &mut Tape, xs: &[Tensor]) -> Vec<Var> {
    xs.iter().map(|x| tape.param(x.clone())).collect()
}

/// Values kept at least 0.05 away from zero so ReLU kinks are not probed.
fn away_from_zero(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m: f64 = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Every tape primitive, `trials` random instances each.
pub fn primitives(trials: usize) -> Result<Tally, String> {
    let mut tally = Tally::default();
    let mut rng = rng::stream(1, "grad-primitives");
    for _ in 0..trials {
        let (r, k, c) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        tally.add(check(
            "matmul",
            vec![randn(r, k, &mut rng), randn(k, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.matmul(p[0], p[1]).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "add",
            vec![randn(r, c, &mut rng), randn(r, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.add(p[0], p[1]).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "add with row broadcast",
            vec![randn(r, c, &mut rng), randn(1, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.add(p[0], p[1]).unwrap(), p)
            },
            &mut rng,
        )?);
        let factor = rng.random_range(-2.0..2.0);
        tally.add(check(
            "scalar_mul",
            vec![randn(r, c, &mut rng)],
            &move |t, xs| {
                let p = params(t, xs);
                (t.scalar_mul(p[0], factor), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "concat",
            vec![randn(r, c, &mut rng), randn(r, k, &mut rng), randn(r, 1, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.concat(&p).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "relu",
            vec![away_from_zero(r, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.relu(p[0]), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "exp",
            vec![randn(r, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.exp(p[0]), p)
            },
            &mut rng,
        )?);
        let positive = Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(0.2..3.0)).collect()).unwrap();
        tally.add(check(
            "log",
            vec![positive],
            &|t, xs| {
                let p = params(t, xs);
                (t.log(p[0]).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "mean",
            vec![randn(r, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.mean(p[0]).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "mean_rows",
            vec![randn(r, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.mean_rows(p[0]).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "transpose",
            vec![randn(r, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.transpose(p[0]), p)
            },
            &mut rng,
        )?);
        let ids: Vec<usize> = (0..6).map(|_| rng.random_range(0..r)).collect();
        tally.add(check(
            "gather_rows with repeats",
            vec![randn(r, c, &mut rng)],
            &move |t, xs| {
                let p = params(t, xs);
                (t.gather_rows(p[0], &ids).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "row_softmax",
            vec![randn(r, c, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                (t.row_softmax(p[0]).unwrap(), p)
            },
            &mut rng,
        )?);
        let target = rng.random_range(0..c);
        tally.add(check(
            "cross_entropy",
            vec![randn(1, c, &mut rng)],
            &move |t, xs| {
                let p = params(t, xs);
                (t.cross_entropy(p[0], target).unwrap(), p)
            },
            &mut rng,
        )?);
    }
    Ok(tally)
}

/// Gumbel-softmax with the noise stream held fixed across evaluations.
pub fn gumbel(trials: u64) -> Result<Tally, String> {
    let mut tally = Tally::default();
    let mut rng = rng::stream(2, "grad-gumbel");
    for trial in 0..trials {
        let temperature = rng.random_range(0.3..3.0);
        tally.add(check(
            "gumbel_softmax",
            vec![randn(2, 7, &mut rng)],
            &move |t, xs| {
                let p = params(t, xs);
                let mut noise = rng::stream(trial, "noise");
                (gumbel_softmax(t, p[0], temperature, &mut noise).unwrap(), p)
            },
            &mut rng,
        )?);
    }
    Ok(tally)
}

/// GCN layers, attention pooling, the text encoder and entity/relation
/// attention in both modes.
pub fn encoders(trials: usize) -> Result<Tally, String> {
    let mut tally = Tally::default();
    let mut rng = rng::stream(3, "grad-encoders");
    for _ in 0..trials {
        let (n, node_dim, d) = (rng.random_range(1..6), 4, 5);
        let mut c = Tensor::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    c.set(i, j, 1.0);
                    c.set(j, i, 1.0);
                }
            }
        }
        let a = actknow_core::subgraph::normalize_adjacency(&c).unwrap();
        tally.add(check(
            "gcn layers",
            vec![randn(n, node_dim, &mut rng), randn(node_dim, d, &mut rng), randn(d, d, &mut rng)],
            &move |t, xs| {
                let p = params(t, xs);
                let a = t.constant(a.clone());
                (gcn_layers(t, a, p[0], &p[1..]).unwrap(), p)
            },
            &mut rng,
        )?);
        tally.add(check(
            "attention pool",
            vec![randn(n, d, &mut rng), randn(1, d, &mut rng)],
            &|t, xs| {
                let p = params(t, xs);
                let (pooled, _) = attention_pool(t, p[0], p[1]).unwrap();
                (pooled, p)
            },
            &mut rng,
        )?);

        let vocab = 9;
        let ids: Vec<usize> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..vocab)).collect();
        let text = TextEncoderParams::init(vocab, d, &mut rng);
        // A positive bias keeps the pre-activation away from the ReLU kink.
        let bias = Tensor::from_vec(1, d, (0..d).map(|_| rng.random_range(0.5..1.0)).collect()).unwrap();
        tally.add(check(
            "text encoder",
            vec![text.token_embedding.clone(), text.projection.clone(), bias],
            &move |t, xs| {
                let enc = TextEncoderParams {
                    token_embedding: xs[0].clone(),
                    projection: xs[1].clone(),
                    bias: xs[2].clone(),
                };
                let bound = enc.bind(t, true);
                let out = text_forward(t, &bound, &ids).unwrap();
                (out, vec![bound.token_embedding, bound.projection, bound.bias])
            },
            &mut rng,
        )?);

        let entities = EmbeddingTable::new(randn(11, 3, &mut rng)).unwrap();
        let relations = EmbeddingTable::new(randn(4, 3, &mut rng)).unwrap();
        let er = ErAttentionParams::init(&entities, &relations, d, &mut rng).unwrap();
        let noise_seed: u64 = rng.random();
        for mode in [AttentionMode::Train, AttentionMode::Eval] {
            let er = er.clone();
            tally.add(check(
                "entity/relation attention",
                vec![randn(1, d, &mut rng), er.entity_proj.clone(), er.relation_proj.clone()],
                &move |t, xs| {
                    let params = ErAttentionParams {
                        entity_proj: xs[1].clone(),
                        relation_proj: xs[2].clone(),
                        ..er.clone()
                    };
                    let query = t.param(xs[0].clone());
                    let bound = params.bind(t, true).unwrap();
                    let mut noise = rng::stream(noise_seed, "gumbel");
                    let out = er_attention_forward(t, &bound, query, 0.7, mode, &mut noise).unwrap();
                    (out.vector, vec![query, bound.entity_proj, bound.relation_proj])
                },
                &mut rng,
            )?);
        }
    }
    Ok(tally)
}

/// Finite differences of the full question loss for every trainable
/// tensor, under the train-mode (Gumbel) and eval-mode forward passes and
/// with non-unit graph/knowledge scales.
pub fn full_model() -> Result<Tally, String> {
    let mut tally = Tally::default();
    let config = TrainConfig {
        mode: Mode::ActKnow,
        ..fixture::tiny_config()
    };
    let prepared = fixture::prepared(&fixture::tiny_spec(11), &config);
    let params = fixture::init_params(&prepared, &config);
    let example = fixture::connected_example(&prepared.train);
    let cases = [
        (AttentionMode::Train, Scales::ONE),
        (AttentionMode::Eval, Scales { graph: 0.6, knowledge: 1.3 }),
    ];
    for (attention, scales) in cases {
        let (_, grads) = question_gradients(&params, example, &config, scales, attention, 5).unwrap();
        let mut seen = Vec::new();
        for (slot, (name, group, analytic)) in grads.iter().enumerate() {
            let base: Vec<Tensor> = params.trainable().into_iter().cloned().collect();
            let mut f = |xs: &[Tensor]| {
                let mut p = params.clone();
                for (dst, src) in p.trainable_mut().into_iter().zip(xs) {
                    *dst = src.clone();
                }
                question_gradients(&p, example, &config, scales, attention, 5).unwrap().0
            };
            let numeric = numeric_grad(&mut f, &base, slot, H);
            let err = rel_error(analytic, &numeric);
            if !(err < TOL) {
                return Err(format!("{name} ({attention:?}): relative error {err:e}"));
            }
            tally.add(err);
            if analytic.norm() > 0.0 {
                seen.push(*group);
            }
        }
        for group in [ParamGroup::Text, ParamGroup::Graph, ParamGroup::Knowledge, ParamGroup::Classifier] {
            if !seen.contains(&group) {
                return Err(format!("{group:?} received no gradient"));
            }
        }
    }
    Ok(tally)
}
