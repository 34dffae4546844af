//! Knowledge-scale neutralization: a zero weight cuts the graph and
//! knowledge paths, unit weights reduce the weighted schedule to the plain
//! one.

use actknow_core::encoders::AttentionMode;
use actknow_core::training::{question_gradients, train, Mode, ParamGroup, Scales, TrainConfig};

use crate::fixture;

/// Largest gradient norm on a graph or knowledge tensor with both scales at
/// zero, over every training question of a tiny task and both attention
/// modes.
pub fn zero_weight() -> Result<String, String> {
    let config = fixture::tiny_config();
    let p = fixture::prepared(&fixture::tiny_spec(5), &config);
    let params = fixture::init_params(&p, &config);
    let mut worst: f64 = 0.0;
    let mut reached = false;
    for (q, ex) in p.train.iter().enumerate() {
        for attention in [AttentionMode::Train, AttentionMode::Eval] {
            let (_, grads) = question_gradients(&params, ex, &config, Scales::uniform(0.0), attention, q as u64)
                .map_err(|e| e.to_string())?;
            for (name, group, g) in grads {
                match group {
                    ParamGroup::Graph | ParamGroup::Knowledge => {
                        if !(g.norm() < 1e-8) {
                            return Err(format!("question {q}: {name} gradient norm {:e}", g.norm()));
                        }
                        worst = worst.max(g.norm());
                    }
                    _ => reached |= g.norm() > 0.0,
                }
            }
        }
    }
    if !reached {
        return Err("no gradient reached the text or classifier either".into());
    }
    Ok(format!("{} questions, max graph/knowledge norm {worst:.1e}", p.train.len()))
}

/// Loss traces of the plain schedule and the weighted one with every
/// entropy forced to 1, same seed.
pub fn unit_weight() -> Result<String, String> {
    let base = TrainConfig {
        mode: Mode::BaseKnow,
        ..fixture::tiny_config()
    };
    let act = TrainConfig {
        mode: Mode::ActKnow,
        entropy_override: Some(1.0),
        ..base.clone()
    };
    let p = fixture::prepared(&fixture::tiny_spec(4), &base);
    let a = train(&p.train, &p.dev, &p.resources, &base).map_err(|e| e.to_string())?;
    let b = train(&p.train, &p.dev, &p.resources, &act).map_err(|e| e.to_string())?;
    if a.batch_losses.len() != b.batch_losses.len() {
        return Err(format!("{} vs {} optimizer steps", a.batch_losses.len(), b.batch_losses.len()));
    }
    let worst = a
        .batch_losses
        .iter()
        .zip(&b.batch_losses)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if !(worst < 1e-12) {
        return Err(format!("loss traces differ by {worst:e}"));
    }
    Ok(format!("{} steps, max loss difference {worst:.1e}", a.batch_losses.len()))
}
