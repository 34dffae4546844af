//! Prediction entropy bounds on four-way logits.

use actknow_core::rng;
use actknow_core::training::question_entropy;
use rand::Rng as _;

use crate::oracles::entropy_reference;

/// Random logits at scales 1e-3..1e3, uniform logits and one-hot-scale
/// logits.
pub fn bounds(vectors: usize) -> Result<String, String> {
    let mut rng = rng::stream(0, "entropy-bounds");
    let ln4 = 4f64.ln();
    for _ in 0..vectors {
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let logits: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let s = question_entropy(&logits);
        if !(0.0..=ln4 + 1e-12).contains(&s) {
            return Err(format!("{logits:?} gave entropy {s}"));
        }
        if (s - entropy_reference(&logits)).abs() > 1e-12 {
            return Err(format!("{logits:?}: {s} vs reference {}", entropy_reference(&logits)));
        }
    }
    for c in [-50.0, 0.0, 3.5, 1e3] {
        let s = question_entropy(&[c; 4]);
        if (s - ln4).abs() > 1e-9 {
            return Err(format!("uniform logits at {c} gave {s}"));
        }
    }
    for hot in 0..4 {
        let mut logits = [0.0; 4];
        logits[hot] = 60.0;
        let s = question_entropy(&logits);
        if !(s < 1e-10) {
            return Err(format!("one-hot logits {logits:?} gave {s:e}"));
        }
    }
    Ok(format!("{vectors} random vectors in [0, ln 4], extremes exact"))
}
