use rand::distr::Open01;
use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `softmax((logits + g) / temperature)` with `g = -ln(-ln u)`, `u ~ U(0, 1)`.
///
/// The noise is a constant on the tape, so gradients flow through the soft
/// sample into `logits`.
pub fn gumbel_softmax<R: Rng + ?Sized>(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    rng: &mut R,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "gumbel temperature must be positive, got {temperature}"
        )));
    }
    let (rows, cols) = tape.value(logits).shape();
    let noise: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -(-u.ln()).ln()
        })
        .collect();
    let noise = tape.constant(Tensor::from_vec(rows, cols, noise)?);
    let perturbed = tape.add(logits, noise)?;
    let scaled = tape.scalar_mul(perturbed, 1.0 / temperature);
    tape.row_softmax(scaled)
}
