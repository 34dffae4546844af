use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) decay, applied as `lr * weight_decay * param`.
    pub weight_decay: f64,
    /// Linear learning-rate warm-up length in steps; 0 disables warm-up.
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            weight_decay: 0.1,
            warmup_steps: 0,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam optimizer state for a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    slots: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig, sizes: impl IntoIterator<Item = usize>) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", config.lr)));
        }
        let slots = sizes
            .into_iter()
            .map(|n| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            })
            .collect();
        Ok(Adam {
            config,
            step: 0,
            slots,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Learning rate for the next step, after warm-up.
    pub fn current_lr(&self) -> f64 {
        let next = self.step + 1;
        if self.config.warmup_steps == 0 || next >= self.config.warmup_steps {
            self.config.lr
        } else {
            self.config.lr * next as f64 / self.config.warmup_steps as f64
        }
    }

    /// One bias-corrected update. A `None` gradient leaves that parameter
    /// and its moments untouched (frozen or unused this step).
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) -> Result<()> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} slots, {} params, {} grads",
                    self.slots.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        let lr = self.current_lr();
        self.step += 1;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((param, grad), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let Some(grad) = grad else { continue };
            if grad.len() != param.len() || slot.m.len() != param.len() {
                return Err(Error::shape("adam_step", "gradient/parameter size mismatch"));
            }
            for (((p, g), m), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(&mut slot.m)
                .zip(&mut slot.v)
            {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * *p);
            }
        }
        Ok(())
    }
}
