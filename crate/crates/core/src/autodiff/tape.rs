//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the tape; node indices are therefore a
//! topological order and `backward` is a single reverse sweep.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `b` is either the same shape as `a` or a single row broadcast over `a`.
    Add(Var, Var),
    ScalarMul(Var, f64),
    /// Column-wise concatenation.
    Concat(Vec<Var>),
    Relu(Var),
    RowSoftmax(Var),
    Log(Var),
    Exp(Var),
    Mean(Var),
    MeanRows(Var),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    /// Stored softmax probabilities feed the pullback.
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Tensor>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`. `None` for
    /// nodes that do not require a gradient or before `backward` ran.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        self.grads.as_ref()?.get(v.0)?.as_ref()
    }

    /// Like [`Tape::grad`] but yields zeros for a trainable leaf that the loss
    /// did not depend on.
    pub fn grad_or_zeros(&self, v: Var) -> Option<Tensor> {
        if !self.nodes[v.0].requires_grad || self.grads.is_none() {
            return None;
        }
        let (r, c) = self.nodes[v.0].value.shape();
        Some(self.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(r, c)))
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads = None;
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let value = if ta.shape() == tb.shape() {
            let mut out = ta.clone();
            out.add_assign(tb);
            out
        } else if tb.rows() == 1 && tb.cols() == ta.cols() {
            let mut out = ta.clone();
            for r in 0..out.rows() {
                for (o, x) in out.row_mut(r).iter_mut().zip(tb.data()) {
                    *o += x;
                }
            }
            out
        } else {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", ta.shape(), tb.shape()),
            ));
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        let rg = self.needs(&[a]);
        self.push(value, Op::ScalarMul(a, factor), rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat", "no operands"));
        };
        let rows = self.value(*first).rows();
        if let Some(bad) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(Error::shape(
                "concat",
                format!("row count {} vs {}", self.value(*bad).rows(), rows),
            ));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::from_vec(t.rows(), t.cols(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.cols() == 0 {
            return Err(Error::Invalid("softmax over an empty row".into()));
        }
        let mut value = t.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::RowSoftmax(a), rg))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Invalid("log of a non-positive value".into()));
        }
        let value = Tensor::from_vec(t.rows(), t.cols(), t.data().iter().map(|v| v.ln()).collect())?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Log(a), rg))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_vec(t.rows(), t.cols(), t.data().iter().map(|v| v.exp()).collect())
            .expect("same shape");
        let rg = self.needs(&[a]);
        self.push(value, Op::Exp(a), rg)
    }

    /// Mean of all entries, as a `1 × 1` tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::Invalid("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Mean(a), rg))
    }

    /// Column means: `n × d → 1 × d`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rows() == 0 {
            return Err(Error::Invalid("mean over zero rows".into()));
        }
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (o, x) in out.iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let n = t.rows() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::row_vector(out), Op::MeanRows(a), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.needs(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Row lookup (embedding gather); the pullback scatters into `table`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let value = self.value(table).gather_rows(ids)?;
        let rg = self.needs(&[table]);
        Ok(self.push(value, Op::GatherRows(table, ids.to_vec()), rg))
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != 1 || t.cols() == 0 {
            return Err(Error::shape(
                "cross_entropy",
                format!("expected one row of logits, got {:?}", t.shape()),
            ));
        }
        if target >= t.cols() {
            return Err(Error::Invalid(format!(
                "cross_entropy target {target} out of {} classes",
                t.cols()
            )));
        }
        let lse = log_sum_exp(t.data());
        let loss = lse - t.data()[target];
        let probs = t.data().iter().map(|v| (v - lse).exp()).collect();
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar loss. Errors if gradients from a previous
    /// sweep have not been cleared with [`Tape::reset_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::Invalid(
                "backward already ran on this tape; call reset_grads first".into(),
            ));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.pullback(idx, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn pullback(&self, idx: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, g: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    send(*a, dy.matmul(&tb.transpose()).expect("matmul pullback"));
                }
                if self.nodes[b.0].requires_grad {
                    send(*b, ta.transpose().matmul(dy).expect("matmul pullback"));
                }
            }
            Op::Add(a, b) => {
                send(*a, dy.clone());
                if self.value(*b).shape() == dy.shape() {
                    send(*b, dy.clone());
                } else {
                    let mut acc = vec![0.0; dy.cols()];
                    for r in 0..dy.rows() {
                        for (o, x) in acc.iter_mut().zip(dy.row(r)) {
                            *o += x;
                        }
                    }
                    send(*b, Tensor::row_vector(acc));
                }
            }
            Op::ScalarMul(a, factor) => send(*a, dy.scale(*factor)),
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = self.value(*p).shape();
                    if self.nodes[p.0].requires_grad {
                        let mut g = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            g.row_mut(r).copy_from_slice(&dy.row(r)[offset..offset + cols]);
                        }
                        send(*p, g);
                    }
                    offset += cols;
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let data = dy
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                send(*a, Tensor::from_vec(x.rows(), x.cols(), data).expect("shape"));
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let mut g = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, dr) = (y.row(r), dy.row(r));
                    let dot: f64 = yr.iter().zip(dr).map(|(p, q)| p * q).sum();
                    for (o, (p, q)) in g.row_mut(r).iter_mut().zip(yr.iter().zip(dr)) {
                        *o = p * (q - dot);
                    }
                }
                send(*a, g);
            }
            Op::Log(a) => {
                let x = self.value(*a);
                let data = dy.data().iter().zip(x.data()).map(|(g, v)| g / v).collect();
                send(*a, Tensor::from_vec(x.rows(), x.cols(), data).expect("shape"));
            }
            Op::Exp(a) => {
                let y = &node.value;
                let data = dy.data().iter().zip(y.data()).map(|(g, v)| g * v).collect();
                send(*a, Tensor::from_vec(y.rows(), y.cols(), data).expect("shape"));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                send(*a, Tensor::filled(r, c, dy.item() / (r * c) as f64));
            }
            Op::MeanRows(a) => {
                let (r, c) = self.value(*a).shape();
                let mut g = Tensor::zeros(r, c);
                for i in 0..r {
                    for (o, x) in g.row_mut(i).iter_mut().zip(dy.data()) {
                        *o = x / r as f64;
                    }
                }
                send(*a, g);
            }
            Op::Transpose(a) => send(*a, dy.transpose()),
            Op::GatherRows(table, ids) => {
                let (r, c) = self.value(*table).shape();
                let mut g = Tensor::zeros(r, c);
                for (k, &id) in ids.iter().enumerate() {
                    for (o, x) in g.row_mut(id).iter_mut().zip(dy.row(k)) {
                        *o += x;
                    }
                }
                send(*table, g);
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let scale = dy.item();
                let mut g: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                g[*target] -= scale;
                send(*logits, Tensor::row_vector(g));
            }
        }
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Numerically stable in-place softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}
