//! Reference computations written independently of the library: central
//! finite differences, dense matrix versions of the graph operators, a
//! brute-force BM25 scan and exhaustive path enumeration.
#![allow(dead_code)]

use std::collections::BTreeSet;

use actknow_core::{KnowledgeGraph, Tensor};

pub type Dense = Vec<Vec<f64>>;

/// Central-difference gradient of `f` with respect to `inputs[which]`.
pub fn numeric_grad(f: &mut dyn FnMut(&[Tensor]) -> f64, inputs: &[Tensor], which: usize, h: f64) -> Tensor {
    let mut work = inputs.to_vec();
    let (rows, cols) = inputs[which].shape();
    let mut out = Tensor::zeros(rows, cols);
    for k in 0..rows * cols {
        let orig = work[which].data()[k];
        work[which].data_mut()[k] = orig + h;
        let up = f(&work);
        work[which].data_mut()[k] = orig - h;
        let down = f(&work);
        work[which].data_mut()[k] = orig;
        out.data_mut()[k] = (up - down) / (2.0 * h);
    }
    out
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-5)`; the floor keeps round-off on
/// vanishing gradients from reading as a large relative error.
pub fn rel_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / (a.norm() + b.norm()).max(1e-5)
}

pub fn to_dense(t: &Tensor) -> Dense {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn mm(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &Dense, b: &Tensor) -> f64 {
    assert_eq!((a.len(), a.first().map_or(0, Vec::len)), b.shape());
    let mut worst: f64 = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(r, c)).abs());
        }
    }
    worst
}

/// `D̂^{-1/2} (C + I) D̂^{-1/2}` as two dense products with a diagonal matrix.
pub fn dense_normalized(c: &Dense) -> Dense {
    let n = c.len();
    let mut hat = c.clone();
    for (i, row) in hat.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        d[i][i] = 1.0 / hat[i].iter().sum::<f64>().sqrt();
    }
    mm(&mm(&d, &hat), &d)
}

/// `H ← Â H W` per layer, ReLU on every layer but the last.
pub fn dense_gcn(a: &Dense, h0: &Dense, weights: &[Dense]) -> Dense {
    let mut h = h0.clone();
    for (l, w) in weights.iter().enumerate() {
        h = mm(a, &mm(&h, w));
        if l + 1 < weights.len() {
            for v in h.iter_mut().flatten() {
                *v = v.max(0.0);
            }
        }
    }
    h
}

/// Largest eigenvalue magnitude of a symmetric matrix by power iteration
/// on `M²` (which is positive semi-definite).
pub fn spectral_radius(m: &Dense) -> f64 {
    let n = m.len();
    if n == 0 {
        return 0.0;
    }
    let sq = mm(m, m);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| sq[i][j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    lambda.sqrt()
}

/// Ranks every sentence sharing a token with `query` by BM25 (k1 1.2,
/// b 0.75, idf `ln(1 + (N − n + 0.5)/(n + 0.5))`), scanning the raw token
/// lists. Repeated query tokens count once.
pub fn bm25_scan(sentences: &[Vec<String>], query: &[String]) -> Vec<(usize, f64)> {
    let n = sentences.len() as f64;
    let avgdl = sentences.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<&String> = query.iter().collect();
    let mut out = Vec::new();
    for (id, s) in sentences.iter().enumerate() {
        let mut score = 0.0;
        let mut hit = false;
        for term in &terms {
            let tf = s.iter().filter(|t| t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            hit = true;
            let df = sentences.iter().filter(|x| x.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * s.len() as f64 / avgdl));
        }
        if hit {
            out.push((id, score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

/// Undirected neighbor sets built straight from the stored triples.
pub fn undirected_adjacency(graph: &KnowledgeGraph) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); graph.num_entities()];
    for t in graph.triples() {
        adj[t.head].insert(t.tail);
        adj[t.tail].insert(t.head);
    }
    adj
}

/// Every simple path from `from` to `to` with at most `max_len` edges.
pub fn simple_paths(adj: &[BTreeSet<usize>], from: usize, to: usize, max_len: usize) -> Vec<Vec<usize>> {
    fn walk(adj: &[BTreeSet<usize>], to: usize, left: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let here = *path.last().unwrap();
        if here == to {
            out.push(path.clone());
            return;
        }
        if left == 0 {
            return;
        }
        for &next in &adj[here] {
            if !path.contains(&next) {
                path.push(next);
                walk(adj, to, left - 1, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    if from != to {
        walk(adj, to, max_len, &mut vec![from], &mut out);
    }
    out
}

/// `−Σ p ln p` with `p` from a max-shifted softmax; zero-probability terms
/// contribute nothing.
pub fn entropy_reference(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter()
        .map(|e| e / z)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}
