//! Adjacency normalization and GCN propagation against dense products.

use actknow_core::encoders::{gcn_forward, GcnParams};
use actknow_core::rng;
use actknow_core::subgraph::{normalize_adjacency, Subgraph};
use actknow_core::{KnowledgeGraph, Tensor};
use rand::Rng as _;

use crate::oracles::{dense_gcn, dense_normalized, max_abs_diff, to_dense, Dense};

pub const TOL: f64 = 1e-10;

pub fn random_adjacency(n: usize, p: f64, rng: &mut rng::Rng) -> Dense {
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                c[i][j] = 1.0;
                c[j][i] = 1.0;
            }
        }
    }
    c
}

pub fn tensor(d: &Dense) -> Tensor {
    Tensor::from_rows(d).unwrap()
}

fn random_graph(n: usize, rng: &mut rng::Rng) -> KnowledgeGraph {
    let mut lines = String::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.3) {
                lines.push_str(&format!("n{i}\tr{}\tn{j}\n", rng.random_range(0..3)));
            }
        }
    }
    lines.push_str(&format!("n0\tr0\tn{n}\n"));
    KnowledgeGraph::parse_tsv(&lines, "random").unwrap()
}

/// Random graphs with 1..=12 nodes and edge densities spread over [0, 1).
pub fn normalization(graphs: usize) -> Result<String, String> {
    let mut rng = rng::stream(0, "norm-oracle");
    let mut worst: f64 = 0.0;
    for g in 0..graphs {
        let n = rng.random_range(1..=12);
        let c = random_adjacency(n, rng.random_range(0.0..1.0), &mut rng);
        let got = normalize_adjacency(&tensor(&c)).map_err(|e| e.to_string())?;
        let diff = max_abs_diff(&dense_normalized(&c), &got);
        if !(diff < TOL) {
            return Err(format!("graph {g} ({n} nodes): max deviation {diff:e}"));
        }
        worst = worst.max(diff);
    }
    Ok(format!("{graphs} graphs, max deviation {worst:.1e}"))
}

/// `gcn_forward` on random induced subgraphs with 1 to 3 layers.
pub fn gcn(subgraphs: usize) -> Result<String, String> {
    let mut rng = rng::stream(2, "gcn-oracle");
    let mut worst: f64 = 0.0;
    for s in 0..subgraphs {
        let graph = random_graph(rng.random_range(2..10), &mut rng);
        let mut nodes: Vec<usize> = (0..graph.num_entities()).collect();
        nodes.retain(|_| rng.random_bool(0.7));
        if nodes.is_empty() {
            nodes.push(0);
        }
        let sub = Subgraph::induced(&graph, nodes, Vec::new()).map_err(|e| e.to_string())?;
        let layers = rng.random_range(1..4);
        let params = GcnParams::init(4, 6, layers, &mut rng).map_err(|e| e.to_string())?;
        let features = Tensor::randn(sub.len(), 4, 1.0, &mut rng);
        let got = gcn_forward(&sub, &features, &params).map_err(|e| e.to_string())?;
        let weights: Vec<Dense> = params.layers.iter().map(to_dense).collect();
        let want = dense_gcn(&dense_normalized(&to_dense(&sub.adjacency)), &to_dense(&features), &weights);
        let diff = max_abs_diff(&want, &got);
        if !(diff < TOL) {
            return Err(format!("subgraph {s}: max deviation {diff:e}"));
        }
        worst = worst.max(diff);
    }
    Ok(format!("{subgraphs} subgraphs, max deviation {worst:.1e}"))
}
