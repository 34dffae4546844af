//! Connecting paths and extracted subgraphs against exhaustive path
//! enumeration.

use actknow_core::subgraph::{dfs_path, extract, ConceptMatcher, SubgraphConfig};
use actknow_core::{rng, KnowledgeGraph, NliPair};
use rand::Rng as _;

use crate::oracles::{simple_paths, undirected_adjacency};

pub fn random_kg(n: usize, p: f64, rng: &mut rng::Rng) -> KnowledgeGraph {
    let mut tsv = String::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p / 2.0) {
                tsv.push_str(&format!("c{i}\tr{}\tc{j}\n", rng.random_range(0..4)));
            }
        }
    }
    // Guarantees a non-empty file; the pair may repeat an edge above.
    tsv.push_str("c0\tr0\tc1\n");
    KnowledgeGraph::parse_tsv(&tsv, "random").unwrap()
}

/// Ten endpoint pairs on each of `graphs` random KGs with at most 30 nodes.
/// A returned path must be one of the enumerated simple paths within the
/// bound, the direct edge when there is one, and absent only when the
/// enumeration is empty.
pub fn dfs(graphs: usize) -> Result<String, String> {
    let mut rng = rng::stream(0, "dfs-oracle");
    let mut found = 0;
    for _ in 0..graphs {
        let n = rng.random_range(2..=30);
        let graph = random_kg(n, rng.random_range(0.02..0.3), &mut rng);
        let adj = undirected_adjacency(&graph);
        let n = graph.num_entities();
        for _ in 0..10 {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            let max_len = rng.random_range(1..=3);
            let all = simple_paths(&adj, a, b, max_len);
            match dfs_path(&graph, a, b, max_len) {
                Some(path) => {
                    if path.len() - 1 > max_len || !all.contains(&path) {
                        return Err(format!("{path:?} is not a simple path of length <= {max_len}"));
                    }
                    if adj[a].contains(&b) && path != [a, b] {
                        return Err(format!("{path:?} skips the direct edge {a}-{b}"));
                    }
                    found += 1;
                }
                None if !all.is_empty() => return Err(format!("missed a path from {a} to {b}")),
                None => {}
            }
        }
    }
    Ok(format!("{graphs} graphs, {found} paths all enumerated and bounded"))
}

/// Random pairs whose words name KG concepts; every returned mention must
/// be a subgraph node and the highest-priority seed always makes it in.
pub fn mention_inclusion(graphs: usize) -> Result<String, String> {
    let mut rng = rng::stream(2, "mention-inclusion");
    let mut mentions_seen = 0;
    for _ in 0..graphs {
        let graph = random_kg(rng.random_range(2..=30), 0.1, &mut rng);
        let matcher = ConceptMatcher::new(&graph);
        let n = graph.num_entities();
        let words = |rng: &mut rng::Rng, k: usize| {
            (0..k)
                .map(|_| if rng.random_bool(0.5) { format!("c{}", rng.random_range(0..n)) } else { "the".into() })
                .collect::<Vec<_>>()
                .join(" ")
        };
        let pair = NliPair {
            premise: words(&mut rng, 12),
            hypothesis: words(&mut rng, 5),
            choice_index: 0,
        };
        let config = SubgraphConfig {
            max_path_len: rng.random_range(1..=3),
            max_nodes: rng.random_range(1..12),
        };
        let (mentions, sub) = extract(&graph, &matcher, &pair, config).map_err(|e| e.to_string())?;
        if sub.len() > config.max_nodes {
            return Err(format!("{} nodes over a budget of {}", sub.len(), config.max_nodes));
        }
        let adj = undirected_adjacency(&graph);
        for path in &sub.paths {
            if !simple_paths(&adj, path[0], *path.last().unwrap(), config.max_path_len).contains(path) {
                return Err(format!("reported path {path:?} is not a bounded KG path"));
            }
        }
        for m in &mentions {
            if !sub.nodes.contains(&m.entity) {
                return Err(format!("mention {:?} missing from the subgraph", m.entity));
            }
        }
        if let Some(first) = matcher.identify_pair(&pair).first() {
            if sub.nodes.first() != Some(&first.entity) {
                return Err("highest-priority seed was dropped".into());
            }
        }
        mentions_seen += mentions.len();
    }
    Ok(format!("{graphs} pairs, {mentions_seen} mentions all included"))
}
