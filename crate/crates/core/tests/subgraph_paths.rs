mod checks;
mod fixture;
mod oracles;

use std::collections::HashSet;

use actknow_core::kg::{train_kg_embeddings, triple_score, KgEmbeddingConfig};
use actknow_core::rng;
use actknow_core::subgraph::{connect_concepts, dfs_path};
use proptest::prelude::*;
use rand::Rng as _;

use checks::paths::random_kg;
use oracles::{simple_paths, undirected_adjacency};

fn shortest(adj: &[std::collections::BTreeSet<usize>], from: usize, to: usize, limit: usize) -> Option<usize> {
    (1..=limit).find(|&l| !simple_paths(adj, from, to, l).is_empty())
}

#[test]
fn dfs_paths_exist_and_respect_the_bound() {
    checks::paths::dfs(100).unwrap();
}

#[test]
fn extracted_mentions_are_always_nodes() {
    checks::paths::mention_inclusion(100).unwrap();
}

#[test]
fn connected_subgraphs_keep_seeds_and_valid_paths() {
    let mut rng = rng::stream(1, "connect-oracle");
    for _ in 0..100 {
        let graph = random_kg(rng.random_range(2..=30), rng.random_range(0.02..0.3), &mut rng);
        let adj = undirected_adjacency(&graph);
        let n = graph.num_entities();
        let seeds: Vec<usize> = (0..rng.random_range(1..=n.min(6))).map(|_| rng.random_range(0..n)).collect();
        let distinct: HashSet<usize> = seeds.iter().copied().collect();
        let max_len = rng.random_range(1..=3);
        let max_nodes = distinct.len() + rng.random_range(0..10);
        let sub = connect_concepts(&graph, &seeds, max_len, max_nodes).unwrap();

        assert!(sub.len() <= max_nodes);
        for s in &distinct {
            assert!(sub.nodes.contains(s), "seed {s} missing");
        }
        let members: HashSet<usize> = sub.nodes.iter().copied().collect();
        assert_eq!(members.len(), sub.len(), "duplicate nodes");
        for path in &sub.paths {
            assert!(path.len() - 1 <= max_len);
            let (a, b) = (path[0], *path.last().unwrap());
            assert!(simple_paths(&adj, a, b, max_len).contains(path));
            assert!(path.iter().all(|e| members.contains(e)));
        }
        // With room to spare, every seed pair within reach is connected.
        if max_nodes >= n {
            for &a in &distinct {
                for &b in &distinct {
                    if a < b && shortest(&adj, a, b, max_len).is_some() {
                        let linked = sub.paths.iter().any(|p| {
                            let ends = (p[0], *p.last().unwrap());
                            ends == (a, b) || ends == (b, a)
                        });
                        assert!(linked, "seeds {a} and {b} were not connected");
                    }
                }
            }
        }
        // The adjacency is exactly the KG edges among the chosen nodes.
        for (i, &x) in sub.nodes.iter().enumerate() {
            for (j, &y) in sub.nodes.iter().enumerate() {
                assert_eq!(sub.adjacency.get(i, j) == 1.0, adj[x].contains(&y));
            }
        }
    }
}

#[test]
fn trained_embeddings_rank_true_triples_above_corruptions() {
    let mut rng = rng::stream(3, "kg-rank");
    let graph = random_kg(25, 0.15, &mut rng);
    let config = KgEmbeddingConfig {
        dim: 16,
        epochs: 200,
        ..KgEmbeddingConfig::default()
    };
    let (ent, rel) = train_kg_embeddings(&graph, &config).unwrap();
    let existing: HashSet<(usize, usize, usize)> =
        graph.triples().iter().map(|t| (t.head, t.relation, t.tail)).collect();
    let (mut wins, mut total) = (0, 0);
    for t in graph.triples() {
        for other in 0..graph.num_entities() {
            if !existing.contains(&(t.head, t.relation, other)) {
                total += 1;
                if triple_score(&ent, &rel, t.head, t.relation, t.tail) > triple_score(&ent, &rel, t.head, t.relation, other)
                {
                    wins += 1;
                }
            }
        }
    }
    let rate = wins as f64 / total as f64;
    assert!(rate > 0.8, "true triples outrank corruptions only {rate:.3} of the time");
}

proptest! {
    #[test]
    fn dfs_is_deterministic_and_symmetric_in_existence(seed in any::<u64>(), max_len in 1usize..4) {
        let mut rng = rng::stream(seed, "dfs-prop");
        let graph = random_kg(12, 0.2, &mut rng);
        let n = graph.num_entities();
        for a in 0..n {
            for b in 0..n {
                let p = dfs_path(&graph, a, b, max_len);
                prop_assert_eq!(&p, &dfs_path(&graph, a, b, max_len));
                prop_assert_eq!(p.is_some(), dfs_path(&graph, b, a, max_len).is_some());
            }
        }
    }
}
