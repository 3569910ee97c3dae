//! Random graph generation for fuzzing, property tests and benchmarks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{AmrEdge, AmrGraph};

pub const NAMES: &[&str] = &[
    "want", "boy", "girl", "believe", "go", "dog", "see", "big", "city", "and",
];
pub const LABELS: &[&str] = &["ARG0", "ARG1", "ARG2", "mod", "op1", "location", "time"];

/// Root-connected random graph with re-entrancies, parallel edges and
/// occasional directed cycles. Never contains self-loops.
pub fn random_graph<R: Rng>(rng: &mut R, max_concepts: usize, max_edges: usize) -> AmrGraph {
    random_graph_from(rng, max_concepts, max_edges, NAMES, LABELS)
}

pub fn random_graph_from<R: Rng>(
    rng: &mut R,
    max_concepts: usize,
    max_edges: usize,
    names: &[&str],
    labels: &[&str],
) -> AmrGraph {
    let n = rng.gen_range(1..=max_concepts.max(1));
    let chosen: Vec<&str> = (0..n).map(|_| *names.choose(rng).unwrap()).collect();
    let mut edges = BTreeSet::new();
    // A random spanning tree keeps the graph connected.
    for v in 1..n {
        let u = rng.gen_range(0..v);
        let label = labels.choose(rng).unwrap().to_string();
        if rng.gen_bool(0.8) {
            edges.insert(AmrEdge::new(u, v, label));
        } else {
            edges.insert(AmrEdge::new(v, u, label));
        }
    }
    let budget = max_edges.max(n - 1);
    let extra = rng.gen_range(0..=budget - (n - 1));
    for _ in 0..extra {
        if n < 2 {
            break;
        }
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.insert(AmrEdge::new(a, b, labels.choose(rng).unwrap().to_string()));
        }
    }
    AmrGraph::from_parts(chosen, edges, 0).expect("generated graph is valid")
}
