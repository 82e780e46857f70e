use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::SceneGraph;

/// Redirects up to `k` edges of `g` to new destinations.
///
/// Edges are visited in a seeded random order and each is pointed at a
/// randomly chosen different node, skipping targets that would duplicate an
/// edge or break the hierarchy forest. For a fixed seed the flips for `k`
/// are a prefix of the flips for `k + 1`, so sweeps over `k` are nested.
pub fn corrupt_edges(g: &SceneGraph, k: usize, seed: u64) -> SceneGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = g.edges().to_vec();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut rng);
    let ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
    for &i in order.iter().take(k) {
        let start = rng.gen_range(0..ids.len());
        for step in 0..ids.len() {
            let dst = ids[(start + step) % ids.len()];
            if dst == edges[i].dst {
                continue;
            }
            let mut trial = edges.clone();
            trial[i].dst = dst.to_string();
            let candidate = SceneGraph::from_parts(g.nodes().to_vec(), trial.clone(), g.meta().clone());
            if candidate.is_valid() {
                edges = trial;
                break;
            }
        }
    }
    SceneGraph::from_parts(g.nodes().to_vec(), edges, g.meta().clone())
}
