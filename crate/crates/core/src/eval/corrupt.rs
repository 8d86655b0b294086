//! Label corruption for anomaly-detection experiments.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Edge, SceneGraph};

/// `⌈fraction · n⌉`, robust to products like `0.1 · 30 = 3.0000000000000004`.
pub fn corrupted_count(fraction: f64, n: usize) -> usize {
    let x = fraction.clamp(0.0, 1.0) * n as f64;
    ((x - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Uniform label from `0..k` other than `current`; `current` itself when
/// `k < 2`.
fn other_label<R: Rng + ?Sized>(current: usize, k: usize, rng: &mut R) -> usize {
    if k < 2 {
        return current;
    }
    let v = rng.gen_range(0..k - 1);
    if v >= current {
        v + 1
    } else {
        v
    }
}

/// Relabels `⌈f·m⌉` distinct nodes and `⌈f·|E|⌉` distinct edges, each to a
/// different uniformly drawn label. Structure is unchanged.
pub fn corrupt_graph<R: Rng + ?Sized>(
    g: &SceneGraph,
    fraction: f64,
    num_objects: usize,
    num_relations: usize,
    rng: &mut R,
) -> SceneGraph {
    let mut nodes = g.nodes().to_vec();
    let k = corrupted_count(fraction, nodes.len());
    for i in sample(rng, nodes.len(), k).into_vec() {
        nodes[i] = other_label(nodes[i], num_objects, rng);
    }
    let mut edges: Vec<Edge> = g.edges().to_vec();
    let k = corrupted_count(fraction, edges.len());
    for i in sample(rng, edges.len(), k).into_vec() {
        edges[i].rel = other_label(edges[i].rel, num_relations, rng);
    }
    SceneGraph::new(nodes, edges)
}

pub fn corrupt_dataset(
    graphs: &[SceneGraph],
    fraction: f64,
    num_objects: usize,
    num_relations: usize,
    seed: u64,
) -> Vec<SceneGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graphs
        .iter()
        .map(|g| corrupt_graph(g, fraction, num_objects, num_relations, &mut rng))
        .collect()
}
