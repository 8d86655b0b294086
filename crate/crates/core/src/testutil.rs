use rand::Rng;

use crate::graph::{Edge, SceneGraph};

/// Valid graph with `1..=max_nodes` nodes and ~30% of ordered pairs linked.
pub(crate) fn random_graph<R: Rng>(rng: &mut R, c: usize, r: usize, max_nodes: usize) -> SceneGraph {
    let m = rng.gen_range(1..=max_nodes);
    let nodes = (0..m).map(|_| rng.gen_range(0..c)).collect();
    let mut edges = Vec::new();
    for s in 0..m {
        for d in 0..m {
            if s != d && rng.gen_bool(0.3) {
                edges.push(Edge::new(s, rng.gen_range(0..r), d));
            }
        }
    }
    SceneGraph::new(nodes, edges)
}
