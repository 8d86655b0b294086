//! Independent-marginals reference sampler: node count from the empirical
//! size distribution, labels i.i.d. from object occurrence, each ordered
//! pair linked with the empirical edge density and labeled i.i.d. from
//! relation occurrence.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Edge, SceneGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentMarginals {
    /// `sizes[m]`: number of training graphs with `m` nodes.
    pub sizes: Vec<usize>,
    pub objects: Vec<usize>,
    pub relations: Vec<usize>,
    /// Edges per ordered node pair.
    pub edge_density: f64,
}

impl IndependentMarginals {
    /// `None` for an empty set.
    pub fn fit(graphs: &[SceneGraph], num_objects: usize, num_relations: usize) -> Option<Self> {
        let max = graphs.iter().map(SceneGraph::num_nodes).max()?;
        let mut sizes = vec![0; max + 1];
        let mut objects = vec![0; num_objects];
        let mut relations = vec![0; num_relations];
        let (mut edges, mut pairs) = (0usize, 0usize);
        for g in graphs {
            let m = g.num_nodes();
            sizes[m] += 1;
            pairs += m * m.saturating_sub(1);
            edges += g.num_edges();
            for &c in g.nodes() {
                objects[c] += 1;
            }
            for e in g.edges() {
                relations[e.rel] += 1;
            }
        }
        if objects.iter().all(|&c| c == 0) {
            return None;
        }
        Some(Self {
            sizes,
            objects,
            relations,
            edge_density: if pairs == 0 { 0.0 } else { edges as f64 / pairs as f64 },
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SceneGraph {
        let size = WeightedIndex::new(&self.sizes).expect("fit guarantees a graph");
        let object = WeightedIndex::new(&self.objects).expect("fit guarantees an object");
        let relation = WeightedIndex::new(&self.relations).ok();
        let m = size.sample(rng);
        let nodes: Vec<usize> = (0..m).map(|_| object.sample(rng)).collect();
        let mut edges = Vec::new();
        if let Some(relation) = &relation {
            for src in 0..m {
                for dst in 0..m {
                    if src != dst && rng.gen_bool(self.edge_density.clamp(0.0, 1.0)) {
                        edges.push(Edge::new(src, relation.sample(rng), dst));
                    }
                }
            }
        }
        SceneGraph::new(nodes, edges)
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<SceneGraph> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}
