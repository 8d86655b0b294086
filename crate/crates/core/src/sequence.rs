//! Graph ⇄ sequence codec.
//!
//! Under a permutation π the ordered nodes `o_1 … o_m` become a sequence of
//! steps. Step `i` carries the node category plus two edge lists over the
//! earlier nodes `j = 1 … i−1` (ascending):
//!
//! * `edges_to[i][j]`: relation of `o_j → o_i`, or no-edge;
//! * `edges_from[i][j]`: relation of `o_i → o_j`, or no-edge.
//!
//! The node list ends with EOS.

use crate::graph::{Edge, GraphError, SceneGraph, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeSymbol {
    Object(usize),
    Eos,
}

impl NodeSymbol {
    /// Class index with EOS at `num_objects`.
    pub fn class(self, num_objects: usize) -> usize {
        match self {
            NodeSymbol::Object(c) => c,
            NodeSymbol::Eos => num_objects,
        }
    }

    pub fn from_class(class: usize, num_objects: usize) -> Self {
        if class >= num_objects {
            NodeSymbol::Eos
        } else {
            NodeSymbol::Object(class)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeSymbol {
    Relation(usize),
    NoEdge,
    Pad,
    Sos,
}

impl EdgeSymbol {
    /// Token index: relations `0..R`, then no-edge, PAD, SOS.
    pub fn token(self, num_relations: usize) -> usize {
        match self {
            EdgeSymbol::Relation(r) => r,
            EdgeSymbol::NoEdge => num_relations,
            EdgeSymbol::Pad => num_relations + 1,
            EdgeSymbol::Sos => num_relations + 2,
        }
    }

    /// Inverse of the output-class mapping (`0..=R`).
    pub fn from_class(class: usize, num_relations: usize) -> Self {
        if class >= num_relations {
            EdgeSymbol::NoEdge
        } else {
            EdgeSymbol::Relation(class)
        }
    }

    fn from_relation(rel: Option<usize>) -> Self {
        rel.map_or(EdgeSymbol::NoEdge, EdgeSymbol::Relation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSequence {
    pub nodes: Vec<NodeSymbol>,
    pub edges_to: Vec<Vec<EdgeSymbol>>,
    pub edges_from: Vec<Vec<EdgeSymbol>>,
}

impl GraphSequence {
    /// Number of graph nodes (EOS excluded).
    pub fn num_nodes(&self) -> usize {
        self.edges_to.len()
    }

    /// Object category of the `i`-th node (0-based).
    pub fn object(&self, i: usize) -> usize {
        match self.nodes[i] {
            NodeSymbol::Object(c) => c,
            NodeSymbol::Eos => panic!("node {i} is EOS"),
        }
    }

    /// Number of edge slots in one direction: `m(m−1)/2`.
    pub fn num_slots(&self) -> usize {
        let m = self.num_nodes();
        m * m.saturating_sub(1) / 2
    }
}

pub fn encode_sequence(g: &SceneGraph, perm: &[usize]) -> Result<GraphSequence, GraphError> {
    let p = g.permuted(perm)?;
    let m = p.num_nodes();
    let mut nodes: Vec<NodeSymbol> = p.nodes().iter().map(|&c| NodeSymbol::Object(c)).collect();
    nodes.push(NodeSymbol::Eos);
    let edges_to = (0..m)
        .map(|i| (0..i).map(|j| EdgeSymbol::from_relation(p.relation(j, i))).collect())
        .collect();
    let edges_from = (0..m)
        .map(|i| (0..i).map(|j| EdgeSymbol::from_relation(p.relation(i, j))).collect())
        .collect();
    Ok(GraphSequence {
        nodes,
        edges_to,
        edges_from,
    })
}

fn strip_pad(slots: &[EdgeSymbol]) -> &[EdgeSymbol] {
    let end = slots
        .iter()
        .rposition(|s| *s != EdgeSymbol::Pad)
        .map_or(0, |k| k + 1);
    &slots[..end]
}

/// Rebuilds the graph in sequence order. Trailing PAD slots and the EOS
/// terminator are stripped; the result is validated against `vocab`.
pub fn decode_sequence(s: &GraphSequence, vocab: &Vocabulary) -> Result<SceneGraph, GraphError> {
    let mut objects = Vec::new();
    for (i, sym) in s.nodes.iter().enumerate() {
        match sym {
            NodeSymbol::Object(c) => objects.push(*c),
            NodeSymbol::Eos => {
                if i + 1 != s.nodes.len() {
                    return Err(GraphError::MalformedSequence {
                        step: i,
                        reason: "EOS before the final position".into(),
                    });
                }
            }
        }
    }
    let m = objects.len();
    if s.edges_to.len() != m || s.edges_from.len() != m {
        return Err(GraphError::MalformedSequence {
            step: m,
            reason: format!(
                "{} nodes but {} incoming and {} outgoing edge lists",
                m,
                s.edges_to.len(),
                s.edges_from.len()
            ),
        });
    }
    let mut edges = Vec::new();
    for i in 0..m {
        let to = strip_pad(&s.edges_to[i]);
        let from = strip_pad(&s.edges_from[i]);
        if to.len() != i || from.len() != i {
            return Err(GraphError::MalformedSequence {
                step: i,
                reason: format!(
                    "expected {i} slots per direction, got {} incoming and {} outgoing",
                    to.len(),
                    from.len()
                ),
            });
        }
        for j in 0..i {
            for (sym, src, dst) in [(to[j], j, i), (from[j], i, j)] {
                match sym {
                    EdgeSymbol::Relation(r) => edges.push(Edge::new(src, r, dst)),
                    EdgeSymbol::NoEdge => {}
                    EdgeSymbol::Pad | EdgeSymbol::Sos => {
                        return Err(GraphError::MalformedSequence {
                            step: i,
                            reason: format!("reserved token {sym:?} in edge slot {j}"),
                        })
                    }
                }
            }
        }
    }
    let g = SceneGraph::new(objects, edges);
    g.validate(vocab)?;
    Ok(g)
}
