//! Scene graphs and their category vocabularies.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("vocabulary needs at least one {0} label")]
    EmptyVocabulary(&'static str),
    #[error("duplicate {kind} label `{name}`")]
    DuplicateLabel { kind: &'static str, name: String },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("node {node} has object label {label}, outside 0..{limit}")]
    OutOfRangeLabel {
        node: usize,
        label: usize,
        limit: usize,
    },
    #[error("edge {src}->{dst} has relation label {label}, outside 0..{limit}")]
    OutOfRangeRelation {
        src: usize,
        dst: usize,
        label: usize,
        limit: usize,
    },
    #[error("edge {src}->{dst} references a node outside 0..{nodes}")]
    DanglingEdge {
        src: usize,
        dst: usize,
        nodes: usize,
    },
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },
    #[error("more than one edge from node {src} to node {dst}")]
    DuplicateDirectedEdge { src: usize, dst: usize },
    #[error("tier map has no tier for object category `{0}`")]
    MissingTier(String),
    #[error("permutation {0:?} is not a bijection on the graph's nodes")]
    InvalidPermutation(Vec<usize>),
    #[error("malformed sequence at step {step}: {reason}")]
    MalformedSequence { step: usize, reason: String },
}

/// Ordered object and relation category names.
///
/// Object categories are `0..C`, relation categories `0..R`. The model's
/// reserved tokens sit just past each range and never collide with a
/// category:
///
/// | token   | index   |
/// |---------|---------|
/// | EOS     | `C`     |
/// | no-edge | `R`     |
/// | PAD     | `R + 1` |
/// | SOS     | `R + 2` |
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    objects: Vec<String>,
    relations: Vec<String>,
    object_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    objects: Vec<String>,
    relations: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = GraphError;

    fn try_from(r: VocabularyRepr) -> Result<Self, GraphError> {
        Vocabulary::new(r.objects, r.relations)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            objects: v.objects,
            relations: v.relations,
        }
    }
}

fn index_unique(names: &[String], kind: &'static str) -> Result<HashMap<String, usize>, GraphError> {
    if names.is_empty() {
        return Err(GraphError::EmptyVocabulary(kind));
    }
    let mut map = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return Err(GraphError::DuplicateLabel {
                kind,
                name: n.clone(),
            });
        }
    }
    Ok(map)
}

impl Vocabulary {
    pub fn new(objects: Vec<String>, relations: Vec<String>) -> Result<Self, GraphError> {
        let object_index = index_unique(&objects, "object")?;
        let relation_index = index_unique(&relations, "relation")?;
        Ok(Self {
            objects,
            relations,
            object_index,
            relation_index,
        })
    }

    pub fn from_strs(objects: &[&str], relations: &[&str]) -> Result<Self, GraphError> {
        Self::new(
            objects.iter().map(|s| s.to_string()).collect(),
            relations.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// Number of object categories, `C`.
    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    /// Number of relation categories, `R`.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn object_name(&self, i: usize) -> &str {
        &self.objects[i]
    }

    pub fn relation_name(&self, i: usize) -> &str {
        &self.relations[i]
    }

    pub fn object_id(&self, name: &str) -> Option<usize> {
        self.object_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn eos_token(&self) -> usize {
        self.num_objects()
    }

    pub fn no_edge_token(&self) -> usize {
        self.num_relations()
    }

    pub fn pad_token(&self) -> usize {
        self.num_relations() + 1
    }

    pub fn sos_token(&self) -> usize {
        self.num_relations() + 2
    }

    /// Hex SHA-256 over the label lists; identifies the vocabulary in checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (tag, list) in [(b'o', &self.objects), (b'r', &self.relations)] {
            for name in list {
                h.update([tag]);
                h.update((name.len() as u64).to_le_bytes());
                h.update(name.as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Directed labeled edge `src --rel--> dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub rel: usize,
    pub dst: usize,
}

impl Edge {
    pub fn new(src: usize, rel: usize, dst: usize) -> Self {
        Self { src, rel, dst }
    }
}

/// Object instances (category per node) plus directed relation edges.
///
/// Edges are kept sorted by `(src, dst)` so that equal edge sets compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SceneGraph {
    nodes: Vec<usize>,
    edges: Vec<Edge>,
}

impl SceneGraph {
    /// Builds a graph without validating it; see [`SceneGraph::validate`].
    pub fn new(nodes: Vec<usize>, mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(|e| (e.src, e.dst, e.rel));
        Self { nodes, edges }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Relation label of the edge `src → dst`, if present.
    pub fn relation(&self, src: usize, dst: usize) -> Option<usize> {
        self.edges
            .binary_search_by_key(&(src, dst), |e| (e.src, e.dst))
            .ok()
            .map(|i| self.edges[i].rel)
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), GraphError> {
        let m = self.nodes.len();
        if m == 0 {
            return Err(GraphError::EmptyGraph);
        }
        let c = vocab.num_objects();
        if let Some((node, &label)) = self.nodes.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(GraphError::OutOfRangeLabel {
                node,
                label,
                limit: c,
            });
        }
        let r = vocab.num_relations();
        for (k, e) in self.edges.iter().enumerate() {
            if e.src >= m || e.dst >= m {
                return Err(GraphError::DanglingEdge {
                    src: e.src,
                    dst: e.dst,
                    nodes: m,
                });
            }
            if e.src == e.dst {
                return Err(GraphError::SelfLoop { node: e.src });
            }
            if e.rel >= r {
                return Err(GraphError::OutOfRangeRelation {
                    src: e.src,
                    dst: e.dst,
                    label: e.rel,
                    limit: r,
                });
            }
            if k > 0 {
                let prev = self.edges[k - 1];
                if prev.src == e.src && prev.dst == e.dst {
                    return Err(GraphError::DuplicateDirectedEdge {
                        src: e.src,
                        dst: e.dst,
                    });
                }
            }
        }
        Ok(())
    }

    /// Node `k` of the result is node `perm[k]` of `self`; edges are relabeled to match.
    pub fn permuted(&self, perm: &[usize]) -> Result<SceneGraph, GraphError> {
        let inverse = inverse_permutation(perm, self.nodes.len())?;
        let nodes = perm.iter().map(|&p| self.nodes[p]).collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(inverse[e.src], e.rel, inverse[e.dst]))
            .collect();
        Ok(SceneGraph::new(nodes, edges))
    }

    /// Undirected adjacency lists with neighbors in ascending index order.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Outgoing `(relation, target)` pairs per node, ordered by target index.
    pub fn out_edges(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.src].push((e.rel, e.dst));
        }
        out
    }
}

/// Validates and returns the graph unchanged.
pub fn validate_graph(g: SceneGraph, vocab: &Vocabulary) -> Result<SceneGraph, GraphError> {
    g.validate(vocab)?;
    Ok(g)
}

/// `inverse[perm[k]] = k`; fails unless `perm` is a bijection on `0..n`.
pub fn inverse_permutation(perm: &[usize], n: usize) -> Result<Vec<usize>, GraphError> {
    let bad = || GraphError::InvalidPermutation(perm.to_vec());
    if perm.len() != n {
        return Err(bad());
    }
    let mut inverse = vec![usize::MAX; n];
    for (k, &p) in perm.iter().enumerate() {
        if p >= n || inverse[p] != usize::MAX {
            return Err(bad());
        }
        inverse[p] = k;
    }
    Ok(inverse)
}

impl fmt::Display for SceneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nodes={:?} edges=[", self.nodes)?;
        for (i, e) in self.edges.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}-{}->{}", e.src, e.rel, e.dst)?;
        }
        write!(f, "]")
    }
}
