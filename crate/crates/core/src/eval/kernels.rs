//! Graph similarity kernels, both normalized to `[0, 1]` by the larger of
//! the two self-similarities.
//!
//! **Random walk.** Two walks of `p` nodes are compared node by node and
//! edge by edge; node labels must match and each node is weighted by
//! `σ(v) = 1 / (#nodes in v's graph with v's label)`, relations must match
//! exactly. Summed over all walk pairs this factorizes: with
//!
//! ```text
//! φ_G(l_1, e_1, …, l_p) = Σ_{walks of G with that label sequence} Π_i σ(v_i)
//! ```
//!
//! the kernel is `k(a, b) = Σ_s φ_a(s) · φ_b(s)`. Walks follow edge
//! direction and may revisit nodes; they are enumerated depth-first in
//! (start node, edge target) order, at most `walk_cap` per start node.
//!
//! **Object set.** `Σ_x 1 / (1 + |A(x) − B(x)|)` over categories present in
//! both graphs, `A(x)` being the instance count of category `x`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::SceneGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    RandomWalk,
    ObjectSet,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::RandomWalk => "random_walk",
            KernelKind::ObjectSet => "object_set",
        }
    }
}

/// Which walk lengths enter the random-walk kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// Walks of exactly `p` nodes (falling back to the longest length both
    /// graphs have when one of them has none).
    Single,
    /// Walks of every length `1..=p`.
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Walk length in nodes (`p − 1` edges).
    pub walk_length: usize,
    pub walk_cap: usize,
    pub mode: WalkMode,
}

impl KernelConfig {
    pub fn random_walk(walk_length: usize) -> Self {
        Self {
            kind: KernelKind::RandomWalk,
            walk_length,
            walk_cap: 10_000,
            mode: WalkMode::Single,
        }
    }

    pub fn object_set() -> Self {
        Self {
            kind: KernelKind::ObjectSet,
            ..Self::random_walk(3)
        }
    }
}

/// One walk label sequence: node, relation, node, …, node.
pub type Signature = Vec<u32>;

/// Sparse feature vector sorted by signature.
pub type FeatureMap = Vec<(Signature, f64)>;

/// Cached per-graph inputs for either kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFeatures {
    /// `walks[q − 1]`: features of walks with `q` nodes, `q = 1..=p`.
    pub walks: Vec<FeatureMap>,
    /// Longest walk length (in nodes, at most `p`) the graph has.
    pub longest: usize,
    /// Start nodes whose enumeration stopped at the cap (summed over lengths).
    pub cap_hits: usize,
    /// Category → instance count.
    pub counts: BTreeMap<usize, usize>,
}

impl GraphFeatures {
    pub fn new(g: &SceneGraph, cfg: &KernelConfig) -> Self {
        let counts = object_counts(g);
        let walk_length = cfg.walk_length.max(1);
        let mut walks = Vec::with_capacity(walk_length);
        let mut cap_hits = 0;
        let mut longest = 0;
        if cfg.kind == KernelKind::RandomWalk {
            for q in 1..=walk_length {
                let (map, hits, any) = walk_feature_map(g, &counts, q, cfg.walk_cap);
                if any {
                    longest = q;
                }
                cap_hits += hits;
                walks.push(map);
            }
        }
        Self {
            walks,
            longest,
            cap_hits,
            counts,
        }
    }
}

pub fn object_counts(g: &SceneGraph) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for &c in g.nodes() {
        *counts.entry(c).or_insert(0) += 1;
    }
    counts
}

/// Features of walks with exactly `q` nodes. Also returns the number of
/// start nodes that hit `cap` and whether any walk exists.
fn walk_feature_map(
    g: &SceneGraph,
    counts: &BTreeMap<usize, usize>,
    q: usize,
    cap: usize,
) -> (FeatureMap, usize, bool) {
    let out = g.out_edges();
    let sigma: Vec<f64> = g.nodes().iter().map(|c| 1.0 / counts[c] as f64).collect();
    let mut acc: BTreeMap<Signature, f64> = BTreeMap::new();
    let mut hits = 0;
    let mut any = false;
    for start in 0..g.num_nodes() {
        let mut emitted = 0usize;
        let mut sig: Signature = vec![g.nodes()[start] as u32];
        // DFS stack of (node, next out-edge index)
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        let mut weight: Vec<f64> = vec![sigma[start]];
        'dfs: while let Some(&(v, _)) = stack.last() {
            if stack.len() == q {
                *acc.entry(sig.clone()).or_insert(0.0) += *weight.last().unwrap();
                any = true;
                emitted += 1;
                if emitted >= cap {
                    hits += 1;
                    break 'dfs;
                }
                stack.pop();
                weight.pop();
                sig.truncate(sig.len().saturating_sub(2));
                continue;
            }
            let top = stack.last_mut().unwrap();
            if top.1 < out[v].len() {
                let (rel, dst) = out[v][top.1];
                top.1 += 1;
                sig.push(rel as u32);
                sig.push(g.nodes()[dst] as u32);
                let w = weight.last().unwrap() * sigma[dst];
                weight.push(w);
                stack.push((dst, 0));
            } else {
                stack.pop();
                weight.pop();
                sig.truncate(sig.len().saturating_sub(2));
            }
        }
    }
    (acc.into_iter().collect(), hits, any)
}

/// Inner product of two sorted sparse maps (merge join, symmetric in its
/// arguments bit for bit).
pub fn feature_dot(a: &FeatureMap, b: &FeatureMap) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

fn normalize(ab: f64, aa: f64, bb: f64) -> f64 {
    let m = aa.max(bb);
    if m > 0.0 {
        ab / m
    } else {
        0.0
    }
}

/// Unnormalized `(k(a, b), k(a, a), k(b, b))` at the lengths selected by
/// the mode.
fn walk_raw(a: &GraphFeatures, b: &GraphFeatures, cfg: &KernelConfig) -> (f64, f64, f64) {
    match cfg.mode {
        WalkMode::Single => {
            let q = effective_walk_length(a, b, cfg);
            let (fa, fb) = (&a.walks[q - 1], &b.walks[q - 1]);
            (feature_dot(fa, fb), feature_dot(fa, fa), feature_dot(fb, fb))
        }
        WalkMode::Cumulative => a.walks.iter().zip(&b.walks).fold((0.0, 0.0, 0.0), |acc, (fa, fb)| {
            (
                acc.0 + feature_dot(fa, fb),
                acc.1 + feature_dot(fa, fa),
                acc.2 + feature_dot(fb, fb),
            )
        }),
    }
}

/// Walk length (nodes) used for the pair under [`WalkMode::Single`].
pub fn effective_walk_length(a: &GraphFeatures, b: &GraphFeatures, cfg: &KernelConfig) -> usize {
    cfg.walk_length.max(1).min(a.longest).min(b.longest).max(1)
}

pub fn object_set_raw(a: &BTreeMap<usize, usize>, b: &BTreeMap<usize, usize>) -> f64 {
    a.iter()
        .filter_map(|(x, &ca)| b.get(x).map(|&cb| 1.0 / (1.0 + ca.abs_diff(cb) as f64)))
        .sum()
}

/// Normalized similarity of two prepared graphs.
pub fn similarity(a: &GraphFeatures, b: &GraphFeatures, cfg: &KernelConfig) -> f64 {
    match cfg.kind {
        KernelKind::RandomWalk => {
            let (ab, aa, bb) = walk_raw(a, b, cfg);
            normalize(ab, aa, bb)
        }
        KernelKind::ObjectSet => {
            let ab = object_set_raw(&a.counts, &b.counts);
            // self-kernel = number of distinct categories
            normalize(ab, a.counts.len() as f64, b.counts.len() as f64)
        }
    }
}

pub fn random_walk_kernel(a: &SceneGraph, b: &SceneGraph, cfg: &KernelConfig) -> f64 {
    let cfg = KernelConfig {
        kind: KernelKind::RandomWalk,
        ..*cfg
    };
    similarity(&GraphFeatures::new(a, &cfg), &GraphFeatures::new(b, &cfg), &cfg)
}

pub fn object_set_kernel(a: &SceneGraph, b: &SceneGraph) -> f64 {
    normalize(
        object_set_raw(&object_counts(a), &object_counts(b)),
        object_counts(a).len() as f64,
        object_counts(b).len() as f64,
    )
}

pub fn kernel(a: &SceneGraph, b: &SceneGraph, cfg: &KernelConfig) -> f64 {
    match cfg.kind {
        KernelKind::RandomWalk => random_walk_kernel(a, b, cfg),
        KernelKind::ObjectSet => object_set_kernel(a, b),
    }
}

/// Most similar graph in `train` (lowest index on ties) and its similarity.
pub fn nearest_training_graph(g: &SceneGraph, train: &[SceneGraph], cfg: &KernelConfig) -> Option<(usize, f64)> {
    let fg = GraphFeatures::new(g, cfg);
    let mut best: Option<(usize, f64)> = None;
    for (k, t) in train.iter().enumerate() {
        let s = similarity(&fg, &GraphFeatures::new(t, cfg), cfg);
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best
}
