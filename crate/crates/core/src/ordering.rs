//! Node orderings: the permutation under which a graph is serialized.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, SceneGraph, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingKind {
    Bfs,
    Hierarchical,
    Random,
}

impl std::str::FromStr for OrderingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bfs" => Ok(Self::Bfs),
            "hierarchical" => Ok(Self::Hierarchical),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown ordering `{other}` (bfs|hierarchical|random)")),
        }
    }
}

/// Tier rank per object category; lower tiers come first (background,
/// then objects, then parts).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierMap {
    ranks: Vec<Option<u32>>,
}

impl TierMap {
    pub fn from_ranks(ranks: Vec<Option<u32>>) -> Self {
        Self { ranks }
    }

    /// Builds a map from category names; names not in the vocabulary are
    /// ignored, categories absent from `tiers` stay unassigned.
    pub fn from_names(tiers: &BTreeMap<String, u32>, vocab: &Vocabulary) -> Self {
        let ranks = vocab.objects().iter().map(|n| tiers.get(n).copied()).collect();
        Self { ranks }
    }

    pub fn rank(&self, category: usize) -> Option<u32> {
        self.ranks.get(category).copied().flatten()
    }

    /// Fails with the first category lacking a tier.
    pub fn check_complete(&self, vocab: &Vocabulary) -> Result<(), GraphError> {
        for c in 0..vocab.num_objects() {
            if self.rank(c).is_none() {
                return Err(GraphError::MissingTier(vocab.object_name(c).to_string()));
            }
        }
        Ok(())
    }

    pub fn to_names(&self, vocab: &Vocabulary) -> BTreeMap<String, u32> {
        (0..vocab.num_objects())
            .filter_map(|c| self.rank(c).map(|r| (vocab.object_name(c).to_string(), r)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingScheme {
    pub kind: OrderingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier_map: Option<TierMap>,
    pub seed: u64,
}

impl OrderingScheme {
    pub fn bfs(seed: u64) -> Self {
        Self {
            kind: OrderingKind::Bfs,
            tier_map: None,
            seed,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            kind: OrderingKind::Random,
            tier_map: None,
            seed,
        }
    }

    pub fn hierarchical(tiers: TierMap, seed: u64) -> Self {
        Self {
            kind: OrderingKind::Hierarchical,
            tier_map: Some(tiers),
            seed,
        }
    }
}

/// Permutation for `g` from the scheme's own seed.
pub fn order_nodes(g: &SceneGraph, scheme: &OrderingScheme) -> Result<Vec<usize>, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    order_nodes_with(g, scheme, &mut rng)
}

/// Permutation for `g` drawing randomness from `rng` (fresh draw per call).
pub fn order_nodes_with<R: Rng + ?Sized>(
    g: &SceneGraph,
    scheme: &OrderingScheme,
    rng: &mut R,
) -> Result<Vec<usize>, GraphError> {
    let m = g.num_nodes();
    if m == 0 {
        return Err(GraphError::EmptyGraph);
    }
    match scheme.kind {
        OrderingKind::Bfs => {
            let root = rng.gen_range(0..m);
            Ok(bfs_order(g, root))
        }
        OrderingKind::Random => {
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(rng);
            Ok(perm)
        }
        OrderingKind::Hierarchical => {
            let tiers = scheme
                .tier_map
                .as_ref()
                .ok_or_else(|| GraphError::MissingTier("<no tier map>".into()))?;
            let mut keyed = Vec::with_capacity(m);
            for (i, &c) in g.nodes().iter().enumerate() {
                let rank = tiers
                    .rank(c)
                    .ok_or_else(|| GraphError::MissingTier(format!("category {c}")))?;
                keyed.push((rank, i));
            }
            keyed.shuffle(rng);
            keyed.sort_by_key(|&(rank, _)| rank);
            Ok(keyed.into_iter().map(|(_, i)| i).collect())
        }
    }
}

/// Breadth-first order over the undirected view of `g` from `root`,
/// neighbors in ascending index order. Unreached components follow, each
/// rooted at its lowest-index node.
pub fn bfs_order(g: &SceneGraph, root: usize) -> Vec<usize> {
    let m = g.num_nodes();
    let adj = g.undirected_neighbors();
    let mut seen = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut queue = VecDeque::new();
    let roots = std::iter::once(root).chain(0..m);
    for start in roots {
        if start >= m || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order
}
