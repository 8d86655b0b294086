//! Empirical distribution of the first node's category.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::graph::SceneGraph;
use crate::ordering::{order_nodes_with, OrderingScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstNodePrior {
    pub probs: Vec<f64>,
    /// Raw first-node counts behind `probs`.
    pub counts: Vec<u64>,
    /// Additive smoothing applied to every category.
    pub alpha: f64,
}

impl FirstNodePrior {
    /// One ordering draw per graph from the scheme's seed; the category of
    /// the node placed first is counted and the histogram is smoothed with
    /// `alpha` per category.
    pub fn estimate(
        graphs: &[SceneGraph],
        scheme: &OrderingScheme,
        num_objects: usize,
        alpha: f64,
    ) -> Result<Self> {
        if graphs.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
        let mut counts = vec![0u64; num_objects];
        for g in graphs {
            let perm = order_nodes_with(g, scheme, &mut rng)?;
            counts[g.nodes()[perm[0]]] += 1;
        }
        Ok(Self::from_counts(counts, alpha))
    }

    pub fn from_counts(counts: Vec<u64>, alpha: f64) -> Self {
        let total = counts.iter().sum::<u64>() as f64 + alpha * counts.len() as f64;
        let probs = counts.iter().map(|&c| (c as f64 + alpha) / total).collect();
        Self { probs, counts, alpha }
    }

    pub fn prob(&self, category: usize) -> f64 {
        self.probs.get(category).copied().unwrap_or(0.0)
    }

    /// Sampling weights at a temperature: `p^(1/T)`; `T = 0` puts all mass on
    /// the mode (lowest index on ties).
    pub fn tempered(&self, temperature: f64) -> Vec<f64> {
        if temperature <= 0.0 {
            let best = self
                .probs
                .iter()
                .enumerate()
                .fold(0, |b, (k, &p)| if p > self.probs[b] { k } else { b });
            let mut out = vec![0.0; self.probs.len()];
            out[best] = 1.0;
            return out;
        }
        let w: Vec<f64> = self.probs.iter().map(|p| p.powf(1.0 / temperature)).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }
}
