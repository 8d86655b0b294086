//! Maximum mean discrepancy between two graph sets.

use serde::{Deserialize, Serialize};

use super::kernels::{similarity, GraphFeatures, KernelConfig};
use crate::graph::SceneGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    /// V-statistic: diagonal terms included. Exactly zero for identical sets.
    #[default]
    Biased,
    /// U-statistic: within-set diagonals excluded.
    Unbiased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdEntry {
    pub kernel: String,
    pub kernel_config: KernelConfig,
    pub mmd2: f64,
    pub within_a: GramStats,
    pub within_b: GramStats,
    pub across: GramStats,
    /// Walk enumerations that stopped at the cap, over both sets.
    pub walk_cap_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdReport {
    pub estimator: MmdEstimator,
    pub size_a: usize,
    pub size_b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub entries: Vec<MmdEntry>,
}

impl MmdReport {
    pub fn mmd2(&self, kernel: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.kernel == kernel).map(|e| e.mmd2)
    }
}

/// Row-major kernel matrix between two prepared sets, rows split over
/// `threads` workers. Entry values do not depend on the thread count.
pub fn gram_matrix(a: &[GraphFeatures], b: &[GraphFeatures], cfg: &KernelConfig, threads: usize) -> Vec<Vec<f64>> {
    let threads = threads.max(1).min(a.len().max(1));
    let row = |x: &GraphFeatures| b.iter().map(|y| similarity(x, y, cfg)).collect::<Vec<f64>>();
    if threads == 1 {
        return a.iter().map(row).collect();
    }
    let chunk = a.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = a
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(row).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("gram worker panicked")).collect()
    })
}

fn stats(k: &[Vec<f64>], skip_diagonal: bool) -> GramStats {
    let (mut sum, mut n) = (0.0, 0usize);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, row) in k.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if skip_diagonal && i == j {
                continue;
            }
            sum += v;
            n += 1;
            min = min.min(v);
            max = max.max(v);
        }
    }
    if n == 0 {
        return GramStats {
            mean: 0.0,
            min: 0.0,
            max: 0.0,
        };
    }
    GramStats {
        mean: sum / n as f64,
        min,
        max,
    }
}

pub fn mmd_entry(
    a: &[SceneGraph],
    b: &[SceneGraph],
    cfg: &KernelConfig,
    estimator: MmdEstimator,
    threads: usize,
) -> MmdEntry {
    let fa: Vec<_> = a.iter().map(|g| GraphFeatures::new(g, cfg)).collect();
    let fb: Vec<_> = b.iter().map(|g| GraphFeatures::new(g, cfg)).collect();
    let unbiased = estimator == MmdEstimator::Unbiased;
    let within_a = stats(&gram_matrix(&fa, &fa, cfg, threads), unbiased);
    let within_b = stats(&gram_matrix(&fb, &fb, cfg, threads), unbiased);
    let across = stats(&gram_matrix(&fa, &fb, cfg, threads), false);
    MmdEntry {
        kernel: cfg.kind.name().to_string(),
        kernel_config: *cfg,
        mmd2: within_a.mean + within_b.mean - 2.0 * across.mean,
        within_a,
        within_b,
        across,
        walk_cap_hits: fa.iter().chain(&fb).map(|f| f.cap_hits).sum(),
    }
}

/// MMD² under each kernel configuration.
pub fn mmd(
    a: &[SceneGraph],
    b: &[SceneGraph],
    kernels: &[KernelConfig],
    estimator: MmdEstimator,
    threads: usize,
) -> MmdReport {
    MmdReport {
        estimator,
        size_a: a.len(),
        size_b: b.len(),
        seed: None,
        entries: kernels.iter().map(|k| mmd_entry(a, b, k, estimator, threads)).collect(),
    }
}
