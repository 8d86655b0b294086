//! Evaluation: graph kernels, MMD, label corruption, AUROC, dataset
//! statistics and the independent-marginals baseline.

pub mod auroc;
pub mod baseline;
pub mod corrupt;
pub mod kernels;
pub mod mmd;
pub mod stats;


pub use auroc::auroc;
pub use baseline::IndependentMarginals;
pub use corrupt::{corrupt_dataset, corrupt_graph, corrupted_count};
pub use kernels::{
    kernel, nearest_training_graph, object_set_kernel, random_walk_kernel, similarity, GraphFeatures, KernelConfig,
    KernelKind, WalkMode,
};
pub use mmd::{gram_matrix, mmd, mmd_entry, GramStats, MmdEntry, MmdEstimator, MmdReport};
pub use stats::{count_kl, dataset_stats, occurrence_l1, render_stats, CountKl, DatasetStats};
