//! Dataset statistics: occurrence, co-occurrence and per-category count
//! distributions, plus the count-distribution KL between two sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::graph::{SceneGraph, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_graphs: usize,
    /// Share of all object instances per category.
    pub object_occurrence: Vec<f64>,
    /// Share of all edges per relation.
    pub relation_occurrence: Vec<f64>,
    /// Unordered pairs `(a, b)`, `a < b`, of distinct categories appearing in
    /// the same graph (each graph counts a pair once), normalized to sum to 1.
    pub co_occurrence: BTreeMap<(usize, usize), f64>,
    /// Per category: instance count → share of the graphs containing it.
    pub count_distribution: Vec<BTreeMap<usize, f64>>,
}

fn normalized(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

/// Raw per-category instance-count histograms (count → number of graphs).
fn count_histograms(graphs: &[SceneGraph], num_objects: usize) -> Vec<BTreeMap<usize, usize>> {
    let mut hist = vec![BTreeMap::new(); num_objects];
    for g in graphs {
        let mut per = vec![0usize; num_objects];
        for &c in g.nodes() {
            per[c] += 1;
        }
        for (c, &k) in per.iter().enumerate() {
            if k > 0 {
                *hist[c].entry(k).or_insert(0) += 1;
            }
        }
    }
    hist
}

pub fn dataset_stats(graphs: &[SceneGraph], num_objects: usize, num_relations: usize) -> DatasetStats {
    let mut objects = vec![0usize; num_objects];
    let mut relations = vec![0usize; num_relations];
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for g in graphs {
        for &c in g.nodes() {
            objects[c] += 1;
        }
        for e in g.edges() {
            relations[e.rel] += 1;
        }
        let present: Vec<usize> = g.nodes().iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        for (i, &a) in present.iter().enumerate() {
            for &b in &present[i + 1..] {
                *pairs.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let pair_total: usize = pairs.values().sum();
    let count_distribution = count_histograms(graphs, num_objects)
        .into_iter()
        .map(|h| {
            let n: usize = h.values().sum();
            h.into_iter().map(|(k, v)| (k, v as f64 / n as f64)).collect()
        })
        .collect();
    DatasetStats {
        num_graphs: graphs.len(),
        object_occurrence: normalized(&objects),
        relation_occurrence: normalized(&relations),
        co_occurrence: pairs
            .into_iter()
            .map(|(k, v)| (k, v as f64 / pair_total as f64))
            .collect(),
        count_distribution,
    }
}

pub fn occurrence_l1(a: &DatasetStats, b: &DatasetStats) -> f64 {
    a.object_occurrence
        .iter()
        .zip(&b.object_occurrence)
        .map(|(x, y)| (x - y).abs())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountKl {
    /// `(category, KL(A ‖ B))` for every category present in both sets.
    pub per_category: Vec<(usize, f64)>,
    pub mean: f64,
}

/// `KL(count_A ‖ count_B)` per category after add-one smoothing over bins
/// `1..=max`, `max` the largest count seen in either set.
pub fn count_kl(a: &[SceneGraph], b: &[SceneGraph], num_objects: usize) -> CountKl {
    let ha = count_histograms(a, num_objects);
    let hb = count_histograms(b, num_objects);
    let mut per_category = Vec::new();
    for c in 0..num_objects {
        if ha[c].is_empty() || hb[c].is_empty() {
            continue;
        }
        let max = ha[c].keys().chain(hb[c].keys()).copied().max().unwrap_or(1);
        let na: usize = ha[c].values().sum();
        let nb: usize = hb[c].values().sum();
        let kl: f64 = (1..=max)
            .map(|k| {
                let p = (ha[c].get(&k).copied().unwrap_or(0) + 1) as f64 / (na + max) as f64;
                let q = (hb[c].get(&k).copied().unwrap_or(0) + 1) as f64 / (nb + max) as f64;
                p * (p / q).ln()
            })
            .sum();
        per_category.push((c, kl));
    }
    let mean = if per_category.is_empty() {
        0.0
    } else {
        per_category.iter().map(|(_, k)| k).sum::<f64>() / per_category.len() as f64
    };
    CountKl { per_category, mean }
}

/// Co-occurrence values above this are clipped when rendered.
pub const CO_OCCURRENCE_DISPLAY_CAP: f64 = 0.05;

/// Tab-separated tables, one `# section` header each:
///
/// ```text
/// # object_occurrence      name  probability
/// # relation_occurrence    name  probability
/// # co_occurrence          a  b  probability (clipped at 0.05)
/// # count_distribution     name  count  probability
/// ```
pub fn render_stats(s: &DatasetStats, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    writeln!(out, "# graphs\t{}", s.num_graphs).unwrap();
    writeln!(out, "# object_occurrence").unwrap();
    for (c, p) in s.object_occurrence.iter().enumerate() {
        writeln!(out, "{}\t{p:.6}", vocab.object_name(c)).unwrap();
    }
    writeln!(out, "# relation_occurrence").unwrap();
    for (r, p) in s.relation_occurrence.iter().enumerate() {
        writeln!(out, "{}\t{p:.6}", vocab.relation_name(r)).unwrap();
    }
    writeln!(out, "# co_occurrence").unwrap();
    for (&(a, b), &p) in &s.co_occurrence {
        let p = p.min(CO_OCCURRENCE_DISPLAY_CAP);
        writeln!(out, "{}\t{}\t{p:.6}", vocab.object_name(a), vocab.object_name(b)).unwrap();
    }
    writeln!(out, "# count_distribution").unwrap();
    for (c, dist) in s.count_distribution.iter().enumerate() {
        for (k, p) in dist {
            writeln!(out, "{}\t{k}\t{p:.6}", vocab.object_name(c)).unwrap();
        }
    }
    out
}
