//! Synthetic scene grammar: a weighted choice of scene type, per-scene
//! object pools, part-attachment rules and pairwise relation rules.
//!
//! Generation of one graph:
//!
//! 1. draw a scene type by weight;
//! 2. for each pool entry, include the category with its probability and
//!    add a drawn number of instances;
//! 3. walk the nodes in order (including ones added here); for every part
//!    rule listing the node's category as a parent, with the rule's
//!    probability add a drawn number of child nodes, each linked
//!    `parent --relation--> child`. Child tiers must exceed parent tiers,
//!    so this terminates and every part node has exactly one parent edge;
//! 4. for each pairwise rule in order and each ordered pair of nodes with
//!    the rule's (subject, object) categories, add an edge with the rule's
//!    probability and a drawn relation, skipping pairs already linked.
//!
//! Nodes beyond `max_nodes` are never created.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::graph::{Edge, SceneGraph, Vocabulary};
use crate::ordering::TierMap;

/// The bundled grammar: 20 categories over 3 tiers, 8 relations, street,
/// park and kitchen scenes.
pub const DEFAULT_GRAMMAR: &str = include_str!("../../assets/default_grammar.json");

/// `(count, probability)` pairs; counts ≥ 1, probabilities summing to 1.
pub type CountDistribution = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub tier: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    pub category: String,
    pub probability: f64,
    pub counts: CountDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub weight: f64,
    pub objects: Vec<PoolEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartRule {
    pub child: String,
    pub parents: Vec<String>,
    pub relation: String,
    /// Chance that a given parent instance gets children from this rule.
    pub probability: f64,
    pub counts: CountDistribution,
}

/// Directed: edges run subject → object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRule {
    pub subject: String,
    pub object: String,
    pub probability: f64,
    pub relations: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarConfig {
    pub objects: Vec<ObjectSpec>,
    pub relations: Vec<String>,
    pub scenes: Vec<SceneSpec>,
    #[serde(default)]
    pub parts: Vec<PartRule>,
    #[serde(default)]
    pub pairs: Vec<PairRule>,
    pub max_nodes: usize,
    #[serde(default)]
    pub seed: u64,
}

const TOLERANCE: f64 = 1e-6;

fn invalid(msg: impl Into<String>) -> DataError {
    DataError::ConfigInvalid(msg.into())
}

fn check_probability(p: f64, what: &str) -> Result<(), DataError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("{what}: probability {p} outside [0, 1]")))
    }
}

fn check_normalized(ps: impl Iterator<Item = f64>, what: &str) -> Result<(), DataError> {
    let mut total = 0.0;
    let mut any = false;
    for p in ps {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(invalid(format!("{what}: negative or non-finite weight {p}")));
        }
        total += p;
        any = true;
    }
    if !any || (total - 1.0).abs() > TOLERANCE {
        return Err(invalid(format!("{what}: weights sum to {total}, not 1")));
    }
    Ok(())
}

fn check_counts(counts: &CountDistribution, what: &str) -> Result<(), DataError> {
    if counts.iter().any(|&(k, _)| k == 0) {
        return Err(invalid(format!("{what}: counts must be at least 1")));
    }
    check_normalized(counts.iter().map(|c| c.1), what)
}

/// Config resolved against its vocabulary, ready to sample from.
struct Compiled {
    scenes: WeightedIndex<f64>,
    pools: Vec<Vec<(usize, f64, Counts)>>,
    /// parent category → (child, relation, probability, counts)
    parts: Vec<Vec<(usize, usize, f64, Counts)>>,
    pairs: Vec<(usize, usize, f64, Vec<usize>, WeightedIndex<f64>)>,
    max_nodes: usize,
}

struct Counts {
    values: Vec<usize>,
    dist: WeightedIndex<f64>,
}

impl Counts {
    fn new(c: &CountDistribution) -> Self {
        Self {
            values: c.iter().map(|x| x.0).collect(),
            dist: WeightedIndex::new(c.iter().map(|x| x.1)).expect("validated"),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.values[self.dist.sample(rng)]
    }
}

impl GrammarConfig {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn default_grammar() -> Self {
        Self::from_json(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, DataError> {
        Vocabulary::new(
            self.objects.iter().map(|o| o.name.clone()).collect(),
            self.relations.clone(),
        )
        .map_err(|e| invalid(e.to_string()))
    }

    /// Tier ranks for hierarchical ordering.
    pub fn tier_map(&self, vocab: &Vocabulary) -> TierMap {
        let names: BTreeMap<String, u32> = self.objects.iter().map(|o| (o.name.clone(), o.tier)).collect();
        TierMap::from_names(&names, vocab)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.compile().map(|_| ())
    }

    fn compile(&self) -> Result<Compiled, DataError> {
        let vocab = self.vocabulary()?;
        let obj = |n: &str, what: &str| {
            vocab
                .object_id(n)
                .ok_or_else(|| invalid(format!("{what}: unknown object category `{n}`")))
        };
        let rel = |n: &str, what: &str| {
            vocab
                .relation_id(n)
                .ok_or_else(|| invalid(format!("{what}: unknown relation `{n}`")))
        };
        if self.max_nodes == 0 {
            return Err(invalid("max_nodes must be at least 1"));
        }
        if self.scenes.is_empty() {
            return Err(invalid("no scene types"));
        }
        check_normalized(self.scenes.iter().map(|s| s.weight), "scene weights")?;
        let mut pools = Vec::new();
        for s in &self.scenes {
            let mut pool = Vec::new();
            for e in &s.objects {
                let what = format!("scene `{}`, object `{}`", s.name, e.category);
                check_probability(e.probability, &what)?;
                check_counts(&e.counts, &what)?;
                pool.push((obj(&e.category, &what)?, e.probability, Counts::new(&e.counts)));
            }
            if s.objects.iter().all(|e| e.probability == 0.0) && s.weight > 0.0 {
                return Err(invalid(format!("scene `{}` can never contain an object", s.name)));
            }
            pools.push(pool);
        }
        let tier = |c: usize| self.objects[c].tier;
        let mut parts: Vec<Vec<_>> = (0..vocab.num_objects()).map(|_| Vec::new()).collect();
        for p in &self.parts {
            let what = format!("part rule for `{}`", p.child);
            let child = obj(&p.child, &what)?;
            let r = rel(&p.relation, &what)?;
            check_probability(p.probability, &what)?;
            check_counts(&p.counts, &what)?;
            if p.parents.is_empty() {
                return Err(invalid(format!("{what}: no parent categories")));
            }
            for name in &p.parents {
                let parent = obj(name, &what)?;
                if tier(child) <= tier(parent) {
                    return Err(invalid(format!(
                        "{what}: child tier {} must exceed parent `{name}` tier {}",
                        tier(child),
                        tier(parent)
                    )));
                }
                parts[parent].push((child, r, p.probability, Counts::new(&p.counts)));
            }
        }
        let mut pairs = Vec::new();
        for p in &self.pairs {
            let what = format!("pair rule `{}` → `{}`", p.subject, p.object);
            check_probability(p.probability, &what)?;
            check_normalized(p.relations.iter().map(|r| r.1), &what)?;
            let rels = p
                .relations
                .iter()
                .map(|(n, _)| rel(n, &what))
                .collect::<Result<Vec<_>, _>>()?;
            let dist = WeightedIndex::new(p.relations.iter().map(|r| r.1)).map_err(|e| invalid(format!("{what}: {e}")))?;
            pairs.push((obj(&p.subject, &what)?, obj(&p.object, &what)?, p.probability, rels, dist));
        }
        Ok(Compiled {
            scenes: WeightedIndex::new(self.scenes.iter().map(|s| s.weight)).map_err(|e| invalid(e.to_string()))?,
            pools,
            parts,
            pairs,
            max_nodes: self.max_nodes,
        })
    }
}

impl Compiled {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SceneGraph {
        let mut nodes: Vec<usize> = Vec::new();
        // redraw until the scene is nonempty; validation ensures it can be
        while nodes.is_empty() {
            let scene = self.scenes.sample(rng);
            for (c, p, counts) in &self.pools[scene] {
                if rng.gen_bool(*p) {
                    for _ in 0..counts.sample(rng) {
                        if nodes.len() < self.max_nodes {
                            nodes.push(*c);
                        }
                    }
                }
            }
        }
        let mut edges: Vec<Edge> = Vec::new();
        let mut i = 0;
        while i < nodes.len() {
            for (child, r, p, counts) in &self.parts[nodes[i]] {
                if rng.gen_bool(*p) {
                    for _ in 0..counts.sample(rng) {
                        if nodes.len() < self.max_nodes {
                            edges.push(Edge::new(i, *r, nodes.len()));
                            nodes.push(*child);
                        }
                    }
                }
            }
            i += 1;
        }
        let mut linked: HashSet<(usize, usize)> = edges.iter().map(|e| (e.src, e.dst)).collect();
        for (subject, object, p, rels, dist) in &self.pairs {
            for u in (0..nodes.len()).filter(|&u| nodes[u] == *subject) {
                for v in (0..nodes.len()).filter(|&v| nodes[v] == *object) {
                    if u != v && !linked.contains(&(u, v)) && rng.gen_bool(*p) {
                        edges.push(Edge::new(u, rels[dist.sample(rng)], v));
                        linked.insert((u, v));
                    }
                }
            }
        }
        SceneGraph::new(nodes, edges)
    }
}

/// `n` graphs from `cfg`, reproducible from `(cfg, n, seed)`.
pub fn generate_synthetic(cfg: &GrammarConfig, n: usize, seed: u64) -> Result<Vec<SceneGraph>, DataError> {
    let compiled = cfg.compile()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| compiled.sample(&mut rng)).collect())
}
