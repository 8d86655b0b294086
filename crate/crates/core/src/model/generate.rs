//! Ancestral sampling and partial-graph completion.
//!
//! Both run the same loop: a forced prefix of nodes and edges is read by the
//! history GRUs, then node/edge steps are sampled until the node head emits
//! EOS or the size limit is reached. Plain sampling is completion of a
//! one-node prefix drawn from the first-node prior.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgg_autodiff::{Scalar, Tape, Tensor};

use super::{History, ModelError, Result, SceneGraphModel, SlotTokens};
use crate::graph::{Edge, SceneGraph};
use crate::sequence::{encode_sequence, EdgeSymbol};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    /// Softmax temperature; 0 picks the most likely class.
    pub temperature: f64,
    /// Size cap; the model's own `max_nodes` if unset or larger.
    pub max_nodes: Option<usize>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_nodes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub graph: SceneGraph,
    /// The size cap was hit before the model chose EOS.
    pub truncated: bool,
}

/// Draws a class from `softmax(logits / temperature)`; argmax (lowest index
/// on ties) at temperature 0.
pub fn sample_categorical<T: Scalar, R: Rng + ?Sized>(logits: &[T], temperature: f64, rng: &mut R) -> usize {
    let vals: Vec<f64> = logits.iter().map(|x| x.as_f64()).collect();
    let (best, max) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(b, m), (k, &v)| if v > m { (k, v) } else { (b, m) });
    if temperature <= 0.0 {
        return best;
    }
    let weights: Vec<f64> = vals.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    best
}

struct Stored<T: Scalar> {
    node: Vec<Tensor<T>>,
    to: Vec<Tensor<T>>,
    from: Vec<Tensor<T>>,
}

impl<T: Scalar> Stored<T> {
    fn save(tape: &Tape<'_, T>, h: &History) -> Self {
        let grab = |v: &[sgg_autodiff::Var]| v.iter().map(|&s| tape.tensor(s)).collect();
        Self {
            node: grab(&h.node),
            to: grab(&h.to),
            from: grab(&h.from),
        }
    }

    fn load(&self, tape: &mut Tape<'_, T>) -> History {
        let mut put = |v: &[Tensor<T>]| v.iter().map(|t| tape.constant(t.clone())).collect();
        History {
            node: put(&self.node),
            to: put(&self.to),
            from: put(&self.from),
        }
    }
}

impl<T: Scalar> SceneGraphModel<T> {
    fn size_limit(&self, opts: &SampleOptions) -> usize {
        opts.max_nodes
            .unwrap_or(self.config.max_nodes)
            .clamp(1, self.config.max_nodes)
    }

    pub fn sample_graph<R: Rng + ?Sized>(&self, rng: &mut R, opts: &SampleOptions) -> Result<Sampled> {
        let prior = self.prior.as_ref().ok_or(ModelError::PriorMissing)?;
        let weights = prior.tempered(opts.temperature);
        let dist = WeightedIndex::new(&weights).map_err(|e| ModelError::Config(format!("prior: {e}")))?;
        let first = dist.sample(rng);
        self.extend(vec![first], vec![Vec::new()], vec![Vec::new()], rng, opts)
    }

    pub fn sample_graph_seeded(&self, seed: u64, opts: &SampleOptions) -> Result<Sampled> {
        self.sample_graph(&mut ChaCha8Rng::seed_from_u64(seed), opts)
    }

    /// Continues `partial`, serialized under `perm`, until EOS. The result
    /// keeps the partial graph as its first nodes (in `perm` order) with all
    /// of its edges; new nodes follow.
    pub fn complete_graph<R: Rng + ?Sized>(
        &self,
        partial: &SceneGraph,
        perm: &[usize],
        rng: &mut R,
        opts: &SampleOptions,
    ) -> Result<Sampled> {
        let limit = self.size_limit(opts);
        if partial.num_nodes() >= limit {
            return Err(ModelError::PartialTooLarge {
                nodes: partial.num_nodes(),
                max: limit,
            });
        }
        let seq = encode_sequence(partial, perm)?;
        self.check_sequence(&seq)?;
        let nodes = (0..seq.num_nodes()).map(|i| seq.object(i)).collect();
        self.extend(nodes, seq.edges_to, seq.edges_from, rng, opts)
    }

    fn extend<R: Rng + ?Sized>(
        &self,
        mut nodes: Vec<usize>,
        mut to: Vec<Vec<EdgeSymbol>>,
        mut from: Vec<Vec<EdgeSymbol>>,
        rng: &mut R,
        opts: &SampleOptions,
    ) -> Result<Sampled> {
        let limit = self.size_limit(opts);
        let forced = nodes.len();
        let temp = opts.temperature;
        let mut truncated = false;
        let mut stored: Option<Stored<T>> = None;
        let mut t = 1;
        loop {
            let mut tape = Tape::new(&self.params);
            let state = match &stored {
                Some(s) => s.load(&mut tape),
                None => self.zero_history(&mut tape, 1),
            };
            let x = self.history_input(&mut tape, &nodes[t - 1..t], &[&to[t - 1]], &[&from[t - 1]])?;
            let state = self.history_step(&mut tape, &state, x)?;
            if t < forced {
                stored = Some(Stored::save(&tape, &state));
                t += 1;
                continue;
            }
            let logits = self.node_logits(&mut tape, &state)?;
            let class = sample_categorical(tape.value(logits), temp, rng);
            if class == self.eos() {
                break;
            }
            if t == limit {
                truncated = true;
                break;
            }

            let (mut h_to, mut h_from) = (state.to.clone(), state.from.clone());
            let (mut new_to, mut new_from) = (Vec::with_capacity(t), Vec::with_capacity(t));
            let (mut prev_to, mut prev_from) = (self.sos(), self.sos());
            for j in 0..t {
                let slot = SlotTokens {
                    prev_from: vec![prev_from],
                    prev_to: vec![prev_to],
                    new_node: vec![class],
                    old_node: vec![nodes[j]],
                };
                let (next, logits) = self.edge_to_step(&mut tape, &h_to, &slot)?;
                h_to = next;
                let e_to = sample_categorical(tape.value(logits), temp, rng);
                let (next, logits) = self.edge_from_step(&mut tape, &h_from, &slot, &[e_to])?;
                h_from = next;
                let e_from = sample_categorical(tape.value(logits), temp, rng);
                new_to.push(EdgeSymbol::from_class(e_to, self.num_relations));
                new_from.push(EdgeSymbol::from_class(e_from, self.num_relations));
                prev_to = e_to;
                prev_from = e_from;
            }
            nodes.push(class);
            to.push(new_to);
            from.push(new_from);
            stored = Some(Stored::save(&tape, &state));
            t += 1;
        }

        let mut edges = Vec::new();
        for i in 0..nodes.len() {
            for j in 0..i {
                if let EdgeSymbol::Relation(r) = to[i][j] {
                    edges.push(Edge::new(j, r, i));
                }
                if let EdgeSymbol::Relation(r) = from[i][j] {
                    edges.push(Edge::new(i, r, j));
                }
            }
        }
        Ok(Sampled {
            graph: SceneGraph::new(nodes, edges),
            truncated,
        })
    }
}
