//! Negative log-likelihood of whole graphs.

use sgg_autodiff::{Scalar, Tape};

use super::{ModelError, Result, SceneGraphModel};
use crate::graph::SceneGraph;
use crate::ordering::{order_nodes, OrderingScheme};
use crate::sequence::{encode_sequence, GraphSequence};

/// Graphs per tape when scoring many sequences.
const SCORE_CHUNK: usize = 64;

impl<T: Scalar> SceneGraphModel<T> {
    /// `−ln p(O_1)` under the prior; `+∞` for a zero-probability category.
    pub fn prior_nll(&self, first: usize) -> Result<f64> {
        let prior = self.prior.as_ref().ok_or(ModelError::PriorMissing)?;
        Ok(-prior.prob(first).ln())
    }

    /// NLL in nats of one serialized graph: the prior term plus every node
    /// step (EOS included) and every edge slot in both directions.
    pub fn sequence_nll(&self, seq: &GraphSequence) -> Result<f64> {
        self.check_sequence(seq)?;
        let prior = self.prior_nll(seq.object(0))?;
        if prior.is_infinite() {
            return Err(ModelError::ZeroPriorProbability(format!("category {}", seq.object(0))));
        }
        let mut tape = Tape::new(&self.params);
        let tf = self.teacher_forced(&mut tape, &[seq])?;
        Ok(prior + tf.per_graph[0])
    }

    pub fn score_nll(&self, g: &SceneGraph, perm: &[usize]) -> Result<f64> {
        self.sequence_nll(&encode_sequence(g, perm)?)
    }

    /// Permutation drawn from `scheme` (its own seed).
    pub fn score_nll_with(&self, g: &SceneGraph, scheme: &OrderingScheme) -> Result<f64> {
        self.score_nll(g, &order_nodes(g, scheme)?)
    }

    /// Batched scoring; graphs whose first category has zero prior mass get
    /// `f64::INFINITY` instead of an error.
    pub fn score_sequences(&self, seqs: &[GraphSequence]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(SCORE_CHUNK) {
            let refs: Vec<&GraphSequence> = chunk.iter().collect();
            let mut tape = Tape::new(&self.params);
            let tf = self.teacher_forced(&mut tape, &refs)?;
            for (s, body) in chunk.iter().zip(tf.per_graph) {
                out.push(self.prior_nll(s.object(0))? + body);
            }
        }
        Ok(out)
    }
}
