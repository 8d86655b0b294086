//! Teacher-forced likelihood over a batch of sequences.
//!
//! Sequences are processed longest first so that, at every step, the rows
//! still running form a prefix of the batch: after history step `t` the
//! graphs with `m ≥ t` are active for the node prediction, and those with
//! `m ≥ t + 1` for the `t` edge slots of node `t + 1`. States are shrunk
//! with a row prefix instead of masking, so nothing is computed for
//! finished graphs.

use sgg_autodiff::{Scalar, Tape, Var};

use super::{ModelError, Result, SceneGraphModel, SlotTokens};
use crate::graph::GraphError;
use crate::sequence::{EdgeSymbol, GraphSequence, NodeSymbol};

pub struct TeacherForced {
    /// Sum of per-graph losses (not yet averaged).
    pub total: Var,
    /// Per-graph summed cross-entropy, in input order.
    pub per_graph: Vec<f64>,
}

fn malformed(step: usize, reason: impl Into<String>) -> ModelError {
    ModelError::Graph(GraphError::MalformedSequence {
        step,
        reason: reason.into(),
    })
}

impl<T: Scalar> SceneGraphModel<T> {
    pub(crate) fn check_sequence(&self, s: &GraphSequence) -> Result<()> {
        let m = s.num_nodes();
        if m == 0 {
            return Err(malformed(0, "no nodes"));
        }
        if m > self.config.max_nodes {
            return Err(ModelError::TooManyNodes {
                nodes: m,
                max: self.config.max_nodes,
            });
        }
        if s.nodes.len() != m + 1 || s.nodes[m] != NodeSymbol::Eos || s.edges_from.len() != m {
            return Err(malformed(m, "node list must be the m categories followed by EOS"));
        }
        for i in 0..m {
            match s.nodes[i] {
                NodeSymbol::Object(c) if c < self.num_objects => {}
                _ => return Err(malformed(i, "node is not an in-range category")),
            }
            for list in [&s.edges_to[i], &s.edges_from[i]] {
                if list.len() != i {
                    return Err(malformed(i, format!("expected {i} edge slots, got {}", list.len())));
                }
                for e in list.iter() {
                    match e {
                        EdgeSymbol::Relation(r) if *r < self.num_relations => {}
                        EdgeSymbol::NoEdge => {}
                        other => return Err(malformed(i, format!("edge slot holds {other:?}"))),
                    }
                }
            }
        }
        Ok(())
    }

    /// Records the summed cross-entropy of every node step (including the
    /// closing EOS) and every edge slot in both directions.
    pub fn teacher_forced(&self, tape: &mut Tape<'_, T>, batch: &[&GraphSequence]) -> Result<TeacherForced> {
        for s in batch {
            self.check_sequence(s)?;
        }
        if batch.is_empty() {
            return Err(malformed(0, "empty batch"));
        }
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by_key(|&k| std::cmp::Reverse(batch[k].num_nodes()));
        let seqs: Vec<&GraphSequence> = order.iter().map(|&k| batch[k]).collect();
        let lens: Vec<usize> = seqs.iter().map(|s| s.num_nodes()).collect();
        let active = |min_len: usize| lens.iter().take_while(|&&m| m >= min_len).count();

        let mut per_sorted = vec![0.0f64; seqs.len()];
        let mut terms: Vec<Var> = Vec::new();
        let mut record = |tape: &mut Tape<'_, T>, ce: Var, terms: &mut Vec<Var>| {
            for (acc, v) in per_sorted.iter_mut().zip(tape.value(ce)) {
                *acc += v.as_f64();
            }
            terms.push(tape.sum(ce));
        };

        let mut state = self.zero_history(tape, seqs.len());
        for t in 1..=lens[0] {
            let n_hist = active(t);
            state = state.head(tape, n_hist)?;
            let rows = &seqs[..n_hist];
            let nodes: Vec<usize> = rows.iter().map(|s| s.object(t - 1)).collect();
            let to: Vec<&[EdgeSymbol]> = rows.iter().map(|s| s.edges_to[t - 1].as_slice()).collect();
            let from: Vec<&[EdgeSymbol]> = rows.iter().map(|s| s.edges_from[t - 1].as_slice()).collect();
            let x = self.history_input(tape, &nodes, &to, &from)?;
            state = self.history_step(tape, &state, x)?;

            let logits = self.node_logits(tape, &state)?;
            let targets: Vec<usize> = rows.iter().map(|s| s.nodes[t].class(self.num_objects)).collect();
            let ce = tape.cross_entropy(logits, &targets)?;
            record(tape, ce, &mut terms);

            let n_edge = active(t + 1);
            if n_edge == 0 {
                continue;
            }
            let rows = &seqs[..n_edge];
            let edge_state = state.head(tape, n_edge)?;
            let (mut h_to, mut h_from) = (edge_state.to, edge_state.from);
            let new_node: Vec<usize> = rows.iter().map(|s| s.object(t)).collect();
            for j in 0..t {
                let tok = |e: &EdgeSymbol| self.edge_token(*e);
                let slot = SlotTokens {
                    prev_from: rows
                        .iter()
                        .map(|s| if j == 0 { self.sos() } else { tok(&s.edges_from[t][j - 1]) })
                        .collect(),
                    prev_to: rows
                        .iter()
                        .map(|s| if j == 0 { self.sos() } else { tok(&s.edges_to[t][j - 1]) })
                        .collect(),
                    new_node: new_node.clone(),
                    old_node: rows.iter().map(|s| s.object(j)).collect(),
                };
                let to_targets: Vec<usize> = rows.iter().map(|s| tok(&s.edges_to[t][j])).collect();
                let from_targets: Vec<usize> = rows.iter().map(|s| tok(&s.edges_from[t][j])).collect();

                let (next, logits) = self.edge_to_step(tape, &h_to, &slot)?;
                h_to = next;
                let ce = tape.cross_entropy(logits, &to_targets)?;
                record(tape, ce, &mut terms);

                let (next, logits) = self.edge_from_step(tape, &h_from, &slot, &to_targets)?;
                h_from = next;
                let ce = tape.cross_entropy(logits, &from_targets)?;
                record(tape, ce, &mut terms);
            }
        }

        let mut total = terms[0];
        for &v in &terms[1..] {
            total = tape.add(total, v)?;
        }
        let mut per_graph = vec![0.0; seqs.len()];
        for (sorted_pos, &orig) in order.iter().enumerate() {
            per_graph[orig] = per_sorted[sorted_pos];
        }
        Ok(TeacherForced { total, per_graph })
    }

    /// Mean over graphs of the per-graph summed loss.
    pub fn forward_loss(&self, tape: &mut Tape<'_, T>, batch: &[&GraphSequence]) -> Result<Var> {
        let tf = self.teacher_forced(tape, batch)?;
        Ok(tape.scale(tf.total, T::of(1.0 / batch.len() as f64)))
    }
}
