//! The hierarchical recurrent scene-graph model.
//!
//! Three history GRUs read the previous sequence element and summarize the
//! graph built so far. The node-history state feeds a two-layer MLP over
//! `C + 1` classes (categories plus EOS). For each earlier node `j` the two
//! edge GRUs, started from the incoming/outgoing history states, emit the
//! relation into the new node and then — seeing that choice — the relation
//! out of it, each over `R + 1` classes (relations plus no-edge).
//!
//! ```text
//! p(X) = p(O_1) · Π_i p(O_i | X_<i) · p(E^to_i | O_i, X_<i) · p(E^from_i | E^to_i, O_i, X_<i)
//! ```

mod checkpoint;
mod generate;
mod loss;
mod prior;
mod score;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sgg_autodiff::{AutodiffError, ParamStore, Scalar, Tape, Var};
use thiserror::Error;

use crate::graph::{GraphError, Vocabulary};
use crate::nn::{Embedding, GruStack, Linear, Mlp};
use crate::sequence::EdgeSymbol;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_from, write_checkpoint, write_checkpoint_to, Checkpoint, CheckpointMeta,
    TrainingMeta, CHECKPOINT_VERSION,
};
pub use generate::{sample_categorical, SampleOptions, Sampled};
pub use loss::TeacherForced;
pub use prior::FirstNodePrior;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("graph has {nodes} nodes but the model handles at most {max}")]
    TooManyNodes { nodes: usize, max: usize },
    #[error("first-node prior has not been estimated")]
    PriorMissing,
    #[error("first node category `{0}` has zero prior probability")]
    ZeroPriorProbability(String),
    #[error("partial graph has {nodes} nodes; completion needs fewer than {max}")]
    PartialTooLarge { nodes: usize, max: usize },
    #[error("cannot estimate a prior from an empty dataset")]
    EmptyDataset,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Layer sizes. Category counts come from the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub node_embed_dim: usize,
    pub edge_embed_dim: usize,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub mlp_hidden: usize,
    /// Largest graph the model reads or writes; fixes the history input width.
    pub max_nodes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            node_embed_dim: 64,
            edge_embed_dim: 8,
            num_layers: 4,
            hidden_size: 128,
            mlp_hidden: 128,
            max_nodes: 12,
        }
    }
}

impl ModelConfig {
    /// Reduced width/depth for single-core runs.
    pub fn desk() -> Self {
        Self {
            node_embed_dim: 32,
            edge_embed_dim: 8,
            num_layers: 2,
            hidden_size: 64,
            mlp_hidden: 64,
            max_nodes: 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("node_embed_dim", self.node_embed_dim),
            ("edge_embed_dim", self.edge_embed_dim),
            ("num_layers", self.num_layers),
            ("hidden_size", self.hidden_size),
            ("mlp_hidden", self.mlp_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.max_nodes < 2 {
            return Err(ModelError::Config("max_nodes must be at least 2".into()));
        }
        Ok(())
    }

    /// Width of one history-GRU input row.
    pub fn history_input_dim(&self) -> usize {
        self.node_embed_dim + 2 * (self.max_nodes - 1) * self.edge_embed_dim
    }

    pub fn edge_to_input_dim(&self) -> usize {
        2 * self.edge_embed_dim + 2 * self.node_embed_dim
    }

    pub fn edge_from_input_dim(&self) -> usize {
        self.edge_to_input_dim() + self.edge_embed_dim
    }
}

/// Parameter handles for every layer; the values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Layout {
    pub node_embed: Embedding,
    pub edge_embed: Embedding,
    pub hist_node: GruStack,
    pub hist_to: GruStack,
    pub hist_from: GruStack,
    pub node_mlp: Mlp,
    pub edge_to: GruStack,
    pub edge_to_head: Linear,
    pub edge_from: GruStack,
    pub edge_from_head: Linear,
}

impl Layout {
    fn build<T: Scalar>(
        cfg: &ModelConfig,
        num_objects: usize,
        num_relations: usize,
        store: &mut ParamStore<T>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, l) = (cfg.hidden_size, cfg.num_layers);
        let bound = 1.0 / (h as f64).sqrt();
        Ok(Self {
            node_embed: Embedding::new(store, "node_embed", num_objects + 1, cfg.node_embed_dim, bound, &mut rng)?,
            edge_embed: Embedding::new(store, "edge_embed", num_relations + 3, cfg.edge_embed_dim, bound, &mut rng)?,
            hist_node: GruStack::new(store, "hist_node", cfg.history_input_dim(), h, l, &mut rng)?,
            hist_to: GruStack::new(store, "hist_to", cfg.history_input_dim(), h, l, &mut rng)?,
            hist_from: GruStack::new(store, "hist_from", cfg.history_input_dim(), h, l, &mut rng)?,
            node_mlp: Mlp::new(store, "node_mlp", h, cfg.mlp_hidden, num_objects + 1, &mut rng)?,
            edge_to: GruStack::new(store, "edge_to", cfg.edge_to_input_dim(), h, l, &mut rng)?,
            edge_to_head: Linear::new(store, "edge_to_head", h, num_relations + 1, &mut rng)?,
            edge_from: GruStack::new(store, "edge_from", cfg.edge_from_input_dim(), h, l, &mut rng)?,
            edge_from_head: Linear::new(store, "edge_from_head", h, num_relations + 1, &mut rng)?,
        })
    }
}

/// Per-layer states of the three history GRUs, one row per sequence.
#[derive(Debug, Clone)]
pub struct History {
    pub node: Vec<Var>,
    pub to: Vec<Var>,
    pub from: Vec<Var>,
}

impl History {
    /// Keeps the first `n` rows of every state.
    pub fn head<T: Scalar>(&self, tape: &mut Tape<'_, T>, n: usize) -> Result<Self> {
        let cut = |tape: &mut Tape<'_, T>, v: &[Var]| -> Result<Vec<Var>> {
            v.iter().map(|&s| Ok(tape.head_rows(s, n)?)).collect()
        };
        Ok(Self {
            node: cut(tape, &self.node)?,
            to: cut(tape, &self.to)?,
            from: cut(tape, &self.from)?,
        })
    }
}

/// Token indices for one edge-GRU step, one entry per batch row.
#[derive(Debug, Clone, Default)]
pub struct SlotTokens {
    /// `E^from_{i,j−1}` (SOS at the first slot).
    pub prev_from: Vec<usize>,
    /// `E^to_{i,j−1}` (SOS at the first slot).
    pub prev_to: Vec<usize>,
    /// Category of the new node `O_i`.
    pub new_node: Vec<usize>,
    /// Category of the earlier node `O_j`.
    pub old_node: Vec<usize>,
}

impl SlotTokens {
    pub fn rows(&self) -> usize {
        self.new_node.len()
    }
}

fn interleave(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().zip(b).flat_map(|(&x, &y)| [x, y]).collect()
}

pub struct SceneGraphModel<T: Scalar> {
    pub config: ModelConfig,
    pub num_objects: usize,
    pub num_relations: usize,
    pub layout: Layout,
    pub params: ParamStore<T>,
    pub prior: Option<FirstNodePrior>,
}

impl<T: Scalar> Clone for SceneGraphModel<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            num_objects: self.num_objects,
            num_relations: self.num_relations,
            layout: self.layout.clone(),
            params: self.params.clone(),
            prior: self.prior.clone(),
        }
    }
}

impl<T: Scalar> SceneGraphModel<T> {
    /// Fresh model with seeded uniform weights and no prior.
    pub fn new(config: ModelConfig, vocab: &Vocabulary, seed: u64) -> Result<Self> {
        Self::with_sizes(config, vocab.num_objects(), vocab.num_relations(), seed)
    }

    pub fn with_sizes(config: ModelConfig, num_objects: usize, num_relations: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_objects == 0 || num_relations == 0 {
            return Err(ModelError::Config("vocabulary must be nonempty".into()));
        }
        let mut params = ParamStore::new();
        let layout = Layout::build(&config, num_objects, num_relations, &mut params, seed)?;
        Ok(Self {
            config,
            num_objects,
            num_relations,
            layout,
            params,
            prior: None,
        })
    }

    /// Same model at another precision.
    pub fn cast<U: Scalar>(&self) -> SceneGraphModel<U> {
        SceneGraphModel {
            config: self.config,
            num_objects: self.num_objects,
            num_relations: self.num_relations,
            layout: self.layout.clone(),
            params: self.params.cast(),
            prior: self.prior.clone(),
        }
    }

    pub fn eos(&self) -> usize {
        self.num_objects
    }

    pub fn no_edge(&self) -> usize {
        self.num_relations
    }

    pub fn pad(&self) -> usize {
        self.num_relations + 1
    }

    pub fn sos(&self) -> usize {
        self.num_relations + 2
    }

    pub fn edge_token(&self, e: EdgeSymbol) -> usize {
        e.token(self.num_relations)
    }

    pub fn zero_history(&self, tape: &mut Tape<'_, T>, rows: usize) -> History {
        History {
            node: self.layout.hist_node.zero_state(tape, rows),
            to: self.layout.hist_to.zero_state(tape, rows),
            from: self.layout.hist_from.zero_state(tape, rows),
        }
    }

    /// History input rows: node embedding followed by the incoming and the
    /// outgoing edge embeddings, each list PAD-padded to `max_nodes − 1`.
    pub fn history_input(
        &self,
        tape: &mut Tape<'_, T>,
        nodes: &[usize],
        to: &[&[EdgeSymbol]],
        from: &[&[EdgeSymbol]],
    ) -> Result<Var> {
        let width = self.config.max_nodes - 1;
        let mut tokens = Vec::with_capacity(nodes.len() * 2 * width);
        for (r, &node) in nodes.iter().enumerate() {
            if to[r].len() > width || from[r].len() > width || node >= self.num_objects {
                return Err(ModelError::TooManyNodes {
                    nodes: to[r].len().max(from[r].len()) + 1,
                    max: self.config.max_nodes,
                });
            }
            for list in [to[r], from[r]] {
                tokens.extend(list.iter().map(|&e| self.edge_token(e)));
                tokens.extend(std::iter::repeat(self.pad()).take(width - list.len()));
            }
        }
        let node_rows = self.layout.node_embed.lookup(tape, nodes)?;
        let edge_rows = self.layout.edge_embed.lookup_packed(tape, &tokens, 2 * width)?;
        Ok(tape.concat(&[node_rows, edge_rows])?)
    }

    /// All three history GRUs consume the same input.
    pub fn history_step(&self, tape: &mut Tape<'_, T>, state: &History, input: Var) -> Result<History> {
        Ok(History {
            node: self.layout.hist_node.step(tape, input, &state.node)?,
            to: self.layout.hist_to.step(tape, input, &state.to)?,
            from: self.layout.hist_from.step(tape, input, &state.from)?,
        })
    }

    /// Logits over `C + 1` classes (EOS last).
    pub fn node_logits(&self, tape: &mut Tape<'_, T>, state: &History) -> Result<Var> {
        let top = *state.node.last().expect("at least one layer");
        Ok(self.layout.node_mlp.forward(tape, top)?)
    }

    fn slot_input(&self, tape: &mut Tape<'_, T>, slot: &SlotTokens) -> Result<Var> {
        let edges = interleave(&slot.prev_from, &slot.prev_to);
        let nodes = interleave(&slot.new_node, &slot.old_node);
        let e = self.layout.edge_embed.lookup_packed(tape, &edges, 2)?;
        let n = self.layout.node_embed.lookup_packed(tape, &nodes, 2)?;
        Ok(tape.concat(&[e, n])?)
    }

    /// One incoming-edge slot: returns the new per-layer state and logits
    /// over `R + 1` classes.
    pub fn edge_to_step(&self, tape: &mut Tape<'_, T>, state: &[Var], slot: &SlotTokens) -> Result<(Vec<Var>, Var)> {
        let x = self.slot_input(tape, slot)?;
        let next = self.layout.edge_to.step(tape, x, state)?;
        let logits = self.layout.edge_to_head.forward(tape, *next.last().unwrap())?;
        Ok((next, logits))
    }

    /// One outgoing-edge slot; additionally sees the incoming relation
    /// `E^to_{i,j}` chosen at the same slot.
    pub fn edge_from_step(
        &self,
        tape: &mut Tape<'_, T>,
        state: &[Var],
        slot: &SlotTokens,
        current_to: &[usize],
    ) -> Result<(Vec<Var>, Var)> {
        let base = self.slot_input(tape, slot)?;
        let cur = self.layout.edge_embed.lookup(tape, current_to)?;
        let x = tape.concat(&[base, cur])?;
        let next = self.layout.edge_from.step(tape, x, state)?;
        let logits = self.layout.edge_from_head.forward(tape, *next.last().unwrap())?;
        Ok((next, logits))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }
}
