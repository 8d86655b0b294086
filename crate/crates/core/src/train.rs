//! Optimization loop: batches sampled with replacement, Adam with a
//! staircase learning-rate decay, global-norm clipping, checkpoints and a
//! line-delimited training log.
//!
//! Every step draws its batch and node orderings from an RNG keyed by
//! `(seed, step)`, so a run resumed from a checkpoint continues exactly as
//! the uninterrupted run would.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sgg_autodiff::{Gradients, ParamStore, Scalar, Tape, Tensor};
use thiserror::Error;

use crate::graph::{SceneGraph, Vocabulary};
use crate::model::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, FirstNodePrior, ModelError, SceneGraphModel,
    TrainingMeta,
};
use crate::ordering::{order_nodes_with, OrderingScheme};
use crate::sequence::{encode_sequence, GraphSequence};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite gradient for `{param}` at step {step}")]
    NonFiniteGradient { step: u64, param: String },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batches_per_epoch: u64,
    pub batch_size: usize,
    pub lr0: f64,
    /// Multiplicative decay applied once every `decay_steps` steps.
    pub decay: f64,
    pub decay_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub ordering: OrderingScheme,
    pub prior_alpha: f64,
    /// Save a checkpoint every this many steps (and at the end).
    pub checkpoint_every: Option<u64>,
    /// Batch shards computed in parallel; gradients are reduced in shard order.
    pub threads: usize,
}

impl TrainConfig {
    /// Full-scale schedule: 300 epochs of 256 batches of 256 graphs.
    pub fn full(seed: u64) -> Self {
        Self {
            epochs: 300,
            batches_per_epoch: 256,
            batch_size: 256,
            lr0: 0.001,
            decay: 0.95,
            decay_steps: 1710,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: Some(5.0),
            seed,
            ordering: OrderingScheme::random(seed),
            prior_alpha: 1.0,
            checkpoint_every: Some(1710),
            threads: 1,
        }
    }

    /// Single-core schedule: 50 epochs of 64 batches of 32 graphs.
    pub fn desk(seed: u64) -> Self {
        Self {
            epochs: 50,
            batches_per_epoch: 64,
            batch_size: 32,
            checkpoint_every: Some(640),
            ..Self::full(seed)
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.epochs * self.batches_per_epoch
    }

    /// `lr0 · decay^⌊step / decay_steps⌋`.
    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr0 * self.decay.powi((step / self.decay_steps) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.batch_size == 0 || self.decay_steps == 0 {
            return err("epochs, batches_per_epoch, batch_size and decay_steps must be positive");
        }
        if !(self.lr0 > 0.0) {
            return err("lr0 must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return err("decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return err("Adam needs beta1, beta2 in [0, 1) and eps > 0");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return err("grad_clip must be positive");
        }
        if self.threads == 0 {
            return err("threads must be at least 1");
        }
        if !(self.prior_alpha >= 0.0) {
            return err("prior_alpha must be nonnegative");
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Completed updates.
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            beta1,
            beta2,
            eps,
            weight_decay: 0.0,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update. Gradients are checked first, so a non-finite gradient
    /// leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64) -> Result<(), String> {
        if let Some(bad) = grads.first_non_finite() {
            return Err(params.name(bad).to_string());
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let k = id.index();
            let g = grads.get(id).data();
            let p = params.get_mut(id).data_mut();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for q in 0..p.len() {
                let gq = g[q].as_f64() + self.weight_decay * p[q].as_f64();
                let mq = b1 * m[q].as_f64() + (1.0 - b1) * gq;
                let vq = b2 * v[q].as_f64() + (1.0 - b2) * gq * gq;
                m[q] = T::of(mq);
                v[q] = T::of(vq);
                let update = lr * (mq / c1) / ((vq / c2).sqrt() + self.eps);
                p[q] = T::of(p[q].as_f64() - update);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step {
        step: u64,
        loss: f64,
        lr: f64,
        grad_norm: f64,
        clipped: bool,
        seconds: f64,
    },
    Epoch {
        epoch: u64,
        step: u64,
        val_nll: Option<f64>,
    },
    Checkpoint {
        step: u64,
        path: String,
    },
}

/// In-memory copy of everything written to the log sink.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn step_losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("log records serialize") + "\n")
            .collect()
    }
}

pub struct StepOutcome {
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub vocab: Vocabulary,
    pub model: SceneGraphModel<f32>,
    pub adam: Adam<f32>,
    pub data: Vec<SceneGraph>,
    pub validation: Vec<SceneGraph>,
    /// Steps completed.
    pub step: u64,
    pub log: TrainLog,
    pub checkpoint_path: Option<PathBuf>,
    sink: Option<Box<dyn Write + Send>>,
    started: Instant,
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

const OPTIM_M: &str = "optim.m/";
const OPTIM_V: &str = "optim.v/";

impl Trainer {
    /// Estimates the prior from `data` if the model has none.
    pub fn new(
        mut model: SceneGraphModel<f32>,
        vocab: Vocabulary,
        data: Vec<SceneGraph>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        if let Some(g) = data.iter().find(|g| g.num_nodes() > model.config.max_nodes) {
            return Err(ModelError::TooManyNodes {
                nodes: g.num_nodes(),
                max: model.config.max_nodes,
            }
            .into());
        }
        if model.prior.is_none() {
            model.prior = Some(FirstNodePrior::estimate(
                &data,
                &cfg.ordering,
                model.num_objects,
                cfg.prior_alpha,
            )?);
        }
        let mut adam = Adam::new(&model.params, cfg.beta1, cfg.beta2, cfg.adam_eps);
        adam.weight_decay = cfg.weight_decay;
        Ok(Self {
            cfg,
            vocab,
            model,
            adam,
            data,
            validation: Vec::new(),
            step: 0,
            log: TrainLog::default(),
            checkpoint_path: None,
            sink: None,
            started: Instant::now(),
        })
    }

    /// Restores model, optimizer moments, step counter and configuration.
    pub fn resume(ck: Checkpoint, data: Vec<SceneGraph>) -> Result<Self> {
        let training = ck
            .meta
            .training
            .clone()
            .ok_or_else(|| TrainError::Config("checkpoint has no training state".into()))?;
        let cfg: TrainConfig = serde_json::from_value(training.config.clone())
            .map_err(|e| TrainError::Config(format!("checkpoint training config: {e}")))?;
        let mut t = Self::new(ck.model, ck.meta.vocabulary.clone(), data, cfg)?;
        for (name, tensor) in ck.extra {
            let (slot, pname) = if let Some(p) = name.strip_prefix(OPTIM_M) {
                (&mut t.adam.m, p)
            } else if let Some(p) = name.strip_prefix(OPTIM_V) {
                (&mut t.adam.v, p)
            } else {
                continue;
            };
            let id = t
                .model
                .params
                .id(pname)
                .ok_or_else(|| TrainError::Config(format!("optimizer state for unknown tensor `{pname}`")))?;
            slot[id.index()] = tensor;
        }
        t.step = training.step;
        t.adam.t = training.step;
        Ok(t)
    }

    pub fn resume_from(path: &std::path::Path, data: Vec<SceneGraph>) -> Result<Self> {
        Self::resume(read_checkpoint(path)?, data)
    }

    pub fn with_validation(mut self, validation: Vec<SceneGraph>) -> Self {
        self.validation = validation;
        self
    }

    pub fn with_checkpoints(mut self, path: PathBuf) -> Self {
        self.checkpoint_path = Some(path);
        self
    }

    /// Every log record is also written to `sink` as one JSON line.
    pub fn with_log_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    fn emit(&mut self, record: LogRecord) -> Result<()> {
        if let Some(s) = self.sink.as_mut() {
            serde_json::to_writer(&mut *s, &record).map_err(|e| TrainError::Io(e.into()))?;
            s.write_all(b"\n")?;
            s.flush()?;
        }
        self.log.records.push(record);
        Ok(())
    }

    /// The batch used at `step`: indices drawn with replacement, each graph
    /// serialized under a fresh ordering draw.
    pub fn batch_for(&self, step: u64) -> Result<Vec<GraphSequence>> {
        let mut rng = step_rng(self.cfg.seed, step);
        (0..self.cfg.batch_size)
            .map(|_| {
                let g = &self.data[rng.gen_range(0..self.data.len())];
                let perm = order_nodes_with(g, &self.cfg.ordering, &mut rng).map_err(ModelError::from)?;
                Ok(encode_sequence(g, &perm).map_err(ModelError::from)?)
            })
            .collect()
    }

    /// Loss (mean over the batch) and gradients, sharded over threads.
    pub fn loss_and_grads(&self, batch: &[GraphSequence]) -> Result<(f64, Gradients<f32>)> {
        let n = batch.len();
        let shards = self.cfg.threads.min(n).max(1);
        let per = n.div_ceil(shards);
        let model = &self.model;
        let run = |chunk: &[GraphSequence]| -> Result<(f64, Gradients<f32>)> {
            let refs: Vec<&GraphSequence> = chunk.iter().collect();
            let mut tape = Tape::new(&model.params);
            let tf = model.teacher_forced(&mut tape, &refs)?;
            let loss = tape.scale(tf.total, 1.0 / n as f32);
            let grads = tape.backward(loss).map_err(ModelError::from)?;
            Ok((tf.per_graph.iter().sum::<f64>() / n as f64, grads))
        };
        let parts: Vec<Result<(f64, Gradients<f32>)>> = if shards == 1 {
            vec![run(batch)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = batch.chunks(per).map(|c| s.spawn(move || run(c))).collect();
                handles.into_iter().map(|h| h.join().expect("shard thread panicked")).collect()
            })
        };
        let mut total = 0.0;
        let mut grads: Option<Gradients<f32>> = None;
        for p in parts {
            let (l, g) = p?;
            total += l;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.accumulate(&g),
            }
        }
        Ok((total, grads.expect("at least one shard")))
    }

    /// One optimizer step.
    pub fn train_step(&mut self) -> Result<StepOutcome> {
        let step = self.step;
        let batch = self.batch_for(step)?;
        let (loss, mut grads) = self.loss_and_grads(&batch)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { step });
        }
        let grad_norm = grads.global_norm();
        let mut clipped = false;
        if let Some(clip) = self.cfg.grad_clip {
            if grad_norm > clip {
                grads.scale((clip / grad_norm) as f32);
                clipped = true;
            }
        }
        let lr = self.cfg.lr_at(step);
        self.adam
            .step(&mut self.model.params, &grads, lr)
            .map_err(|param| TrainError::NonFiniteGradient { step, param })?;
        self.step += 1;
        self.emit(LogRecord::Step {
            step,
            loss,
            lr,
            grad_norm,
            clipped,
            seconds: self.started.elapsed().as_secs_f64(),
        })?;
        Ok(StepOutcome {
            loss,
            grad_norm,
            clipped,
        })
    }

    /// Mean NLL of the validation set (orderings from the scheme seed).
    pub fn validation_nll(&self) -> Result<Option<f64>> {
        if self.validation.is_empty() {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.ordering.seed);
        let seqs = self
            .validation
            .iter()
            .map(|g| {
                let perm = order_nodes_with(g, &self.cfg.ordering, &mut rng).map_err(ModelError::from)?;
                Ok(encode_sequence(g, &perm).map_err(ModelError::from)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let scores = self.model.score_sequences(&seqs)?;
        Ok(Some(scores.iter().sum::<f64>() / scores.len() as f64))
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        let mut meta = CheckpointMeta::new(&self.model, &self.vocab, self.cfg.ordering.clone());
        meta.training = Some(TrainingMeta {
            optimizer: "adam".into(),
            weight_decay: self.cfg.weight_decay,
            grad_clip: self.cfg.grad_clip.unwrap_or(0.0),
            step: self.step,
            seed: self.cfg.seed,
            config: serde_json::to_value(&self.cfg).expect("config serializes"),
        });
        meta
    }

    /// Writes model and optimizer state to `path`.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut extra = Vec::with_capacity(2 * self.model.params.len());
        for (id, name, _) in self.model.params.iter() {
            extra.push((format!("{OPTIM_M}{name}"), self.adam.m[id.index()].clone()));
        }
        for (id, name, _) in self.model.params.iter() {
            extra.push((format!("{OPTIM_V}{name}"), self.adam.v[id.index()].clone()));
        }
        write_checkpoint(path, &self.checkpoint_meta(), &self.model, &extra)?;
        Ok(())
    }

    fn checkpoint(&mut self) -> Result<()> {
        if let Some(path) = self.checkpoint_path.clone() {
            self.save(&path)?;
            self.emit(LogRecord::Checkpoint {
                step: self.step,
                path: path.display().to_string(),
            })?;
        }
        Ok(())
    }

    /// Runs until `total_steps`, ending each epoch with a validation pass
    /// and checkpointing on schedule and at the end.
    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.cfg.total_steps())
    }

    pub fn run_until(&mut self, last_step: u64) -> Result<()> {
        let last = last_step.min(self.cfg.total_steps());
        while self.step < last {
            self.train_step()?;
            if self.step % self.cfg.batches_per_epoch == 0 {
                let val_nll = self.validation_nll()?;
                self.emit(LogRecord::Epoch {
                    epoch: self.step / self.cfg.batches_per_epoch,
                    step: self.step,
                    val_nll,
                })?;
            }
            if matches!(self.cfg.checkpoint_every, Some(k) if self.step % k == 0) && self.step < last {
                self.checkpoint()?;
            }
        }
        self.checkpoint()
    }
}
