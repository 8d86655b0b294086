//! Binary checkpoint container.
//!
//! All integers are little-endian `u32`.
//!
//! ```text
//! magic     8 bytes  "SGGCKPT\0"
//! version   u32      currently 1
//! meta_len  u32      followed by meta_len bytes of JSON (CheckpointMeta)
//! count     u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   rows u32, cols u32
//!   rows·cols f32 values, row-major
//! ```
//!
//! Model parameters are stored under their layer names. Extra tensors (for
//! instance optimizer moments under `optim.m/<name>` and `optim.v/<name>`)
//! follow them. Readers reject any other magic or version.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sgg_autodiff::{Scalar, Tensor};

use super::{FirstNodePrior, ModelConfig, ModelError, Result, SceneGraphModel};
use crate::graph::Vocabulary;
use crate::nn::GRU_VARIANT;
use crate::ordering::OrderingScheme;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SGGCKPT\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub optimizer: String,
    pub weight_decay: f64,
    pub grad_clip: f64,
    /// Optimizer steps taken so far.
    pub step: u64,
    pub seed: u64,
    /// Full training configuration, opaque to the model layer.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub vocabulary: Vocabulary,
    pub vocab_hash: String,
    pub model: ModelConfig,
    pub ordering: OrderingScheme,
    pub gru_variant: String,
    pub prior: Option<FirstNodePrior>,
    #[serde(default)]
    pub training: Option<TrainingMeta>,
}

impl CheckpointMeta {
    pub fn new<T: Scalar>(model: &SceneGraphModel<T>, vocab: &Vocabulary, ordering: OrderingScheme) -> Self {
        Self {
            vocabulary: vocab.clone(),
            vocab_hash: vocab.fingerprint(),
            model: model.config,
            ordering,
            gru_variant: GRU_VARIANT.to_string(),
            prior: model.prior.clone(),
            training: None,
        }
    }
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: SceneGraphModel<f32>,
    /// Named tensors that are not model parameters, in file order.
    pub extra: Vec<(String, Tensor<f32>)>,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| bad("value does not fit in u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn put_tensor(w: &mut impl Write, name: &str, t: &Tensor<f32>) -> Result<()> {
    put_u32(w, name.len())?;
    w.write_all(name.as_bytes())?;
    put_u32(w, t.rows())?;
    put_u32(w, t.cols())?;
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_tensor(r: &mut impl Read) -> Result<(String, Tensor<f32>)> {
    let n = get_u32(r)?;
    let mut name = vec![0u8; n];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
    let rows = get_u32(r)?;
    let cols = get_u32(r)?;
    let mut buf = vec![0u8; rows * cols * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let t = Tensor::new(rows, cols, data).map_err(|e| bad(format!("tensor `{name}`: {e}")))?;
    Ok((name, t))
}

pub fn write_checkpoint_to<T: Scalar>(
    w: &mut impl Write,
    meta: &CheckpointMeta,
    model: &SceneGraphModel<T>,
    extra: &[(String, Tensor<f32>)],
) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION as usize)?;
    let json = serde_json::to_vec(meta).map_err(|e| bad(e.to_string()))?;
    put_u32(w, json.len())?;
    w.write_all(&json)?;
    put_u32(w, model.params.len() + extra.len())?;
    for (_, name, t) in model.params.iter() {
        put_tensor(w, name, &t.cast())?;
    }
    for (name, t) in extra {
        put_tensor(w, name, t)?;
    }
    Ok(())
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_checkpoint<T: Scalar>(
    path: &Path,
    meta: &CheckpointMeta,
    model: &SceneGraphModel<T>,
    extra: &[(String, Tensor<f32>)],
) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_checkpoint_to(&mut f, meta, model, extra)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint_from(r: &mut impl Read) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let version = get_u32(r)? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version} (expected {CHECKPOINT_VERSION})")));
    }
    let n = get_u32(r)?;
    let mut json = vec![0u8; n];
    r.read_exact(&mut json)?;
    let meta: CheckpointMeta = serde_json::from_slice(&json).map_err(|e| bad(format!("metadata: {e}")))?;
    if meta.vocab_hash != meta.vocabulary.fingerprint() {
        return Err(bad("vocabulary hash does not match the stored vocabulary"));
    }
    if meta.gru_variant != GRU_VARIANT {
        return Err(bad(format!("unknown GRU variant `{}`", meta.gru_variant)));
    }

    let mut model = SceneGraphModel::<f32>::new(meta.model, &meta.vocabulary, 0)?;
    model.prior = meta.prior.clone();
    let mut seen = vec![false; model.params.len()];
    let mut extra = Vec::new();
    for _ in 0..get_u32(r)? {
        let (name, t) = get_tensor(r)?;
        match model.params.id(&name) {
            Some(id) => {
                if model.params.get(id).shape() != t.shape() {
                    return Err(bad(format!(
                        "tensor `{name}` has shape {} but the model expects {}",
                        t.shape(),
                        model.params.get(id).shape()
                    )));
                }
                *model.params.get_mut(id) = t;
                seen[id.index()] = true;
            }
            None => extra.push((name, t)),
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        let id = model.params.ids().nth(k).unwrap();
        return Err(bad(format!("missing tensor `{}`", model.params.name(id))));
    }
    Ok(Checkpoint { meta, model, extra })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint_from(&mut f)
}
