//! Dataset files, the synthetic scene grammar and DOT export.
//!
//! A dataset file is line-delimited JSON: one header record, then one
//! record per graph.
//!
//! ```text
//! {"format":"sgg-dataset","version":1,"vocabulary":{"objects":[..],"relations":[..]}}
//! {"nodes":["man","shirt"],"edges":[[0,"wearing",1]]}
//! ```
//!
//! Edges are `[src, relation, dst]` with node indices into `nodes`. Writing
//! is canonical (edges sorted by source, then target), so save → load → save
//! reproduces the file byte for byte.

mod dot;
mod grammar;


use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GraphError, SceneGraph, Vocabulary};

pub use dot::export_dot;
pub use grammar::{
    generate_synthetic, CountDistribution, GrammarConfig, ObjectSpec, PairRule, PartRule, PoolEntry, SceneSpec,
    DEFAULT_GRAMMAR,
};

pub const DATASET_FORMAT: &str = "sgg-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph {graph}: {source}")]
    Validation {
        graph: usize,
        #[source]
        source: GraphError,
    },
    #[error("invalid grammar: {0}")]
    ConfigInvalid(String),
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    vocabulary: Vocabulary,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    nodes: Vec<String>,
    edges: Vec<(usize, String, usize)>,
}

fn to_record(g: &SceneGraph, vocab: &Vocabulary) -> GraphRecord {
    GraphRecord {
        nodes: g.nodes().iter().map(|&c| vocab.object_name(c).to_string()).collect(),
        edges: g
            .edges()
            .iter()
            .map(|e| (e.src, vocab.relation_name(e.rel).to_string(), e.dst))
            .collect(),
    }
}

fn from_record(r: GraphRecord, vocab: &Vocabulary, line: usize) -> Result<SceneGraph, DataError> {
    let parse = |message: String| DataError::Parse { line, message };
    let nodes = r
        .nodes
        .iter()
        .map(|n| vocab.object_id(n).ok_or_else(|| parse(format!("unknown object category `{n}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let edges = r
        .edges
        .iter()
        .map(|(s, rel, d)| {
            vocab
                .relation_id(rel)
                .map(|r| Edge::new(*s, r, *d))
                .ok_or_else(|| parse(format!("unknown relation `{rel}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SceneGraph::new(nodes, edges))
}

/// Parses and validates a dataset; graphs keep their stored order.
pub fn read_dataset(r: impl BufRead) -> Result<(Vocabulary, Vec<SceneGraph>), DataError> {
    let mut lines = r.lines().enumerate();
    let io = |line: usize, e: std::io::Error| DataError::Parse {
        line,
        message: e.to_string(),
    };
    let header: Header = loop {
        match lines.next() {
            None => {
                return Err(DataError::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
            Some((i, l)) => {
                let l = l.map_err(|e| io(i + 1, e))?;
                if l.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&l).map_err(|e| DataError::Parse {
                    line: i + 1,
                    message: format!("bad header: {e}"),
                })?;
            }
        }
    };
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(DataError::Parse {
            line: 1,
            message: format!(
                "unsupported dataset format `{}` version {} (expected `{DATASET_FORMAT}` {DATASET_VERSION})",
                header.format, header.version
            ),
        });
    }
    let vocab = header.vocabulary;
    let mut graphs = Vec::new();
    for (i, l) in lines {
        let l = l.map_err(|e| io(i + 1, e))?;
        if l.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&l).map_err(|e| DataError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let g = from_record(rec, &vocab, i + 1)?;
        g.validate(&vocab).map_err(|source| DataError::Validation {
            graph: graphs.len(),
            source,
        })?;
        graphs.push(g);
    }
    Ok((vocab, graphs))
}

pub fn write_dataset(w: &mut impl Write, vocab: &Vocabulary, graphs: &[SceneGraph]) -> std::io::Result<()> {
    let header = Header {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        vocabulary: vocab.clone(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    writeln!(w)?;
    for g in graphs {
        serde_json::to_writer(&mut *w, &to_record(g, vocab))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(Vocabulary, Vec<SceneGraph>), DataError> {
    let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_dataset(BufReader::new(f))
}

/// Validates every graph, then writes the file.
pub fn save_dataset(path: &Path, vocab: &Vocabulary, graphs: &[SceneGraph]) -> Result<(), DataError> {
    for (graph, g) in graphs.iter().enumerate() {
        g.validate(vocab).map_err(|source| DataError::Validation { graph, source })?;
    }
    let f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_dataset(&mut w, vocab, graphs)
        .and_then(|_| w.flush())
        .map_err(|e| DataError::io(path, e))
}
