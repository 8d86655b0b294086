//! Learning distributions over labeled, directed scene graphs.
//!
//! A graph is serialized under a node ordering into a sequence of steps,
//! each step a node category followed by its incoming and outgoing edge
//! labels to earlier nodes ([`sequence`]). A hierarchical recurrent model
//! ([`model`]) factorizes the joint distribution over that sequence and is
//! trained by teacher forcing ([`train`]). The trained model samples new
//! graphs, completes partial graphs and scores graph likelihoods; the
//! [`eval`] module compares generated and reference sets with MMD under a
//! random-walk kernel and an object-set kernel.

pub mod dataio;
pub mod eval;
pub mod graph;
pub mod model;
pub mod nn;
pub mod ordering;
pub mod sequence;
pub mod train;
#[cfg(test)]
mod testutil;

pub use graph::{validate_graph, Edge, GraphError, SceneGraph, Vocabulary};
pub use ordering::{order_nodes, OrderingKind, OrderingScheme, TierMap};
pub use sequence::{decode_sequence, encode_sequence, EdgeSymbol, GraphSequence, NodeSymbol};
