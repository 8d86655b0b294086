use std::fmt::Write as _;

use crate::graph::{SceneGraph, Vocabulary};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz text: one node per instance labeled `category (index)`, one
/// edge per relation, in index order.
pub fn export_dot(g: &SceneGraph, vocab: &Vocabulary) -> String {
    let mut out = String::from("digraph scene {\n");
    for (i, &c) in g.nodes().iter().enumerate() {
        let label = format!("{} ({i})", vocab.object_name(c));
        writeln!(out, "  n{i} [label={}];", quote(&label)).unwrap();
    }
    for e in g.edges() {
        writeln!(out, "  n{} -> n{} [label={}];", e.src, e.dst, quote(vocab.relation_name(e.rel))).unwrap();
    }
    out.push_str("}\n");
    out
}
