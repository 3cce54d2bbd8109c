use std::fmt::Write as _;

use super::{ReachabilityGraph, ReducedReachabilityGraph};
use crate::petri::PetriNet;

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl ReachabilityGraph {
    pub fn to_dot(&self, net: &PetriNet) -> String {
        let mut out = String::from("digraph rg {\n  rankdir=LR;\n");
        for (i, m) in self.markings().iter().enumerate() {
            let shape = if i == 0 { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  n{i} [label=\"{m}\", shape={shape}];");
        }
        for e in self.edges() {
            let t = net.transition(e.transition);
            let (label, style) = match &t.label {
                Some(l) => (dot_escape(l), "solid"),
                None => (dot_escape(&t.id), "dashed"),
            };
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{label}\", style={style}];",
                e.from.0, e.to.0
            );
        }
        out.push_str("}\n");
        out
    }

    /// Stable dump: one line per node (`node <id> <marking>`), then edges sorted
    /// by (from, transition id, to).
    pub fn dump(&self, net: &PetriNet) -> String {
        let mut out = format!("nodes {}\n", self.num_nodes());
        for (i, m) in self.markings().iter().enumerate() {
            let _ = writeln!(out, "node {i} {m}");
        }
        let mut edges: Vec<(usize, &str, usize)> = self
            .edges()
            .iter()
            .map(|e| (e.from.0, net.transition(e.transition).id.as_str(), e.to.0))
            .collect();
        edges.sort();
        let _ = writeln!(out, "edges {}", edges.len());
        for (from, t, to) in edges {
            let _ = writeln!(out, "edge {from} {t} {to}");
        }
        out
    }
}

impl ReducedReachabilityGraph {
    pub fn to_dot(&self, net: &PetriNet) -> String {
        let mut out = String::from("digraph rg_reduced {\n  rankdir=LR;\n");
        for (i, m) in self.markings().iter().enumerate() {
            let shape = if i == self.initial_node() {
                "doublecircle"
            } else if Some(i) == self.final_node() {
                "box"
            } else {
                "circle"
            };
            let _ = writeln!(out, "  n{i} [label=\"{m}\", shape={shape}];");
        }
        for e in self.edges() {
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{}\"];",
                e.from,
                e.to,
                dot_escape(&net.alphabet()[e.event.0])
            );
        }
        out.push_str("}\n");
        out
    }

    /// Stable dump used by golden-file tests. Node lines carry `init` / `final` tags.
    pub fn dump(&self, net: &PetriNet) -> String {
        let mut out = format!("nodes {}\n", self.num_nodes());
        for (i, m) in self.markings().iter().enumerate() {
            let mut tags = String::new();
            if i == self.initial_node() {
                tags.push_str(" init");
            }
            if Some(i) == self.final_node() {
                tags.push_str(" final");
            }
            let _ = writeln!(out, "node {i} {m}{tags}");
        }
        let mut edges: Vec<(usize, &str, usize)> = self
            .edges()
            .iter()
            .map(|e| (e.from, net.alphabet()[e.event.0].as_str(), e.to))
            .collect();
        edges.sort();
        let _ = writeln!(out, "edges {}", edges.len());
        for (from, label, to) in edges {
            let _ = writeln!(out, "edge {from} {label} {to}");
        }
        out
    }
}
