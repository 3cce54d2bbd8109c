use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{NodeId, ReachError, ReachabilityGraph, Result};
use crate::petri::{EventIdx, Marking, PetriNet};

/// Which reachability-graph nodes are kept in the reduced graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NodeRule {
    /// Keep the initial node and every node entered by at least one visible firing.
    #[default]
    AnyVisibleIncoming,
    /// Keep the initial node and nodes entered only by visible firings.
    AllVisibleIncoming,
}

/// Whether edges may end in the final marking's node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FinalEdges {
    /// Edges may enter the final node but never leave it.
    #[default]
    KeepIncoming,
    /// The final node is neither source nor target of any reduced edge.
    Exclude,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReduceOptions {
    pub node_rule: NodeRule,
    pub final_edges: FinalEdges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReducedEdge {
    pub from: usize,
    pub event: EventIdx,
    pub to: usize,
}

/// Markings reached right after a visible firing, connected by edges that
/// collapse hidden-only prefixes into the visible transition that ends them.
#[derive(Debug, Clone)]
pub struct ReducedReachabilityGraph {
    markings: Vec<Marking>,
    rg_nodes: Vec<NodeId>,
    index: HashMap<Marking, usize>,
    edges: Vec<ReducedEdge>,
    outgoing: Vec<Vec<usize>>,
    final_node: Option<usize>,
    /// Per node: the final marking is reachable through hidden firings only.
    completes: Vec<bool>,
    alphabet_len: usize,
    warnings: Vec<String>,
}

fn hidden_closure(rg: &ReachabilityGraph, net: &PetriNet, start: NodeId) -> Vec<NodeId> {
    let mut seen = HashSet::from([start]);
    let mut order = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for e in rg.outgoing(n) {
            if net.is_hidden(e.transition) && seen.insert(e.to) {
                order.push(e.to);
                queue.push_back(e.to);
            }
        }
    }
    order
}

impl ReducedReachabilityGraph {
    pub fn build(rg: &ReachabilityGraph, net: &PetriNet) -> Self {
        Self::build_with(rg, net, ReduceOptions::default())
    }

    pub fn build_with(rg: &ReachabilityGraph, net: &PetriNet, options: ReduceOptions) -> Self {
        let final_rg = net.final_marking().and_then(|m| rg.node_of(m));
        let mut warnings = Vec::new();

        let keep = |n: NodeId| -> bool {
            if n == rg.initial_node() {
                return true;
            }
            let mut incoming = rg.incoming(n).peekable();
            if incoming.peek().is_none() {
                return false;
            }
            match options.node_rule {
                NodeRule::AnyVisibleIncoming => incoming.any(|e| !net.is_hidden(e.transition)),
                NodeRule::AllVisibleIncoming => incoming.all(|e| !net.is_hidden(e.transition)),
            }
        };
        let rg_nodes: Vec<NodeId> = (0..rg.num_nodes())
            .map(NodeId)
            .filter(|&n| keep(n))
            .collect();
        let position: HashMap<NodeId, usize> =
            rg_nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();

        let final_node = final_rg.and_then(|n| position.get(&n).copied());
        if let (Some(f), None) = (final_rg, final_node) {
            let msg = format!(
                "final marking {} is not entered by a visible firing and is absent from the reduced graph",
                rg.marking(f)
            );
            ::log::warn!("{msg}");
            warnings.push(msg);
        }

        let mut edge_set = BTreeSet::new();
        let mut completes = vec![false; rg_nodes.len()];
        for (from, &n1) in rg_nodes.iter().enumerate() {
            let closure = hidden_closure(rg, net, n1);
            completes[from] = final_rg.is_some_and(|f| closure.contains(&f));
            if final_rg == Some(n1) {
                continue;
            }
            for &x in &closure {
                for e in rg.outgoing(x) {
                    let Some(event) = net.event_of(e.transition) else {
                        continue;
                    };
                    if options.final_edges == FinalEdges::Exclude && final_rg == Some(e.to) {
                        continue;
                    }
                    if let Some(&to) = position.get(&e.to) {
                        edge_set.insert(ReducedEdge { from, event, to });
                    }
                }
            }
        }
        let edges: Vec<ReducedEdge> = edge_set.into_iter().collect();
        let mut outgoing = vec![Vec::new(); rg_nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            outgoing[e.from].push(i);
        }
        let markings: Vec<Marking> = rg_nodes.iter().map(|&n| rg.marking(n).clone()).collect();
        let index = markings
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        ReducedReachabilityGraph {
            markings,
            rg_nodes,
            index,
            edges,
            outgoing,
            final_node,
            completes,
            alphabet_len: net.alphabet().len(),
            warnings,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.markings.len()
    }

    pub fn initial_node(&self) -> usize {
        0
    }

    pub fn final_node(&self) -> Option<usize> {
        self.final_node
    }

    pub fn marking(&self, node: usize) -> &Marking {
        &self.markings[node]
    }

    pub fn markings(&self) -> &[Marking] {
        &self.markings
    }

    /// The full-graph node each reduced node comes from.
    pub fn rg_node(&self, node: usize) -> NodeId {
        self.rg_nodes[node]
    }

    pub fn node_of(&self, m: &Marking) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn edges(&self) -> &[ReducedEdge] {
        &self.edges
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = &ReducedEdge> {
        self.outgoing[node].iter().map(|&i| &self.edges[i])
    }

    pub fn alphabet_len(&self) -> usize {
        self.alphabet_len
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// True when the final marking is this node or follows it through hidden firings only.
    pub fn completes(&self, node: usize) -> bool {
        self.completes[node]
    }

    /// Next possible events at `m`, one bit per alphabet entry.
    pub fn mask_for_marking(&self, m: &Marking) -> Result<MaskVector> {
        let node = self
            .node_of(m)
            .ok_or_else(|| ReachError::NotInReducedGraph(m.clone()))?;
        Ok(self.mask_for_node(node))
    }

    pub fn mask_for_node(&self, node: usize) -> MaskVector {
        let mut mask = MaskVector::zeros(self.alphabet_len);
        for e in self.outgoing(node) {
            mask.set(e.event.0, true);
        }
        mask
    }
}

/// Visible events reachable from `m` through hidden firings only, explored
/// directly on the net. Used for markings that left the modeled behavior.
pub fn mask_by_exploration(net: &PetriNet, m: &Marking, limit: usize) -> MaskVector {
    let mut mask = MaskVector::zeros(net.alphabet().len());
    let mut seen = HashSet::from([m.clone()]);
    let mut queue = VecDeque::from([m.clone()]);
    while let Some(cur) = queue.pop_front() {
        for t in net.enabled_unchecked(&cur) {
            match net.event_of(t) {
                Some(e) => mask.set(e.0, true),
                None => {
                    if seen.len() < limit {
                        let next = net.fire_unchecked(&cur, t);
                        if seen.insert(next.clone()) {
                            queue.push_back(next);
                        }
                    }
                }
            }
        }
    }
    mask
}

/// Binary vector over the event alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskVector(Vec<bool>);

impl MaskVector {
    pub fn zeros(len: usize) -> Self {
        MaskVector(vec![false; len])
    }

    pub fn ones(len: usize) -> Self {
        MaskVector(vec![true; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        MaskVector(bits)
    }

    pub fn from_events(len: usize, events: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Self::zeros(len);
        for e in events {
            mask.set(e, true);
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.0[i] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_zero(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn events(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }

    /// Appends one bit, e.g. for a synthetic end-of-case event.
    pub fn push(&mut self, on: bool) {
        self.0.push(on);
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}
