//! Reachability graphs and the reduced graph used to derive next-event masks.

mod export;
mod reduced;

pub use reduced::{
    mask_by_exploration, FinalEdges, MaskVector, NodeRule, ReduceOptions, ReducedEdge,
    ReducedReachabilityGraph,
};

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::petri::{Marking, PetriError, PetriNet, TransitionIdx};

pub const DEFAULT_NODE_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(
        "reachability exploration exceeded the cap of {cap} markings ({explored} explored); \
         the net is unbounded or too large"
    )]
    CapExceeded { cap: usize, explored: usize },
    #[error("marking {0} is not a node of the reduced reachability graph")]
    NotInReducedGraph(Marking),
    #[error(transparent)]
    Petri(#[from] PetriError),
}

pub type Result<T> = std::result::Result<T, ReachError>;

/// Node of a [`ReachabilityGraph`]; ids follow breadth-first discovery order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RgEdge {
    pub from: NodeId,
    pub transition: TransitionIdx,
    pub to: NodeId,
}

#[derive(Debug, Clone)]
pub struct ReachabilityGraph {
    markings: Vec<Marking>,
    index: HashMap<Marking, NodeId>,
    edges: Vec<RgEdge>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl ReachabilityGraph {
    /// Breadth-first closure of the initial marking. Transitions are expanded in
    /// index order, so node ids and edge order are deterministic.
    pub fn build(net: &PetriNet, node_cap: usize) -> Result<Self> {
        let init = net.initial_marking().clone();
        let mut markings = vec![init.clone()];
        let mut index = HashMap::from([(init, NodeId(0))]);
        let mut edges = Vec::new();
        let mut queue = VecDeque::from([NodeId(0)]);
        if node_cap == 0 {
            return Err(ReachError::CapExceeded {
                cap: node_cap,
                explored: 0,
            });
        }
        while let Some(node) = queue.pop_front() {
            let current = markings[node.0].clone();
            for t in net.enabled_unchecked(&current) {
                let next = net.fire_unchecked(&current, t);
                let to = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        if markings.len() >= node_cap {
                            return Err(ReachError::CapExceeded {
                                cap: node_cap,
                                explored: markings.len(),
                            });
                        }
                        let id = NodeId(markings.len());
                        markings.push(next.clone());
                        index.insert(next, id);
                        queue.push_back(id);
                        id
                    }
                };
                edges.push(RgEdge {
                    from: node,
                    transition: t,
                    to,
                });
            }
        }
        let mut outgoing = vec![Vec::new(); markings.len()];
        let mut incoming = vec![Vec::new(); markings.len()];
        for (i, e) in edges.iter().enumerate() {
            outgoing[e.from.0].push(i);
            incoming[e.to.0].push(i);
        }
        Ok(ReachabilityGraph {
            markings,
            index,
            edges,
            outgoing,
            incoming,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.markings.len()
    }

    pub fn initial_node(&self) -> NodeId {
        NodeId(0)
    }

    pub fn edges(&self) -> &[RgEdge] {
        &self.edges
    }

    /// η: node to marking.
    pub fn marking(&self, node: NodeId) -> &Marking {
        &self.markings[node.0]
    }

    pub fn markings(&self) -> &[Marking] {
        &self.markings
    }

    /// η⁻¹: marking to node.
    pub fn node_of(&self, m: &Marking) -> Option<NodeId> {
        self.index.get(m).copied()
    }

    pub fn outgoing(&self, node: NodeId) -> impl Iterator<Item = &RgEdge> {
        self.outgoing[node.0].iter().map(|&i| &self.edges[i])
    }

    pub fn incoming(&self, node: NodeId) -> impl Iterator<Item = &RgEdge> {
        self.incoming[node.0].iter().map(|&i| &self.edges[i])
    }
}
