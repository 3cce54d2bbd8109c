//! Independent oracles shared by the integration tests. Nothing here calls the
//! graph or metric code under test.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use reachmask::benchgen::{generate_net, BlockWeights, GenSpec};
use reachmask::petri::{PetriNet, TransitionIdx};
use reachmask::reach::ReducedReachabilityGraph;

pub type Tokens = Vec<u32>;
pub type LabeledEdge = (Tokens, String, Tokens);

fn enabled(net: &PetriNet, m: &[u32], t: usize) -> bool {
    net.preset(TransitionIdx(t)).iter().all(|&p| m[p] > 0)
}

fn fire(net: &PetriNet, m: &[u32], t: usize) -> Tokens {
    let mut next = m.to_vec();
    for &p in net.preset(TransitionIdx(t)) {
        next[p] -= 1;
    }
    for &p in net.postset(TransitionIdx(t)) {
        next[p] += 1;
    }
    next
}

/// Reduced graph by enumerating firing sequences from the initial marking.
/// Each sequence carries its anchor, the marking after its last visible firing
/// (or the initial marking). A visible firing from marking `m` records the
/// triple (anchor, label, m'). Extending a sequence whose (anchor, marking)
/// pair was already seen cannot add triples, so such sequences are cut; the
/// length bound is a safety net for reviewers running huge nets.
pub fn oracle_reduced_graph(
    net: &PetriNet,
    length_bound: usize,
) -> (BTreeSet<Tokens>, BTreeSet<LabeledEdge>) {
    let initial: Tokens = net.initial_marking().tokens().to_vec();
    let final_marking: Option<Tokens> = net.final_marking().map(|m| m.tokens().to_vec());
    let mut nodes = BTreeSet::from([initial.clone()]);
    let mut edges = BTreeSet::new();
    let mut seen: HashSet<(Tokens, Tokens)> = HashSet::new();
    let mut stack = vec![(initial.clone(), initial, 0usize)];
    while let Some((anchor, m, len)) = stack.pop() {
        if !seen.insert((anchor.clone(), m.clone())) || len >= length_bound {
            continue;
        }
        for t in 0..net.num_transitions() {
            if !enabled(net, &m, t) {
                continue;
            }
            let next = fire(net, &m, t);
            match &net.transitions()[t].label {
                Some(label) => {
                    nodes.insert(next.clone());
                    if final_marking.as_ref() != Some(&anchor) {
                        edges.insert((anchor.clone(), label.clone(), next.clone()));
                    }
                    stack.push((next.clone(), next, len + 1));
                }
                None => stack.push((anchor.clone(), next, len + 1)),
            }
        }
    }
    (nodes, edges)
}

/// The reduced graph under test in the oracle's vocabulary.
pub fn observed_graph(
    net: &PetriNet,
    rgr: &ReducedReachabilityGraph,
) -> (BTreeSet<Tokens>, BTreeSet<LabeledEdge>) {
    let nodes = rgr.markings().iter().map(|m| m.tokens().to_vec()).collect();
    let edges = rgr
        .edges()
        .iter()
        .map(|e| {
            (
                rgr.marking(e.from).tokens().to_vec(),
                net.alphabet()[e.event.0].clone(),
                rgr.marking(e.to).tokens().to_vec(),
            )
        })
        .collect();
    (nodes, edges)
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut doubled_wins: u64 = 0;
    let (mut pos, mut neg) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            pos += 1;
        } else {
            neg += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            doubled_wins += match scores[i].partial_cmp(&scores[j]).expect("finite scores") {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    doubled_wins as f64 / (2 * pos * neg) as f64
}

/// Plain softmax, computed without any shared helper.
pub fn reference_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Seeded small block-structured nets with at least one hidden transition and
/// at most `max_places` places.
pub fn small_hidden_nets(count: usize, max_places: usize) -> Vec<(u64, PetriNet)> {
    let mut nets = Vec::new();
    let mut seed = 0u64;
    while nets.len() < count {
        seed += 1;
        let spec = GenSpec {
            seed,
            depth: 1 + (seed % 3) as usize,
            weights: BlockWeights {
                sequence: 1.0,
                xor: 1.0,
                and: 1.0,
                loop_: 1.0,
            },
            max_branches: 3,
            nesting_probability: 0.6,
            hidden_probability: 0.6,
            trace_count: 1,
            ..GenSpec::default()
        };
        let net = generate_net(&spec).expect("generator accepts spec");
        if net.num_places() <= max_places && net.hidden_transitions().next().is_some() {
            nets.push((seed, net));
        }
        assert!(seed < 100_000, "generator rarely yields nets this small");
    }
    nets
}
