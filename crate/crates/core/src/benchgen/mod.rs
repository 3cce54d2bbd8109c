//! Seeded synthetic workflow nets and event logs.
//!
//! Nets are composed from sequence, exclusive choice (XOR), parallel (AND)
//! and loop blocks, so every generated net is a sound workflow net. Logs are
//! random walks over enabled transitions with exponential delays between
//! visible events.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{Event, EventLog, Trace};
use crate::petri::{Marking, NetBuilder, PetriNet, TransitionIdx};

/// 2020-01-01T00:00:00Z
pub const DEFAULT_START: f64 = 1_577_836_800.0;
const WALK_STEP_CAP: usize = 2_000;
const WALK_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("no random walk reached the final marking within {0} attempts")]
    NoCompletion(usize),
    #[error(transparent)]
    Petri(#[from] crate::petri::PetriError),
}

pub type Result<T> = std::result::Result<T, GenError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockWeights {
    pub sequence: f64,
    pub xor: f64,
    pub and: f64,
    #[serde(rename = "loop")]
    pub loop_: f64,
}

impl Default for BlockWeights {
    fn default() -> Self {
        BlockWeights {
            sequence: 1.0,
            xor: 1.0,
            and: 1.0,
            loop_: 1.0,
        }
    }
}

impl BlockWeights {
    pub fn sequence_only() -> Self {
        BlockWeights {
            sequence: 1.0,
            xor: 0.0,
            and: 0.0,
            loop_: 0.0,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.sequence, self.xor, self.and, self.loop_]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub seed: u64,
    pub depth: usize,
    pub weights: BlockWeights,
    /// Branches per XOR/AND/sequence block are drawn from 2..=max_branches.
    pub max_branches: usize,
    /// Probability that a nested block expands further instead of being an activity.
    pub nesting_probability: f64,
    pub hidden_probability: f64,
    pub trace_count: usize,
    /// Per-trace probability of swapping two adjacent events or dropping one.
    pub noise_rate: f64,
    /// Mean delay between consecutive visible events, seconds.
    pub mean_delay: f64,
    /// Mean gap between case starts, seconds.
    pub mean_case_gap: f64,
    pub start_time: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 0,
            depth: 3,
            weights: BlockWeights::default(),
            max_branches: 3,
            nesting_probability: 0.5,
            hidden_probability: 0.3,
            trace_count: 100,
            noise_rate: 0.0,
            mean_delay: 600.0,
            mean_case_gap: 900.0,
            start_time: DEFAULT_START,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights.as_array();
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) || w.iter().all(|&x| x == 0.0) {
            return Err(GenError::Spec(
                "block weights must be non-negative with at least one positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(GenError::Spec(format!(
                "noise rate {} not in [0, 1)",
                self.noise_rate
            )));
        }
        for (name, p) in [
            ("hidden probability", self.hidden_probability),
            ("nesting probability", self.nesting_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenError::Spec(format!("{name} {p} not in [0, 1]")));
            }
        }
        if self.max_branches < 2 {
            return Err(GenError::Spec("max_branches must be at least 2".into()));
        }
        if [self.mean_delay, self.mean_case_gap]
            .iter()
            .any(|&d| d.is_nan() || d <= 0.0)
        {
            return Err(GenError::Spec("delays must be positive".into()));
        }
        Ok(())
    }
}

/// Process tree the net is compiled from.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Activity,
    Sequence(Vec<Block>),
    Xor(Vec<Block>),
    And(Vec<Block>),
    Loop(Box<Block>),
}

fn random_tree(
    rng: &mut ChaCha8Rng,
    spec: &GenSpec,
    depth: usize,
    dist: &WeightedIndex<f64>,
) -> Block {
    if depth == 0 {
        return Block::Activity;
    }
    let child = |rng: &mut ChaCha8Rng| {
        if depth > 1 && rng.random_bool(spec.nesting_probability) {
            random_tree(rng, spec, depth - 1, dist)
        } else {
            Block::Activity
        }
    };
    let kind = dist.sample(rng);
    if kind == 3 {
        return Block::Loop(Box::new(child(rng)));
    }
    let n = rng.random_range(2..=spec.max_branches);
    let children = (0..n).map(|_| child(rng)).collect();
    match kind {
        0 => Block::Sequence(children),
        1 => Block::Xor(children),
        _ => Block::And(children),
    }
}

struct Compiler<'a> {
    rng: &'a mut ChaCha8Rng,
    hidden_probability: f64,
    builder: NetBuilder,
    places: usize,
    activities: usize,
    hidden: usize,
}

impl Compiler<'_> {
    fn place(&mut self) -> String {
        let id = format!("p{:02}", self.places);
        self.places += 1;
        self.builder.add_place(id.clone());
        id
    }

    fn visible(&mut self) -> String {
        let n = self.activities;
        self.activities += 1;
        let id = format!("t{n:02}");
        self.builder
            .add_transition(id.clone(), Some(activity_name(n)));
        id
    }

    fn hidden(&mut self) -> String {
        let id = format!("tau{:02}", self.hidden);
        self.hidden += 1;
        self.builder.add_transition(id.clone(), None);
        id
    }

    fn maybe_hidden(&mut self) -> String {
        if self.rng.random_bool(self.hidden_probability) {
            self.hidden()
        } else {
            self.visible()
        }
    }

    fn connect(&mut self, from: &str, t: &str, to: &str) {
        self.builder.add_arc(from, t, 1);
        self.builder.add_arc(t, to, 1);
    }

    fn emit(&mut self, block: &Block, entry: &str, exit: &str) {
        match block {
            Block::Activity => {
                let t = self.visible();
                self.connect(entry, &t, exit);
            }
            Block::Sequence(children) => {
                let mut from = entry.to_string();
                for (i, c) in children.iter().enumerate() {
                    let to = if i + 1 == children.len() {
                        exit.to_string()
                    } else {
                        self.place()
                    };
                    self.emit(c, &from, &to);
                    from = to;
                }
            }
            Block::Xor(children) => {
                for c in children {
                    if self.rng.random_bool(self.hidden_probability) {
                        // branch entered through a silent step
                        let mid = self.place();
                        let tau = self.hidden();
                        self.connect(entry, &tau, &mid);
                        self.emit(c, &mid, exit);
                    } else {
                        self.emit(c, entry, exit);
                    }
                }
            }
            Block::And(children) => {
                let split = self.maybe_hidden();
                let join = self.maybe_hidden();
                self.builder.add_arc(entry, split.clone(), 1);
                self.builder.add_arc(join.clone(), exit, 1);
                for c in children {
                    let (a, b) = (self.place(), self.place());
                    self.builder.add_arc(split.clone(), a.clone(), 1);
                    self.builder.add_arc(b.clone(), join.clone(), 1);
                    self.emit(c, &a, &b);
                }
            }
            Block::Loop(body) => {
                let (a, b) = (self.place(), self.place());
                let enter = self.hidden();
                self.connect(entry, &enter, &a);
                self.emit(body, &a, &b);
                let redo = self.maybe_hidden();
                self.connect(&b, &redo, &a);
                let leave = self.hidden();
                self.connect(&b, &leave, exit);
            }
        }
    }
}

/// `a`..`z`, then `a1`..`z1`, and so on.
fn activity_name(n: usize) -> String {
    let letter = (b'a' + (n % 26) as u8) as char;
    match n / 26 {
        0 => letter.to_string(),
        k => format!("{letter}{k}"),
    }
}

/// The process tree behind [`generate_net`].
pub fn generate_tree(spec: &GenSpec) -> Result<Block> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dist =
        WeightedIndex::new(spec.weights.as_array()).map_err(|e| GenError::Spec(e.to_string()))?;
    Ok(random_tree(&mut rng, spec, spec.depth, &dist))
}

/// Compiles `Sequence(start, tree, end)` into a workflow net.
pub fn compile_tree(tree: &Block, hidden_probability: f64, seed: u64) -> Result<PetriNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_b10c);
    let mut c = Compiler {
        rng: &mut rng,
        hidden_probability,
        builder: PetriNet::builder(),
        places: 0,
        activities: 0,
        hidden: 0,
    };
    let source = c.place();
    let sink = c.place();
    let top = Block::Sequence(vec![Block::Activity, tree.clone(), Block::Activity]);
    c.emit(&top, &source, &sink);
    c.builder.set_initial(source, 1);
    c.builder.set_final_place(sink);
    Ok(c.builder.build()?)
}

pub fn generate_net(spec: &GenSpec) -> Result<PetriNet> {
    let tree = generate_tree(spec)?;
    compile_tree(&tree, spec.hidden_probability, spec.seed)
}

/// One random walk from the initial to the final marking; None if the step cap hits.
fn walk(net: &PetriNet, rng: &mut ChaCha8Rng) -> Option<Vec<TransitionIdx>> {
    let target: Marking = net.final_marking()?.clone();
    let mut m = net.initial_marking().clone();
    let mut fired = Vec::new();
    while m != target {
        let enabled: Vec<TransitionIdx> = net.enabled_unchecked(&m).collect();
        if enabled.is_empty() || fired.len() >= WALK_STEP_CAP {
            return None;
        }
        let t = enabled[rng.random_range(0..enabled.len())];
        m = net.fire_unchecked(&m, t);
        fired.push(t);
    }
    Some(fired)
}

fn perturb(events: &mut Vec<Event>, rng: &mut ChaCha8Rng) {
    if events.len() >= 2 && rng.random_bool(0.5) {
        let i = rng.random_range(0..events.len() - 1);
        let (a, b) = (events[i].label.clone(), events[i + 1].label.clone());
        events[i].label = b;
        events[i + 1].label = a;
    } else if events.len() >= 2 {
        let i = rng.random_range(0..events.len());
        events.remove(i);
    }
}

pub fn generate_log(net: &PetriNet, spec: &GenSpec) -> Result<EventLog> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x0106_0106));
    let delay = Exp::new(1.0 / spec.mean_delay).map_err(|e| GenError::Spec(e.to_string()))?;
    let gap = Exp::new(1.0 / spec.mean_case_gap).map_err(|e| GenError::Spec(e.to_string()))?;
    let mut start = spec.start_time;
    let mut traces = Vec::with_capacity(spec.trace_count);
    for case in 0..spec.trace_count {
        let fired = (0..WALK_ATTEMPTS)
            .find_map(|_| walk(net, &mut rng))
            .ok_or(GenError::NoCompletion(WALK_ATTEMPTS))?;
        let mut time = start;
        let mut events = Vec::new();
        for t in fired {
            if let Some(label) = &net.transition(t).label {
                events.push(Event::new(label.clone(), round_ms(time)));
                time += delay.sample(&mut rng);
            }
        }
        if spec.noise_rate > 0.0 && rng.random_bool(spec.noise_rate) {
            perturb(&mut events, &mut rng);
        }
        traces.push(Trace::new(format!("case_{case:05}"), events));
        start += gap.sample(&mut rng);
    }
    Ok(EventLog::new(traces))
}

/// Millisecond resolution, so XES round trips are exact.
fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reach::{ReachabilityGraph, ReducedReachabilityGraph, DEFAULT_NODE_CAP};

    #[test]
    fn sequence_only_is_linear() {
        let spec = GenSpec {
            depth: 1,
            weights: BlockWeights::sequence_only(),
            ..Default::default()
        };
        let net = generate_net(&spec).unwrap();
        assert!(net.validate_workflow_net().is_valid());
        assert_eq!(net.hidden_transitions().count(), 0);
        let rg = ReachabilityGraph::build(&net, DEFAULT_NODE_CAP).unwrap();
        let rgr = ReducedReachabilityGraph::build(&rg, &net);
        assert_eq!(rgr.edges().len(), rgr.num_nodes() - 1);
        for n in 0..rgr.num_nodes() {
            assert!(rgr.outgoing(n).count() <= 1);
        }
    }

    #[test]
    fn and_block_has_product_state_space() {
        for k in 2..=4 {
            let tree = Block::And(vec![Block::Activity; k]);
            let net = compile_tree(&tree, 0.0, 1).unwrap();
            let rg = ReachabilityGraph::build(&net, DEFAULT_NODE_CAP).unwrap();
            // source, before split, 2^k inside the region, after join, sink
            assert_eq!(rg.num_nodes(), (1 << k) + 4, "k = {k}");
        }
    }

    #[test]
    fn loop_gives_cycle() {
        let net = compile_tree(&Block::Loop(Box::new(Block::Activity)), 0.0, 3).unwrap();
        let rg = ReachabilityGraph::build(&net, DEFAULT_NODE_CAP).unwrap();
        let rgr = ReducedReachabilityGraph::build(&rg, &net);
        let has_cycle = rgr.edges().iter().any(|e| {
            let mut seen = vec![false; rgr.num_nodes()];
            let mut stack = vec![e.to];
            while let Some(n) = stack.pop() {
                if n == e.from {
                    return true;
                }
                if !std::mem::replace(&mut seen[n], true) {
                    stack.extend(rgr.outgoing(n).map(|x| x.to));
                }
            }
            false
        });
        assert!(has_cycle);
    }

    #[test]
    fn generated_nets_are_workflow_nets() {
        for seed in 0..30 {
            let spec = GenSpec {
                seed,
                ..Default::default()
            };
            let net = generate_net(&spec).unwrap();
            let report = net.validate_workflow_net();
            assert!(report.is_valid(), "seed {seed}: {report}");
            ReachabilityGraph::build(&net, DEFAULT_NODE_CAP).unwrap();
        }
    }

    #[test]
    fn log_has_requested_size_and_is_seeded() {
        let spec = GenSpec {
            seed: 4,
            trace_count: 100,
            ..Default::default()
        };
        let net = generate_net(&spec).unwrap();
        let a = generate_log(&net, &spec).unwrap();
        assert_eq!(a.len(), 100);
        assert!(a.traces.iter().all(|t| t.len() >= 2));
        assert_eq!(a, generate_log(&net, &spec).unwrap());
        assert_eq!(net, generate_net(&spec).unwrap());
    }

    #[test]
    fn spec_validation() {
        let bad = GenSpec {
            weights: BlockWeights {
                sequence: 0.0,
                xor: 0.0,
                and: 0.0,
                loop_: 0.0,
            },
            ..Default::default()
        };
        assert!(generate_net(&bad).is_err());
        let noisy = GenSpec {
            noise_rate: 1.0,
            ..Default::default()
        };
        assert!(generate_net(&noisy).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(activity_name(0), "a");
        assert_eq!(activity_name(25), "z");
        assert_eq!(activity_name(27), "b1");
    }
}
