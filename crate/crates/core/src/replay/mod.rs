//! Token replay on a decay-enhanced net.
//!
//! Replaying a trace yields one [`TimedStateSample`] per event except the
//! last: the marking after the event, the number of tokens that ever entered
//! each place, a per-place exponential decay of the time since the last token
//! arrival, and the reachability mask of the marking.

mod dataset;

pub use dataset::{build_dataset, sha256_hex, CountScaling, Dataset, DatasetMeta, END_LABEL};

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{EventLog, Trace};
use crate::petri::{EventIdx, Marking, PetriNet, TransitionIdx};
use crate::reach::{mask_by_exploration, MaskVector, ReducedReachabilityGraph};

pub const HIDDEN_SEARCH_DEPTH: usize = 32;
/// Upper bound on markings visited by one hidden-enablement search.
const HIDDEN_SEARCH_STATES: usize = 50_000;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace `{case}`: label `{label}` is not in the net's alphabet")]
    UnmappableLabel { case: String, label: String },
    #[error("cannot estimate decay parameters from an empty log")]
    EmptyLog,
    #[error("decay parameters cover {got} places, the net has {expected}")]
    ParameterMismatch { expected: usize, got: usize },
    #[error("decay time constants must be positive, place {0} has {1}")]
    NonPositiveAlpha(usize, f64),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ReplayError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOptions {
    /// Drop labels outside the alphabet (counted) instead of failing.
    pub skip_unknown: bool,
    /// Append a synthetic END event to the alphabet and emit a sample for the last event.
    pub predict_end: bool,
    pub hidden_depth: usize,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            skip_unknown: false,
            predict_end: false,
            hidden_depth: HIDDEN_SEARCH_DEPTH,
        }
    }
}

/// Per-place decay time constants in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayParameters {
    pub alpha: Vec<f64>,
}

impl DecayParameters {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if let Some((i, &a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, &a)| a.is_nan() || a <= 0.0)
        {
            return Err(ReplayError::NonPositiveAlpha(i, a));
        }
        Ok(DecayParameters { alpha })
    }

    pub fn uniform(places: usize, alpha: f64) -> Self {
        DecayParameters {
            alpha: vec![alpha; places],
        }
    }

    /// exp(-elapsed / alpha)
    pub fn decay(&self, place: usize, elapsed: f64) -> f64 {
        (-elapsed / self.alpha[place]).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NextEvent {
    Event(EventIdx),
    End,
}

impl NextEvent {
    /// Class index; END takes the slot after the alphabet.
    pub fn class(&self, alphabet_len: usize) -> usize {
        match self {
            NextEvent::Event(e) => e.0,
            NextEvent::End => alphabet_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedStateSample {
    pub case_id: Arc<str>,
    pub position: usize,
    pub marking: Marking,
    pub token_counts: Vec<u64>,
    pub decay_values: Vec<f64>,
    pub mask: MaskVector,
    pub next_event: NextEvent,
    /// Marking is not a node of the reduced graph; the mask was explored on the net.
    pub off_model: bool,
}

impl TimedStateSample {
    pub fn mask_violation(&self, alphabet_len: usize) -> bool {
        let class = self.next_event.class(alphabet_len);
        class >= self.mask.len() || !self.mask.get(class)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub traces: usize,
    pub samples: usize,
    pub forced_firings: usize,
    pub missing_tokens: usize,
    pub hidden_firings: usize,
    pub mask_violations: usize,
    pub unmappable_labels: usize,
    pub off_model_samples: usize,
}

impl ReplayReport {
    pub fn merge(&mut self, other: &ReplayReport) {
        self.traces += other.traces;
        self.samples += other.samples;
        self.forced_firings += other.forced_firings;
        self.missing_tokens += other.missing_tokens;
        self.hidden_firings += other.hidden_firings;
        self.mask_violations += other.mask_violations;
        self.unmappable_labels += other.unmappable_labels;
        self.off_model_samples += other.off_model_samples;
    }

    pub fn mask_violation_rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.mask_violations as f64 / self.samples as f64
        }
    }
}

/// Mutable per-trace replay state.
struct TokenGame<'a> {
    net: &'a PetriNet,
    marking: Marking,
    counts: Vec<u64>,
    last_arrival: Vec<Option<f64>>,
    /// Arrival times per place, kept only when estimating decay parameters.
    arrivals: Option<Vec<Vec<f64>>>,
    depth: usize,
}

impl<'a> TokenGame<'a> {
    fn new(net: &'a PetriNet, start: f64, depth: usize, track_arrivals: bool) -> Self {
        let marking = net.initial_marking().clone();
        let n = net.num_places();
        let mut game = TokenGame {
            net,
            marking: marking.clone(),
            counts: vec![0; n],
            last_arrival: vec![None; n],
            arrivals: track_arrivals.then(|| vec![Vec::new(); n]),
            depth,
        };
        for (p, &k) in marking.tokens().iter().enumerate() {
            for _ in 0..k {
                game.arrive(p, start);
            }
        }
        game
    }

    fn arrive(&mut self, place: usize, time: f64) {
        self.counts[place] += 1;
        self.last_arrival[place] = Some(time);
        if let Some(a) = self.arrivals.as_mut() {
            a[place].push(time);
        }
    }

    fn fire(&mut self, t: TransitionIdx, time: f64) {
        self.marking = self.net.fire_unchecked(&self.marking, t);
        for &p in self.net.postset(t) {
            self.arrive(p, time);
        }
    }

    /// Shortest hidden sequence after which `target` is enabled; ties broken
    /// by transition order.
    fn hidden_path_to(&self, target: TransitionIdx) -> Option<Vec<TransitionIdx>> {
        let hidden: Vec<TransitionIdx> = self.net.hidden_transitions().collect();
        if hidden.is_empty() {
            return None;
        }
        let mut seen = HashSet::from([self.marking.clone()]);
        let mut queue = VecDeque::from([(self.marking.clone(), Vec::new())]);
        while let Some((m, path)) = queue.pop_front() {
            if path.len() >= self.depth {
                continue;
            }
            for &h in &hidden {
                if !self.net.is_enabled_unchecked(&m, h) {
                    continue;
                }
                let next = self.net.fire_unchecked(&m, h);
                if !seen.insert(next.clone()) {
                    continue;
                }
                let mut p = path.clone();
                p.push(h);
                if self.net.is_enabled_unchecked(&next, target) {
                    return Some(p);
                }
                if seen.len() < HIDDEN_SEARCH_STATES {
                    queue.push_back((next, p));
                }
            }
        }
        None
    }

    /// Replays one visible transition at `time`, updating the report.
    fn step(&mut self, t: TransitionIdx, time: f64, report: &mut ReplayReport) {
        if !self.net.is_enabled_unchecked(&self.marking, t) {
            if let Some(path) = self.hidden_path_to(t) {
                report.hidden_firings += path.len();
                for h in path {
                    self.fire(h, time);
                }
            }
        }
        if self.net.is_enabled_unchecked(&self.marking, t) {
            self.fire(t, time);
        } else {
            let mut missing = 0;
            for &p in self.net.preset(t) {
                if self.marking.tokens()[p] == 0 {
                    self.marking.tokens_mut()[p] = 1;
                    self.arrive(p, time);
                    missing += 1;
                }
            }
            report.forced_firings += 1;
            report.missing_tokens += missing;
            self.fire(t, time);
        }
    }
}

/// Resolves labels to transitions, dropping (and counting) unknown ones when allowed.
fn map_trace(
    net: &PetriNet,
    trace: &Trace,
    options: &ReplayOptions,
    report: &mut ReplayReport,
) -> Result<Vec<(EventIdx, f64)>> {
    let mut mapped = Vec::with_capacity(trace.len());
    for e in &trace.events {
        match net.event_idx(&e.label) {
            Some(idx) => mapped.push((idx, e.timestamp)),
            None if options.skip_unknown => report.unmappable_labels += 1,
            None => {
                return Err(ReplayError::UnmappableLabel {
                    case: trace.case_id.clone(),
                    label: e.label.clone(),
                })
            }
        }
    }
    Ok(mapped)
}

/// Mean gap between successive token arrivals per place over the training log.
/// Places that never receive a second token fall back to the mean trace
/// duration. Every value is at least one second.
pub fn estimate_decay_parameters(
    net: &PetriNet,
    train: &EventLog,
    options: &ReplayOptions,
) -> Result<DecayParameters> {
    if train.is_empty() {
        return Err(ReplayError::EmptyLog);
    }
    let n = net.num_places();
    let mut gap_sum = vec![0.0; n];
    let mut gap_count = vec![0usize; n];
    let mut report = ReplayReport::default();
    for trace in &train.traces {
        let mapped = map_trace(net, trace, options, &mut report)?;
        let Some(&(_, start)) = mapped.first() else {
            continue;
        };
        let mut game = TokenGame::new(net, start, options.hidden_depth, true);
        for &(event, time) in &mapped {
            game.step(net.transition_of_event(event), time, &mut report);
        }
        for (p, times) in game.arrivals.expect("tracked").iter().enumerate() {
            for w in times.windows(2) {
                gap_sum[p] += w[1] - w[0];
                gap_count[p] += 1;
            }
        }
    }
    let fallback = train.mean_duration();
    let alpha = (0..n)
        .map(|p| {
            let a = if gap_count[p] > 0 {
                gap_sum[p] / gap_count[p] as f64
            } else {
                fallback
            };
            a.max(1.0)
        })
        .collect();
    Ok(DecayParameters { alpha })
}

/// Replays a single trace.
pub fn replay_trace(
    net: &PetriNet,
    rgr: &ReducedReachabilityGraph,
    params: &DecayParameters,
    trace: &Trace,
    options: &ReplayOptions,
) -> Result<(Vec<TimedStateSample>, ReplayReport)> {
    if params.alpha.len() != net.num_places() {
        return Err(ReplayError::ParameterMismatch {
            expected: net.num_places(),
            got: params.alpha.len(),
        });
    }
    let mut report = ReplayReport {
        traces: 1,
        ..Default::default()
    };
    let mapped = map_trace(net, trace, options, &mut report)?;
    let mut samples = Vec::new();
    let Some(&(_, start)) = mapped.first() else {
        return Ok((samples, report));
    };
    let alphabet_len = net.alphabet().len();
    let case_id: Arc<str> = Arc::from(trace.case_id.as_str());
    let mut game = TokenGame::new(net, start, options.hidden_depth, false);

    for (i, &(event, time)) in mapped.iter().enumerate() {
        let forced_before = report.forced_firings;
        game.step(net.transition_of_event(event), time, &mut report);
        let next_event = match mapped.get(i + 1) {
            Some(&(next, _)) => NextEvent::Event(next),
            None if options.predict_end => NextEvent::End,
            None => break,
        };
        let node = rgr.node_of(&game.marking);
        let mut mask = match node {
            Some(n) => rgr.mask_for_node(n),
            None => mask_by_exploration(net, &game.marking, 10_000),
        };
        if options.predict_end {
            let completes = match node {
                Some(n) => rgr.completes(n),
                None => net.final_marking() == Some(&game.marking),
            };
            mask.push(completes);
        }
        let off_model = node.is_none();
        if off_model && report.forced_firings == forced_before {
            ::log::debug!(
                "trace `{}`: marking {} after a conforming step is not in the reduced graph",
                trace.case_id,
                game.marking
            );
        }
        let decay_values = game
            .last_arrival
            .iter()
            .enumerate()
            .map(|(p, last)| match last {
                Some(t) => params.decay(p, time - t),
                None => 0.0,
            })
            .collect();
        let sample = TimedStateSample {
            case_id: case_id.clone(),
            position: i,
            marking: game.marking.clone(),
            token_counts: game.counts.clone(),
            decay_values,
            mask,
            next_event,
            off_model,
        };
        report.samples += 1;
        if off_model {
            report.off_model_samples += 1;
        }
        if sample.mask_violation(alphabet_len) {
            report.mask_violations += 1;
        }
        samples.push(sample);
    }
    Ok((samples, report))
}

/// Replays every trace of a log, concatenating samples in trace order.
pub fn replay_log(
    net: &PetriNet,
    rgr: &ReducedReachabilityGraph,
    params: &DecayParameters,
    log: &EventLog,
    options: &ReplayOptions,
) -> Result<(Vec<TimedStateSample>, ReplayReport)> {
    let mut samples = Vec::new();
    let mut report = ReplayReport::default();
    for trace in &log.traces {
        let (s, r) = replay_trace(net, rgr, params, trace, options)?;
        samples.extend(s);
        report.merge(&r);
    }
    Ok((samples, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::Event;
    use crate::petri::parse_text_net;
    use crate::reach::{ReachabilityGraph, DEFAULT_NODE_CAP};

    const SEQ_AB: &str = "place p1 1\nplace p2\nplace p3\ntransition ta a\ntransition tb b\n\
                          arc p1 ta\narc ta p2\narc p2 tb\narc tb p3\n";

    fn setup(src: &str) -> (PetriNet, ReducedReachabilityGraph) {
        let net = parse_text_net(src).unwrap();
        let rg = ReachabilityGraph::build(&net, DEFAULT_NODE_CAP).unwrap();
        let rgr = ReducedReachabilityGraph::build(&rg, &net);
        (net, rgr)
    }

    fn trace(labels: &[(&str, f64)]) -> Trace {
        Trace::new(
            "c1",
            labels.iter().map(|&(l, t)| Event::new(l, t)).collect(),
        )
    }

    #[test]
    fn fitting_linear_trace() {
        let (net, rgr) = setup(SEQ_AB);
        let params = DecayParameters::uniform(3, 10.0);
        let (samples, report) = replay_trace(
            &net,
            &rgr,
            &params,
            &trace(&[("a", 0.0), ("b", 5.0)]),
            &ReplayOptions::default(),
        )
        .unwrap();
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_eq!(s.marking.tokens(), &[0, 1, 0]);
        assert_eq!(s.mask.bits(), &[false, true]);
        assert_eq!(s.next_event, NextEvent::Event(EventIdx(1)));
        assert_eq!(s.token_counts, vec![1, 1, 0]);
        // p2 just received its token, p1 got its token at the trace start
        assert_eq!(s.decay_values, vec![1.0, 1.0, 0.0]);
        assert_eq!(report.forced_firings, 0);
        assert_eq!(report.mask_violations, 0);
    }

    #[test]
    fn decay_follows_elapsed_time() {
        let (net, rgr) = setup(
            "place p1 1\nplace p2\nplace p3\nplace p4\ntransition ta a\ntransition tb b\ntransition tc c\n\
             arc p1 ta\narc ta p2\narc p2 tb\narc tb p3\narc p3 tc\narc tc p4\n",
        );
        let params = DecayParameters::uniform(4, 10.0);
        let (samples, _) = replay_trace(
            &net,
            &rgr,
            &params,
            &trace(&[("a", 0.0), ("b", 10.0), ("c", 30.0)]),
            &ReplayOptions::default(),
        )
        .unwrap();
        assert_eq!(samples.len(), 2);
        let f = &samples[1].decay_values;
        assert!((f[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((f[1] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(f[2], 1.0);
    }

    #[test]
    fn unknown_labels_skipped_or_rejected() {
        let (net, rgr) = setup(SEQ_AB);
        let params = DecayParameters::uniform(3, 10.0);
        let t = trace(&[("a", 0.0), ("zzz", 1.0), ("b", 2.0)]);
        assert!(matches!(
            replay_trace(&net, &rgr, &params, &t, &ReplayOptions::default()),
            Err(ReplayError::UnmappableLabel { .. })
        ));
        let options = ReplayOptions {
            skip_unknown: true,
            ..Default::default()
        };
        let (samples, report) = replay_trace(&net, &rgr, &params, &t, &options).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(report.unmappable_labels, 1);
        assert_eq!(samples[0].next_event, NextEvent::Event(EventIdx(1)));
    }

    #[test]
    fn hidden_steps_are_fired_silently() {
        let (net, rgr) = setup(
            "place p0 1\nplace p1\nplace p2\nplace p3\ntransition ta a\ntransition tt ~\ntransition tb b\n\
             arc p0 ta\narc ta p1\narc p1 tt\narc tt p2\narc p2 tb\narc tb p3\n",
        );
        let params = DecayParameters::uniform(4, 10.0);
        let (samples, report) = replay_trace(
            &net,
            &rgr,
            &params,
            &trace(&[("a", 0.0), ("b", 4.0)]),
            &ReplayOptions {
                predict_end: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.hidden_firings, 1);
        assert_eq!(report.forced_firings, 0);
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].next_event, NextEvent::End);
        // END bit is set only at the final marking
        assert_eq!(samples[0].mask.bits(), &[false, true, false]);
        assert_eq!(samples[1].mask.bits(), &[false, false, true]);
        assert_eq!(samples[1].token_counts, vec![1, 1, 1, 1]);
    }

    #[test]
    fn non_fitting_trace_forces_and_flags() {
        let (net, rgr) = setup(SEQ_AB);
        let params = DecayParameters::uniform(3, 10.0);
        let (samples, report) = replay_trace(
            &net,
            &rgr,
            &params,
            &trace(&[("b", 0.0), ("a", 1.0), ("b", 2.0)]),
            &ReplayOptions::default(),
        )
        .unwrap();
        assert_eq!(report.forced_firings, 1);
        assert_eq!(report.missing_tokens, 1);
        assert_eq!(samples.len(), 2);
        // after the forced `b`: [1,0,1] is off-model, `a` is still enabled
        assert!(samples[0].off_model);
        assert_eq!(samples[0].mask.bits(), &[true, false]);
        assert_eq!(report.mask_violations, 0);
        // counts include the inserted token
        assert_eq!(samples[0].token_counts, vec![1, 1, 1]);
    }

    #[test]
    fn estimate_mean_gaps_and_fallback() {
        // a self-loop place receives tokens at 0 (start), 10, 20
        let net = parse_text_net(
            "place p 1\nplace q\ntransition ta a\ntransition tb b\narc p ta\narc ta p\narc p tb\narc tb q\n",
        )
        .unwrap();
        let log = EventLog::new(vec![trace(&[
            ("a", 0.0),
            ("a", 10.0),
            ("a", 20.0),
            ("b", 100.0),
        ])]);
        // arrivals at p: 0 (initial), 0, 10, 20; at q: 100
        let params = estimate_decay_parameters(&net, &log, &ReplayOptions::default()).unwrap();
        let p = net.place_idx("p").unwrap().0;
        let q = net.place_idx("q").unwrap().0;
        assert!((params.alpha[p] - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(params.alpha[q], 100.0);
    }

    #[test]
    fn estimate_rejects_empty_log() {
        let net = parse_text_net(SEQ_AB).unwrap();
        assert!(matches!(
            estimate_decay_parameters(&net, &EventLog::default(), &ReplayOptions::default()),
            Err(ReplayError::EmptyLog)
        ));
    }

    #[test]
    fn estimate_clamps_to_one_second() {
        let net = parse_text_net(SEQ_AB).unwrap();
        let log = EventLog::new(vec![trace(&[("a", 0.0), ("b", 0.25)])]);
        let params = estimate_decay_parameters(&net, &log, &ReplayOptions::default()).unwrap();
        assert!(params.alpha.iter().all(|&a| a == 1.0));
    }
}
