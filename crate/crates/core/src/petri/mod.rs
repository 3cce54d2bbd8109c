//! Labeled Petri nets with unit arc weights.
//!
//! A [`PetriNet`] is immutable once built. Places, transitions and the event
//! alphabet are sorted lexicographically by id at construction, so every
//! vector indexed by them (markings, masks, feature rows) has a reproducible
//! layout across runs.

mod pnml;
mod text;

pub use pnml::{parse_pnml, write_pnml, PnmlOptions, DEFAULT_HIDDEN_PATTERN};
pub use text::{parse_text_net, write_text_net};

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PetriError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("arc references unknown node `{0}`")]
    UnknownNode(String),
    #[error("arc `{0}` -> `{1}` connects two nodes of the same kind")]
    LikeToLikeArc(String, String),
    #[error("arc `{0}` -> `{1}` has weight {2}; only unit weights are supported")]
    ArcWeight(String, String, u32),
    #[error("event label `{label}` is assigned to transitions `{first}` and `{second}`")]
    DuplicateLabel {
        label: String,
        first: String,
        second: String,
    },
    #[error("marking has {got} entries but the net has {expected} places")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("transition `{0}` is not enabled")]
    NotEnabled(String),
    #[error("unknown transition index {0}")]
    UnknownTransition(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("pnml: {0}")]
    Pnml(String),
}

pub type Result<T> = std::result::Result<T, PetriError>;

/// Index of a place in the net's sorted place list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaceIdx(pub usize);

/// Index of a transition in the net's sorted transition list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionIdx(pub usize);

/// Index of an event in the net's sorted alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventIdx(pub usize);

/// Token counts per place.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Marking(Vec<u32>);

impl Marking {
    pub fn new(tokens: Vec<u32>) -> Self {
        Marking(tokens)
    }

    pub fn empty(places: usize) -> Self {
        Marking(vec![0; places])
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, place: PlaceIdx) -> u32 {
        self.0[place.0]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&t| t as u64).sum()
    }

    pub(crate) fn tokens_mut(&mut self) -> &mut [u32] {
        &mut self.0
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub id: String,
    /// `None` for hidden (silent) transitions.
    pub label: Option<String>,
}

impl Transition {
    pub fn is_hidden(&self) -> bool {
        self.label.is_none()
    }
}

/// A node reference used by the builder and by validation reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Place(String),
    Transition(String),
}

impl Node {
    pub fn id(&self) -> &str {
        match self {
            Node::Place(id) | Node::Transition(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PetriNet {
    places: Vec<String>,
    transitions: Vec<Transition>,
    alphabet: Vec<String>,
    preset: Vec<Vec<usize>>,
    postset: Vec<Vec<usize>>,
    /// Per transition: event index, `None` when hidden.
    transition_event: Vec<Option<EventIdx>>,
    /// Per event: the unique transition carrying it.
    event_transition: Vec<TransitionIdx>,
    place_index: HashMap<String, usize>,
    transition_index: HashMap<String, usize>,
    initial_marking: Marking,
    final_marking: Option<Marking>,
}

impl PetriNet {
    pub fn builder() -> NetBuilder {
        NetBuilder::default()
    }

    pub fn places(&self) -> &[String] {
        &self.places
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn num_places(&self) -> usize {
        self.places.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn initial_marking(&self) -> &Marking {
        &self.initial_marking
    }

    pub fn final_marking(&self) -> Option<&Marking> {
        self.final_marking.as_ref()
    }

    pub fn place_idx(&self, id: &str) -> Option<PlaceIdx> {
        self.place_index.get(id).copied().map(PlaceIdx)
    }

    pub fn transition_idx(&self, id: &str) -> Option<TransitionIdx> {
        self.transition_index.get(id).copied().map(TransitionIdx)
    }

    pub fn transition(&self, t: TransitionIdx) -> &Transition {
        &self.transitions[t.0]
    }

    pub fn is_hidden(&self, t: TransitionIdx) -> bool {
        self.transition_event[t.0].is_none()
    }

    /// Event index of a visible transition.
    pub fn event_of(&self, t: TransitionIdx) -> Option<EventIdx> {
        self.transition_event[t.0]
    }

    pub fn event_idx(&self, label: &str) -> Option<EventIdx> {
        self.alphabet
            .binary_search_by(|probe| probe.as_str().cmp(label))
            .ok()
            .map(EventIdx)
    }

    /// The transition labeled with `event`.
    pub fn transition_of_event(&self, event: EventIdx) -> TransitionIdx {
        self.event_transition[event.0]
    }

    pub fn preset(&self, t: TransitionIdx) -> &[usize] {
        &self.preset[t.0]
    }

    pub fn postset(&self, t: TransitionIdx) -> &[usize] {
        &self.postset[t.0]
    }

    pub fn hidden_transitions(&self) -> impl Iterator<Item = TransitionIdx> + '_ {
        (0..self.transitions.len())
            .map(TransitionIdx)
            .filter(|&t| self.is_hidden(t))
    }

    fn check_dims(&self, m: &Marking) -> Result<()> {
        if m.len() != self.places.len() {
            return Err(PetriError::DimensionMismatch {
                expected: self.places.len(),
                got: m.len(),
            });
        }
        Ok(())
    }

    fn check_transition(&self, t: TransitionIdx) -> Result<()> {
        if t.0 >= self.transitions.len() {
            return Err(PetriError::UnknownTransition(t.0));
        }
        Ok(())
    }

    pub(crate) fn is_enabled_unchecked(&self, m: &Marking, t: TransitionIdx) -> bool {
        self.preset[t.0].iter().all(|&p| m.0[p] >= 1)
    }

    pub fn is_enabled(&self, m: &Marking, t: TransitionIdx) -> Result<bool> {
        self.check_dims(m)?;
        self.check_transition(t)?;
        Ok(self.is_enabled_unchecked(m, t))
    }

    /// All transitions whose preset places each hold at least one token, in index order.
    pub fn enabled_transitions(&self, m: &Marking) -> Result<Vec<TransitionIdx>> {
        self.check_dims(m)?;
        Ok(self.enabled_unchecked(m).collect())
    }

    pub(crate) fn enabled_unchecked<'a>(
        &'a self,
        m: &'a Marking,
    ) -> impl Iterator<Item = TransitionIdx> + 'a {
        (0..self.transitions.len())
            .map(TransitionIdx)
            .filter(move |&t| self.is_enabled_unchecked(m, t))
    }

    pub(crate) fn fire_unchecked(&self, m: &Marking, t: TransitionIdx) -> Marking {
        let mut next = m.clone();
        for &p in &self.preset[t.0] {
            next.0[p] -= 1;
        }
        for &p in &self.postset[t.0] {
            next.0[p] += 1;
        }
        next
    }

    pub fn fire(&self, m: &Marking, t: TransitionIdx) -> Result<Marking> {
        if !self.is_enabled(m, t)? {
            return Err(PetriError::NotEnabled(self.transitions[t.0].id.clone()));
        }
        Ok(self.fire_unchecked(m, t))
    }

    /// Fires `t`, first inserting a token into every empty preset place.
    /// Returns the resulting marking and the number of inserted tokens.
    pub fn force_fire(&self, m: &Marking, t: TransitionIdx) -> Result<(Marking, u32)> {
        self.check_dims(m)?;
        self.check_transition(t)?;
        let mut patched = m.clone();
        let mut missing = 0;
        for &p in &self.preset[t.0] {
            if patched.0[p] == 0 {
                patched.0[p] = 1;
                missing += 1;
            }
        }
        Ok((self.fire_unchecked(&patched, t), missing))
    }

    fn place_presets(&self) -> Vec<Vec<usize>> {
        let mut pre = vec![Vec::new(); self.places.len()];
        for (t, post) in self.postset.iter().enumerate() {
            for &p in post {
                pre[p].push(t);
            }
        }
        pre
    }

    fn place_postsets(&self) -> Vec<Vec<usize>> {
        let mut post = vec![Vec::new(); self.places.len()];
        for (t, pre) in self.preset.iter().enumerate() {
            for &p in pre {
                post[p].push(t);
            }
        }
        post
    }

    /// Structural workflow-net check: one source place, one sink place and
    /// every node on a directed path between them.
    pub fn validate_workflow_net(&self) -> WorkflowReport {
        let place_pre = self.place_presets();
        let place_post = self.place_postsets();
        let sources: Vec<usize> = (0..self.places.len())
            .filter(|&p| place_pre[p].is_empty())
            .collect();
        let sinks: Vec<usize> = (0..self.places.len())
            .filter(|&p| place_post[p].is_empty())
            .collect();
        let mut violations = Vec::new();
        match sources.len() {
            0 => violations.push(WorkflowViolation::NoSource),
            1 => {}
            _ => violations.push(WorkflowViolation::MultipleSources(
                sources.iter().map(|&p| self.places[p].clone()).collect(),
            )),
        }
        match sinks.len() {
            0 => violations.push(WorkflowViolation::NoSink),
            1 => {}
            _ => violations.push(WorkflowViolation::MultipleSinks(
                sinks.iter().map(|&p| self.places[p].clone()).collect(),
            )),
        }

        // Nodes are numbered places first, then transitions.
        let np = self.places.len();
        let nt = self.transitions.len();
        let mut forward = vec![false; np + nt];
        let mut backward = vec![false; np + nt];
        let mut queue = VecDeque::new();
        for &s in &sources {
            forward[s] = true;
            queue.push_back(s);
        }
        while let Some(n) = queue.pop_front() {
            let succ: Vec<usize> = if n < np {
                place_post[n].iter().map(|&t| np + t).collect()
            } else {
                self.postset[n - np].clone()
            };
            for s in succ {
                if !forward[s] {
                    forward[s] = true;
                    queue.push_back(s);
                }
            }
        }
        for &s in &sinks {
            backward[s] = true;
            queue.push_back(s);
        }
        while let Some(n) = queue.pop_front() {
            let pred: Vec<usize> = if n < np {
                place_pre[n].iter().map(|&t| np + t).collect()
            } else {
                self.preset[n - np].clone()
            };
            for s in pred {
                if !backward[s] {
                    backward[s] = true;
                    queue.push_back(s);
                }
            }
        }
        for n in 0..np + nt {
            if !(forward[n] && backward[n]) {
                let node = if n < np {
                    Node::Place(self.places[n].clone())
                } else {
                    Node::Transition(self.transitions[n - np].id.clone())
                };
                violations.push(WorkflowViolation::OffPath(node));
            }
        }
        WorkflowReport {
            source: (sources.len() == 1).then(|| self.places[sources[0]].clone()),
            sink: (sinks.len() == 1).then(|| self.places[sinks[0]].clone()),
            violations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkflowViolation {
    NoSource,
    MultipleSources(Vec<String>),
    NoSink,
    MultipleSinks(Vec<String>),
    /// Node not on any directed path from the source to the sink.
    OffPath(Node),
}

impl fmt::Display for WorkflowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkflowViolation::NoSource => write!(f, "no place with empty preset"),
            WorkflowViolation::MultipleSources(ids) => {
                write!(f, "multiple source places: {}", ids.join(", "))
            }
            WorkflowViolation::NoSink => write!(f, "no place with empty postset"),
            WorkflowViolation::MultipleSinks(ids) => {
                write!(f, "multiple sink places: {}", ids.join(", "))
            }
            WorkflowViolation::OffPath(node) => match node {
                Node::Place(id) => write!(f, "place `{id}` is not on a source-to-sink path"),
                Node::Transition(id) => {
                    write!(f, "transition `{id}` is not on a source-to-sink path")
                }
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkflowReport {
    pub source: Option<String>,
    pub sink: Option<String>,
    pub violations: Vec<WorkflowViolation>,
}

impl WorkflowReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Ids of every node named by some violation.
    pub fn offending_nodes(&self) -> Vec<String> {
        let mut ids = Vec::new();
        for v in &self.violations {
            match v {
                WorkflowViolation::MultipleSources(p) | WorkflowViolation::MultipleSinks(p) => {
                    ids.extend(p.iter().cloned())
                }
                WorkflowViolation::OffPath(n) => ids.push(n.id().to_string()),
                _ => {}
            }
        }
        ids
    }
}

impl fmt::Display for WorkflowReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid workflow net");
        }
        let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", lines.join("; "))
    }
}

/// Collects nodes and arcs in any order; [`NetBuilder::build`] sorts and checks them.
#[derive(Debug, Default, Clone)]
pub struct NetBuilder {
    places: Vec<String>,
    transitions: Vec<Transition>,
    arcs: Vec<(String, String, u32)>,
    initial: BTreeMap<String, u32>,
    final_place: Option<String>,
    relax_duplicate_labels: bool,
}

impl NetBuilder {
    pub fn place(mut self, id: impl Into<String>) -> Self {
        self.add_place(id);
        self
    }

    pub fn transition(mut self, id: impl Into<String>, label: Option<&str>) -> Self {
        self.add_transition(id, label.map(str::to_string));
        self
    }

    pub fn arc(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.add_arc(from, to, 1);
        self
    }

    pub fn initial(mut self, place: impl Into<String>, tokens: u32) -> Self {
        self.set_initial(place, tokens);
        self
    }

    pub fn final_place(mut self, place: impl Into<String>) -> Self {
        self.final_place = Some(place.into());
        self
    }

    /// Accept repeated visible labels by suffixing later occurrences (`a#2`, `a#3`, ...).
    pub fn relax_duplicate_labels(mut self, relax: bool) -> Self {
        self.relax_duplicate_labels = relax;
        self
    }

    pub fn add_place(&mut self, id: impl Into<String>) {
        self.places.push(id.into());
    }

    pub fn add_transition(&mut self, id: impl Into<String>, label: Option<String>) {
        self.transitions.push(Transition {
            id: id.into(),
            label,
        });
    }

    pub fn add_arc(&mut self, from: impl Into<String>, to: impl Into<String>, weight: u32) {
        self.arcs.push((from.into(), to.into(), weight));
    }

    pub fn set_initial(&mut self, place: impl Into<String>, tokens: u32) {
        self.initial.insert(place.into(), tokens);
    }

    pub fn set_final_place(&mut self, place: impl Into<String>) {
        self.final_place = Some(place.into());
    }

    pub fn set_relax_duplicate_labels(&mut self, relax: bool) {
        self.relax_duplicate_labels = relax;
    }

    pub fn build(self) -> Result<PetriNet> {
        let mut places = self.places;
        places.sort();
        for w in places.windows(2) {
            if w[0] == w[1] {
                return Err(PetriError::DuplicateNode(w[0].clone()));
            }
        }
        let mut transitions = self.transitions;
        transitions.sort_by(|a, b| a.id.cmp(&b.id));
        for w in transitions.windows(2) {
            if w[0].id == w[1].id {
                return Err(PetriError::DuplicateNode(w[0].id.clone()));
            }
        }
        let place_index: HashMap<String, usize> = places
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let transition_index: HashMap<String, usize> = transitions
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        for t in &transitions {
            if place_index.contains_key(&t.id) {
                return Err(PetriError::DuplicateNode(t.id.clone()));
            }
        }

        // Unique visible labels, optionally relaxed by suffixing.
        let mut owner: HashMap<String, String> = HashMap::new();
        for t in transitions.iter_mut() {
            let Some(label) = t.label.clone() else {
                continue;
            };
            if let Some(first) = owner.get(&label) {
                if !self.relax_duplicate_labels {
                    return Err(PetriError::DuplicateLabel {
                        label,
                        first: first.clone(),
                        second: t.id.clone(),
                    });
                }
                let mut k = 2;
                let renamed = loop {
                    let candidate = format!("{label}#{k}");
                    if !owner.contains_key(&candidate) {
                        break candidate;
                    }
                    k += 1;
                };
                ::log::warn!(
                    "duplicate event label `{label}` on transition `{}` renamed to `{renamed}`",
                    t.id
                );
                owner.insert(renamed.clone(), t.id.clone());
                t.label = Some(renamed);
            } else {
                owner.insert(label, t.id.clone());
            }
        }

        let mut preset: Vec<HashSet<usize>> = vec![HashSet::new(); transitions.len()];
        let mut postset: Vec<HashSet<usize>> = vec![HashSet::new(); transitions.len()];
        for (from, to, weight) in &self.arcs {
            let (fp, ft) = (place_index.get(from), transition_index.get(from));
            let (tp, tt) = (place_index.get(to), transition_index.get(to));
            if fp.is_none() && ft.is_none() {
                return Err(PetriError::UnknownNode(from.clone()));
            }
            if tp.is_none() && tt.is_none() {
                return Err(PetriError::UnknownNode(to.clone()));
            }
            if *weight != 1 {
                return Err(PetriError::ArcWeight(from.clone(), to.clone(), *weight));
            }
            match (fp, tt, ft, tp) {
                (Some(&p), Some(&t), _, _) => {
                    preset[t].insert(p);
                }
                (_, _, Some(&t), Some(&p)) => {
                    postset[t].insert(p);
                }
                _ => return Err(PetriError::LikeToLikeArc(from.clone(), to.clone())),
            }
        }
        let sorted = |s: HashSet<usize>| {
            let mut v: Vec<usize> = s.into_iter().collect();
            v.sort_unstable();
            v
        };
        let preset: Vec<Vec<usize>> = preset.into_iter().map(sorted).collect();
        let postset: Vec<Vec<usize>> = postset.into_iter().map(sorted).collect();

        let mut alphabet: Vec<String> =
            transitions.iter().filter_map(|t| t.label.clone()).collect();
        alphabet.sort();
        let event_transition: Vec<TransitionIdx> = alphabet
            .iter()
            .map(|a| TransitionIdx(transition_index[&owner[a]]))
            .collect();
        let transition_event: Vec<Option<EventIdx>> = transitions
            .iter()
            .map(|t| {
                t.label
                    .as_ref()
                    .map(|l| EventIdx(alphabet.binary_search(l).expect("label in alphabet")))
            })
            .collect();

        let mut initial = Marking::empty(places.len());
        for (p, &n) in &self.initial {
            let idx = *place_index
                .get(p)
                .ok_or_else(|| PetriError::UnknownNode(p.clone()))?;
            initial.0[idx] = n;
        }

        let final_marking = match &self.final_place {
            Some(p) => {
                let idx = *place_index
                    .get(p)
                    .ok_or_else(|| PetriError::UnknownNode(p.clone()))?;
                let mut m = Marking::empty(places.len());
                m.0[idx] = 1;
                Some(m)
            }
            None => {
                let mut has_out = vec![false; places.len()];
                for pre in &preset {
                    for &p in pre {
                        has_out[p] = true;
                    }
                }
                let sinks: Vec<usize> = (0..places.len()).filter(|&p| !has_out[p]).collect();
                (sinks.len() == 1).then(|| {
                    let mut m = Marking::empty(places.len());
                    m.0[sinks[0]] = 1;
                    m
                })
            }
        };

        Ok(PetriNet {
            places,
            transitions,
            alphabet,
            preset,
            postset,
            transition_event,
            event_transition,
            place_index,
            transition_index,
            initial_marking: initial,
            final_marking,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sequence2() -> PetriNet {
        PetriNet::builder()
            .place("p1")
            .place("p2")
            .transition("t1", Some("a"))
            .arc("p1", "t1")
            .arc("t1", "p2")
            .initial("p1", 1)
            .build()
            .unwrap()
    }

    fn t(net: &PetriNet, id: &str) -> TransitionIdx {
        net.transition_idx(id).unwrap()
    }

    #[test]
    fn enabledness_follows_preset_tokens() {
        let net = sequence2();
        let m = Marking::new(vec![1, 0]);
        assert_eq!(net.enabled_transitions(&m).unwrap(), vec![t(&net, "t1")]);
        let m = Marking::new(vec![0, 1]);
        assert!(net.enabled_transitions(&m).unwrap().is_empty());
    }

    #[test]
    fn and_join_needs_every_token() {
        let net = PetriNet::builder()
            .place("p1")
            .place("p2")
            .place("p3")
            .transition("t", Some("j"))
            .arc("p1", "t")
            .arc("p2", "t")
            .arc("t", "p3")
            .build()
            .unwrap();
        let m = Marking::new(vec![1, 0, 0]);
        assert!(net.enabled_transitions(&m).unwrap().is_empty());
        let (next, missing) = net.force_fire(&m, t(&net, "t")).unwrap();
        assert_eq!(missing, 1);
        assert_eq!(next.tokens(), &[0, 0, 1]);
    }

    #[test]
    fn firing_moves_tokens() {
        let net = sequence2();
        let m = Marking::new(vec![1, 0]);
        let next = net.fire(&m, t(&net, "t1")).unwrap();
        assert_eq!(next.tokens(), &[0, 1]);
        assert_eq!(m.tokens(), &[1, 0]);
        assert!(matches!(
            net.fire(&next, t(&net, "t1")),
            Err(PetriError::NotEnabled(_))
        ));
    }

    #[test]
    fn and_split_fills_every_output() {
        let net = PetriNet::builder()
            .place("p1")
            .place("p2")
            .place("p3")
            .transition("t", None)
            .arc("p1", "t")
            .arc("t", "p2")
            .arc("t", "p3")
            .build()
            .unwrap();
        let next = net
            .fire(&Marking::new(vec![1, 0, 0]), t(&net, "t"))
            .unwrap();
        assert_eq!(next.tokens(), &[0, 1, 1]);
    }

    #[test]
    fn self_loop_cancels() {
        let net = PetriNet::builder()
            .place("p")
            .transition("t", Some("a"))
            .arc("p", "t")
            .arc("t", "p")
            .build()
            .unwrap();
        let next = net.fire(&Marking::new(vec![1]), t(&net, "t")).unwrap();
        assert_eq!(next.tokens(), &[1]);
    }

    #[test]
    fn force_fire_on_empty_sequence() {
        let net = sequence2();
        let (next, missing) = net
            .force_fire(&Marking::new(vec![0, 0]), t(&net, "t1"))
            .unwrap();
        assert_eq!(next.tokens(), &[0, 1]);
        assert_eq!(missing, 1);
        let (next, missing) = net
            .force_fire(&Marking::new(vec![1, 0]), t(&net, "t1"))
            .unwrap();
        assert_eq!(next.tokens(), &[0, 1]);
        assert_eq!(missing, 0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = sequence2();
        assert!(matches!(
            net.enabled_transitions(&Marking::new(vec![1])),
            Err(PetriError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn like_to_like_arcs_rejected() {
        let err = PetriNet::builder()
            .place("p1")
            .place("p2")
            .arc("p1", "p2")
            .build()
            .unwrap_err();
        assert!(matches!(err, PetriError::LikeToLikeArc(_, _)));
    }

    #[test]
    fn weighted_arcs_rejected() {
        let mut b = PetriNet::builder().place("p").transition("t", Some("a"));
        b.add_arc("p", "t", 2);
        assert!(matches!(b.build(), Err(PetriError::ArcWeight(_, _, 2))));
    }

    #[test]
    fn duplicate_labels_rejected_or_suffixed() {
        let b = PetriNet::builder()
            .place("p")
            .transition("t1", Some("a"))
            .transition("t2", Some("a"))
            .arc("p", "t1")
            .arc("p", "t2");
        assert!(matches!(
            b.clone().build(),
            Err(PetriError::DuplicateLabel { .. })
        ));
        let net = b.relax_duplicate_labels(true).build().unwrap();
        assert_eq!(net.alphabet(), &["a".to_string(), "a#2".to_string()]);
    }

    #[test]
    fn ordering_is_lexicographic() {
        let net = PetriNet::builder()
            .place("z")
            .place("a")
            .transition("t2", Some("y"))
            .transition("t1", Some("x"))
            .arc("a", "t1")
            .arc("t1", "z")
            .arc("z", "t2")
            .arc("t2", "a")
            .build()
            .unwrap();
        assert_eq!(net.places(), &["a".to_string(), "z".to_string()]);
        assert_eq!(net.transitions()[0].id, "t1");
        assert_eq!(net.event_idx("y"), Some(EventIdx(1)));
        assert_eq!(net.transition_of_event(EventIdx(1)), TransitionIdx(1));
    }

    #[test]
    fn workflow_validation() {
        let ok = PetriNet::builder()
            .place("src")
            .place("sink")
            .transition("t", Some("a"))
            .arc("src", "t")
            .arc("t", "sink")
            .initial("src", 1)
            .build()
            .unwrap();
        let report = ok.validate_workflow_net();
        assert!(report.is_valid(), "{report}");
        assert_eq!(report.source.as_deref(), Some("src"));
        assert_eq!(ok.final_marking().unwrap().tokens(), &[1, 0]);

        let isolated = PetriNet::builder()
            .place("src")
            .place("sink")
            .place("lonely")
            .transition("t", Some("a"))
            .arc("src", "t")
            .arc("t", "sink")
            .build()
            .unwrap();
        let report = isolated.validate_workflow_net();
        assert!(!report.is_valid());
        assert!(report.offending_nodes().contains(&"lonely".to_string()));

        let two_sources = PetriNet::builder()
            .place("s1")
            .place("s2")
            .place("sink")
            .transition("t", Some("a"))
            .arc("s1", "t")
            .arc("s2", "t")
            .arc("t", "sink")
            .build()
            .unwrap();
        let report = two_sources.validate_workflow_net();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, WorkflowViolation::MultipleSources(ids) if ids.len() == 2)));
    }
}
