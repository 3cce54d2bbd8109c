//! Next-event prediction for business processes with reachability masks.
//!
//! A labeled Petri net is explored into a reduced reachability graph whose
//! nodes carry the set of events the net permits next. Replaying an event log
//! on the net yields timed state samples (marking, token counts, per-place
//! time decay) paired with those masks; a feed-forward network consumes both
//! and masks its softmax output to the permitted events.
//!
//! Modules follow the pipeline: [`petri`] and [`log`] parse inputs, [`reach`]
//! builds the graphs, [`replay`] featurizes traces, [`net`] trains the
//! classifier, [`eval`] scores and compares variants, [`benchgen`] produces
//! synthetic nets and logs, and [`cli`] chains it all behind one binary.

pub mod benchgen;
pub mod cli;
pub mod eval;
pub mod log;
pub mod net;
pub mod petri;
pub mod reach;
pub mod replay;
