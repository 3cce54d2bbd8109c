//! Event logs: XES and CSV ingestion, canonical CSV output and trace-level splits.

mod csv_io;
mod xes;

pub use csv_io::{parse_csv, write_canonical_csv, CsvColumns, TimeFormat};
pub use xes::{parse_xes, parse_xes_with, write_xes, XesOptions, XesStats};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("xml: {0}")]
    Xml(String),
    #[error("trace `{case}`: event {position} has no `{attribute}` attribute")]
    MissingAttribute {
        case: String,
        position: usize,
        attribute: &'static str,
    },
    #[error("trace `{case}`: unparseable timestamp `{value}`")]
    BadTimestamp { case: String, value: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row}: unparseable timestamp `{value}`")]
    BadCsvTimestamp { row: usize, value: String },
    #[error("row {row}: empty {field}")]
    EmptyField { row: usize, field: &'static str },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot split {traces} traces into 3 non-empty partitions")]
    TooFewTraces { traces: usize },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LogError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub label: String,
    /// UTC seconds since the Unix epoch.
    pub timestamp: f64,
}

impl Event {
    pub fn new(label: impl Into<String>, timestamp: f64) -> Self {
        Event {
            label: label.into(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    /// Builds a trace, stably sorting events by timestamp.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>) -> Self {
        events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Trace {
            case_id: case_id.into(),
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    alphabet: Vec<String>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Self {
        let alphabet: BTreeSet<String> = traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.label.clone()))
            .collect();
        EventLog {
            traces,
            alphabet: alphabet.into_iter().collect(),
        }
    }

    /// Sorted set of observed labels.
    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn mean_duration(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.traces.iter().map(Trace::duration).sum::<f64>() / self.traces.len() as f64
    }
}

/// Parses RFC 3339 timestamps; values without an offset are taken as UTC.
pub fn parse_timestamp(value: &str) -> Option<f64> {
    let value = value.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(value) {
        return Some(dt.timestamp_micros() as f64 / 1e6);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S",
    ] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(value, fmt) {
            return Some(naive.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    None
}

/// RFC 3339 in UTC with millisecond precision.
pub fn format_timestamp(seconds: f64) -> String {
    let millis = (seconds * 1000.0).round() as i64;
    match chrono::DateTime::from_timestamp_millis(millis) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
        None => format!("{seconds}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogSplit {
    pub train: EventLog,
    pub validation: EventLog,
    pub test: EventLog,
}

pub const PAPER_SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);

/// Seeded trace-level partition. Validation and test sizes are floored, the
/// remainder goes to training.
pub fn split_log(log: &EventLog, ratios: (f64, f64, f64), seed: u64) -> Result<LogSplit> {
    let (a, b, c) = ratios;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(LogError::BadRatios(ratios));
    }
    let n = log.len();
    if n < 3 {
        return Err(LogError::TooFewTraces { traces: n });
    }
    let n_val = ((n as f64 * b) + 1e-9).floor().max(1.0) as usize;
    let n_test = ((n as f64 * c) + 1e-9).floor().max(1.0) as usize;
    if n_val + n_test >= n {
        return Err(LogError::TooFewTraces { traces: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = n - n_val - n_test;
    let pick = |slice: &[usize]| {
        let mut idx = slice.to_vec();
        idx.sort_unstable();
        EventLog::new(idx.into_iter().map(|i| log.traces[i].clone()).collect())
    };
    Ok(LogSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_of(n: usize) -> EventLog {
        EventLog::new(
            (0..n)
                .map(|i| Trace::new(format!("c{i}"), vec![Event::new("a", i as f64)]))
                .collect(),
        )
    }

    fn ids(log: &EventLog) -> Vec<String> {
        log.traces.iter().map(|t| t.case_id.clone()).collect()
    }

    #[test]
    fn split_sizes_follow_ratio() {
        let s = split_log(&log_of(10), PAPER_SPLIT, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));
        let s = split_log(&log_of(5), PAPER_SPLIT, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (3, 1, 1));
        let s = split_log(&log_of(2001), PAPER_SPLIT, 7).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (1201, 400, 400)
        );
    }

    #[test]
    fn split_is_seeded() {
        let log = log_of(50);
        let a = split_log(&log, PAPER_SPLIT, 3).unwrap();
        let b = split_log(&log, PAPER_SPLIT, 3).unwrap();
        assert_eq!(a, b);
        let c = split_log(&log, PAPER_SPLIT, 4).unwrap();
        assert_ne!(ids(&a.test), ids(&c.test));
    }

    #[test]
    fn split_partitions_the_log() {
        let log = log_of(37);
        let s = split_log(&log, PAPER_SPLIT, 11).unwrap();
        let mut all: Vec<String> = ids(&s.train)
            .into_iter()
            .chain(ids(&s.validation))
            .chain(ids(&s.test))
            .collect();
        all.sort();
        let mut expected = ids(&log);
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn split_rejects_tiny_logs() {
        assert!(matches!(
            split_log(&log_of(2), PAPER_SPLIT, 0),
            Err(LogError::TooFewTraces { traces: 2 })
        ));
        assert!(matches!(
            split_log(&log_of(10), (0.5, 0.2, 0.2), 0),
            Err(LogError::BadRatios(_))
        ));
    }

    #[test]
    fn timestamps_normalize_to_utc() {
        let a = parse_timestamp("2011-10-01T00:38:44.546+02:00").unwrap();
        let b = parse_timestamp("2011-09-30T22:38:44.546Z").unwrap();
        assert_eq!(a, b);
        assert_eq!(parse_timestamp("2011-09-30 22:38:44.546"), Some(b));
        assert_eq!(format_timestamp(b), "2011-09-30T22:38:44.546Z");
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn trace_sorts_events() {
        let t = Trace::new("c", vec![Event::new("b", 5.0), Event::new("a", 1.0)]);
        assert_eq!(t.events[0].label, "a");
        assert_eq!(t.duration(), 4.0);
    }
}
