use std::collections::HashMap;
use std::io::{Read, Write};

use super::{format_timestamp, parse_timestamp, Event, EventLog, LogError, Result, Trace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeFormat {
    /// RFC 3339, or ISO 8601 without offset (read as UTC).
    Rfc3339,
    /// Seconds since the Unix epoch, possibly fractional.
    UnixSeconds,
    /// A chrono `strftime` pattern, read as UTC.
    Pattern(String),
}

impl TimeFormat {
    /// `rfc3339`, `unix`, or anything else as a chrono pattern.
    pub fn parse_flag(flag: &str) -> Self {
        match flag {
            "rfc3339" | "iso8601" => TimeFormat::Rfc3339,
            "unix" | "epoch" => TimeFormat::UnixSeconds,
            other => TimeFormat::Pattern(other.to_string()),
        }
    }

    fn parse(&self, value: &str) -> Option<f64> {
        match self {
            TimeFormat::Rfc3339 => parse_timestamp(value),
            TimeFormat::UnixSeconds => value.trim().parse().ok(),
            TimeFormat::Pattern(p) => chrono::NaiveDateTime::parse_from_str(value.trim(), p)
                .ok()
                .map(|n| n.and_utc().timestamp_micros() as f64 / 1e6),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvColumns {
    pub case: String,
    pub label: String,
    pub time: String,
    pub time_format: TimeFormat,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            case: "case_id".into(),
            label: "label".into(),
            time: "timestamp".into(),
            time_format: TimeFormat::Rfc3339,
        }
    }
}

/// Groups rows by case id (first-appearance order) and time-sorts each case.
pub fn parse_csv<R: Read>(source: R, columns: &CsvColumns) -> Result<EventLog> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| LogError::UnknownColumn(name.to_string()))
    };
    let (ci, li, ti) = (
        find(&columns.case)?,
        find(&columns.label)?,
        find(&columns.time)?,
    );

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<Event>> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = i + 2;
        let case = record.get(ci).unwrap_or("").trim();
        let label = record.get(li).unwrap_or("").trim();
        let time = record.get(ti).unwrap_or("");
        if case.is_empty() {
            return Err(LogError::EmptyField {
                row,
                field: "case id",
            });
        }
        if label.is_empty() {
            return Err(LogError::EmptyField {
                row,
                field: "label",
            });
        }
        let ts = columns
            .time_format
            .parse(time)
            .ok_or_else(|| LogError::BadCsvTimestamp {
                row,
                value: time.to_string(),
            })?;
        let entry = grouped.entry(case.to_string()).or_insert_with(|| {
            order.push(case.to_string());
            Vec::new()
        });
        entry.push(Event::new(label, ts));
    }
    let traces = order
        .into_iter()
        .map(|case| {
            let events = grouped.remove(&case).unwrap_or_default();
            Trace::new(case, events)
        })
        .collect();
    Ok(EventLog::new(traces))
}

/// Canonical form: `case_id,label,timestamp` with UTC millisecond timestamps.
pub fn write_canonical_csv<W: Write>(log: &EventLog, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["case_id", "label", "timestamp"])?;
    for trace in &log.traces {
        for e in &trace.events {
            writer.write_record([
                trace.case_id.as_str(),
                e.label.as_str(),
                format_timestamp(e.timestamp).as_str(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols() -> CsvColumns {
        CsvColumns {
            case: "Case ID".into(),
            label: "Activity".into(),
            time: "Complete Timestamp".into(),
            time_format: TimeFormat::parse_flag("%Y/%m/%d %H:%M:%S"),
        }
    }

    #[test]
    fn single_case() {
        let src = "Case ID,Activity,Complete Timestamp\n1,a,2012/01/01 10:00:00\n1,b,2012/01/01 10:00:05\n1,c,2012/01/01 10:01:00\n";
        let log = parse_csv(src.as_bytes(), &cols()).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.traces[0].len(), 3);
    }

    #[test]
    fn interleaved_and_unsorted() {
        let src = "Case ID,Activity,Complete Timestamp\n\
                   1,a,2012/01/01 10:00:00\n2,x,2012/01/01 09:00:00\n1,c,2012/01/01 12:00:00\n\
                   2,y,2012/01/01 09:30:00\n1,b,2012/01/01 11:00:00\n";
        let log = parse_csv(src.as_bytes(), &cols()).unwrap();
        assert_eq!(log.len(), 2);
        let labels: Vec<&str> = log.traces[0]
            .events
            .iter()
            .map(|e| e.label.as_str())
            .collect();
        assert_eq!(labels, vec!["a", "b", "c"]);
        assert_eq!(log.traces[1].case_id, "2");
        assert_eq!(log.traces[1].len(), 2);
    }

    #[test]
    fn errors_name_columns_and_rows() {
        let src = "Case ID,Activity,Complete Timestamp\n1,a,2012/01/01 10:00:00\n1,b,not a time\n";
        assert!(matches!(
            parse_csv(src.as_bytes(), &cols()),
            Err(LogError::BadCsvTimestamp { row: 3, .. })
        ));
        let bad = CsvColumns {
            label: "Event".into(),
            ..cols()
        };
        assert!(matches!(
            parse_csv(src.as_bytes(), &bad),
            Err(LogError::UnknownColumn(c)) if c == "Event"
        ));
    }

    #[test]
    fn unix_seconds() {
        let src = "case_id,label,timestamp\nc,a,10.5\nc,b,3\n";
        let columns = CsvColumns {
            time_format: TimeFormat::UnixSeconds,
            ..Default::default()
        };
        let log = parse_csv(src.as_bytes(), &columns).unwrap();
        assert_eq!(log.traces[0].events[0].timestamp, 3.0);
    }
}
