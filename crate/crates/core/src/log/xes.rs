//! XES subset reader/writer: `concept:name` and `time:timestamp` on traces and events.

use std::fmt::Write as _;
use std::io::BufRead;

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{format_timestamp, parse_timestamp, Event, EventLog, LogError, Result, Trace};

#[derive(Debug, Clone, Copy, Default)]
pub struct XesOptions {
    /// Skip events lacking a label or timestamp instead of failing.
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct XesStats {
    pub skipped_events: usize,
    pub empty_traces: usize,
}

fn xml_err(e: impl std::fmt::Display) -> LogError {
    LogError::Xml(e.to_string())
}

fn key_value(e: &BytesStart<'_>) -> Result<(Option<String>, Option<String>)> {
    let mut key = None;
    let mut value = None;
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        match a.key.local_name().as_ref() {
            b"key" => key = Some(a.unescape_value().map_err(xml_err)?.into_owned()),
            b"value" => value = Some(a.unescape_value().map_err(xml_err)?.into_owned()),
            _ => {}
        }
    }
    Ok((key, value))
}

#[derive(Default)]
struct PendingEvent {
    label: Option<String>,
    timestamp: Option<String>,
}

pub fn parse_xes<R: BufRead>(source: R) -> Result<EventLog> {
    parse_xes_with(source, XesOptions::default()).map(|(log, _)| log)
}

/// Parses XES. Traces keep document order; events inside a trace are sorted by time.
pub fn parse_xes_with<R: BufRead>(source: R, options: XesOptions) -> Result<(EventLog, XesStats)> {
    let mut reader = Reader::from_reader(source);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut stats = XesStats::default();
    let mut traces = Vec::new();

    // Depth of the element stack relative to the current trace / event.
    let mut depth = 0usize;
    let mut trace_depth: Option<usize> = None;
    let mut event_depth: Option<usize> = None;
    let mut case_id: Option<String> = None;
    let mut events: Vec<(PendingEvent, usize)> = Vec::new();
    let mut event = PendingEvent::default();

    loop {
        let ev = reader.read_event_into(&mut buf).map_err(xml_err)?;
        match ev {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let empty = matches!(ev, XmlEvent::Empty(_));
                let name = e.local_name();
                let name = name.as_ref();
                match name {
                    b"trace" if trace_depth.is_none() => {
                        trace_depth = Some(depth);
                        case_id = None;
                        events.clear();
                        if empty {
                            stats.empty_traces += 1;
                            trace_depth = None;
                        }
                    }
                    b"event" if trace_depth.is_some() && event_depth.is_none() => {
                        event = PendingEvent::default();
                        if empty {
                            events.push((std::mem::take(&mut event), events.len()));
                        } else {
                            event_depth = Some(depth);
                        }
                    }
                    _ => {
                        let (key, value) = key_value(e)?;
                        if let (Some(key), Some(value)) = (key, value) {
                            // only direct attribute children count
                            if event_depth == Some(depth.wrapping_sub(1)) {
                                match key.as_str() {
                                    "concept:name" => event.label = Some(value),
                                    "time:timestamp" => event.timestamp = Some(value),
                                    _ => {}
                                }
                            } else if event_depth.is_none()
                                && trace_depth == Some(depth.wrapping_sub(1))
                                && key == "concept:name"
                            {
                                case_id = Some(value);
                            }
                        }
                    }
                }
                if !empty {
                    depth += 1;
                }
            }
            XmlEvent::End(ref e) => {
                depth = depth.saturating_sub(1);
                let name = e.local_name();
                if name.as_ref() == b"event" && event_depth == Some(depth) {
                    event_depth = None;
                    let position = events.len();
                    events.push((std::mem::take(&mut event), position));
                } else if name.as_ref() == b"trace" && trace_depth == Some(depth) {
                    trace_depth = None;
                    let case = case_id
                        .take()
                        .unwrap_or_else(|| format!("trace_{}", traces.len()));
                    let mut parsed = Vec::with_capacity(events.len());
                    for (pending, position) in events.drain(..) {
                        let label = match pending.label.filter(|l| !l.is_empty()) {
                            Some(l) => l,
                            None if options.lenient => {
                                stats.skipped_events += 1;
                                continue;
                            }
                            None => {
                                return Err(LogError::MissingAttribute {
                                    case,
                                    position,
                                    attribute: "concept:name",
                                })
                            }
                        };
                        let ts = match pending.timestamp {
                            Some(raw) => match parse_timestamp(&raw) {
                                Some(ts) => ts,
                                None if options.lenient => {
                                    stats.skipped_events += 1;
                                    continue;
                                }
                                None => return Err(LogError::BadTimestamp { case, value: raw }),
                            },
                            None if options.lenient => {
                                stats.skipped_events += 1;
                                continue;
                            }
                            None => {
                                return Err(LogError::MissingAttribute {
                                    case,
                                    position,
                                    attribute: "time:timestamp",
                                })
                            }
                        };
                        parsed.push(Event::new(label, ts));
                    }
                    if parsed.is_empty() {
                        stats.empty_traces += 1;
                    } else {
                        traces.push(Trace::new(case, parsed));
                    }
                }
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if stats.skipped_events > 0 || stats.empty_traces > 0 {
        ::log::warn!(
            "xes: skipped {} events and {} empty traces",
            stats.skipped_events,
            stats.empty_traces
        );
    }
    Ok((EventLog::new(traces), stats))
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

pub fn write_xes(log: &EventLog) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<log xes.version=\"1.0\" xes.features=\"nested-attributes\">\n");
    out.push_str("  <extension name=\"Concept\" prefix=\"concept\" uri=\"http://www.xes-standard.org/concept.xesext\"/>\n");
    out.push_str("  <extension name=\"Time\" prefix=\"time\" uri=\"http://www.xes-standard.org/time.xesext\"/>\n");
    for trace in &log.traces {
        out.push_str("  <trace>\n");
        let _ = writeln!(
            out,
            "    <string key=\"concept:name\" value=\"{}\"/>",
            escape(&trace.case_id)
        );
        for e in &trace.events {
            let _ = writeln!(
                out,
                "    <event><string key=\"concept:name\" value=\"{}\"/><date key=\"time:timestamp\" value=\"{}\"/></event>",
                escape(&e.label),
                format_timestamp(e.timestamp)
            );
        }
        out.push_str("  </trace>\n");
    }
    out.push_str("</log>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_TRACE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0">
  <global scope="event"><string key="concept:name" value="__INVALID__"/></global>
  <trace>
    <string key="concept:name" value="173688"/>
    <event>
      <string key="org:resource" value="112"/>
      <date key="time:timestamp" value="2011-10-01T00:38:44.546+02:00"/>
      <string key="concept:name" value="A_PARTLYSUBMITTED"/>
    </event>
    <event>
      <string key="concept:name" value="A_SUBMITTED"/>
      <date key="time:timestamp" value="2011-10-01T00:38:44.038+02:00"/>
      <list key="meta"><string key="concept:name" value="nested"/></list>
    </event>
  </trace>
</log>"#;

    #[test]
    fn parses_single_trace_and_sorts() {
        let log = parse_xes(ONE_TRACE.as_bytes()).unwrap();
        assert_eq!(log.len(), 1);
        let trace = &log.traces[0];
        assert_eq!(trace.case_id, "173688");
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.events[0].label, "A_SUBMITTED");
        assert_eq!(log.alphabet(), &["A_PARTLYSUBMITTED", "A_SUBMITTED"]);
    }

    #[test]
    fn empty_log() {
        let log = parse_xes(r#"<log xes.version="1.0"></log>"#.as_bytes()).unwrap();
        assert!(log.is_empty());
        let log = parse_xes(r#"<log/>"#.as_bytes()).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn missing_timestamp_names_the_case() {
        let doc = ONE_TRACE.replace(
            r#"<date key="time:timestamp" value="2011-10-01T00:38:44.038+02:00"/>"#,
            "",
        );
        match parse_xes(doc.as_bytes()) {
            Err(LogError::MissingAttribute {
                case,
                position,
                attribute,
            }) => {
                assert_eq!(case, "173688");
                assert_eq!(position, 1);
                assert_eq!(attribute, "time:timestamp");
            }
            other => panic!("unexpected {other:?}"),
        }
        let (log, stats) = parse_xes_with(doc.as_bytes(), XesOptions { lenient: true }).unwrap();
        assert_eq!(stats.skipped_events, 1);
        assert_eq!(log.traces[0].len(), 1);
    }

    #[test]
    fn malformed_xml_is_an_error() {
        assert!(parse_xes("<log><trace></log>".as_bytes()).is_err());
    }

    #[test]
    fn writer_output_parses_back() {
        let log = parse_xes(ONE_TRACE.as_bytes()).unwrap();
        let again = parse_xes(write_xes(&log).as_bytes()).unwrap();
        assert_eq!(again, log);
    }
}
