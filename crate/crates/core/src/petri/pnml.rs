//! PNML subset: places, transitions, arcs and initial markings.

use std::fmt::Write as _;
use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use regex::Regex;

use super::{NetBuilder, PetriError, PetriNet, Result};

pub const DEFAULT_HIDDEN_PATTERN: &str = "^(tau|skip|invisible).*";

#[derive(Debug, Clone)]
pub struct PnmlOptions {
    /// Transition names matching this pattern are hidden, as are unnamed ones.
    pub hidden_pattern: Regex,
    pub relax_duplicate_labels: bool,
}

impl Default for PnmlOptions {
    fn default() -> Self {
        PnmlOptions {
            hidden_pattern: Regex::new(DEFAULT_HIDDEN_PATTERN).expect("valid default pattern"),
            relax_duplicate_labels: false,
        }
    }
}

#[derive(Default)]
struct PendingTransition {
    id: String,
    name: String,
    invisible: bool,
}

#[derive(Default)]
struct PendingArc {
    source: String,
    target: String,
    weight: Option<String>,
}

fn xml_err(e: impl std::fmt::Display) -> PetriError {
    PetriError::Pnml(e.to_string())
}

fn attr(e: &BytesStart<'_>, key: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        if a.key.local_name().as_ref() == key.as_bytes() {
            return Ok(Some(a.unescape_value().map_err(xml_err)?.into_owned()));
        }
    }
    Ok(None)
}

fn required_attr(e: &BytesStart<'_>, key: &str) -> Result<String> {
    attr(e, key)?.ok_or_else(|| {
        PetriError::Pnml(format!(
            "<{}> without `{key}` attribute",
            String::from_utf8_lossy(e.local_name().as_ref())
        ))
    })
}

/// Parses a PNML document into a net. The final marking is the single sink place
/// holding one token.
pub fn parse_pnml<R: BufRead>(source: R, options: &PnmlOptions) -> Result<PetriNet> {
    let mut reader = Reader::from_reader(source);
    reader.config_mut().trim_text(true);
    let mut builder = NetBuilder::default();
    builder.set_relax_duplicate_labels(options.relax_duplicate_labels);

    let mut stack: Vec<String> = Vec::new();
    let mut place: Option<String> = None;
    let mut transition: Option<PendingTransition> = None;
    let mut arc: Option<PendingArc> = None;
    let mut buf = Vec::new();

    loop {
        let event = reader.read_event_into(&mut buf).map_err(xml_err)?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                // ProM final-marking blocks reference places by `idref`.
                let in_markings = stack.iter().any(|s| s == "finalmarkings");
                match name.as_str() {
                    _ if in_markings => {}
                    "place" => {
                        let id = required_attr(e, "id")?;
                        builder.add_place(id.clone());
                        if !empty {
                            place = Some(id);
                        }
                    }
                    "transition" => {
                        let pending = PendingTransition {
                            id: required_attr(e, "id")?,
                            ..Default::default()
                        };
                        if empty {
                            builder.add_transition(pending.id, None);
                        } else {
                            transition = Some(pending);
                        }
                    }
                    "arc" => {
                        let pending = PendingArc {
                            source: required_attr(e, "source")?,
                            target: required_attr(e, "target")?,
                            weight: None,
                        };
                        if empty {
                            builder.add_arc(pending.source, pending.target, 1);
                        } else {
                            arc = Some(pending);
                        }
                    }
                    "toolspecific" => {
                        if let (Some(t), Some(activity)) =
                            (transition.as_mut(), attr(e, "activity")?)
                        {
                            if activity == "$invisible$" {
                                t.invisible = true;
                            }
                        }
                    }
                    _ => {}
                }
                if !empty {
                    stack.push(name);
                }
            }
            Event::Text(ref t) => {
                let text = t.unescape().map_err(xml_err)?.into_owned();
                let n = stack.len();
                if n >= 3 && stack[n - 1] == "text" {
                    let (parent, owner) = (stack[n - 2].as_str(), stack[n - 3].as_str());
                    match (owner, parent) {
                        ("transition", "name") => {
                            if let Some(tr) = transition.as_mut() {
                                tr.name.push_str(&text);
                            }
                        }
                        ("place", "initialMarking") => {
                            if let Some(p) = &place {
                                let tokens: u32 = text.trim().parse().map_err(|_| {
                                    PetriError::Pnml(format!(
                                        "place `{p}` has non-integer initial marking `{text}`"
                                    ))
                                })?;
                                if tokens > 0 {
                                    builder.set_initial(p.clone(), tokens);
                                }
                            }
                        }
                        ("arc", "inscription") => {
                            if let Some(a) = arc.as_mut() {
                                a.weight = Some(text);
                            }
                        }
                        _ => {}
                    }
                }
            }
            Event::End(_) => {
                let Some(name) = stack.pop() else {
                    return Err(PetriError::Pnml("unbalanced closing tag".into()));
                };
                match name.as_str() {
                    "place" => place = None,
                    "transition" => {
                        if let Some(t) = transition.take() {
                            let label = t.name.trim().to_string();
                            let hidden = t.invisible
                                || label.is_empty()
                                || options.hidden_pattern.is_match(&label);
                            builder.add_transition(t.id, (!hidden).then_some(label));
                        }
                    }
                    "arc" => {
                        if let Some(a) = arc.take() {
                            let weight = match a.weight {
                                None => 1,
                                Some(w) => w.trim().parse().map_err(|_| {
                                    PetriError::Pnml(format!(
                                        "arc `{}` -> `{}` has non-integer inscription `{w}`",
                                        a.source, a.target
                                    ))
                                })?,
                            };
                            builder.add_arc(a.source, a.target, weight);
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    builder.build()
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Serializes a net as PNML. Hidden transitions carry an empty name and the
/// ProM `$invisible$` marker.
pub fn write_pnml(net: &PetriNet) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<pnml>\n  <net id=\"net\" type=\"http://www.pnml.org/version-2009/grammar/pnmlcoremodel\">\n    <page id=\"page\">\n");
    for (i, p) in net.places().iter().enumerate() {
        let tokens = net.initial_marking().tokens()[i];
        let _ = write!(out, "      <place id=\"{}\">", escape(p));
        let _ = write!(out, "<name><text>{}</text></name>", escape(p));
        if tokens > 0 {
            let _ = write!(
                out,
                "<initialMarking><text>{tokens}</text></initialMarking>"
            );
        }
        out.push_str("</place>\n");
    }
    for t in net.transitions() {
        let _ = write!(out, "      <transition id=\"{}\">", escape(&t.id));
        match &t.label {
            Some(label) => {
                let _ = write!(out, "<name><text>{}</text></name>", escape(label));
            }
            None => out.push_str(
                "<name><text></text></name><toolspecific tool=\"ProM\" version=\"6.4\" activity=\"$invisible$\"/>",
            ),
        }
        out.push_str("</transition>\n");
    }
    let mut arc_id = 0;
    for (ti, t) in net.transitions().iter().enumerate() {
        let idx = super::TransitionIdx(ti);
        for &p in net.preset(idx) {
            let _ = writeln!(
                out,
                "      <arc id=\"a{arc_id}\" source=\"{}\" target=\"{}\"/>",
                escape(&net.places()[p]),
                escape(&t.id)
            );
            arc_id += 1;
        }
        for &p in net.postset(idx) {
            let _ = writeln!(
                out,
                "      <arc id=\"a{arc_id}\" source=\"{}\" target=\"{}\"/>",
                escape(&t.id),
                escape(&net.places()[p])
            );
            arc_id += 1;
        }
    }
    out.push_str("    </page>\n  </net>\n</pnml>\n");
    out
}
