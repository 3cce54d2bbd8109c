//! Compact line-oriented net format, mostly for tests and fixtures.
//!
//! ```text
//! # comment
//! place p1 1        # optional initial token count
//! place p2
//! transition t1 a   # visible, labeled `a`
//! transition t2 ~   # hidden
//! arc p1 t1
//! arc t1 p2
//! final p2          # optional; defaults to the unique sink place
//! ```

use std::fmt::Write as _;

use super::{NetBuilder, PetriError, PetriNet, Result, TransitionIdx};

pub fn parse_text_net(source: &str) -> Result<PetriNet> {
    let mut builder = NetBuilder::default();
    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = |message: &str| PetriError::Parse {
            line: line_no,
            message: message.to_string(),
        };
        match keyword {
            "place" => match args.as_slice() {
                [id] => builder.add_place(*id),
                [id, tokens] => {
                    builder.add_place(*id);
                    let n: u32 = tokens
                        .parse()
                        .map_err(|_| bad("token count must be an integer"))?;
                    if n > 0 {
                        builder.set_initial(*id, n);
                    }
                }
                _ => return Err(bad("expected `place <id> [tokens]`")),
            },
            "transition" => match args.as_slice() {
                [id, "~"] => builder.add_transition(*id, None),
                [id, label @ ..] if !label.is_empty() => {
                    builder.add_transition(*id, Some(label.join(" ")))
                }
                _ => return Err(bad("expected `transition <id> <label|~>`")),
            },
            "arc" => match args.as_slice() {
                [from, to] => builder.add_arc(*from, *to, 1),
                [from, to, w] => {
                    let w: u32 = w
                        .parse()
                        .map_err(|_| bad("arc weight must be an integer"))?;
                    builder.add_arc(*from, *to, w);
                }
                _ => return Err(bad("expected `arc <from> <to>`")),
            },
            "final" => match args.as_slice() {
                [p] => builder.set_final_place(*p),
                _ => return Err(bad("expected `final <place>`")),
            },
            other => return Err(bad(&format!("unknown keyword `{other}`"))),
        }
    }
    builder.build()
}

pub fn write_text_net(net: &PetriNet) -> String {
    let mut out = String::new();
    for (i, p) in net.places().iter().enumerate() {
        match net.initial_marking().tokens()[i] {
            0 => writeln!(out, "place {p}"),
            n => writeln!(out, "place {p} {n}"),
        }
        .expect("write to string");
    }
    for t in net.transitions() {
        let _ = writeln!(
            out,
            "transition {} {}",
            t.id,
            t.label.as_deref().unwrap_or("~")
        );
    }
    for (ti, t) in net.transitions().iter().enumerate() {
        for &p in net.preset(TransitionIdx(ti)) {
            let _ = writeln!(out, "arc {} {}", net.places()[p], t.id);
        }
        for &p in net.postset(TransitionIdx(ti)) {
            let _ = writeln!(out, "arc {} {}", t.id, net.places()[p]);
        }
    }
    if let Some(fm) = net.final_marking() {
        if let Some(p) = fm.tokens().iter().position(|&n| n == 1) {
            let _ = writeln!(out, "final {}", net.places()[p]);
        }
    }
    out
}
