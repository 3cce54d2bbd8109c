//! Imports a PNML model and an XES event log as exported by common process
//! mining tools, checks the workflow-net conditions and summarizes both.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use reachmask::log::{parse_xes_with, XesOptions};
use reachmask::petri::{parse_pnml, PnmlOptions};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(FIXTURES);
    let net = parse_pnml(
        BufReader::new(File::open(dir.join("loan.pnml"))?),
        &PnmlOptions::default(),
    )?;
    println!(
        "net: {} places, {} transitions ({} hidden), alphabet {:?}",
        net.num_places(),
        net.num_transitions(),
        net.hidden_transitions().count(),
        net.alphabet()
    );
    let workflow = net.validate_workflow_net();
    println!(
        "workflow net: {}",
        if workflow.is_valid() { "yes" } else { "no" }
    );

    let file = BufReader::new(File::open(dir.join("loan_applications.xes"))?);
    let (log, stats) = parse_xes_with(file, XesOptions::default())?;
    let events: usize = log.traces.iter().map(|t| t.len()).sum();
    println!(
        "log: {} traces, {} events, {} skipped events, {} empty traces",
        log.traces.len(),
        events,
        stats.skipped_events,
        stats.empty_traces
    );

    let mut frequency: BTreeMap<&str, usize> = BTreeMap::new();
    for event in log.traces.iter().flat_map(|t| &t.events) {
        *frequency.entry(event.label.as_str()).or_default() += 1;
    }
    for (label, count) in &frequency {
        let known = net.alphabet().iter().any(|a| a == label);
        println!(
            "  {count:>4}  {label}{}",
            if known { "" } else { "  (not in model)" }
        );
    }
    Ok(())
}
