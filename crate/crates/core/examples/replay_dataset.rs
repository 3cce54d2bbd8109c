//! Replays the loan application log on its model, printing the timed state
//! samples of one trace and the dataset statistics of the training split.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use reachmask::log::{parse_xes, split_log};
use reachmask::petri::{parse_pnml, PnmlOptions};
use reachmask::reach::{ReachabilityGraph, ReducedReachabilityGraph};
use reachmask::replay::{build_dataset, estimate_decay_parameters, replay_trace, ReplayOptions};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(FIXTURES);
    let net = parse_pnml(
        BufReader::new(File::open(dir.join("loan.pnml"))?),
        &PnmlOptions::default(),
    )?;
    let log = parse_xes(BufReader::new(File::open(
        dir.join("loan_applications.xes"),
    )?))?;
    let rg = ReachabilityGraph::build(&net, 10_000)?;
    let rgr = ReducedReachabilityGraph::build(&rg, &net);

    let split = split_log(&log, (0.6, 0.2, 0.2), 7)?;
    let options = ReplayOptions {
        predict_end: true,
        ..Default::default()
    };
    let decay = estimate_decay_parameters(&net, &split.train, &options)?;
    for (place, alpha) in net.places().iter().zip(&decay.alpha) {
        println!("alpha[{place}] = {alpha:.0} s");
    }

    let trace = &split.train.traces[0];
    let (samples, report) = replay_trace(&net, &rgr, &decay, trace, &options)?;
    println!(
        "\ncase {} ({} events, {} forced firings)",
        trace.case_id,
        trace.len(),
        report.forced_firings
    );
    let classes = net.alphabet().len();
    for s in &samples {
        let next = s.next_event.class(classes);
        let label = net.alphabet().get(next).map_or("END", String::as_str);
        let counts: Vec<String> = s.token_counts.iter().map(u64::to_string).collect();
        let decays: Vec<String> = s.decay_values.iter().map(|d| format!("{d:.2}")).collect();
        println!(
            "  #{:<2} C=[{}] F=[{}] mask={} next={label}",
            s.position,
            counts.join(" "),
            decays.join(" "),
            s.mask.count()
        );
    }

    let (train, report) = build_dataset(&net, &rgr, &decay, &split.train, &options, None)?;
    println!(
        "\ntrain split: {} samples x {} features, {} classes, {} forced firings, violation rate {:.4}",
        train.features.nrows(),
        train.features.ncols(),
        train.classes.len(),
        report.forced_firings,
        report.mask_violation_rate()
    );
    Ok(())
}
