//! Shows how the precision simulation narrows model masks around the true next
//! event, from the masks of a generated dataset.

use reachmask::benchgen::{generate_log, generate_net, BlockWeights, GenSpec};
use reachmask::eval::{simulate_precision, PrecisionMode};
use reachmask::reach::{ReachabilityGraph, ReducedReachabilityGraph};
use reachmask::replay::{build_dataset, DecayParameters, ReplayOptions};

fn histogram(masks: &[reachmask::reach::MaskVector]) -> Vec<usize> {
    let mut h = vec![0; masks.iter().map(|m| m.count()).max().unwrap_or(0) + 1];
    for m in masks {
        h[m.count()] += 1;
    }
    h
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec {
        seed: 21,
        depth: 3,
        max_branches: 4,
        nesting_probability: 0.7,
        weights: BlockWeights {
            and: 3.0,
            ..BlockWeights::default()
        },
        trace_count: 300,
        ..GenSpec::default()
    };
    let net = generate_net(&spec)?;
    let log = generate_log(&net, &spec)?;
    let rg = ReachabilityGraph::build(&net, 100_000)?;
    let rgr = ReducedReachabilityGraph::build(&rg, &net);
    let decay = DecayParameters::uniform(net.num_places(), 3_600.0);
    let (ds, _) = build_dataset(&net, &rgr, &decay, &log, &ReplayOptions::default(), None)?;

    println!(
        "{} samples over {} events",
        ds.labels.len(),
        ds.classes.len()
    );
    println!("{:<6} mask sizes (count per size 0, 1, 2, ...)", "mode");
    println!("{:<6} {:?}", "model", histogram(&ds.masks));
    for mode in [PrecisionMode::Half, PrecisionMode::Pair] {
        let (masks, stats) = simulate_precision(&ds.masks, &ds.labels, mode, 5);
        assert!(masks.iter().zip(&ds.labels).all(|(m, &l)| m.get(l)));
        println!(
            "{:<6} {:?} ({} shrunk)",
            mode.as_str(),
            histogram(&masks),
            stats.shrunk
        );
    }
    Ok(())
}
