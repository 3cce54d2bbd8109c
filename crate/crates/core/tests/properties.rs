mod common;

use std::collections::{BTreeSet, HashSet};

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reachmask::benchgen::{generate_log, generate_net, BlockWeights, GenSpec};
use reachmask::eval::{auroc_ovr, mauroc, simulate_precision, ClassScore, PrecisionMode};
use reachmask::log::{
    parse_csv, split_log, write_canonical_csv, CsvColumns, EventLog, PAPER_SPLIT,
};
use reachmask::net::{argmax, Activation, MaskMode, MaskedMlp, MlpConfig};
use reachmask::petri::{Marking, PetriNet, TransitionIdx};
use reachmask::reach::{
    FinalEdges, MaskVector, NodeRule, ReachabilityGraph, ReduceOptions, ReducedReachabilityGraph,
    DEFAULT_NODE_CAP,
};
use reachmask::replay::{estimate_decay_parameters, replay_trace, ReplayOptions};

use common::{observed_graph, oracle_reduced_graph, pairwise_auroc, small_hidden_nets};

fn spec(seed: u64, hidden: f64, weights: BlockWeights) -> GenSpec {
    GenSpec {
        seed,
        depth: 2 + (seed % 2) as usize,
        weights,
        nesting_probability: 0.6,
        hidden_probability: hidden,
        trace_count: 40,
        ..GenSpec::default()
    }
}

fn net_for(seed: u64) -> PetriNet {
    generate_net(&spec(seed, 0.4, BlockWeights::default())).unwrap()
}

fn graphs(net: &PetriNet) -> (ReachabilityGraph, ReducedReachabilityGraph) {
    let rg = ReachabilityGraph::build(net, DEFAULT_NODE_CAP).unwrap();
    let rgr = ReducedReachabilityGraph::build(&rg, net);
    (rg, rgr)
}

fn random_marking(net: &PetriNet, rng: &mut ChaCha8Rng) -> Marking {
    Marking::new(
        (0..net.num_places())
            .map(|_| rng.random_range(0..3))
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn firing_changes_token_total_by_arc_difference(seed in 0u64..5000, mseed: u64) {
        let net = net_for(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(mseed);
        let m = random_marking(&net, &mut rng);
        for t in net.enabled_transitions(&m).unwrap() {
            let next = net.fire(&m, t).unwrap();
            let expected = m.total() as i64 - net.preset(t).len() as i64 + net.postset(t).len() as i64;
            prop_assert_eq!(next.total() as i64, expected);
            let (forced, missing) = net.force_fire(&m, t).unwrap();
            prop_assert_eq!(missing, 0);
            prop_assert_eq!(forced, next);
        }
    }

    #[test]
    fn firing_sequences_replay_exactly(seed in 0u64..5000, walk: u64) {
        let net = net_for(seed);
        let run = |walk: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(walk);
            let mut m = net.initial_marking().clone();
            let mut seen = vec![m.clone()];
            for _ in 0..50 {
                let enabled = net.enabled_transitions(&m).unwrap();
                if enabled.is_empty() {
                    break;
                }
                let t: TransitionIdx = enabled[rng.random_range(0..enabled.len())];
                m = net.fire(&m, t).unwrap();
                seen.push(m.clone());
            }
            seen
        };
        prop_assert_eq!(run(walk), run(walk));
    }

    #[test]
    fn reduced_graph_is_a_labeled_bijection(seed in 0u64..5000) {
        let net = net_for(seed);
        let (_, rgr) = graphs(&net);
        let distinct: HashSet<&Marking> = rgr.markings().iter().collect();
        prop_assert_eq!(distinct.len(), rgr.num_nodes());
        for i in 0..rgr.num_nodes() {
            prop_assert_eq!(rgr.node_of(rgr.marking(i)), Some(i));
            let labels: BTreeSet<usize> = rgr.outgoing(i).map(|e| e.event.0).collect();
            prop_assert!(labels.iter().all(|&l| l < net.alphabet().len()));
            prop_assert_eq!(rgr.mask_for_node(i).count(), labels.len());
        }
    }

    #[test]
    fn reduced_graph_matches_oracle(seed in 0u64..20_000) {
        let net = net_for(seed);
        prop_assert_eq!(observed_graph(&net, &graphs(&net).1), oracle_reduced_graph(&net, 10_000));
    }

    #[test]
    fn without_hidden_transitions_mask_mass_equals_edge_count(seed in 0u64..5000) {
        let weights = BlockWeights { loop_: 0.0, ..BlockWeights::default() };
        let net = generate_net(&spec(seed, 0.0, weights)).unwrap();
        prop_assume!(net.hidden_transitions().next().is_none());
        let (rg, rgr) = graphs(&net);
        let popcount: usize = (0..rgr.num_nodes()).map(|i| rgr.mask_for_node(i).count()).sum();
        prop_assert_eq!(popcount, rg.edges().len());
        prop_assert_eq!(rgr.num_nodes(), rg.num_nodes());
    }

    #[test]
    fn split_is_a_partition(seed in 0u64..5000, split_seed: u64) {
        let net = net_for(seed);
        let log = generate_log(&net, &spec(seed, 0.4, BlockWeights::default())).unwrap();
        let split = split_log(&log, PAPER_SPLIT, split_seed).unwrap();
        let mut ids: Vec<&str> = [&split.train, &split.validation, &split.test]
            .iter()
            .flat_map(|l| l.traces.iter().map(|t| t.case_id.as_str()))
            .collect();
        let mut all: Vec<&str> = log.traces.iter().map(|t| t.case_id.as_str()).collect();
        ids.sort_unstable();
        all.sort_unstable();
        prop_assert_eq!(ids, all);
    }

    #[test]
    fn canonical_csv_is_a_fixed_point(seed in 0u64..5000) {
        let net = net_for(seed);
        let log = generate_log(&net, &spec(seed, 0.4, BlockWeights::default())).unwrap();
        let write = |l: &EventLog| {
            let mut out = Vec::new();
            write_canonical_csv(l, &mut out).unwrap();
            out
        };
        let once = write(&log);
        let parsed = parse_csv(once.as_slice(), &CsvColumns::default()).unwrap();
        let twice = write(&parsed);
        prop_assert_eq!(&once, &twice);
        let again = parse_csv(twice.as_slice(), &CsvColumns::default()).unwrap();
        prop_assert_eq!(parsed, again);
    }

    #[test]
    fn replay_invariants(seed in 0u64..5000, noise in prop_oneof![Just(0.0), Just(0.3)]) {
        let gen = GenSpec { noise_rate: noise, ..spec(seed, 0.4, BlockWeights::default()) };
        let net = generate_net(&gen).unwrap();
        let log = generate_log(&net, &gen).unwrap();
        let (_, rgr) = graphs(&net);
        let options = ReplayOptions::default();
        let params = estimate_decay_parameters(&net, &log, &options).unwrap();
        for trace in &log.traces {
            let (samples, report) = replay_trace(&net, &rgr, &params, trace, &options).unwrap();
            let (again, _) = replay_trace(&net, &rgr, &params, trace, &options).unwrap();
            prop_assert_eq!(&samples, &again);
            if noise == 0.0 {
                prop_assert_eq!(report.forced_firings, 0);
                prop_assert_eq!(report.missing_tokens, 0);
            }
            for s in &samples {
                prop_assert_eq!(rgr.node_of(&s.marking).is_none(), s.off_model);
                prop_assert!(!s.off_model || report.forced_firings > 0);
            }
            for w in samples.windows(2) {
                let (t1, t2) = (trace.events[w[0].position].timestamp, trace.events[w[1].position].timestamp);
                if t2 <= t1 {
                    continue;
                }
                for p in 0..net.num_places() {
                    let untouched = w[0].token_counts[p] == w[1].token_counts[p];
                    if untouched && w[0].decay_values[p] > 0.0 {
                        prop_assert!(w[1].decay_values[p] < w[0].decay_values[p]);
                    }
                }
            }
        }
    }

    #[test]
    fn generator_is_deterministic(seed: u64) {
        let gen = spec(seed, 0.4, BlockWeights::default());
        let (a, b) = (generate_net(&gen).unwrap(), generate_net(&gen).unwrap());
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(generate_log(&a, &gen).unwrap(), generate_log(&b, &gen).unwrap());
    }

    #[test]
    fn masked_outputs_are_distributions_on_the_mask(seed: u64, mode in prop_oneof![Just(MaskMode::PostSoftmax), Just(MaskMode::PreSoftmax)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, outputs, rows) = (rng.random_range(2..10), rng.random_range(2..9), 16);
        let config = MlpConfig { hidden_widths: vec![8, 6], mask_mode: mode, seed, ..MlpConfig::new(inputs, outputs) };
        let model = MaskedMlp::new(config).unwrap();
        let x = Array2::from_shape_fn((rows, inputs), |_| rng.random_range(-3.0..3.0));
        let masks: Vec<MaskVector> = (0..rows)
            .map(|_| {
                let mut bits: Vec<bool> = (0..outputs).map(|_| rng.random_bool(0.5)).collect();
                let keep = rng.random_range(0..outputs);
                bits[keep] = true;
                MaskVector::from_bits(bits)
            })
            .collect();
        let p = model.predict_proba(x.view(), Some(&masks)).unwrap();
        for (row, mask) in p.rows().into_iter().zip(&masks) {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            for (k, &v) in row.iter().enumerate() {
                if !mask.get(k) {
                    prop_assert_eq!(v, 0.0);
                }
            }
            prop_assert!(mask.get(argmax(row.as_slice().unwrap())));
        }
    }

    #[test]
    fn all_ones_mask_is_the_identity(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, outputs) = (rng.random_range(2..10), rng.random_range(2..9));
        let masked = MaskedMlp::new(MlpConfig {
            hidden_widths: vec![7, 5],
            activation: Activation::Swish,
            mask_mode: MaskMode::PostSoftmax,
            seed,
            ..MlpConfig::new(inputs, outputs)
        })
        .unwrap();
        let mut plain = masked.clone();
        plain.config.mask_mode = MaskMode::Off;
        let x = Array2::from_shape_fn((8, inputs), |_| rng.random_range(-3.0..3.0));
        let ones = vec![MaskVector::ones(outputs); 8];
        prop_assert_eq!(masked.predict_proba(x.view(), Some(&ones)).unwrap(), plain.predict_proba(x.view(), None).unwrap());
    }

    #[test]
    fn rank_auroc_matches_pairs(raw in prop::collection::vec((0u8..20, any::<bool>()), 2..300)) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 7.0).collect();
        let labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let fast = auroc_ovr(&scores, &labels).unwrap();
        prop_assert!((fast - pairwise_auroc(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn equal_supports_make_means_coincide(aurocs in prop::collection::vec(0.0f64..1.0, 1..12), support in 1usize..50) {
        let classes: Vec<ClassScore> = aurocs
            .iter()
            .enumerate()
            .map(|(i, &a)| ClassScore { event: format!("e{i}"), support, auroc: Some(a) })
            .collect();
        let (u, w) = mauroc(&classes).unwrap();
        prop_assert!((u - w).abs() <= 1e-12);
    }

    #[test]
    fn precision_simulation_shrinks_around_the_truth(seed: u64, n in 1usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut masks = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..32 {
            let bits: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
            let mask = MaskVector::from_bits(bits);
            let label = rng.random_range(0..n);
            masks.push(mask);
            labels.push(label);
        }
        for mode in [PrecisionMode::Half, PrecisionMode::Pair] {
            let (out, _) = simulate_precision(&masks, &labels, mode, seed);
            for ((before, after), &label) in masks.iter().zip(&out).zip(&labels) {
                prop_assert!(after.count() <= before.count());
                prop_assert!(after.events().all(|e| before.get(e)));
                if before.get(label) {
                    prop_assert!(after.get(label));
                    if mode == PrecisionMode::Pair {
                        prop_assert!((1..=2).contains(&after.count()));
                    }
                }
            }
        }
    }
}

#[test]
fn oracle_detects_alternative_reductions() {
    let nets = small_hidden_nets(40, 8);
    let mut differ = [0usize; 2];
    for (_, net) in &nets {
        let rg = ReachabilityGraph::build(net, DEFAULT_NODE_CAP).unwrap();
        let oracle = oracle_reduced_graph(net, 10_000);
        let variants = [
            ReduceOptions {
                final_edges: FinalEdges::Exclude,
                ..ReduceOptions::default()
            },
            ReduceOptions {
                node_rule: NodeRule::AllVisibleIncoming,
                ..ReduceOptions::default()
            },
        ];
        for (i, options) in variants.into_iter().enumerate() {
            let rgr = ReducedReachabilityGraph::build_with(&rg, net, options);
            if observed_graph(net, &rgr) != oracle {
                differ[i] += 1;
            }
        }
    }
    assert_eq!(
        differ[0],
        nets.len(),
        "every workflow net has edges into its final node"
    );
    assert!(
        differ[1] > 0,
        "some net has a node entered by both hidden and visible firings"
    );
}
