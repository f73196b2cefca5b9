//! Sampling checks against closed-form probabilities. Each uses a fixed
//! seed and a 4-standard-error band unless stated.

use rrldp::estimators::mle_ewrr3;
use rrldp::graph::{generate_graph, EdgeModel, GraphSpec, WeightModel, WeightedBipartiteGraph};
use rrldp::mechanisms::{build_matrix, simulate_counts, MechanismSpec};
use rrldp::privacy::lppdagger_budget;
use rrldp::protocols::{aggregate, lpp_respond, run_protocol, vpp, ProtocolParams, Tuple};
use rrldp::rng::Streams;
use rrldp::ProportionVector;

const SAMPLES: usize = 1_000_000;

fn within(hits: usize, trials: usize, p: f64, k: f64) -> bool {
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    (hits as f64 / trials as f64 - p).abs() <= k * se
}

#[test]
fn vpp_keeps_the_discretized_sign_at_the_expected_rate() {
    // w = 0.5, ε₂ = ln 3: P(+1) = (1 + w)q/2 + (1 − w)(1 − q)/2 = 0.625.
    let mut rng = Streams::new(1).rng("vpp", 0, 0);
    let plus = (0..SAMPLES).filter(|_| vpp(&[0.5], 3f64.ln(), &mut rng).unwrap().1 == 1).count();
    assert!(within(plus, SAMPLES, 0.625, 3.0), "{plus}");
}

#[test]
fn vpp_samples_the_index_uniformly() {
    let mut rng = Streams::new(2).rng("vpp", 0, 0);
    let mut counts = [0usize; 4];
    for _ in 0..SAMPLES {
        counts[vpp(&[0.1, -0.2, 0.3, 1.0], 1.0, &mut rng).unwrap().0] += 1;
    }
    assert!(counts.iter().all(|&c| within(c, SAMPLES, 0.25, 4.0)), "{counts:?}");
}

#[test]
fn lpp_no_edge_reports_plus_at_half_the_lie_rate() {
    let params = ProtocolParams::lpp(2f64.ln(), 2f64.ln()).unwrap();
    let p1 = params.p1();
    let mut rng = Streams::new(3).rng("lpp", 0, 0);
    let mut counts = [0usize; 3];
    for _ in 0..SAMPLES {
        counts[lpp_respond(None, &params, &mut rng).unwrap().index()] += 1;
    }
    assert!(within(counts[Tuple::Absent.index()], SAMPLES, p1, 4.0));
    assert!(within(counts[Tuple::Plus.index()], SAMPLES, (1.0 - p1) / 2.0, 4.0));
    assert!(within(counts[Tuple::Minus.index()], SAMPLES, (1.0 - p1) / 2.0, 4.0));
}

#[test]
fn bernoulli_graph_has_the_requested_density() {
    let spec = GraphSpec { n: 20_000, m: 10, edges: EdgeModel::Bernoulli { p: 0.3 }, weights: WeightModel::Uniform };
    let g = generate_graph(&spec, 5).unwrap();
    let pairs = spec.n * spec.m;
    assert!(within(g.edge_count(), pairs, 0.3, 4.0));
    // Uniform weights on [−1, 1]: mean 0, variance 1/3.
    let w: Vec<f64> = g.edges().map(|e| e.weight).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    assert!(mean.abs() < 4.0 * (1.0 / 3.0 / w.len() as f64).sqrt());
    assert_eq!(generate_graph(&spec, 5).unwrap(), g);
}

#[test]
fn empirical_lppdagger_ratio_approaches_the_closed_form() {
    // No-edge row against edge rows at w = ±1, estimated from samples.
    let (e1, e2) = (2f64.ln(), 2f64.ln());
    let params = ProtocolParams::lpp_dagger(e1, e2).unwrap();
    let streams = Streams::new(6);
    let tally = |w: Option<f64>, id: u64| {
        let mut rng = streams.rng("ratio", 0, id);
        let mut c = [0usize; 3];
        for _ in 0..SAMPLES {
            c[lpp_respond(w, &params, &mut rng).unwrap().index()] += 1;
        }
        c.map(|x| x as f64 / SAMPLES as f64)
    };
    let none = tally(None, 0);
    let mut worst: f64 = 0.0;
    for (id, w) in [(1, 1.0), (2, -1.0)] {
        let edge = tally(Some(w), id);
        for k in 0..3 {
            worst = worst.max((none[k] / edge[k]).ln().abs());
        }
    }
    let closed = lppdagger_budget(e1, e2).unwrap().epsilon;
    assert!((worst - closed).abs() < 0.05, "{worst} vs {closed}");
}

#[test]
fn protocol_estimates_track_degrees_and_weights() {
    let g = WeightedBipartiteGraph::from_triples(2, 2, &[(0, 0, 0.5), (1, 0, 1.0), (1, 1, -0.5)])
        .unwrap()
        .replicate_participants(50_000)
        .unwrap();
    let params = ProtocolParams::lpp_dagger(1.0, 1.0).unwrap();
    let reports = run_protocol(&g, &params, &Streams::new(8), "protocol", 0).unwrap();
    let est = aggregate(&reports, &params, g.n(), g.m()).unwrap();
    for (j, item) in est.items.iter().enumerate() {
        let d = g.degree(j).unwrap() as f64;
        let w = g.weight(j).unwrap();
        assert!((item.degree.estimate - d).abs() < 4.0 * item.degree.variance.sqrt(), "item {j}");
        assert!((item.weight.estimate - w).abs() < 4.0 * item.weight.variance.sqrt(), "item {j}");
    }
}

#[test]
fn ewrr3_mle_is_unbiased_over_replicates() {
    let spec = MechanismSpec::Ewrr { p: 0.8, n: 3 };
    let m = build_matrix(&spec).unwrap();
    let truth = ProportionVector::truth(vec![0.5, 0.3, 0.2]).unwrap();
    let streams = Streams::new(9);
    let reps = 400;
    let est: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = streams.rng("mle", r, 0);
            let counts = simulate_counts(10_000, &truth, &m, &mut rng).unwrap();
            mle_ewrr3(&counts, 0.8).unwrap().pi0.estimate
        })
        .collect();
    let mean = est.iter().sum::<f64>() / reps as f64;
    let var = rrldp::estimators::var_ewrr3(0.5, 0.8, 10_000).unwrap();
    assert!((mean - 0.5).abs() < 4.0 * (var / reps as f64).sqrt(), "{mean}");
}
