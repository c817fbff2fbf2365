use super::*;
use crate::data::{gen_dataset, DatasetSource, FeatureLaw, Label, MarginSpec, SyntheticSource};
use crate::linalg::{l2_distance, normalized};
use crate::rng::derive_stream;
use crate::solvers::svm_margin;

fn params(algo: Algorithm, eps: f64, tau: f64) -> LearnParams {
    LearnParams::new(algo, eps, tau, 0.2, 0.1).unwrap()
}

fn source(d: usize, tau: f64, seed: u64) -> SyntheticSource {
    let mut st = derive_stream(SharedSeed(seed), &label!["w_star"]);
    let spec = MarginSpec::random(d, tau, FeatureLaw::UniformSphere, &mut st).unwrap();
    SyntheticSource::new(spec, SharedSeed(seed + 1000))
}

#[test]
fn log_term_uses_normalized_delta() {
    let p = params(Algorithm::Algo2, 0.15, 0.3);
    assert_eq!(p.effective_delta(), 0.075);
    let expect = (1.0f64 / (0.15 * 0.3 * 0.2 * 0.075)).ln();
    assert!((p.log_term() - expect).abs() < 1e-12);
}

#[test]
fn batch_count_scales_as_tau_to_the_minus_four() {
    let mut p = params(Algorithm::Algo2, 0.15, 0.4);
    p.consts.c2 = 0.05;
    let a = derive_sizes(&p, Algorithm::Algo2).unwrap();
    p.tau = 0.2;
    let b = derive_sizes(&p, Algorithm::Algo2).unwrap();
    let ratio = b.batches as f64 / a.batches as f64 / (b.log_term / a.log_term);
    assert!((ratio - 16.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn oversized_runs_are_refused() {
    let mut p = params(Algorithm::Algo2, 0.15, 0.3);
    p.budgets.max_samples = 1000;
    match derive_sizes(&p, Algorithm::Algo2) {
        Err(Error::BudgetExceeded { quantity, .. }) => assert!(quantity == "n" || quantity == "B" || quantity == "total samples"),
        other => panic!("unexpected {other:?}"),
    }
    let mut q = params(Algorithm::Algo3, 0.15, 0.1);
    q.consts.c1 = 1.0;
    assert!(matches!(algo3(&source(5, 0.1, 1), &q, SharedSeed(1)), Err(Error::BudgetExceeded { .. })));
}

#[test]
fn degenerate_pipeline_with_identity_projection() {
    let k = 4;
    let s = gen_dataset(&source(k, 0.3, 2).spec, 300, &mut derive_stream(SharedSeed(2), &label!["d"])).unwrap();
    let w = svm_margin(&s, 0.15, DEFAULT_SVM_BUDGET).unwrap().into_weights();
    let z = average(std::slice::from_ref(&w), k).unwrap();
    let a = JlMatrix::identity(k).unwrap();
    let grid = make_grid(
        k,
        0.05,
        &mut derive_stream(SharedSeed(3), &label!["o"]),
        &mut derive_stream(SharedSeed(3), &label!["u"]),
    )
    .unwrap();
    let (tok, h) = project_and_round(&z, &a, &grid).unwrap();
    let b = grid.ak_round(&w).unwrap();
    assert_eq!(tok, CanonicalToken::Grid { grid: grid.id(), coords: b.coords.clone() });
    assert_eq!(h.weights(), normalized(&b.value()).unwrap().as_slice());
}

fn small_algo2() -> (LearnParams, SyntheticSource) {
    let mut p = params(Algorithm::Algo2, 0.2, 0.3);
    p.consts.c2 = 0.001;
    p.consts.c3 = 0.2;
    (p, source(10, 0.3, 4))
}

#[test]
fn algo2_is_deterministic_and_schedule_free() {
    let (mut p, src) = small_algo2();
    let a = algo2(&src, &p, SharedSeed(9)).unwrap();
    p.exec = Execution::Sequential;
    let b = algo2(&src, &p, SharedSeed(9)).unwrap();
    assert_eq!(a.canonical, b.canonical);
    assert_eq!(a.hypothesis, b.hypothesis);
    assert!(a.sizes.batches > 1);
    assert_eq!(a.transcript, vec!["algo2/jl", "algo2/offsets", "algo2/thresholds"]);
}

#[test]
fn tokens_reconstruct_their_hypotheses() {
    let (p, src) = small_algo2();
    let out = algo2(&src, &p, SharedSeed(5)).unwrap();
    let back = reconstruct(Algorithm::Algo2, &out.canonical, 10, &p, SharedSeed(5)).unwrap();
    assert!(l2_distance(back.weights(), out.hypothesis.weights()) < 1e-9);
    assert!(reconstruct(Algorithm::Algo2, &out.canonical, 10, &p, SharedSeed(6)).is_err());

    let mut q = params(Algorithm::Algo4, 0.3, 0.3);
    q.consts.c2 = 0.001;
    q.consts.c3 = 0.05;
    let out = algo4(&src, &q, SharedSeed(5)).unwrap();
    let back = reconstruct(Algorithm::Algo4, &out.canonical, 10, &q, SharedSeed(5)).unwrap();
    assert!(l2_distance(back.weights(), out.hypothesis.weights()) < 1e-9);

    let r = params(Algorithm::Algo3, 0.3, 0.5);
    let src3 = source(8, 0.5, 6);
    let out = algo3(&src3, &r, SharedSeed(7)).unwrap();
    let back = reconstruct(Algorithm::Algo3, &out.canonical, 8, &r, SharedSeed(7)).unwrap();
    assert!(l2_distance(back.weights(), out.hypothesis.weights()) < 1e-9);
    assert!(reconstruct(Algorithm::Algo2, &out.canonical, 8, &r, SharedSeed(7)).is_err());
}

#[test]
fn infeasible_batches_report_their_index() {
    let mut ds = Dataset::new(2, 0.3).unwrap();
    for _ in 0..10 {
        ds.push(&[1.0, 0.0], Label::Pos).unwrap();
    }
    for _ in 0..10 {
        ds.push(&[1.0, 0.1], Label::Neg).unwrap();
    }
    let mut p = params(Algorithm::Algo2, 0.5, 0.3);
    p.consts.c2 = 1e-6;
    p.consts.c3 = 10.0 * p.eps * p.tau.powi(3) / p.log_term();
    p.budgets.svm_updates = 200;
    let sizes = derive_sizes(&p, Algorithm::Algo2).unwrap();
    assert_eq!((sizes.batches, sizes.n), (1, 10));
    let src = DatasetSource { data: ds.slice(5, 15).unwrap() };
    match algo2(&src, &p, SharedSeed(1)) {
        Err(Error::InfeasibleMargin { batch, .. }) => assert_eq!(batch, Some(0)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn identity_projection_selects_the_only_consistent_direction() {
    // both points lie 0.01 rad inside the halfplane of e₁, so only
    // multiples of e₁ classify both correctly
    let (s1, c1) = (0.01f64).sin_cos();
    let mut ds = Dataset::new(2, 0.0).unwrap();
    ds.push(&[s1, c1], Label::Pos).unwrap();
    ds.push(&[s1, -c1], Label::Pos).unwrap();
    let p = params(Algorithm::Algo3, 0.15, 0.5);
    let net = build_net(2, net_spacing(0.5), 1 << 20).unwrap();
    let sizes = Sizes { k: 2, batches: 1, n: 2, cell: 0.3, log_term: 1.0 };
    for seed in 0..10 {
        let sel = algo3_select(&ds, &JlMatrix::identity(2).unwrap(), &net, &sizes, &p, SharedSeed(seed)).unwrap();
        let pt = net.point(sel.index);
        assert!(pt[0] > 0.0 && pt[1] == 0.0, "picked {pt:?}");
    }
}

#[test]
fn algorithm_names_round_trip() {
    for a in Algorithm::ALL {
        assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
    }
    assert!("algo5".parse::<Algorithm>().is_err());
}
