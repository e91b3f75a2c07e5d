use proptest::prelude::*;

use seqreview::framework::*;
use seqreview::mechanisms::*;
use seqreview::model::{NoiseModel, Permutation};
use seqreview::rng::Stream;
use seqreview::stats::mean_stderr;
use seqreview::truth::{random_convex_credit, random_monotone_step};

fn zero() -> NoiseModel {
    NoiseModel::zero()
}

fn random_qualities(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| -1.5 + 3.0 * rng.uniform()).collect()
}

fn random_perm(rng: &mut Stream, n: usize) -> Permutation {
    let all = Permutation::all(n);
    all[(rng.uniform() * all.len() as f64) as usize].clone()
}

#[test]
fn naive_trace_stops_after_first_rejection() {
    let m = make_naive_sequential(ScoreFn::Threshold(0.0)).unwrap();
    let out = run_mechanism(&m, &[1.0, -1.0, 1.0], &Permutation::identity(3), &zero(), 0).unwrap();
    assert_eq!(out.reviewed(), &[true, true, false]);
    assert_eq!(out.accepted(), &[true, false, false]);
    let all = run_mechanism(&m, &[1.0, 2.0, 0.5], &Permutation::identity(3), &zero(), 0).unwrap();
    assert_eq!(all.accepted(), &[true; 3]);
    let reject = make_naive_sequential(ScoreFn::Constant(0.0)).unwrap();
    assert_eq!(
        run_mechanism(
            &reject,
            &[1.0, 2.0, 0.5],
            &Permutation::identity(3),
            &zero(),
            0
        )
        .unwrap()
        .reviewed_count(),
        1
    );
}

#[test]
fn coin_flip_reductions_hold_run_for_run() {
    let noise = NoiseModel::gaussian(1.0).unwrap();
    for k in 0..100u64 {
        let mut rng = Stream::new(21, "reduction", k);
        let p_acc = random_monotone_step(&mut rng);
        let n = 2 + (rng.uniform() * 4.0) as usize;
        let q = random_qualities(&mut rng, n);
        let perm = random_perm(&mut rng, n);

        let naive = make_naive_sequential(p_acc.clone()).unwrap();
        let cf0 = make_coin_flip(p_acc.clone(), ScoreFn::Constant(0.0)).unwrap();
        let a = run_mechanism(&naive, &q, &perm, &noise, k).unwrap();
        let b = run_mechanism(&cf0, &q, &perm, &noise, k).unwrap();
        assert_eq!(a, b);

        let par = make_parallel(p_acc.clone()).unwrap();
        let c = run_mechanism(&par, &q, &perm, &noise, k).unwrap();
        let d = run_parallel(|r| p_acc.eval(r).clamp(0.0, 1.0), &q, &perm, &noise, k).unwrap();
        assert_eq!(c, d);
        let chain = review_chain_probabilities(&par, &q).unwrap();
        assert!(chain.iter().all(|p| (p - 1.0).abs() < 1e-12), "{chain:?}");
    }
}

#[test]
fn threshold_sequential_reductions() {
    let noise = NoiseModel::gaussian(0.7).unwrap();
    for k in 0..100u64 {
        let mut rng = Stream::new(22, "threshold", k);
        let tau = -0.5 + rng.uniform();
        let n = 2 + (rng.uniform() * 4.0) as usize;
        let q = random_qualities(&mut rng, n);
        let perm = random_perm(&mut rng, n);
        let par = make_threshold_sequential(ThresholdSeqSpec::parallel(tau)).unwrap();
        let out = run_mechanism(&par, &q, &perm, &noise, k).unwrap();
        assert_eq!(
            out,
            run_parallel(|r| if r >= tau { 1.0 } else { 0.0 }, &q, &perm, &noise, k).unwrap()
        );
        let tight = make_threshold_sequential(ThresholdSeqSpec::new(tau, tau).unwrap()).unwrap();
        let naive = make_naive_sequential(ScoreFn::Threshold(tau)).unwrap();
        assert_eq!(
            run_mechanism(&tight, &q, &perm, &noise, k).unwrap(),
            run_mechanism(&naive, &q, &perm, &noise, k).unwrap()
        );
    }
}

#[test]
fn threshold_sequential_trace() {
    let m = make_threshold_sequential(ThresholdSeqSpec::new(0.0, -1.0).unwrap()).unwrap();
    let out = run_mechanism(
        &m,
        &[0.5, -0.5, -2.0, 3.0],
        &Permutation::identity(4),
        &zero(),
        0,
    )
    .unwrap();
    assert_eq!(out.reviewed(), &[true, true, true, false]);
    assert_eq!(out.accepted(), &[true, false, false, false]);
    assert!(ThresholdSeqSpec::new(-1.0, 0.0).is_err());
}

#[test]
fn coin_flip_chain_is_a_product() {
    let m = make_coin_flip(ScoreFn::Constant(0.5), ScoreFn::Constant(0.5)).unwrap();
    let chain = review_chain_probabilities(&m, &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(chain, vec![1.0, 0.75, 0.5625]);
}

#[test]
fn credit_pool_traces() {
    let pool = make_credit_pool(CreditPoolSpec {
        initial_credit: 0.0,
        beta: ScoreFn::custom(|r| r),
        p_acc: ScoreFn::Threshold(0.0),
        credit_cap: None,
    })
    .unwrap();
    assert_eq!(
        review_chain_probabilities(&pool, &[1.0, -2.0, 5.0]).unwrap(),
        vec![1.0, 1.0, 0.0]
    );
    let out = run_mechanism(
        &pool,
        &[1.0, -2.0, 5.0],
        &Permutation::identity(3),
        &zero(),
        0,
    )
    .unwrap();
    assert_eq!(out.reviewed(), &[true, true, false]);

    let free = make_credit_pool(CreditPoolSpec {
        initial_credit: 0.0,
        beta: ScoreFn::Constant(0.0),
        p_acc: ScoreFn::Threshold(0.0),
        credit_cap: None,
    })
    .unwrap();
    assert_eq!(
        review_chain_probabilities(&free, &[-3.0, -3.0, -3.0]).unwrap(),
        vec![1.0; 3]
    );

    let capped = make_credit_pool(CreditPoolSpec {
        initial_credit: 0.0,
        beta: ScoreFn::custom(|r| r),
        p_acc: ScoreFn::Threshold(0.0),
        credit_cap: Some(0.0),
    })
    .unwrap();
    assert_eq!(
        review_chain_probabilities(&capped, &[5.0, -1.0, -1.0, 4.0]).unwrap(),
        vec![1.0, 1.0, 0.0, 0.0]
    );
}

#[test]
fn bundle_traces() {
    let noise = NoiseModel::gaussian(1.0).unwrap();
    let single = make_bundle_mechanism(
        BundleSpec {
            bundle_size: 1,
            min_accepts: 1,
        },
        ScoreFn::Threshold(0.0),
    )
    .unwrap();
    let naive = make_naive_sequential(ScoreFn::Threshold(0.0)).unwrap();
    for k in 0..100u64 {
        let mut rng = Stream::new(23, "bundle", k);
        let q = random_qualities(&mut rng, 4);
        let perm = random_perm(&mut rng, 4);
        let a = run_mechanism(&single, &q, &perm, &noise, k).unwrap();
        let b = run_mechanism(&naive, &q, &perm, &noise, k).unwrap();
        assert_eq!(a.reviewed(), b.reviewed());
        assert_eq!(a.accepted(), b.accepted());
    }
    let pair = make_bundle_mechanism(
        BundleSpec {
            bundle_size: 2,
            min_accepts: 1,
        },
        ScoreFn::Threshold(0.0),
    )
    .unwrap();
    let out = run_mechanism(
        &pair,
        &[-1.0, -1.0, 2.0, 2.0],
        &Permutation::identity(4),
        &zero(),
        0,
    )
    .unwrap();
    assert_eq!(out.reviewed(), &[true, true, false, false]);
}

fn check_chain_against_runs<M: SequentialMechanism>(mech: &M, scores: &[f64], runs: u64) {
    let exact = review_chain_probabilities(mech, scores).unwrap();
    let perm = Permutation::identity(scores.len());
    let mut counts = vec![Vec::with_capacity(runs as usize); scores.len()];
    for s in 0..runs {
        let out = run_mechanism(mech, scores, &perm, &zero(), s).unwrap();
        for (c, r) in counts.iter_mut().zip(out.reviewed()) {
            c.push(if *r { 1.0 } else { 0.0 });
        }
    }
    for (i, c) in counts.iter().enumerate() {
        let (m, se) = mean_stderr(c);
        let tol = 4.0 * se.max(1.0 / runs as f64);
        assert!(
            (m - exact[i]).abs() <= tol,
            "round {i}: {m} vs {}",
            exact[i]
        );
    }
}

#[test]
fn chain_probabilities_match_simulation() {
    let mut rng = Stream::new(24, "chain", 0);
    let cf = make_coin_flip(
        random_monotone_step(&mut rng),
        random_monotone_step(&mut rng),
    )
    .unwrap();
    check_chain_against_runs(&cf, &[0.3, -0.4, 0.9, -0.1], 1_000_000);
    let bundle = make_bundle_mechanism(
        BundleSpec {
            bundle_size: 2,
            min_accepts: 1,
        },
        ScoreFn::step(vec![0.0], vec![0.3, 0.8]).unwrap(),
    )
    .unwrap();
    check_chain_against_runs(&bundle, &[0.5, -0.5, -0.2, 0.7, 0.1], 1_000_000);
    let pool = make_credit_pool(CreditPoolSpec {
        initial_credit: 0.2,
        beta: ScoreFn::piecewise_linear(vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 2.0]).unwrap(),
        p_acc: ScoreFn::step(vec![0.0], vec![0.4, 0.9]).unwrap(),
        credit_cap: None,
    })
    .unwrap();
    check_chain_against_runs(&pool, &[0.5, -0.5, -0.3, 0.7], 1_000_000);
}

#[test]
fn coin_flip_exchange_is_exact() {
    let grid: Vec<f64> = (0..10).map(|i| -1.0 + 2.0 * i as f64 / 9.0).collect();
    for k in 0..100u64 {
        let mut rng = Stream::new(25, "exchange", k);
        let m = make_coin_flip(
            random_monotone_step(&mut rng),
            random_monotone_step(&mut rng),
        )
        .unwrap();
        let states = reachable_states(&m, &grid, 3).unwrap();
        for s in &states {
            for &a in &grid {
                for &b in grid.iter().filter(|&&b| b >= a) {
                    let x = two_round_transition(&m, 0, s, b, a)
                        .unwrap()
                        .termination_mass();
                    let y = two_round_transition(&m, 0, s, a, b)
                        .unwrap()
                        .termination_mass();
                    assert!((x - y).abs() <= 1e-15, "{s:?} {a} {b}: {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn monotone_ingredients_pass_transition_checks() {
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    for k in 0..50u64 {
        let mut rng = Stream::new(26, "transition", k);
        let cf = make_coin_flip(
            random_monotone_step(&mut rng),
            random_monotone_step(&mut rng),
        )
        .unwrap();
        let states = reachable_states(&cf, &grid, 3).unwrap();
        let rep = check_transition_monotone(&cf, &states, &grid, 0).unwrap();
        assert!(rep.all_pass(), "coin flip {k}: {:?}", rep.witnesses);
        assert!(check_review_policy_monotone(&cf, &states, 3));

        let pool = make_credit_pool(CreditPoolSpec {
            initial_credit: rng.uniform(),
            beta: random_convex_credit(&mut rng),
            p_acc: random_monotone_step(&mut rng),
            credit_cap: None,
        })
        .unwrap();
        let states = reachable_states(&pool, &grid, 3).unwrap();
        let rep = check_transition_monotone(&pool, &states, &grid, 0).unwrap();
        assert!(rep.all_pass(), "credit pool {k}: {:?}", rep.witnesses);
    }
}

#[test]
fn concave_credit_fails_the_ordering_clause() {
    let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let pool = make_credit_pool(CreditPoolSpec {
        initial_credit: 1.5,
        beta: ScoreFn::custom(|r| 1.0 - (-r).exp()),
        p_acc: ScoreFn::Threshold(0.0),
        credit_cap: None,
    })
    .unwrap();
    let states = reachable_states(&pool, &grid, 3).unwrap();
    let rep = check_transition_monotone(&pool, &states, &grid, 0).unwrap();
    assert!(rep.score_monotone && rep.state_monotone);
    assert!(!rep.ordering_monotone);
    assert!(rep.witnesses.iter().any(|w| matches!(
        w,
        TransitionWitness::Quadruple { .. } | TransitionWitness::Swap { .. }
    )));
}

#[test]
fn acceptance_monotonicity_check() {
    let grid: Vec<f64> = (-5..=5).map(f64::from).collect();
    assert!(check_acceptance_monotone(
        |r| if r >= 0.0 { 1.0 } else { 0.0 },
        &grid
    ));
    assert!(check_acceptance_monotone(|_| 0.3, &grid));
    assert!(!check_acceptance_monotone(
        |r| if r == 2.0 { 0.1 } else { 0.5 },
        &grid
    ));
    let never = make_coin_flip(ScoreFn::Constant(0.0), ScoreFn::Constant(0.0)).unwrap();
    assert!(check_review_policy_monotone(&never, &[], 3));
}

#[test]
fn custom_triple_rejects_review_from_termination() {
    let t = CustomTriple::new(
        (),
        |_| 1.0,
        |_, _: &ReviewState<()>| 1.0,
        |_, _, _, _| StateDist::point(ReviewState::Live(())),
        |_, _| std::cmp::Ordering::Equal,
        3,
    );
    assert!(t.is_err());
}

#[test]
fn isotonic_appendix_example() {
    let truthful = Permutation::identity(3);
    let gamed = Permutation::from_order(&[1, 2, 0]).unwrap();
    let s = [2.0, -1.0, -1.0];
    assert_eq!(isotonic_adjust(&s, &truthful).unwrap(), s.to_vec());
    assert_eq!(isotonic_adjust(&s, &gamed).unwrap(), vec![0.0; 3]);
    assert_eq!(
        isotonic_mechanism_accept(&s, &gamed, 0.0).unwrap(),
        vec![true; 3]
    );
    assert_eq!(
        isotonic_mechanism_accept(&s, &truthful, 0.0).unwrap(),
        vec![true, false, false]
    );
    assert_eq!(
        isotonic_mechanism_accept(&s, &truthful, f64::INFINITY).unwrap(),
        vec![false; 3]
    );
}

#[test]
fn isotonic_projection_beats_random_feasible_points() {
    let mut rng = Stream::new(27, "isotonic", 0);
    let scores = [0.3, 1.2, -0.4, 0.9, -1.1];
    let perm = Permutation::from_order(&[2, 0, 4, 1, 3]).unwrap();
    let fit = isotonic_adjust(&scores, &perm).unwrap();
    let order = perm.review_order();
    assert!(order.windows(2).all(|w| fit[w[0]] >= fit[w[1]]));
    let dist = |x: &[f64]| -> f64 { x.iter().zip(&scores).map(|(a, b)| (a - b).powi(2)).sum() };
    let best = dist(&fit);
    for _ in 0..100_000 {
        let mut v: Vec<f64> = (0..5).map(|_| -2.0 + 4.0 * rng.uniform()).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        let mut cand = vec![0.0; 5];
        for (k, &p) in order.iter().enumerate() {
            cand[p] = v[k];
        }
        assert!(best <= dist(&cand) + 1e-12);
    }
    // Clamping the input to the ordering is also feasible.
    let mut clamped = vec![0.0; 5];
    let mut cap = f64::INFINITY;
    for &p in &order {
        cap = cap.min(scores[p]);
        clamped[p] = cap;
    }
    assert!(best <= dist(&clamped) + 1e-12);
}

#[test]
fn identical_scores_are_left_alone() {
    for perm in Permutation::all(4) {
        assert_eq!(isotonic_adjust(&[0.7; 4], &perm).unwrap(), vec![0.7; 4]);
    }
}

proptest! {
    #[test]
    fn isotonic_preserves_the_mean(scores in prop::collection::vec(-5.0f64..5.0, 1..8), seed in 0u64..1000) {
        let perm = random_perm(&mut Stream::new(seed, "perm", 0), scores.len());
        let fit = isotonic_adjust(&scores, &perm).unwrap();
        let a: f64 = scores.iter().sum();
        let b: f64 = fit.iter().sum();
        prop_assert!((a - b).abs() < 1e-9);
        let order = perm.review_order();
        prop_assert!(order.windows(2).all(|w| fit[w[0]] >= fit[w[1]] - 1e-12));
    }
}
