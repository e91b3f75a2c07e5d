//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use seqreview::data::{
    fit_model, fit_model_with, synthetic_dataset, write_dataset, PriorEstimator,
};
use seqreview::effort::*;
use seqreview::eval::softmax::{softmax_matched_burden, PaperCountPmf, SoftmaxSetting};
use seqreview::eval::{
    matched_burden, relative_utility_experiment, sequential_accept_probs, GaussianSetting,
    MatchedBurdenConfig, SgdConfig,
};
use seqreview::framework::{reachable_states, two_round_transition};
use seqreview::mechanisms::{isotonic_adjust, make_coin_flip, AcceptanceOracle, IsotonicMechanism};
use seqreview::model::{conference_utility_from_flags, NoiseModel, Permutation, SoftmaxScoreModel};
use seqreview::rng::Stream;
use seqreview::truth::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn truthfulness_suite() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (label, gen) in [
        (
            "coin-flip",
            random_coin_flip as fn(&mut Stream) -> seqreview::Result<SharedOracle>,
        ),
        ("credit-pool", random_credit_pool),
    ] {
        for k in 0..200u64 {
            let mut rng = Stream::new(101, label, k);
            let mech = gen(&mut rng).unwrap();
            let inst = random_instance(&mut rng, mech, 4, 3).unwrap();
            let v = best_response(&inst).unwrap();
            let gap = v.best_utility - v.truthful_utility;
            worst = worst.max(gap);
            let every = v
                .utilities
                .iter()
                .all(|(_, u)| v.truthful_utility >= u - 1e-9);
            if !every {
                failures.push(format!("{label}#{k}"));
            }
        }
    }
    let t = start.elapsed();
    outcome(
        failures.is_empty() && within(t, 120),
        format!(
            "400 instances, {} violations, largest best-minus-truthful gap {worst:.3e}, {:.1}s",
            failures.len(),
            t.as_secs_f64()
        ),
    )
}

fn violation_witnesses() -> Outcome {
    let start = Instant::now();
    let bundle = find_violation(archetype_bundle, archetype_bundle_instance, 100, 7).unwrap();
    let limited = find_violation(
        archetype_limited_credit_pool,
        archetype_limited_instance,
        100,
        7,
    )
    .unwrap();
    let t = start.elapsed();
    let describe = |w: &Option<ViolationWitness>| match w {
        Some(w) => format!("gap {:.4} at instance {}", w.gap, w.attempt),
        None => "no witness".into(),
    };
    let ok = |w: &Option<ViolationWitness>| w.as_ref().is_some_and(|w| w.gap >= 1e-6);
    outcome(
        ok(&bundle) && ok(&limited) && within(t, 60),
        format!(
            "bundle: {}; limited credit pool: {}; {:.1}s",
            describe(&bundle),
            describe(&limited),
            t.as_secs_f64()
        ),
    )
}

fn isotonic_gaming() -> Outcome {
    let q = [2.0, -1.0, -1.0];
    let mech = IsotonicMechanism { tau: 0.0 };
    let truthful = Permutation::identity(3);
    let best_last = Permutation::from_ranks(vec![2, 0, 1]).unwrap();
    let adj_t = isotonic_adjust(&q, &truthful).unwrap();
    let adj_m = isotonic_adjust(&q, &best_last).unwrap();
    let accepted = |perm: &Permutation| -> Vec<bool> {
        // Scores in review order, flags back in paper order.
        let order = perm.review_order();
        let scores: Vec<f64> = order.iter().map(|&p| q[p]).collect();
        let probs = mech.acceptance_probabilities(&scores).unwrap();
        let mut flags = vec![false; 3];
        for (round, &p) in order.iter().enumerate() {
            flags[p] = probs[round] == 1.0;
        }
        flags
    };
    let (acc_t, acc_m) = (accepted(&truthful), accepted(&best_last));
    let count = |v: &[bool]| v.iter().filter(|&&a| a).count();
    let parallel: Vec<bool> = q.iter().map(|&x| x >= 0.0).collect();
    let u_par = conference_utility_from_flags(&parallel, &q).unwrap();
    let u_iso = conference_utility_from_flags(&acc_m, &q).unwrap();
    let pass = adj_t == q.to_vec()
        && count(&acc_t) == 1
        && adj_m == vec![0.0; 3]
        && count(&acc_m) == 3
        && u_par == 2.0
        && u_iso == 0.0;
    outcome(
        pass,
        format!(
            "truthful {adj_t:?} ({} accepted), best-last {adj_m:?} ({} accepted), utility parallel {u_par} vs manipulated {u_iso}",
            count(&acc_t),
            count(&acc_m)
        ),
    )
}

fn quality_quantity_counterexample() -> Outcome {
    let one_high = EffortProfile::binary(1, 0, 1.0, 0.5, 1.0, 1.0).unwrap();
    let three_low = EffortProfile::binary(0, 3, 1.0, 0.5, 1.0, 1.0).unwrap();
    let v = [
        sequential_utility(&one_high),
        sequential_utility(&three_low),
        parallel_utility(&one_high),
        parallel_utility(&three_low),
    ];
    let want = [1.0, 0.875, 1.0, 1.5];
    let pass =
        v.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12) && v[0] > v[1] && v[2] < v[3];
    outcome(
        pass,
        format!(
            "sequential {} vs {}, parallel {} vs {}",
            v[0], v[1], v[2], v[3]
        ),
    )
}

fn lambda_identity() -> Outcome {
    let mut worst = 0f64;
    let mut checks = 0;
    for k in 0..1000 {
        let p = random_profile(&mut Stream::new(105, "lambda", k), 5);
        for i in 0..p.levels() {
            for kk in 1..=5 {
                let (m, pred) = lambda_check(&p, i, kk).unwrap();
                worst = worst.max((m - pred).abs());
                checks += 1;
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("1000 profiles, {checks} checks, max error {worst:.2e}"),
    )
}

fn random_binary(rng: &mut Stream) -> EffortProfile {
    loop {
        let n_h = (rng.uniform() * 7.0) as usize;
        let n_l = (rng.uniform() * 7.0) as usize;
        let (a, b) = (0.05 + 0.94 * rng.uniform(), 0.05 + 0.94 * rng.uniform());
        let (x, y) = (0.1 + 1.9 * rng.uniform(), 0.1 + 1.9 * rng.uniform());
        if let Ok(p) = EffortProfile::binary(n_h, n_l, a.max(b), a.min(b), x.max(y), x.min(y)) {
            return p;
        }
    }
}

fn mrs_dominance() -> Outcome {
    let mut bad = 0;
    let mut pairs = 0;
    for k in 0..1000 {
        let b = random_binary(&mut Stream::new(106, "binary", k));
        let v = verify_mrs_dominance(&b, 0, 1).unwrap();
        pairs += 1;
        if !(v.holds && v.strict == v.strictness_expected) {
            bad += 1;
        }
        let p = random_profile(&mut Stream::new(106, "finite", k), 5);
        for i in 0..p.levels() {
            for j in i + 1..p.levels() {
                let v = verify_mrs_dominance(&p, i, j).unwrap();
                pairs += 1;
                if !(v.holds && v.strict == v.strictness_expected) {
                    bad += 1;
                }
            }
        }
    }
    let mut violated = 0;
    for k in 0..10_000 {
        let mut rng = Stream::new(106, "quadruple", k);
        let p = random_profile(&mut rng, 5);
        let i = (rng.uniform() * (p.levels() - 1) as f64) as usize;
        let j = i + 1 + (rng.uniform() * (p.levels() - i - 1) as f64) as usize;
        let ni = p.counts()[i] + 1 + (rng.uniform() * 4.0) as usize;
        let nj = p.counts()[j] + 1 + (rng.uniform() * 6.0) as usize;
        if verify_substitution(&p, i, j, ni, nj).unwrap().violated {
            violated += 1;
        }
    }
    outcome(
        bad == 0 && violated == 0,
        format!("{pairs} level pairs, {bad} dominance/strictness failures; 10000 quadruples, {violated} violations"),
    )
}

fn exchange_lemma() -> Outcome {
    let grid: Vec<f64> = (0..10).map(|i| -1.0 + 2.0 * i as f64 / 9.0).collect();
    let mut worst = 0f64;
    for k in 0..100u64 {
        let mut rng = Stream::new(107, "exchange", k);
        let m = make_coin_flip(
            random_monotone_step(&mut rng),
            random_monotone_step(&mut rng),
        )
        .unwrap();
        for s in &reachable_states(&m, &grid, 3).unwrap() {
            for &a in &grid {
                for &b in &grid {
                    let x = two_round_transition(&m, 0, s, b, a)
                        .unwrap()
                        .termination_mass();
                    let y = two_round_transition(&m, 0, s, a, b)
                        .unwrap()
                        .termination_mass();
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    outcome(
        worst <= 1e-15,
        format!("100 mechanisms on a 10-point grid, max difference {worst:.2e}"),
    )
}

const SIM_RUNS: u64 = 10_000_000;
const SIM_CHUNK: u64 = 100_000;

/// Accept and review counts per round over `SIM_RUNS` runs.
fn simulate_sequential(
    q: &[f64],
    tau_acc: f64,
    tau_rev: f64,
    sigma_r: f64,
    config: u64,
) -> (Vec<u64>, Vec<u64>) {
    let noise = NoiseModel::gaussian(sigma_r).unwrap();
    (0..SIM_RUNS / SIM_CHUNK)
        .into_par_iter()
        .map(|c| {
            let mut rng = Stream::new(108, "closed-form-simulation", config * 1_000 + c);
            let mut acc = vec![0u64; q.len()];
            let mut rev = vec![0u64; q.len()];
            for _ in 0..SIM_CHUNK {
                for (i, &qi) in q.iter().enumerate() {
                    rev[i] += 1;
                    let r = qi + noise.sample(&mut rng);
                    if r >= tau_acc {
                        acc[i] += 1;
                    }
                    if r < tau_rev {
                        break;
                    }
                }
            }
            (acc, rev)
        })
        .reduce(
            || (vec![0; q.len()], vec![0; q.len()]),
            |mut a, b| {
                for i in 0..a.0.len() {
                    a.0[i] += b.0[i];
                    a.1[i] += b.1[i];
                }
                a
            },
        )
}

fn closed_form_vs_simulation() -> Outcome {
    let start = Instant::now();
    let mut worst_z = 0f64;
    let mut bad = 0;
    for k in 0..50u64 {
        let mut rng = Stream::new(108, "config", k);
        let n = 1 + (rng.uniform() * 5.0) as usize;
        let std = NoiseModel::gaussian(1.0).unwrap();
        let mut q: Vec<f64> = (0..n).map(|_| -1.0 + 2.0 * std.sample(&mut rng)).collect();
        q.sort_by(|a, b| b.total_cmp(a));
        let tau_acc = -1.0 + 2.0 * rng.uniform();
        let tau_rev = tau_acc - 2.0 * rng.uniform();
        let sigma_r = 0.5 + rng.uniform();
        let exact = sequential_accept_probs(&q, tau_acc, tau_rev, sigma_r).unwrap();
        let (acc, rev) = simulate_sequential(&q, tau_acc, tau_rev, sigma_r, k);
        for (p, count) in exact
            .accept
            .iter()
            .zip(&acc)
            .chain(exact.review.iter().zip(&rev))
        {
            let est = *count as f64 / SIM_RUNS as f64;
            let se = (p * (1.0 - p) / SIM_RUNS as f64).sqrt().max(1e-12);
            let z = (est - p).abs() / se;
            worst_z = worst_z.max(z);
            if z > 4.0 {
                bad += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        bad == 0 && within(t, 300),
        format!(
            "50 configurations x 1e7 runs, {bad} entries beyond 4 stderr, max |z| {worst_z:.2}, {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn relative_utility() -> Outcome {
    let start = Instant::now();
    let config = SgdConfig {
        seed: 109,
        ..SgdConfig::default()
    };
    let r = relative_utility_experiment(&GaussianSetting::default(), &config).unwrap();
    let t = start.elapsed();
    outcome(
        r.relative >= 0.35 && within(t, 1200),
        format!(
            "U_s relative {:.4} (stderr {:.4}); U_p {:.4}, U_s {:.4}, U_i {:.4}; {:.1}s",
            r.relative,
            r.relative_stderr,
            r.u_parallel.estimate,
            r.u_sequential.estimate,
            r.u_isotonic.estimate,
            t.as_secs_f64()
        ),
    )
}

fn nonincreasing(values: &[(f64, f64)]) -> bool {
    values
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

fn gaussian_burden() -> Outcome {
    let start = Instant::now();
    let cfg = MatchedBurdenConfig::default();
    let b: Vec<(f64, f64)> = (2..=10)
        .map(|n| {
            let setting = GaussianSetting {
                n,
                ..GaussianSetting::default()
            };
            let m = matched_burden(&setting, 110, &cfg).unwrap();
            (m.relative_burden.estimate, m.relative_burden.stderr)
        })
        .collect();
    let list: Vec<String> = b.iter().map(|x| format!("{:.3}", x.0)).collect();
    outcome(
        b[0].0 <= 0.9 && nonincreasing(&b),
        format!(
            "B for n=2..10: {}; {:.1}s",
            list.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn softmax_burden() -> Outcome {
    let start = Instant::now();
    let model = SoftmaxScoreModel::one_to_ten(0.342).unwrap();
    let b: Vec<(f64, f64)> = [1.8, 1.85, 1.9, 1.93]
        .iter()
        .map(|&mean| {
            let pmf = PaperCountPmf::truncated_geometric(mean, 8).unwrap();
            let s = SoftmaxSetting::new(pmf, 3, 5.468, 1.295, model.clone()).unwrap();
            let m = softmax_matched_burden(&s, 40_000, 111, 41, 2.0).unwrap();
            (m.relative_burden.estimate, m.relative_burden.stderr)
        })
        .collect();
    let list: Vec<String> = b.iter().map(|x| format!("{:.4}", x.0)).collect();
    outcome(
        b[3].0 <= 0.9 && nonincreasing(&b),
        format!(
            "B at pi_n mean 1.8/1.85/1.9/1.93: {}; {:.1}s",
            list.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn fitting_round_trip() -> Outcome {
    let start = Instant::now();
    let model = SoftmaxScoreModel::one_to_ten(0.35).unwrap();
    let pmf = PaperCountPmf::truncated_geometric(1.93, 8).unwrap();
    let d = synthetic_dataset(&pmf, 5.5, 1.3, &model, 3000, 3, 0).unwrap();
    let f = fit_model(&d, 0).unwrap();
    let t = start.elapsed();
    let joint = fit_model_with(&d, 0, PriorEstimator::MarginalLikelihood).unwrap();
    let pass = (f.mu_q - 5.5).abs() <= 0.05
        && (f.temperature - 0.35).abs() <= 0.05
        && (f.sigma_q - 1.3).abs() <= 0.08
        && within(t, 120);
    outcome(
        pass,
        format!(
            "mu_q {:.4}, sigma_q {:.4}, t_r {:.4} in {:.1}s (marginal-likelihood estimator: sigma_q {:.4}, t_r {:.4})",
            f.mu_q,
            f.sigma_q,
            f.temperature,
            t.as_secs_f64(),
            joint.sigma_q,
            joint.temperature
        ),
    )
}

fn run_cli(args: &[String], workers: usize) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seqreview"))
        .args(args)
        .env("SEQREVIEW_WORKERS", workers.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).trim().to_string());
    }
    Ok(out.stdout)
}

fn cli_determinism(dir: &Path) -> Outcome {
    let model = SoftmaxScoreModel::one_to_ten(0.4).unwrap();
    let pmf = PaperCountPmf::truncated_geometric(1.9, 8).unwrap();
    let data = dir.join("reviews.jsonl");
    std::fs::write(
        &data,
        write_dataset(&synthetic_dataset(&pmf, 5.5, 1.3, &model, 400, 3, 3).unwrap()),
    )
    .unwrap();
    let fitted = dir.join("fitted.txt");
    let d = data.display().to_string();
    let f = fitted.display().to_string();
    let status = run_cli(
        &[
            "fit".into(),
            "--seed".into(),
            "1".into(),
            "--dataset".into(),
            d.clone(),
            "--out".into(),
            f.clone(),
        ],
        1,
    );
    if let Err(e) = status {
        return outcome(false, format!("fit failed: {e}"));
    }

    let cases: Vec<(&str, Vec<&str>)> = vec![
        (
            "simulate gaussian",
            vec![
                "simulate",
                "--seed",
                "5",
                "--mechanism",
                "threshold-seq",
                "--tau-acc",
                "0",
                "--tau-rev",
                "-1",
                "--n",
                "2..6",
                "--samples",
                "5000",
            ],
        ),
        (
            "simulate isotonic",
            vec![
                "simulate",
                "--seed",
                "5",
                "--mechanism",
                "isotonic",
                "--tau-acc",
                "0",
                "--samples",
                "500",
            ],
        ),
        (
            "simulate softmax",
            vec![
                "simulate",
                "--seed",
                "5",
                "--model",
                "softmax",
                "--fitted",
                &f,
                "--mechanism",
                "threshold-seq",
                "--tau-acc",
                "6",
                "--tau-rev",
                "5",
                "--samples",
                "5000",
            ],
        ),
        (
            "optimize",
            vec![
                "optimize",
                "--seed",
                "5",
                "--n",
                "3",
                "--samples",
                "500",
                "--iterations",
                "10",
            ],
        ),
        (
            "burden gaussian",
            vec![
                "burden",
                "--seed",
                "5",
                "--n",
                "2,4",
                "--samples",
                "1000",
                "--iterations",
                "10",
                "--grid-points",
                "11",
            ],
        ),
        (
            "burden softmax",
            vec![
                "burden",
                "--seed",
                "5",
                "--model",
                "softmax",
                "--mu-q",
                "5.468",
                "--sigma-q",
                "1.295",
                "--temperature",
                "0.342",
                "--pi-mean",
                "1.8,1.93",
                "--samples",
                "5000",
            ],
        ),
        ("fit", vec!["fit", "--seed", "1", "--dataset", &d]),
        (
            "fit marginal",
            vec![
                "fit",
                "--seed",
                "1",
                "--dataset",
                &d,
                "--estimator",
                "marginal",
            ],
        ),
        (
            "truthcheck",
            vec![
                "truthcheck",
                "--seed",
                "5",
                "--mechanism",
                "creditpool",
                "--instances",
                "30",
            ],
        ),
        (
            "truthcheck bundle",
            vec![
                "truthcheck",
                "--seed",
                "5",
                "--mechanism",
                "bundle",
                "--instances",
                "3",
            ],
        ),
        ("mrs", vec!["mrs", "--seed", "5"]),
    ];
    let mut mismatched = Vec::new();
    for (name, args) in &cases {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let runs: Vec<Result<Vec<u8>, String>> =
            [1, 4, 1].iter().map(|&w| run_cli(&args, w)).collect();
        match (&runs[0], &runs[1], &runs[2]) {
            (Ok(a), Ok(b), Ok(c)) if a == b && a == c && !a.is_empty() => {}
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                mismatched.push(format!("{name} ({e})"))
            }
            _ => mismatched.push(name.to_string()),
        }
    }
    outcome(
        mismatched.is_empty(),
        format!(
            "{} subcommand runs compared at 1 and 4 workers; differing: {}",
            cases.len(),
            if mismatched.is_empty() {
                "none".into()
            } else {
                mismatched.join(", ")
            }
        ),
    )
}

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("seqreview-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

type Check<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let dir = scratch_dir();
    let checks: Vec<Check<'_>> = vec![
        ("truthfulness suite", Box::new(truthfulness_suite)),
        ("non-truthfulness witnesses", Box::new(violation_witnesses)),
        ("isotonic gaming", Box::new(isotonic_gaming)),
        (
            "quality vs quantity counterexample",
            Box::new(quality_quantity_counterexample),
        ),
        ("lambda identity", Box::new(lambda_identity)),
        ("MRS dominance", Box::new(mrs_dominance)),
        ("coin-flip exchange", Box::new(exchange_lemma)),
        (
            "closed form vs simulation",
            Box::new(closed_form_vs_simulation),
        ),
        ("relative conference utility", Box::new(relative_utility)),
        ("Gaussian review burden", Box::new(gaussian_burden)),
        ("softmax review burden", Box::new(softmax_burden)),
        ("fitting round-trip", Box::new(fitting_round_trip)),
        ("CLI determinism", Box::new(|| cli_determinism(&dir))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    let _ = std::fs::remove_dir_all(&dir);
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
