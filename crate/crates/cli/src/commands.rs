use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use seqreview::data::{fit_model_with, parse_dataset, FittedModel, PriorEstimator};
use seqreview::effort::{verify_mrs_dominance, verify_substitution, EffortProfile};
use seqreview::eval::softmax::{
    softmax_matched_burden, softmax_population_eval, PaperCountPmf, SoftmaxMechanism,
    SoftmaxSetting,
};
use seqreview::eval::{
    evaluate, matched_burden, optimize_thresholds, relative_utility_experiment, Family,
    GaussianSetting, MatchedBurdenConfig, SgdConfig, ThresholdMechanism,
};
use seqreview::mechanisms::{
    make_naive_sequential, make_parallel, make_threshold_sequential, IsotonicMechanism, ScoreFn,
    ThresholdSeqSpec,
};
use seqreview::model::SoftmaxScoreModel;
use seqreview::rng::Stream;
use seqreview::truth::{self, SharedOracle, TruthInstance};

use crate::params::Params;

pub type Output<'a> = &'a mut Vec<u8>;

const SOFTMAX_KEYS: &[&str] = &[
    "fitted",
    "mu_q",
    "sigma_q",
    "temperature",
    "reviews",
    "pi_mean",
    "pi_max",
    "acceptance_bar",
    "score_min",
    "score_max",
];

pub const SIMULATE_KEYS: &[&str] = &[
    "samples",
    "out",
    "model",
    "mechanism",
    "n",
    "mu_q",
    "sigma_q",
    "sigma_r",
    "tau_acc",
    "tau_rev",
    "fitted",
    "temperature",
    "reviews",
    "pi_mean",
    "pi_max",
    "acceptance_bar",
    "score_min",
    "score_max",
];
pub const OPTIMIZE_KEYS: &[&str] = &[
    "samples",
    "out",
    "mechanism",
    "n",
    "mu_q",
    "sigma_q",
    "sigma_r",
    "tau_acc",
    "tau_rev",
    "iterations",
];
pub const BURDEN_KEYS: &[&str] = &[
    "samples",
    "out",
    "model",
    "n",
    "mu_q",
    "sigma_q",
    "sigma_r",
    "grid_points",
    "iterations",
    "slack",
    "fitted",
    "temperature",
    "reviews",
    "pi_mean",
    "pi_max",
    "acceptance_bar",
    "score_min",
    "score_max",
];
pub const FIT_KEYS: &[&str] = &["out", "dataset", "estimator"];
pub const TRUTHCHECK_KEYS: &[&str] = &["out", "mechanism", "instances"];
pub const MRS_KEYS: &[&str] = &["out", "probs", "rewards", "counts", "grid_points"];

fn fmt(x: f64) -> String {
    x.to_string()
}

fn csv_writer(out: Output<'_>) -> csv::Writer<Output<'_>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn gaussian_setting(p: &Params, n: usize) -> Result<GaussianSetting> {
    let d = GaussianSetting::default();
    Ok(GaussianSetting::new(
        n,
        p.or("mu_q", d.mu_q)?,
        p.or("sigma_q", d.sigma_q)?,
        p.or("sigma_r", d.sigma_r)?,
    )?)
}

fn is_softmax(p: &Params) -> Result<bool> {
    match p.raw("model").unwrap_or("gaussian") {
        "gaussian" => {
            if let Some(k) = SOFTMAX_KEYS
                .iter()
                .find(|k| !["mu_q", "sigma_q"].contains(k) && p.has(k))
            {
                bail!("key `{k}` needs `model = softmax`");
            }
            Ok(false)
        }
        "softmax" => {
            if p.has("sigma_r") || p.has("n") {
                bail!("keys `sigma_r` and `n` belong to the gaussian model");
            }
            Ok(true)
        }
        other => bail!("invalid value for `model`: `{other}` (expected gaussian or softmax)"),
    }
}

/// Softmax setting from a fitted document or from flags; flags override
/// document fields.
fn softmax_settings(
    p: &Params,
    pi_means: Option<&[f64]>,
) -> Result<Vec<(Option<f64>, SoftmaxSetting)>> {
    let fitted = match p.raw("fitted") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read fitted model {path}"))?;
            Some(
                FittedModel::from_document(&text)
                    .with_context(|| format!("fitted model {path}"))?,
            )
        }
        None => None,
    };
    let pick = |key: &str, from_doc: Option<f64>| -> Result<f64> {
        match p.get::<f64>(key)? {
            Some(v) => Ok(v),
            None => from_doc.ok_or_else(|| anyhow!("missing required key `{key}`")),
        }
    };
    let mu = pick("mu_q", fitted.as_ref().map(|f| f.mu_q))?;
    let sigma = pick("sigma_q", fitted.as_ref().map(|f| f.sigma_q))?;
    let temperature = pick("temperature", fitted.as_ref().map(|f| f.temperature))?;
    let score_min = p.or(
        "score_min",
        fitted.as_ref().map_or(1, |f| f.score_range.min),
    )?;
    let score_max = p.or(
        "score_max",
        fitted.as_ref().map_or(10, |f| f.score_range.max),
    )?;
    if score_min > score_max {
        bail!("invalid value for `score_min`: exceeds `score_max`");
    }
    let model = SoftmaxScoreModel::new(temperature, (score_min..=score_max).collect())?;
    let reviews: usize = p.or("reviews", 3)?;
    let bar: f64 = p.or("acceptance_bar", 6.0)?;
    let pi_max: usize = p.or("pi_max", 8)?;

    let pmfs: Vec<(Option<f64>, PaperCountPmf)> = match (pi_means, &fitted) {
        (Some(means), _) => means
            .iter()
            .map(|&m| {
                PaperCountPmf::truncated_geometric(m, pi_max)
                    .map(|pmf| (Some(m), pmf))
                    .map_err(|e| anyhow!("invalid value for `pi_mean`: {e}"))
            })
            .collect::<Result<_>>()?,
        (None, Some(f)) => {
            if p.has("pi_max") {
                bail!("key `pi_max` needs `pi_mean`");
            }
            vec![(None, f.paper_count_pmf.clone())]
        }
        (None, None) => bail!("missing required key `pi_mean` (or `fitted`)"),
    };
    pmfs.into_iter()
        .map(|(m, pmf)| {
            let s = SoftmaxSetting::new(pmf, reviews, mu, sigma, model.clone())?
                .with_acceptance_bar(bar)?;
            Ok((m, s))
        })
        .collect()
}

fn tau_pair(p: &Params, mechanism: &str) -> Result<(f64, Option<f64>)> {
    let tau_acc: f64 = p.required("tau_acc")?;
    let tau_rev: Option<f64> = p.get("tau_rev")?;
    if tau_acc.is_nan() || tau_rev.is_some_and(f64::is_nan) {
        bail!("invalid value for `tau_acc`/`tau_rev`: NaN");
    }
    if mechanism == "threshold-seq" {
        let r = tau_rev.ok_or_else(|| anyhow!("missing required key `tau_rev`"))?;
        ThresholdSeqSpec::new(tau_acc, r)
            .map_err(|_| anyhow!("invalid value for `tau_rev`: must not exceed `tau_acc`"))?;
    }
    Ok((tau_acc, tau_rev))
}

pub fn simulate(p: &Params, out: Output<'_>) -> Result<()> {
    let seed = p.seed()?;
    let samples: usize = p.or("samples", 10_000)?;
    if samples == 0 {
        bail!("invalid value for `samples`: must be positive");
    }
    let mechanism = p.raw("mechanism").unwrap_or("parallel").to_string();
    let mut w = csv_writer(out);
    w.write_record([
        "model",
        "mechanism",
        "n",
        "tau_acc",
        "tau_rev",
        "samples",
        "seed",
        "utility",
        "utility_se",
        "burden",
        "burden_se",
        "reviewed_quality",
        "reviewed_quality_se",
    ])?;
    if is_softmax(p)? {
        let (tau_acc, tau_rev) = tau_pair(p, &mechanism)?;
        let mech = match mechanism.as_str() {
            "parallel" => SoftmaxMechanism::Parallel { tau: tau_acc },
            "naive" => SoftmaxMechanism::Sequential {
                tau_acc,
                tau_rev: tau_acc,
            },
            "threshold-seq" => SoftmaxMechanism::Sequential {
                tau_acc,
                tau_rev: tau_rev.unwrap(),
            },
            other => bail!(
                "invalid value for `mechanism`: `{other}` is not available for the softmax model"
            ),
        };
        let pi: Option<Vec<f64>> = p.list("pi_mean")?;
        if pi.as_ref().is_some_and(|v| v.len() > 1) {
            bail!("invalid value for `pi_mean`: simulate takes a single value");
        }
        let (_, setting) = softmax_settings(p, pi.as_deref())?.remove(0);
        let (u, b) = softmax_population_eval(&mech, &setting, samples, seed)?;
        let (a, r) = match mech {
            SoftmaxMechanism::Parallel { tau } => (tau, f64::NEG_INFINITY),
            SoftmaxMechanism::Sequential { tau_acc, tau_rev } => (tau_acc, tau_rev),
        };
        w.write_record([
            "softmax".into(),
            mechanism.clone(),
            String::new(),
            fmt(a),
            fmt(r),
            samples.to_string(),
            seed.to_string(),
            fmt(u.estimate),
            fmt(u.stderr),
            fmt(b.estimate),
            fmt(b.stderr),
            String::new(),
            String::new(),
        ])?;
    } else {
        let (tau_acc, tau_rev) = tau_pair(p, &mechanism)?;
        let mech = match mechanism.as_str() {
            "parallel" => ThresholdMechanism::Parallel { tau: tau_acc },
            "naive" => ThresholdMechanism::Sequential { tau_acc, tau_rev: tau_acc },
            "threshold-seq" => ThresholdMechanism::Sequential {
                tau_acc,
                tau_rev: tau_rev.unwrap(),
            },
            "isotonic" => ThresholdMechanism::Isotonic { tau: tau_acc },
            other => bail!(
                "invalid value for `mechanism`: `{other}` is not a threshold mechanism; simulate supports parallel, naive, threshold-seq and isotonic"
            ),
        };
        for n in p.counts_list("n", GaussianSetting::default().n)? {
            let setting = gaussian_setting(p, n)?;
            let e = evaluate(&mech, &setting, samples, seed)?;
            let th = mech.thresholds();
            let r = match mech {
                ThresholdMechanism::Sequential { tau_rev, .. } => fmt(tau_rev),
                _ => fmt(f64::NEG_INFINITY),
            };
            w.write_record([
                "gaussian".into(),
                mechanism.clone(),
                n.to_string(),
                fmt(th[0]),
                r,
                samples.to_string(),
                seed.to_string(),
                fmt(e.utility.estimate),
                fmt(e.utility.stderr),
                fmt(e.burden.estimate),
                fmt(e.burden.stderr),
                fmt(e.reviewed_quality.estimate),
                fmt(e.reviewed_quality.stderr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn family_of(name: &str) -> Result<Family> {
    match name {
        "parallel" => Ok(Family::Parallel),
        "threshold-seq" => Ok(Family::Sequential),
        "isotonic" => Ok(Family::Isotonic),
        other => bail!("invalid value for `mechanism`: `{other}` cannot be optimized (use parallel, threshold-seq or isotonic)"),
    }
}

fn mech_cells(m: &ThresholdMechanism) -> (String, String) {
    match *m {
        ThresholdMechanism::Sequential { tau_acc, tau_rev } => (fmt(tau_acc), fmt(tau_rev)),
        ThresholdMechanism::Parallel { tau } | ThresholdMechanism::Isotonic { tau } => {
            (fmt(tau), fmt(f64::NEG_INFINITY))
        }
    }
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Parallel => "parallel",
        Family::Sequential => "threshold-seq",
        Family::Isotonic => "isotonic",
    }
}

pub fn optimize(p: &Params, out: Output<'_>) -> Result<()> {
    let seed = p.seed()?;
    let samples: usize = p.or("samples", 10_000)?;
    let iterations: usize = p.or("iterations", SgdConfig::default().iterations)?;
    let names: Vec<String> = p
        .list("mechanism")?
        .unwrap_or_else(|| vec!["parallel".into(), "threshold-seq".into(), "isotonic".into()]);
    let mut families: Vec<Family> = names.iter().map(|n| family_of(n)).collect::<Result<_>>()?;
    families.dedup();
    let given = if p.has("tau_acc") || p.has("tau_rev") {
        Some(tau_pair(p, "threshold-seq")?)
    } else {
        None
    };
    let config = SgdConfig {
        samples,
        final_samples: samples,
        iterations,
        seed,
        ..SgdConfig::default()
    };
    config.validate()?;
    let all_three = [Family::Parallel, Family::Sequential, Family::Isotonic]
        .iter()
        .all(|f| families.contains(f));

    let mut w = csv_writer(out);
    w.write_record([
        "mechanism",
        "n",
        "tau_acc",
        "tau_rev",
        "utility",
        "utility_se",
        "samples",
        "seed",
    ])?;
    for n in p.counts_list("n", GaussianSetting::default().n)? {
        let setting = gaussian_setting(p, n)?;
        let mut row =
            |name: &str, cells: (String, String), est: f64, se: f64, s: usize, sd: u64| {
                w.write_record([
                    name.to_string(),
                    n.to_string(),
                    cells.0,
                    cells.1,
                    fmt(est),
                    fmt(se),
                    s.to_string(),
                    sd.to_string(),
                ])
            };
        if all_three {
            let r = relative_utility_experiment(&setting, &config)?;
            for (m, u) in [
                (&r.parallel, &r.u_parallel),
                (&r.sequential, &r.u_sequential),
                (&r.isotonic, &r.u_isotonic),
            ] {
                row(
                    family_name(m.family()),
                    mech_cells(m),
                    u.estimate,
                    u.stderr,
                    u.samples,
                    u.seed,
                )?;
            }
            let sd = r.u_parallel.seed;
            row(
                "relative",
                (String::new(), String::new()),
                r.relative,
                r.relative_stderr,
                r.u_parallel.samples,
                sd,
            )?;
        } else {
            for &f in &families {
                let o = optimize_thresholds(f, &setting, &config)?;
                row(
                    family_name(f),
                    mech_cells(&o.mechanism),
                    o.report.estimate,
                    o.report.stderr,
                    o.report.samples,
                    o.report.seed,
                )?;
            }
        }
        if let Some((a, r)) = given {
            let m = ThresholdMechanism::Sequential {
                tau_acc: a,
                tau_rev: r.unwrap(),
            };
            let e = evaluate(&m, &setting, samples, seed)?;
            row(
                "given",
                mech_cells(&m),
                e.utility.estimate,
                e.utility.stderr,
                samples,
                seed,
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn burden(p: &Params, out: Output<'_>) -> Result<()> {
    let seed = p.seed()?;
    let d = MatchedBurdenConfig::default();
    let samples: usize = p.or("samples", d.samples)?;
    let grid_points: usize = p.or("grid_points", d.grid_points)?;
    let slack: f64 = p.or("slack", d.slack_stderrs)?;
    if grid_points < 2 {
        bail!("invalid value for `grid_points`: must be at least 2");
    }
    if !(slack >= 0.0 && slack.is_finite()) {
        bail!("invalid value for `slack`: must be nonnegative");
    }
    if samples < 2 {
        bail!("invalid value for `samples`: need at least 2");
    }
    let mut w = csv_writer(out);
    w.write_record([
        "model",
        "n",
        "pi_mean",
        "tau_parallel",
        "tau_acc",
        "tau_rev",
        "u_parallel",
        "u_parallel_se",
        "u_sequential",
        "u_sequential_se",
        "relative_burden",
        "relative_burden_se",
        "samples",
        "seed",
    ])?;
    if is_softmax(p)? {
        let means: Option<Vec<f64>> = p.list("pi_mean")?;
        for (mean, setting) in softmax_settings(p, means.as_deref())? {
            let m = softmax_matched_burden(&setting, samples, seed, grid_points, slack)?;
            let SoftmaxMechanism::Parallel { tau } = m.parallel else {
                unreachable!()
            };
            let SoftmaxMechanism::Sequential { tau_acc, tau_rev } = m.sequential else {
                unreachable!()
            };
            w.write_record([
                "softmax".into(),
                String::new(),
                mean.map(fmt).unwrap_or_default(),
                fmt(tau),
                fmt(tau_acc),
                fmt(tau_rev),
                fmt(m.u_parallel.estimate),
                fmt(m.u_parallel.stderr),
                fmt(m.u_sequential.estimate),
                fmt(m.u_sequential.stderr),
                fmt(m.relative_burden.estimate),
                fmt(m.relative_burden.stderr),
                samples.to_string(),
                seed.to_string(),
            ])?;
        }
    } else {
        let cfg = MatchedBurdenConfig {
            grid_points,
            samples,
            slack_stderrs: slack,
            sgd: SgdConfig {
                iterations: p.or("iterations", d.sgd.iterations)?,
                samples,
                final_samples: samples,
                ..d.sgd
            },
        };
        for n in p.counts_list("n", GaussianSetting::default().n)? {
            let setting = gaussian_setting(p, n)?;
            let m = matched_burden(&setting, seed, &cfg)?;
            let (tau, _) = mech_cells(&m.parallel);
            let (a, r) = mech_cells(&m.sequential);
            w.write_record([
                "gaussian".into(),
                n.to_string(),
                String::new(),
                tau,
                a,
                r,
                fmt(m.u_parallel.estimate),
                fmt(m.u_parallel.stderr),
                fmt(m.u_sequential.estimate),
                fmt(m.u_sequential.stderr),
                fmt(m.relative_burden.estimate),
                fmt(m.relative_burden.stderr),
                samples.to_string(),
                seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fit(p: &Params, out: Output<'_>) -> Result<()> {
    let seed = p.seed()?;
    let path: String = p.required("dataset")?;
    let estimator = match p.raw("estimator").unwrap_or("mean-scores") {
        "mean-scores" => PriorEstimator::MeanScores,
        "marginal" => PriorEstimator::MarginalLikelihood,
        other => {
            bail!("invalid value for `estimator`: `{other}` (expected mean-scores or marginal)")
        }
    };
    let dataset = parse_dataset(&path).with_context(|| format!("dataset {path}"))?;
    let model = fit_model_with(&dataset, seed, estimator)?;
    out.extend_from_slice(model.to_document().as_bytes());
    Ok(())
}

type MechGen = fn(&mut Stream) -> seqreview::Result<SharedOracle>;
type InstGen = fn(&mut Stream, SharedOracle) -> seqreview::Result<TruthInstance>;

fn uniform(rng: &mut Stream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

fn random_instance(rng: &mut Stream, m: SharedOracle) -> seqreview::Result<TruthInstance> {
    truth::random_instance(rng, m, 4, 3)
}

fn suite(kind: &str) -> Result<(MechGen, InstGen)> {
    Ok(match kind {
        "coinflip" => (truth::random_coin_flip, random_instance),
        "creditpool" => (truth::random_credit_pool, random_instance),
        "naive" => (
            |rng| {
                Ok(Arc::new(make_naive_sequential(ScoreFn::Threshold(
                    uniform(rng, -1.0, 1.0),
                ))?))
            },
            random_instance,
        ),
        "parallel" => (
            |rng| Ok(Arc::new(make_parallel(truth::random_monotone_step(rng))?)),
            random_instance,
        ),
        "threshold-seq" => (
            |rng| {
                let (a, b) = (uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
                Ok(Arc::new(make_threshold_sequential(ThresholdSeqSpec::new(
                    a.max(b),
                    a.min(b),
                )?)?))
            },
            random_instance,
        ),
        "isotonic" => (
            |rng| {
                Ok(Arc::new(IsotonicMechanism {
                    tau: uniform(rng, -1.0, 1.0),
                }))
            },
            random_instance,
        ),
        "bundle" => (truth::archetype_bundle, truth::archetype_bundle_instance),
        "limited-creditpool" => (
            truth::archetype_limited_credit_pool,
            truth::archetype_limited_instance,
        ),
        other => bail!("invalid value for `mechanism`: `{other}`"),
    })
}

/// Largest instance size whose per-ranking utilities are listed.
const TABLE_MAX_PAPERS: usize = 4;

pub fn truthcheck(p: &Params, out: Output<'_>) -> Result<()> {
    let seed = p.seed()?;
    let kind = p.raw("mechanism").unwrap_or("coinflip").to_string();
    let instances: usize = p.or("instances", 200)?;
    if instances == 0 {
        bail!("invalid value for `instances`: must be positive");
    }
    let (mech_gen, inst_gen) = suite(&kind)?;
    let verdicts: Vec<(TruthInstance, truth::TruthVerdict)> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = Stream::new(seed, "truthcheck", k as u64);
            let mech = mech_gen(&mut rng)?;
            let inst = inst_gen(&mut rng, mech)?;
            let v = truth::best_response(&inst)?;
            Ok((inst, v))
        })
        .collect::<seqreview::Result<_>>()?;

    let mut w = csv_writer(out);
    w.write_record([
        "mechanism",
        "instance",
        "row",
        "n",
        "permutation",
        "utility",
        "gap",
        "truthful",
    ])?;
    let mut violations = 0usize;
    let mut max_gap = 0f64;
    for (k, (inst, v)) in verdicts.iter().enumerate() {
        let n = inst.len().to_string();
        if inst.len() <= TABLE_MAX_PAPERS {
            for (perm, u) in &v.utilities {
                w.write_record([
                    kind.clone(),
                    k.to_string(),
                    "ranking".into(),
                    n.clone(),
                    perm.to_string(),
                    fmt(*u),
                    fmt(u - v.truthful_utility),
                    (*perm == v.truthful).to_string(),
                ])?;
            }
        }
        let gap = v.best_utility - v.truthful_utility;
        let best = v
            .witness
            .as_ref()
            .map_or(v.truthful.clone(), |w| w.permutation.clone());
        if !v.truthful_at_instance {
            violations += 1;
        }
        max_gap = max_gap.max(gap);
        w.write_record([
            kind.clone(),
            k.to_string(),
            "best".into(),
            n,
            best.to_string(),
            fmt(v.best_utility),
            fmt(gap),
            v.truthful_at_instance.to_string(),
        ])?;
    }
    w.write_record([
        kind.clone(),
        String::new(),
        "suite".into(),
        String::new(),
        String::new(),
        violations.to_string(),
        fmt(max_gap),
        (violations == 0).to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn join(v: &[impl ToString]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

pub fn mrs(p: &Params, out: Output<'_>) -> Result<()> {
    p.seed()?;
    let mut w = csv_writer(out);
    w.write_record([
        "row",
        "counts",
        "probs",
        "rewards",
        "i",
        "j",
        "mrs_parallel",
        "mrs_sequential",
        "dominates",
        "strict",
        "u_seq_quality",
        "u_seq_quantity",
        "u_par_quality",
        "u_par_quantity",
    ])?;

    // One high-effort paper against three low-effort ones.
    let base = EffortProfile::binary(0, 0, 1.0, 0.5, 1.0, 1.0)?;
    let c = verify_substitution(&base, 0, 1, 1, 3)?;
    w.write_record([
        "counterexample".into(),
        "1;0 vs 0;3".into(),
        "1;0.5".into(),
        "1;1".into(),
        "0".into(),
        "1".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        fmt(c.sequential.0),
        fmt(c.sequential.1),
        fmt(c.parallel.0),
        fmt(c.parallel.1),
    ])?;

    let mut dominance = |profile: &EffortProfile, row: &str| -> Result<()> {
        for i in 0..profile.levels() {
            for j in i + 1..profile.levels() {
                let v = verify_mrs_dominance(profile, i, j)?;
                w.write_record([
                    row.to_string(),
                    join(profile.counts()),
                    join(profile.probs()),
                    join(profile.rewards()),
                    i.to_string(),
                    j.to_string(),
                    fmt(v.mrs_parallel),
                    fmt(v.mrs_sequential),
                    v.holds.to_string(),
                    v.strict.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?;
            }
        }
        Ok(())
    };

    match p.list::<f64>("probs")? {
        Some(probs) => {
            if p.has("grid_points") {
                bail!("key `grid_points` applies to the binary grid only; drop `probs`");
            }
            let m = probs.len();
            let counts = p.list::<usize>("counts")?.unwrap_or_else(|| vec![0; m]);
            let rewards = p.list::<f64>("rewards")?.unwrap_or_else(|| vec![1.0; m]);
            let profile = EffortProfile::new(counts, probs, rewards)?;
            dominance(&profile, "profile")?;
        }
        None => {
            if p.has("rewards") {
                bail!("key `rewards` needs `probs`");
            }
            let counts = p.list::<usize>("counts")?.unwrap_or_else(|| vec![1, 1]);
            if counts.len() != 2 {
                bail!("invalid value for `counts`: the binary grid takes two counts");
            }
            let g: usize = p.or("grid_points", 10)?;
            if g < 2 {
                bail!("invalid value for `grid_points`: must be at least 2");
            }
            for h in 1..=g {
                for l in 1..h {
                    let (ph, pl) = (h as f64 / g as f64, l as f64 / g as f64);
                    let profile = EffortProfile::binary(counts[0], counts[1], ph, pl, 1.0, 1.0)?;
                    dominance(&profile, "binary")?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
