//! Monte-Carlo evaluation of threshold mechanisms.
//!
//! In the Gaussian setting each author has `n` papers with qualities drawn
//! from `N(mu_q, sigma_q)` and one review score `q + N(0, sigma_r)` per
//! paper. Parallel and sequential acceptance probabilities are integrated
//! over the review noise in closed form; the isotonic mechanism averages
//! over explicit noise draws. Sample `k` always uses the stream
//! `(seed, label, k)`, so estimates do not depend on the worker count.

pub mod softmax;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::pava_nonincreasing;
use crate::model::{check_prior, draw_sorted_into};
use crate::rng::Stream;
use crate::stats::{mean_stderr, normal_sf, pairwise_sum, ratio_stderr};
use rand_distr::{Distribution, StandardNormal};

/// Noise draws per quality sample for the isotonic mechanism.
pub const ISOTONIC_NOISE_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianSetting {
    pub n: usize,
    pub mu_q: f64,
    pub sigma_q: f64,
    pub sigma_r: f64,
}

impl Default for GaussianSetting {
    fn default() -> Self {
        GaussianSetting {
            n: 5,
            mu_q: -1.0,
            sigma_q: 2.0,
            sigma_r: 1.0,
        }
    }
}

impl GaussianSetting {
    pub fn new(n: usize, mu_q: f64, sigma_q: f64, sigma_r: f64) -> Result<Self> {
        let s = GaussianSetting {
            n,
            mu_q,
            sigma_q,
            sigma_r,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_prior(self.mu_q, self.sigma_q, self.n)?;
        if !(self.sigma_r > 0.0 && self.sigma_r.is_finite()) {
            return Err(Error::param(
                "sigma_r",
                format!("must be positive, got {}", self.sigma_r),
            ));
        }
        Ok(())
    }

    /// Box that optimizers keep thresholds in.
    pub fn threshold_range(&self) -> (f64, f64) {
        let spread = 4.0 * (self.sigma_q + self.sigma_r);
        (self.mu_q - spread, self.mu_q + spread)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ThresholdMechanism {
    Parallel {
        tau: f64,
    },
    Sequential {
        tau_acc: f64,
        tau_rev: f64,
    },
    /// Isotonic adjustment with the true ranking, then threshold.
    Isotonic {
        tau: f64,
    },
}

impl ThresholdMechanism {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdMechanism::Sequential { tau_acc, tau_rev } => {
                crate::mechanisms::ThresholdSeqSpec::new(tau_acc, tau_rev)?;
            }
            ThresholdMechanism::Parallel { tau } | ThresholdMechanism::Isotonic { tau } => {
                if tau.is_nan() {
                    return Err(Error::param("tau", "must not be NaN"));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self {
            ThresholdMechanism::Parallel { .. } => Family::Parallel,
            ThresholdMechanism::Sequential { .. } => Family::Sequential,
            ThresholdMechanism::Isotonic { .. } => Family::Isotonic,
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        match *self {
            ThresholdMechanism::Parallel { tau } | ThresholdMechanism::Isotonic { tau } => {
                vec![tau]
            }
            ThresholdMechanism::Sequential { tau_acc, tau_rev } => vec![tau_acc, tau_rev],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Family {
    Parallel,
    Sequential,
    Isotonic,
}

impl Family {
    pub fn build(self, theta: &[f64]) -> ThresholdMechanism {
        match self {
            Family::Parallel => ThresholdMechanism::Parallel { tau: theta[0] },
            Family::Sequential => ThresholdMechanism::Sequential {
                tau_acc: theta[0],
                tau_rev: theta[1],
            },
            Family::Isotonic => ThresholdMechanism::Isotonic { tau: theta[0] },
        }
    }

    pub fn dims(self) -> usize {
        match self {
            Family::Sequential => 2,
            _ => 1,
        }
    }
}

/// Which quantity enters the Gaussian CDF in the closed-form acceptance
/// probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum FormulaVariant {
    /// The true quality; the review noise is integrated out.
    #[default]
    Integrated,
    /// A realized review score `q + ε`, as the formulas are printed.
    LiteralScores,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `Pr(q + ε >= tau)` for `ε ~ N(0, sigma_r)`.
pub fn parallel_accept_prob(quality: f64, tau: f64, sigma_r: f64) -> f64 {
    if tau == f64::NEG_INFINITY {
        return 1.0;
    }
    if tau == f64::INFINITY {
        return 0.0;
    }
    normal_sf((tau - quality) / sigma_r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequentialProbs {
    /// `Pr(paper i is accepted)`.
    pub accept: Vec<f64>,
    /// `Pr(paper i is reviewed)`.
    pub review: Vec<f64>,
}

/// Closed-form acceptance and review probabilities of the threshold
/// sequential mechanism for qualities in review order.
pub fn sequential_accept_probs(
    qualities: &[f64],
    tau_acc: f64,
    tau_rev: f64,
    sigma_r: f64,
) -> Result<SequentialProbs> {
    crate::mechanisms::ThresholdSeqSpec::new(tau_acc, tau_rev)?;
    if !(sigma_r > 0.0) {
        return Err(Error::param("sigma_r", "must be positive"));
    }
    let mut accept = Vec::with_capacity(qualities.len());
    let mut review = Vec::with_capacity(qualities.len());
    fill_sequential(
        qualities,
        tau_acc,
        tau_rev,
        sigma_r,
        &mut accept,
        &mut review,
    );
    Ok(SequentialProbs { accept, review })
}

fn fill_sequential(
    q: &[f64],
    tau_acc: f64,
    tau_rev: f64,
    sigma_r: f64,
    accept: &mut Vec<f64>,
    review: &mut Vec<f64>,
) {
    let mut reach = 1.0;
    for &qi in q {
        review.push(reach);
        accept.push(reach * parallel_accept_prob(qi, tau_acc, sigma_r));
        reach *= parallel_accept_prob(qi, tau_rev, sigma_r);
    }
}

/// Per-sample contributions: utility, reviewed count, reviewed quality.
#[derive(Clone, Copy, Debug, Default)]
struct SampleMetrics {
    utility: f64,
    reviewed: f64,
    reviewed_quality: f64,
}

/// Quality draws shared by every mechanism evaluated on them.
#[derive(Clone, Debug)]
pub struct QualitySamples {
    setting: GaussianSetting,
    seed: u64,
    data: Vec<f64>,
}

impl QualitySamples {
    pub fn draw(setting: &GaussianSetting, samples: usize, seed: u64) -> Result<Self> {
        setting.validate()?;
        if samples == 0 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        let n = setting.n;
        let chunks: Vec<Vec<f64>> = (0..samples)
            .into_par_iter()
            .map(|k| {
                let mut rng = Stream::new(seed, "gaussian-qualities", k as u64);
                let mut q = Vec::with_capacity(n);
                draw_sorted_into(&mut rng, setting.mu_q, setting.sigma_q, n, &mut q);
                q
            })
            .collect();
        Ok(QualitySamples {
            setting: *setting,
            seed,
            data: chunks.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.setting.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn setting(&self) -> &GaussianSetting {
        &self.setting
    }

    /// Qualities of sample `k`, in descending order.
    pub fn sample(&self, k: usize) -> &[f64] {
        let n = self.setting.n;
        &self.data[k * n..(k + 1) * n]
    }

    fn metrics(
        &self,
        mech: &ThresholdMechanism,
        variant: FormulaVariant,
        k: usize,
    ) -> SampleMetrics {
        let q = self.sample(k);
        let n = q.len();
        let sigma_r = self.setting.sigma_r;
        let nf = n as f64;
        match *mech {
            ThresholdMechanism::Isotonic { tau } => {
                let mut rng = Stream::new(self.seed, "isotonic-noise", k as u64);
                let mut scores = vec![0.0; n];
                let mut total = 0.0;
                for _ in 0..ISOTONIC_NOISE_DRAWS {
                    for (s, &qi) in scores.iter_mut().zip(q) {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *s = qi + sigma_r * e;
                    }
                    let adjusted = pava_nonincreasing(&scores);
                    total += adjusted
                        .iter()
                        .zip(q)
                        .filter(|(a, _)| **a >= tau)
                        .map(|(_, qi)| qi)
                        .sum::<f64>();
                }
                SampleMetrics {
                    utility: total / ISOTONIC_NOISE_DRAWS as f64 / nf,
                    reviewed: 1.0,
                    reviewed_quality: q.iter().sum::<f64>() / nf,
                }
            }
            ThresholdMechanism::Parallel { tau } => {
                let eff = self.effective(q, variant, k);
                let util: f64 = q
                    .iter()
                    .zip(&eff)
                    .map(|(qi, ei)| qi * parallel_accept_prob(*ei, tau, sigma_r))
                    .sum();
                SampleMetrics {
                    utility: util / nf,
                    reviewed: 1.0,
                    reviewed_quality: q.iter().sum::<f64>() / nf,
                }
            }
            ThresholdMechanism::Sequential { tau_acc, tau_rev } => {
                let eff = self.effective(q, variant, k);
                let mut accept = Vec::with_capacity(n);
                let mut review = Vec::with_capacity(n);
                fill_sequential(&eff, tau_acc, tau_rev, sigma_r, &mut accept, &mut review);
                SampleMetrics {
                    utility: q.iter().zip(&accept).map(|(a, b)| a * b).sum::<f64>() / nf,
                    reviewed: review.iter().sum::<f64>() / nf,
                    reviewed_quality: q.iter().zip(&review).map(|(a, b)| a * b).sum::<f64>() / nf,
                }
            }
        }
    }

    fn effective(&self, q: &[f64], variant: FormulaVariant, k: usize) -> Vec<f64> {
        match variant {
            FormulaVariant::Integrated => q.to_vec(),
            FormulaVariant::LiteralScores => {
                let mut rng = Stream::new(self.seed, "literal-noise", k as u64);
                q.iter()
                    .map(|qi| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        qi + self.setting.sigma_r * e
                    })
                    .collect()
            }
        }
    }

    fn all_metrics(
        &self,
        mech: &ThresholdMechanism,
        variant: FormulaVariant,
    ) -> Vec<SampleMetrics> {
        (0..self.len())
            .into_par_iter()
            .map(|k| self.metrics(mech, variant, k))
            .collect()
    }

    /// Per-sample normalized utilities.
    pub fn utilities(&self, mech: &ThresholdMechanism) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|k| self.metrics(mech, FormulaVariant::Integrated, k).utility)
            .collect()
    }

    pub fn evaluate(&self, mech: &ThresholdMechanism) -> Result<Evaluation> {
        self.evaluate_with(mech, FormulaVariant::Integrated)
    }

    pub fn evaluate_with(
        &self,
        mech: &ThresholdMechanism,
        variant: FormulaVariant,
    ) -> Result<Evaluation> {
        mech.validate()?;
        let m = self.all_metrics(mech, variant);
        let report = |(estimate, stderr): (f64, f64)| EvalReport {
            estimate,
            stderr,
            samples: m.len(),
            seed: self.seed,
        };
        let util: Vec<f64> = m.iter().map(|x| x.utility).collect();
        let burden: Vec<f64> = m.iter().map(|x| x.reviewed).collect();
        let rq: Vec<f64> = m.iter().map(|x| x.reviewed_quality).collect();
        Ok(Evaluation {
            utility: report(mean_stderr(&util)),
            burden: report(mean_stderr(&burden)),
            reviewed_quality: report(ratio_stderr(&rq, &burden)),
        })
    }
}

/// Utility and burden are per submitted paper; reviewed quality is the
/// mean quality of a reviewed paper.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub utility: EvalReport,
    pub burden: EvalReport,
    pub reviewed_quality: EvalReport,
}

pub fn evaluate(
    mech: &ThresholdMechanism,
    setting: &GaussianSetting,
    samples: usize,
    seed: u64,
) -> Result<Evaluation> {
    QualitySamples::draw(setting, samples, seed)?.evaluate(mech)
}

pub fn mc_conference_utility(
    mech: &ThresholdMechanism,
    setting: &GaussianSetting,
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    Ok(evaluate(mech, setting, samples, seed)?.utility)
}

pub fn mc_review_burden(
    mech: &ThresholdMechanism,
    setting: &GaussianSetting,
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    Ok(evaluate(mech, setting, samples, seed)?.burden)
}

pub fn avg_reviewed_quality(
    mech: &ThresholdMechanism,
    setting: &GaussianSetting,
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    Ok(evaluate(mech, setting, samples, seed)?.reviewed_quality)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SgdConfig {
    /// Central finite-difference half-width.
    pub fd_step: f64,
    /// Step size at iteration `t` is `step_size / sqrt(t)`.
    pub step_size: f64,
    pub iterations: usize,
    /// Quality samples per gradient estimate.
    pub samples: usize,
    /// Quality samples for the final comparison of iterates.
    pub final_samples: usize,
    /// Grid points per dimension for the warm start.
    pub warm_start_points: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            fd_step: 0.05,
            step_size: 0.2,
            iterations: 200,
            samples: 10_000,
            final_samples: 10_000,
            warm_start_points: 25,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0 && self.step_size > 0.0) {
            return Err(Error::param("sgd", "steps must be positive"));
        }
        if self.samples == 0 || self.final_samples == 0 || self.warm_start_points < 2 {
            return Err(Error::param(
                "sgd",
                "sample counts and grid size must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Optimized {
    pub mechanism: ThresholdMechanism,
    /// Utility of the chosen iterate on the final samples.
    pub report: EvalReport,
    /// Whether stochastic gradient steps beat the warm start.
    pub improved: bool,
}

fn project(family: Family, theta: &mut [f64], lo: f64, hi: f64) {
    for t in theta.iter_mut() {
        *t = t.clamp(lo, hi);
    }
    if family == Family::Sequential && theta[0] < theta[1] {
        let mid = 0.5 * (theta[0] + theta[1]);
        theta[0] = mid;
        theta[1] = mid;
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

fn sub_seed(seed: u64, label: &str, index: u64) -> u64 {
    use rand::RngCore;
    Stream::new(seed, label, index).next_u64()
}

/// Warm-started stochastic gradient ascent on the conference utility.
///
/// The start is the best point of a coarse grid. Each iteration draws
/// fresh quality samples and evaluates both sides of every central
/// difference on them. The start, every tenth iterate and the last iterate
/// are then compared on a separate sample set and the best is returned.
pub fn optimize_thresholds(
    family: Family,
    setting: &GaussianSetting,
    config: &SgdConfig,
) -> Result<Optimized> {
    setting.validate()?;
    config.validate()?;
    let (lo, hi) = setting.threshold_range();
    let utility = |samples: &QualitySamples, theta: &[f64]| -> f64 {
        let u = samples.utilities(&family.build(theta));
        pairwise_sum(&u) / u.len() as f64
    };

    let warm = QualitySamples::draw(
        setting,
        config.samples,
        sub_seed(config.seed, "warm-start", 0),
    )?;
    let grid = linspace(lo, hi, config.warm_start_points);
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    match family {
        Family::Sequential => {
            for &a in &grid {
                for &r in grid.iter().filter(|&&r| r <= a) {
                    candidates.push(vec![a, r]);
                }
            }
        }
        _ => candidates.extend(grid.iter().map(|&t| vec![t])),
    }
    let scores: Vec<f64> = candidates.iter().map(|c| utility(&warm, c)).collect();
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if *s > scores[b] { i } else { b });
    let start = candidates[best].clone();

    let mut theta = start.clone();
    let mut kept = vec![start.clone()];
    for t in 1..=config.iterations {
        let samples = QualitySamples::draw(
            setting,
            config.samples,
            sub_seed(config.seed, "sgd-iteration", t as u64),
        )?;
        let mut grad = vec![0.0; theta.len()];
        for d in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[d] += config.fd_step;
            minus[d] -= config.fd_step;
            // Probes off the feasible set are projected back onto it.
            project(family, &mut plus, lo, hi);
            project(family, &mut minus, lo, hi);
            grad[d] =
                (utility(&samples, &plus) - utility(&samples, &minus)) / (2.0 * config.fd_step);
        }
        let eta = config.step_size / (t as f64).sqrt();
        for (x, g) in theta.iter_mut().zip(&grad) {
            *x += eta * g;
        }
        project(family, &mut theta, lo, hi);
        if t % 10 == 0 || t == config.iterations {
            kept.push(theta.clone());
        }
    }

    let final_samples = QualitySamples::draw(
        setting,
        config.final_samples,
        sub_seed(config.seed, "final", 0),
    )?;
    let mut best_idx = 0;
    let mut best_eval = final_samples.evaluate(&family.build(&kept[0]))?.utility;
    for (i, th) in kept.iter().enumerate().skip(1) {
        let e = final_samples.evaluate(&family.build(th))?.utility;
        if e.estimate > best_eval.estimate {
            best_eval = e;
            best_idx = i;
        }
    }
    Ok(Optimized {
        mechanism: family.build(&kept[best_idx]),
        report: best_eval,
        improved: best_idx > 0,
    })
}

/// `(U_s - U_p) / (U_i - U_p)`.
pub fn relative_utility(u_p: f64, u_s: f64, u_i: f64) -> Result<f64> {
    if u_i == u_p {
        return Err(Error::param("u_i", "upper bound equals the baseline"));
    }
    Ok((u_s - u_p) / (u_i - u_p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelativeUtilityReport {
    pub parallel: ThresholdMechanism,
    pub sequential: ThresholdMechanism,
    pub isotonic: ThresholdMechanism,
    pub u_parallel: EvalReport,
    pub u_sequential: EvalReport,
    pub u_isotonic: EvalReport,
    pub relative: f64,
    /// Delta-method standard error of `relative` over paired samples.
    pub relative_stderr: f64,
}

/// Optimizes all three families and compares them on a common sample set
/// of `config.final_samples` qualities.
pub fn relative_utility_experiment(
    setting: &GaussianSetting,
    config: &SgdConfig,
) -> Result<RelativeUtilityReport> {
    let parallel = optimize_thresholds(Family::Parallel, setting, config)?.mechanism;
    let sequential = optimize_thresholds(Family::Sequential, setting, config)?.mechanism;
    let isotonic = optimize_thresholds(Family::Isotonic, setting, config)?.mechanism;
    let eval_seed = sub_seed(config.seed, "evaluation", 0);
    let samples = QualitySamples::draw(setting, config.final_samples, eval_seed)?;
    let up = samples.utilities(&parallel);
    let us = samples.utilities(&sequential);
    let ui = samples.utilities(&isotonic);
    let report = |v: &[f64]| {
        let (estimate, stderr) = mean_stderr(v);
        EvalReport {
            estimate,
            stderr,
            samples: v.len(),
            seed: eval_seed,
        }
    };
    let ds: Vec<f64> = us.iter().zip(&up).map(|(s, p)| s - p).collect();
    let di: Vec<f64> = ui.iter().zip(&up).map(|(i, p)| i - p).collect();
    let (relative, relative_stderr) = ratio_stderr(&ds, &di);
    Ok(RelativeUtilityReport {
        parallel,
        sequential,
        isotonic,
        u_parallel: report(&up),
        u_sequential: report(&us),
        u_isotonic: report(&ui),
        relative,
        relative_stderr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatchedBurdenConfig {
    pub grid_points: usize,
    pub samples: usize,
    /// Feasibility slack in standard errors of the paired utility gap.
    pub slack_stderrs: f64,
    pub sgd: SgdConfig,
}

impl Default for MatchedBurdenConfig {
    fn default() -> Self {
        MatchedBurdenConfig {
            grid_points: 41,
            samples: 10_000,
            slack_stderrs: 2.0,
            sgd: SgdConfig {
                iterations: 100,
                ..SgdConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchedBurden {
    pub parallel: ThresholdMechanism,
    pub sequential: ThresholdMechanism,
    pub u_parallel: EvalReport,
    pub u_sequential: EvalReport,
    /// `B^s / B^p`.
    pub relative_burden: EvalReport,
}

/// Smallest sequential review burden whose utility stays within the slack
/// of the optimized parallel utility, found on a grid and refined by
/// coordinate search.
pub fn matched_burden(
    setting: &GaussianSetting,
    seed: u64,
    config: &MatchedBurdenConfig,
) -> Result<MatchedBurden> {
    setting.validate()?;
    let sgd = SgdConfig { seed, ..config.sgd };
    let parallel = optimize_thresholds(Family::Parallel, setting, &sgd)?.mechanism;
    let eval_seed = sub_seed(seed, "matched-evaluation", 0);
    let samples = QualitySamples::draw(setting, config.samples, eval_seed)?;
    let up = samples.utilities(&parallel);
    let u_parallel = {
        let (estimate, stderr) = mean_stderr(&up);
        EvalReport {
            estimate,
            stderr,
            samples: up.len(),
            seed: eval_seed,
        }
    };

    // Burden and feasibility for one candidate.
    let assess = |tau_acc: f64, tau_rev: f64| -> Option<f64> {
        if tau_acc < tau_rev {
            return None;
        }
        let mech = ThresholdMechanism::Sequential { tau_acc, tau_rev };
        let m = samples.all_metrics(&mech, FormulaVariant::Integrated);
        let diff: Vec<f64> = m.iter().zip(&up).map(|(x, p)| x.utility - p).collect();
        let (d, se) = mean_stderr(&diff);
        if d < -config.slack_stderrs * se {
            return None;
        }
        let b: Vec<f64> = m.iter().map(|x| x.reviewed).collect();
        Some(pairwise_sum(&b) / b.len() as f64)
    };

    let (lo, hi) = setting.threshold_range();
    let grid = linspace(lo, hi, config.grid_points);
    let ThresholdMechanism::Parallel { tau: tau_p } = parallel else {
        unreachable!()
    };
    // The parallel optimum is always feasible.
    let mut best = (tau_p, f64::NEG_INFINITY, 1.0);
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|&a| grid.iter().filter(move |&&r| r <= a).map(move |&r| (a, r)))
        .collect();
    let assessed: Vec<Option<f64>> = pairs.iter().map(|&(a, r)| assess(a, r)).collect();
    for (&(a, r), b) in pairs.iter().zip(&assessed) {
        if let Some(b) = b {
            if *b < best.2 {
                best = (a, r, *b);
            }
        }
    }

    let mut h = (hi - lo) / (config.grid_points - 1) as f64;
    while h > 1e-3 {
        let mut moved = false;
        for (da, dr) in [
            (h, 0.0),
            (-h, 0.0),
            (0.0, h),
            (0.0, -h),
            (h, h),
            (-h, -h),
            (h, -h),
            (-h, h),
        ] {
            let (a, r) = (
                best.0 + da,
                if best.1.is_finite() {
                    best.1 + dr
                } else {
                    lo + dr
                },
            );
            if let Some(b) = assess(a, r) {
                if b < best.2 - 1e-12 {
                    best = (a, r, b);
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }

    let sequential = ThresholdMechanism::Sequential {
        tau_acc: best.0,
        tau_rev: best.1,
    };
    let eval = samples.evaluate(&sequential)?;
    Ok(MatchedBurden {
        parallel,
        sequential,
        u_parallel,
        u_sequential: eval.utility,
        relative_burden: eval.burden,
    })
}
