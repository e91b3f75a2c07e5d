//! Population evaluation under the softmax score model.
//!
//! Every paper gets `k` integer scores; accept and continue decisions
//! compare the posterior expected quality against thresholds. A paper's
//! contribution to conference utility is its quality minus
//! `acceptance_bar`, so that accepting everything is not trivially optimal
//! on a positive score scale.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::EvalReport;
use crate::error::{Error, Result};
use crate::model::SoftmaxScoreModel;
use crate::rng::Stream;
use crate::stats::{mean_stderr, ratio_stderr};

pub const POSTERIOR_GRID_POINTS: usize = 2001;
pub const POSTERIOR_GRID_HALF_WIDTH: f64 = 6.0;

/// Distribution of the number of papers per author on `{1, ..., len}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaperCountPmf {
    probs: Vec<f64>,
}

impl PaperCountPmf {
    /// `probs[i]` is the probability of `i + 1` papers.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::param("paper_count_pmf", "must be nonempty"));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::param(
                "paper_count_pmf",
                "probabilities must be nonnegative",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(
                "paper_count_pmf",
                format!("sums to {total}, not 1"),
            ));
        }
        let mut probs = probs;
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        Ok(PaperCountPmf { probs })
    }

    pub fn point(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        let mut probs = vec![0.0; n];
        probs[n - 1] = 1.0;
        Ok(PaperCountPmf { probs })
    }

    /// Empirical distribution of positive counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::param("counts", "must be nonempty"));
        }
        if counts.contains(&0) {
            return Err(Error::param("counts", "every count must be positive"));
        }
        let max = *counts.iter().max().unwrap();
        let mut tally = vec![0usize; max];
        for &c in counts {
            tally[c - 1] += 1;
        }
        let total = counts.len() as f64;
        Ok(PaperCountPmf {
            probs: tally.into_iter().map(|t| t as f64 / total).collect(),
        })
    }

    /// `Pr(n) ∝ theta^(n-1)` on `{1, ..., max}` with the given mean.
    pub fn truncated_geometric(mean: f64, max: usize) -> Result<Self> {
        if max == 0 || !(mean >= 1.0 && mean <= max as f64) {
            return Err(Error::param(
                "mean",
                format!("must lie in [1, {max}], got {mean}"),
            ));
        }
        if max == 1 {
            return Self::point(1);
        }
        let probs_for = |theta: f64| -> Vec<f64> {
            let w: Vec<f64> = (0..max).map(|i| theta.powi(i as i32)).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        };
        let mean_for = |theta: f64| -> f64 {
            probs_for(theta)
                .iter()
                .enumerate()
                .map(|(i, p)| (i + 1) as f64 * p)
                .sum()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while mean_for(hi) < mean {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_for(mid) < mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut probs = probs_for(0.5 * (lo + hi));
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        Ok(PaperCountPmf { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, n: usize) -> f64 {
        if n == 0 || n > self.probs.len() {
            0.0
        } else {
            self.probs[n - 1]
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut Stream) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        self.probs.iter().rposition(|p| *p > 0.0).unwrap() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoftmaxSetting {
    pub paper_count_pmf: PaperCountPmf,
    pub reviews_per_paper: usize,
    pub mu_q: f64,
    pub sigma_q: f64,
    pub model: SoftmaxScoreModel,
    pub acceptance_bar: f64,
}

impl SoftmaxSetting {
    pub fn new(
        paper_count_pmf: PaperCountPmf,
        reviews_per_paper: usize,
        mu_q: f64,
        sigma_q: f64,
        model: SoftmaxScoreModel,
    ) -> Result<Self> {
        let s = SoftmaxSetting {
            paper_count_pmf,
            reviews_per_paper,
            mu_q,
            sigma_q,
            model,
            acceptance_bar: 6.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_acceptance_bar(mut self, bar: f64) -> Result<Self> {
        if !bar.is_finite() {
            return Err(Error::param("acceptance_bar", "must be finite"));
        }
        self.acceptance_bar = bar;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        crate::model::check_prior(self.mu_q, self.sigma_q, 1)?;
        if self.reviews_per_paper == 0 {
            return Err(Error::param("reviews_per_paper", "must be at least 1"));
        }
        Ok(())
    }
}

/// Quadrature grid with the log-likelihood of every score cached.
#[derive(Clone, Debug)]
pub struct PosteriorGrid {
    grid: Vec<f64>,
    log_prior: Vec<f64>,
    /// `log_lik[s][g]` for score index `s` and grid point `g`.
    log_lik: Vec<Vec<f64>>,
    score_set: Vec<i32>,
    /// Log of the grid spacing times the prior normalizing constant.
    log_weight: f64,
}

impl PosteriorGrid {
    pub fn new(mu_q: f64, sigma_q: f64, model: &SoftmaxScoreModel) -> Result<Self> {
        crate::model::check_prior(mu_q, sigma_q, 1)?;
        let m = POSTERIOR_GRID_POINTS;
        let lo = mu_q - POSTERIOR_GRID_HALF_WIDTH * sigma_q;
        let h = 2.0 * POSTERIOR_GRID_HALF_WIDTH * sigma_q / (m - 1) as f64;
        let grid: Vec<f64> = (0..m).map(|g| lo + h * g as f64).collect();
        let log_prior = grid
            .iter()
            .map(|q| {
                let z = (q - mu_q) / sigma_q;
                -0.5 * z * z
            })
            .collect();
        let per_point: Vec<Vec<f64>> = grid.iter().map(|&q| model.log_pmf(q)).collect();
        let s = model.score_set().len();
        let log_lik = (0..s)
            .map(|si| per_point.iter().map(|row| row[si]).collect())
            .collect();
        Ok(PosteriorGrid {
            grid,
            log_prior,
            log_lik,
            score_set: model.score_set().to_vec(),
            log_weight: h.ln() - sigma_q.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln(),
        })
    }

    pub fn score_index(&self, score: i32) -> Result<usize> {
        self.score_set
            .binary_search(&score)
            .map_err(|_| Error::param("scores", format!("{score} is not in the score set")))
    }

    /// Posterior mean given score indices into the score set.
    pub fn mean_by_index(&self, indices: &[usize]) -> f64 {
        let logw: Vec<f64> = (0..self.grid.len())
            .map(|g| self.log_prior[g] + indices.iter().map(|&s| self.log_lik[s][g]).sum::<f64>())
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (q, l) in self.grid.iter().zip(&logw) {
            let w = (l - max).exp();
            num += q * w;
            den += w;
        }
        num / den
    }

    /// `log ∫ Π Pr(s | q) N(q; mu_q, sigma_q) dq` by the same quadrature.
    pub fn log_evidence_by_index(&self, indices: &[usize]) -> f64 {
        let logw: Vec<f64> = (0..self.grid.len())
            .map(|g| self.log_prior[g] + indices.iter().map(|&s| self.log_lik[s][g]).sum::<f64>())
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + logw.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + self.log_weight
    }

    pub fn mean(&self, scores: &[i32]) -> Result<f64> {
        let idx = scores
            .iter()
            .map(|&s| self.score_index(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.mean_by_index(&idx))
    }
}

/// `E[q | scores]` under a Gaussian prior, by quadrature on
/// `POSTERIOR_GRID_POINTS` uniform points over `mu_q ± 6 sigma_q`.
pub fn posterior_expected_quality(
    scores: &[i32],
    mu_q: f64,
    sigma_q: f64,
    model: &SoftmaxScoreModel,
) -> Result<f64> {
    PosteriorGrid::new(mu_q, sigma_q, model)?.mean(scores)
}

/// Posterior means for every multiset of `k` scores.
#[derive(Clone, Debug)]
pub struct PosteriorTable {
    radix: usize,
    values: HashMap<u64, f64>,
}

const MAX_TABLE_ENTRIES: usize = 1_000_000;

impl PosteriorTable {
    pub fn new(setting: &SoftmaxSetting) -> Result<Self> {
        setting.validate()?;
        let grid = PosteriorGrid::new(setting.mu_q, setting.sigma_q, &setting.model)?;
        let radix = setting.model.score_set().len();
        let k = setting.reviews_per_paper;
        let mut multisets = Vec::new();
        let mut cur = vec![0usize; k];
        loop {
            multisets.push(cur.clone());
            if multisets.len() > MAX_TABLE_ENTRIES {
                return Err(Error::param(
                    "reviews_per_paper",
                    "too many score multisets to tabulate",
                ));
            }
            // Next nondecreasing sequence.
            let Some(pos) = (0..k).rev().find(|&i| cur[i] + 1 < radix) else {
                break;
            };
            let v = cur[pos] + 1;
            for c in &mut cur[pos..] {
                *c = v;
            }
        }
        let values = multisets
            .par_iter()
            .map(|m| (encode(m, radix), grid.mean_by_index(m)))
            .collect();
        Ok(PosteriorTable { radix, values })
    }

    /// Posterior mean for score indices in any order.
    pub fn lookup(&self, indices: &mut [usize]) -> f64 {
        indices.sort_unstable();
        self.values[&encode(indices, self.radix)]
    }

    /// Distinct posterior means, ascending.
    pub fn distinct_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.values().copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

fn encode(indices: &[usize], radix: usize) -> u64 {
    indices
        .iter()
        .fold(0u64, |acc, &i| acc * radix as u64 + i as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SoftmaxMechanism {
    Parallel { tau: f64 },
    Sequential { tau_acc: f64, tau_rev: f64 },
}

impl SoftmaxMechanism {
    fn thresholds(&self) -> (f64, f64) {
        match *self {
            SoftmaxMechanism::Parallel { tau } => (tau, f64::NEG_INFINITY),
            SoftmaxMechanism::Sequential { tau_acc, tau_rev } => (tau_acc, tau_rev),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, r) = self.thresholds();
        crate::mechanisms::ThresholdSeqSpec::new(a, r).map(|_| ())
    }
}

/// Simulated authors: qualities in descending order with the posterior
/// mean of each paper's scores.
#[derive(Clone, Debug)]
pub struct SoftmaxSamples {
    seed: u64,
    bar: f64,
    /// `(quality, posterior mean)` per paper.
    papers: Vec<(f64, f64)>,
    offsets: Vec<usize>,
}

impl SoftmaxSamples {
    pub fn draw(setting: &SoftmaxSetting, authors: usize, seed: u64) -> Result<Self> {
        if authors == 0 {
            return Err(Error::param("author_samples", "must be at least 1"));
        }
        let table = PosteriorTable::new(setting)?;
        let radix = setting.model.score_set().len();
        let per_author: Vec<Vec<(f64, f64)>> = (0..authors)
            .into_par_iter()
            .map(|a| {
                let mut rng = Stream::new(seed, "softmax-author", a as u64);
                let n = setting.paper_count_pmf.sample(&mut rng);
                let mut q: Vec<f64> = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        setting.mu_q + setting.sigma_q * z
                    })
                    .collect();
                q.sort_by(|a, b| b.total_cmp(a));
                let mut idx = vec![0usize; setting.reviews_per_paper];
                q.into_iter()
                    .map(|qi| {
                        let pmf = setting.model.pmf(qi);
                        for slot in idx.iter_mut() {
                            let u = rng.uniform();
                            let mut acc = 0.0;
                            *slot = radix - 1;
                            for (s, p) in pmf.iter().enumerate() {
                                acc += p;
                                if u < acc {
                                    *slot = s;
                                    break;
                                }
                            }
                        }
                        (qi, table.lookup(&mut idx))
                    })
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(authors + 1);
        offsets.push(0);
        let mut papers = Vec::new();
        for a in per_author {
            papers.extend(a);
            offsets.push(papers.len());
        }
        Ok(SoftmaxSamples {
            seed,
            bar: setting.acceptance_bar,
            papers,
            offsets,
        })
    }

    pub fn authors(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn papers(&self) -> usize {
        self.papers.len()
    }

    pub fn author(&self, a: usize) -> &[(f64, f64)] {
        &self.papers[self.offsets[a]..self.offsets[a + 1]]
    }

    /// Distinct posterior means that occur, ascending.
    pub fn posterior_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.papers.iter().map(|p| p.1).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Per-author `(utility, reviewed)` totals.
    fn per_author(&self, mech: &SoftmaxMechanism) -> Vec<(f64, f64)> {
        let (tau_acc, tau_rev) = mech.thresholds();
        (0..self.authors())
            .into_par_iter()
            .map(|a| {
                let mut util = 0.0;
                let mut reviewed = 0.0;
                for &(q, v) in self.author(a) {
                    reviewed += 1.0;
                    if v >= tau_acc {
                        util += q - self.bar;
                    }
                    if v < tau_rev {
                        break;
                    }
                }
                (util, reviewed)
            })
            .collect()
    }

    /// Population-normalized `(utility, burden)`.
    pub fn evaluate(&self, mech: &SoftmaxMechanism) -> Result<(EvalReport, EvalReport)> {
        mech.validate()?;
        let per = self.per_author(mech);
        let counts: Vec<f64> = (0..self.authors())
            .map(|a| self.author(a).len() as f64)
            .collect();
        let util: Vec<f64> = per.iter().map(|p| p.0).collect();
        let rev: Vec<f64> = per.iter().map(|p| p.1).collect();
        let report = |(estimate, stderr): (f64, f64)| EvalReport {
            estimate,
            stderr,
            samples: self.authors(),
            seed: self.seed,
        };
        Ok((
            report(ratio_stderr(&util, &counts)),
            report(ratio_stderr(&rev, &counts)),
        ))
    }
}

pub fn softmax_population_eval(
    mech: &SoftmaxMechanism,
    setting: &SoftmaxSetting,
    author_samples: usize,
    seed: u64,
) -> Result<(EvalReport, EvalReport)> {
    SoftmaxSamples::draw(setting, author_samples, seed)?.evaluate(mech)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoftmaxMatchedBurden {
    pub parallel: SoftmaxMechanism,
    pub sequential: SoftmaxMechanism,
    pub u_parallel: EvalReport,
    pub u_sequential: EvalReport,
    pub relative_burden: EvalReport,
}

/// Matched burden in the posterior world. The parallel threshold is the
/// best cut among the posterior values that occur; the sequential pair is
/// searched on a quantile grid of those values and refined by moving one
/// step at a time between neighbouring values.
pub fn softmax_matched_burden(
    setting: &SoftmaxSetting,
    author_samples: usize,
    seed: u64,
    grid_points: usize,
    slack_stderrs: f64,
) -> Result<SoftmaxMatchedBurden> {
    if grid_points < 2 {
        return Err(Error::param("grid_points", "must be at least 2"));
    }
    let samples = SoftmaxSamples::draw(setting, author_samples, seed)?;
    let values = samples.posterior_values();
    // Cut `c` accepts values[c..]; c == len accepts nothing.
    let cut = |c: usize| {
        if c < values.len() {
            values[c]
        } else {
            f64::INFINITY
        }
    };
    let util_of = |m: &SoftmaxMechanism| -> Vec<f64> {
        samples.per_author(m).into_iter().map(|p| p.0).collect()
    };

    let parallel_scores: Vec<f64> = (0..=values.len())
        .into_par_iter()
        .map(|c| {
            util_of(&SoftmaxMechanism::Parallel { tau: cut(c) })
                .iter()
                .sum()
        })
        .collect();
    let best_c = (0..=values.len()).fold(0, |b, c| {
        if parallel_scores[c] > parallel_scores[b] {
            c
        } else {
            b
        }
    });
    let parallel = SoftmaxMechanism::Parallel { tau: cut(best_c) };
    let up = util_of(&parallel);

    // Review cut `r` continues on values[r..]; r == 0 always continues.
    let rev_cut = |r: usize| if r == 0 { f64::NEG_INFINITY } else { cut(r) };
    let assess = |a: usize, r: usize| -> Option<f64> {
        if r > a || a > values.len() {
            return None;
        }
        let mech = SoftmaxMechanism::Sequential {
            tau_acc: cut(a),
            tau_rev: rev_cut(r),
        };
        let per = samples.per_author(&mech);
        let diff: Vec<f64> = per.iter().zip(&up).map(|(s, p)| s.0 - p).collect();
        let (d, se) = mean_stderr(&diff);
        if d < -slack_stderrs * se {
            return None;
        }
        Some(per.iter().map(|p| p.1).sum())
    };

    let total = values.len();
    let axis: Vec<usize> = {
        let mut v: Vec<usize> = (0..grid_points)
            .map(|i| ((total as f64) * i as f64 / (grid_points - 1) as f64).round() as usize)
            .collect();
        v.dedup();
        v
    };
    let pairs: Vec<(usize, usize)> = axis
        .iter()
        .flat_map(|&a| axis.iter().filter(move |&&r| r <= a).map(move |&r| (a, r)))
        .collect();
    let scored: Vec<Option<f64>> = pairs.par_iter().map(|&(a, r)| assess(a, r)).collect();
    let mut best = (best_c, 0usize, assess(best_c, 0).unwrap_or(f64::INFINITY));
    for (&(a, r), s) in pairs.iter().zip(&scored) {
        if let Some(b) = s {
            if *b < best.2 {
                best = (a, r, *b);
            }
        }
    }
    loop {
        let (a, r, _) = best;
        let moves = [
            (a + 1, r),
            (a.wrapping_sub(1), r),
            (a, r + 1),
            (a, r.wrapping_sub(1)),
            (a + 1, r + 1),
            (a.wrapping_sub(1), r.wrapping_sub(1)),
        ];
        let improved = moves
            .iter()
            .filter_map(|&(na, nr)| assess(na, nr).map(|b| (na, nr, b)))
            .filter(|m| m.2 < best.2)
            .min_by(|x, y| x.2.total_cmp(&y.2));
        match improved {
            Some(m) => best = m,
            None => break,
        }
    }

    let sequential = SoftmaxMechanism::Sequential {
        tau_acc: cut(best.0),
        tau_rev: rev_cut(best.1),
    };
    let (u_parallel, _) = samples.evaluate(&parallel)?;
    let (u_sequential, relative_burden) = samples.evaluate(&sequential)?;
    Ok(SoftmaxMatchedBurden {
        parallel,
        sequential,
        u_parallel,
        u_sequential,
        relative_burden,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_pmf_hits_mean() {
        let p = PaperCountPmf::truncated_geometric(1.93, 8).unwrap();
        assert!((p.mean() - 1.93).abs() < 1e-9);
        assert_eq!(p.max(), 8);
        assert_eq!(
            PaperCountPmf::truncated_geometric(1.0, 8).unwrap().prob(1),
            1.0
        );
    }

    #[test]
    fn counts_pmf() {
        let p = PaperCountPmf::from_counts(&[2, 2, 1, 1, 1]).unwrap();
        assert_eq!(p.probs(), &[0.6, 0.4]);
        assert!(PaperCountPmf::new(vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn flat_likelihood_returns_prior_mean() {
        let m = SoftmaxScoreModel::one_to_ten(0.0).unwrap();
        let v = posterior_expected_quality(&[1, 9, 3], 5.5, 1.3, &m).unwrap();
        assert!((v - 5.5).abs() < 1e-9);
    }

    #[test]
    fn symmetric_scores_return_prior_mean() {
        let m = SoftmaxScoreModel::one_to_ten(0.4).unwrap();
        let v = posterior_expected_quality(&[4, 7], 5.5, 1.3, &m).unwrap();
        assert!((v - 5.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let s = SoftmaxSetting::new(
            PaperCountPmf::point(1).unwrap(),
            3,
            5.5,
            1.3,
            SoftmaxScoreModel::one_to_ten(0.35).unwrap(),
        )
        .unwrap();
        let t = PosteriorTable::new(&s).unwrap();
        assert!(t.distinct_values().len() <= 220);
        let direct = posterior_expected_quality(&[8, 3, 6], 5.5, 1.3, &s.model).unwrap();
        assert_eq!(t.lookup(&mut [7, 2, 5]), direct);
    }
}
