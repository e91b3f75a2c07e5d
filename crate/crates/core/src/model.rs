//! Papers, rankings, noise and score models, and the two utility functions.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::ReviewOutcome;
use crate::rng::Stream;

/// A paper's true quality together with the author's private signal of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperInstance {
    pub quality: f64,
    pub author_signal: f64,
}

impl PaperInstance {
    pub fn new(quality: f64, author_signal: f64) -> Result<Self> {
        if !quality.is_finite() || !author_signal.is_finite() {
            return Err(Error::param("paper", "quality and signal must be finite"));
        }
        Ok(PaperInstance {
            quality,
            author_signal,
        })
    }

    /// Perfectly informed author: the signal equals the quality.
    pub fn exact(quality: f64) -> Result<Self> {
        Self::new(quality, quality)
    }
}

/// A reported ranking. `rank_of(i)` is the (0-based) position the author
/// gives paper `i`; the identity is the truthful report.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permutation {
    ranks: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            ranks: (0..n).collect(),
        }
    }

    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        let n = ranks.len();
        let mut seen = vec![false; n];
        for &r in &ranks {
            if r >= n || seen[r] {
                return Err(Error::param(
                    "permutation",
                    format!("{ranks:?} is not a bijection"),
                ));
            }
            seen[r] = true;
        }
        Ok(Permutation { ranks })
    }

    /// Build from a review order: `order[k]` is the paper placed at rank `k`.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let inv = Permutation::from_ranks(order.to_vec())?;
        Ok(inv.inverse())
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn rank_of(&self, paper: usize) -> usize {
        self.ranks[paper]
    }

    pub fn is_identity(&self) -> bool {
        self.ranks.iter().enumerate().all(|(i, &r)| i == r)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.ranks.len()];
        for (paper, &rank) in self.ranks.iter().enumerate() {
            inv[rank] = paper;
        }
        Permutation { ranks: inv }
    }

    /// Papers in the order they are reviewed.
    pub fn review_order(&self) -> Vec<usize> {
        self.inverse().ranks
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                what: "permutation",
                got: other.len(),
                expected: self.len(),
            });
        }
        Ok(Permutation {
            ranks: other.ranks.iter().map(|&i| self.ranks[i]).collect(),
        })
    }

    /// All `n!` permutations in lexicographic order of their rank vectors,
    /// starting with the identity.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut cur: Vec<usize> = (0..n).collect();
        let mut out = vec![Permutation { ranks: cur.clone() }];
        loop {
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                return out;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
            out.push(Permutation { ranks: cur.clone() });
        }
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.ranks.iter().map(|r| (r + 1).to_string()).collect();
        write!(f, "({})", parts.join(" "))
    }
}

/// Additive noise on a quality: review noise `ε` or author-signal noise `ξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Discrete { support: Vec<f64>, probs: Vec<f64> },
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let m = NoiseModel::Gaussian { sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn discrete(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let m = NoiseModel::Discrete { support, probs };
        m.validate()?;
        Ok(m)
    }

    /// Point mass at zero.
    pub fn zero() -> Self {
        NoiseModel::Discrete {
            support: vec![0.0],
            probs: vec![1.0],
        }
    }

    /// Two-point noise `±half_width`, each with probability one half.
    pub fn symmetric_two_point(half_width: f64) -> Result<Self> {
        Self::discrete(vec![-half_width, half_width], vec![0.5, 0.5])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Gaussian { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::param(
                        "sigma",
                        format!("must be positive, got {sigma}"),
                    ));
                }
            }
            NoiseModel::Discrete { support, probs } => {
                if support.is_empty() {
                    return Err(Error::param("support", "must be nonempty"));
                }
                if support.len() != probs.len() {
                    return Err(Error::LengthMismatch {
                        what: "probs",
                        got: probs.len(),
                        expected: support.len(),
                    });
                }
                if support.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("support", "values must be finite"));
                }
                if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::param("probs", "entries must lie in [0, 1]"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::param("probs", format!("must sum to 1, got {total}")));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match self {
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseModel::Discrete { support, probs } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (v, p) in support.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *support.last().unwrap()
            }
        }
    }

    /// Finite support with probabilities, if the model is discrete.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            NoiseModel::Discrete { support, probs } => Some(
                support
                    .iter()
                    .copied()
                    .zip(probs.iter().copied())
                    .filter(|&(_, p)| p > 0.0)
                    .collect(),
            ),
            NoiseModel::Gaussian { .. } => None,
        }
    }
}

/// Integer review scores drawn with probability proportional to
/// `exp(-t (s - q)^2)` over a finite score set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxScoreModel {
    temperature: f64,
    score_set: Vec<i32>,
}

impl SoftmaxScoreModel {
    pub fn new(temperature: f64, score_set: Vec<i32>) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::param(
                "temperature",
                format!("must be a nonnegative finite number, got {temperature}"),
            ));
        }
        if score_set.is_empty() {
            return Err(Error::param("score_set", "must be nonempty"));
        }
        if score_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("score_set", "must be strictly ascending"));
        }
        Ok(SoftmaxScoreModel {
            temperature,
            score_set,
        })
    }

    /// The ICLR-style `{1, ..., 10}` scale.
    pub fn one_to_ten(temperature: f64) -> Result<Self> {
        Self::new(temperature, (1..=10).collect())
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn score_set(&self) -> &[i32] {
        &self.score_set
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(temperature, self.score_set.clone())
    }

    /// Log-probabilities of each score in `score_set` given quality `q`.
    pub fn log_pmf(&self, quality: f64) -> Vec<f64> {
        let t = self.temperature;
        let logits: Vec<f64> = self
            .score_set
            .iter()
            .map(|&s| {
                let d = f64::from(s) - quality;
                -t * d * d
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.into_iter().map(|l| l - lse).collect()
    }

    pub fn pmf(&self, quality: f64) -> Vec<f64> {
        let t = self.temperature;
        let logits: Vec<f64> = self
            .score_set
            .iter()
            .map(|&s| {
                let d = f64::from(s) - quality;
                -t * d * d
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    pub fn sample(&self, quality: f64, rng: &mut Stream) -> i32 {
        let pmf = self.pmf(quality);
        let u = rng.uniform();
        let mut acc = 0.0;
        for (s, p) in self.score_set.iter().zip(&pmf) {
            acc += p;
            if u < acc {
                return *s;
            }
        }
        *self.score_set.last().unwrap()
    }
}

/// Softmax score pmf, checked variant of [`SoftmaxScoreModel::pmf`].
pub fn softmax_pmf(quality: f64, model: &SoftmaxScoreModel) -> Result<Vec<f64>> {
    if !quality.is_finite() {
        return Err(Error::param("quality", "must be finite"));
    }
    Ok(model.pmf(quality))
}

/// Author reward for an accepted paper as a function of its true quality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardFunction {
    /// Every accepted paper is worth one.
    CountAccepted,
    /// `max(q, 0)`.
    ClampedIdentity,
}

impl RewardFunction {
    #[inline]
    pub fn reward(&self, quality: f64) -> f64 {
        match self {
            RewardFunction::CountAccepted => 1.0,
            RewardFunction::ClampedIdentity => quality.max(0.0),
        }
    }
}

/// `n` draws from `N(mu_q, sigma_q)`, sorted in descending order.
pub fn draw_qualities(mu_q: f64, sigma_q: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    check_prior(mu_q, sigma_q, n)?;
    let mut rng = Stream::new(seed, "qualities", 0);
    let mut out = Vec::with_capacity(n);
    draw_sorted_into(&mut rng, mu_q, sigma_q, n, &mut out);
    Ok(out)
}

pub(crate) fn check_prior(mu_q: f64, sigma_q: f64, n: usize) -> Result<()> {
    if !mu_q.is_finite() {
        return Err(Error::param("mu_q", "must be finite"));
    }
    if !(sigma_q > 0.0 && sigma_q.is_finite()) {
        return Err(Error::param(
            "sigma_q",
            format!("must be positive, got {sigma_q}"),
        ));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(())
}

pub(crate) fn draw_sorted_into(
    rng: &mut Stream,
    mu: f64,
    sigma: f64,
    n: usize,
    out: &mut Vec<f64>,
) {
    out.clear();
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        out.push(mu + sigma * z);
    }
    out.sort_by(|a, b| b.total_cmp(a));
}

/// Quality plus one noise draw.
pub fn review_score(quality: f64, noise: &NoiseModel, seed: u64) -> Result<f64> {
    noise.validate()?;
    let mut rng = Stream::new(seed, "review-score", 0);
    Ok(quality + noise.sample(&mut rng))
}

/// Sum of rewards over accepted papers, given per-paper acceptance flags.
pub fn author_utility_from_flags(
    accepted: &[bool],
    qualities: &[f64],
    reward: RewardFunction,
) -> Result<f64> {
    check_len(accepted.len(), qualities.len())?;
    Ok(accepted
        .iter()
        .zip(qualities)
        .filter(|(a, _)| **a)
        .map(|(_, &q)| reward.reward(q))
        .sum())
}

/// Sum of qualities over accepted papers, given per-paper acceptance flags.
pub fn conference_utility_from_flags(accepted: &[bool], qualities: &[f64]) -> Result<f64> {
    check_len(accepted.len(), qualities.len())?;
    Ok(accepted
        .iter()
        .zip(qualities)
        .filter(|(a, _)| **a)
        .map(|(_, &q)| q)
        .sum())
}

pub fn author_utility(
    outcome: &ReviewOutcome,
    qualities: &[f64],
    reward: RewardFunction,
) -> Result<f64> {
    check_len(outcome.len(), qualities.len())?;
    author_utility_from_flags(&outcome.accepted_papers(), qualities, reward)
}

pub fn conference_utility(outcome: &ReviewOutcome, qualities: &[f64]) -> Result<f64> {
    check_len(outcome.len(), qualities.len())?;
    conference_utility_from_flags(&outcome.accepted_papers(), qualities)
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::LengthMismatch {
            what: "outcome",
            got,
            expected,
        });
    }
    Ok(())
}
