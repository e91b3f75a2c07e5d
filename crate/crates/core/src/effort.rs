//! Closed-form author utilities when papers come from a finite set of effort
//! levels, and the marginal rate of substitution between levels under
//! parallel and naive sequential review.
//!
//! Levels are indexed from 0 and ordered by strictly decreasing acceptance
//! probability. Under sequential review the author ranks papers by level,
//! so a paper is reviewed iff every paper ahead of it was accepted.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Stream;

const DOMINANCE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffortProfile {
    counts: Vec<usize>,
    probs: Vec<f64>,
    rewards: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Parallel,
    Sequential,
}

impl EffortProfile {
    /// Probabilities must be strictly decreasing in `(0, 1]` and rewards
    /// positive and nonincreasing.
    pub fn new(counts: Vec<usize>, probs: Vec<f64>, rewards: Vec<f64>) -> Result<Self> {
        let m = counts.len();
        if m == 0 {
            return Err(Error::param("counts", "need at least one effort level"));
        }
        for (what, len) in [("probs", probs.len()), ("rewards", rewards.len())] {
            if len != m {
                return Err(Error::LengthMismatch {
                    what,
                    got: len,
                    expected: m,
                });
            }
        }
        if probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::param(
                "probs",
                "acceptance probabilities must lie in (0, 1]",
            ));
        }
        if probs.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::param(
                "probs",
                "acceptance probabilities must be strictly decreasing",
            ));
        }
        if rewards.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
            return Err(Error::param("rewards", "rewards must be positive"));
        }
        if rewards.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::param(
                "rewards",
                "rewards must be nonincreasing across levels",
            ));
        }
        Ok(EffortProfile {
            counts,
            probs,
            rewards,
        })
    }

    /// Two levels, high then low.
    pub fn binary(n_h: usize, n_l: usize, p_h: f64, p_l: f64, u_h: f64, u_l: f64) -> Result<Self> {
        Self::new(vec![n_h, n_l], vec![p_h, p_l], vec![u_h, u_l])
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Same profile with level `i` holding `count` papers.
    pub fn with_count(&self, i: usize, count: usize) -> Self {
        let mut out = self.clone();
        out.counts[i] = count;
        out
    }

    fn check_level(&self, i: usize) -> Result<()> {
        if i >= self.levels() {
            return Err(Error::param(
                "level",
                format!("{i} out of range for {} levels", self.levels()),
            ));
        }
        Ok(())
    }
}

/// `Σ n_i p_i u_i`.
pub fn parallel_utility(profile: &EffortProfile) -> f64 {
    profile
        .counts
        .iter()
        .zip(&profile.probs)
        .zip(&profile.rewards)
        .map(|((&n, p), u)| n as f64 * p * u)
        .sum()
}

/// Products, geometric sums and suffix sums behind the sequential utility.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequentialTerms {
    /// `gamma[l]`: probability that all papers of levels `< l` are accepted
    /// (length `m + 1`, `gamma[0] = 1`).
    pub gamma: Vec<f64>,
    /// `s[l]`: expected accepted count within level `l` once it is reached.
    pub s: Vec<f64>,
    /// `z[l] = Σ_{k >= l} gamma[k] s[k] u_k` (length `m + 1`, `z[m] = 0`).
    pub z: Vec<f64>,
}

fn geometric_sum(p: f64, n: usize) -> f64 {
    if p == 1.0 {
        n as f64
    } else {
        p * (1.0 - p.powi(n as i32)) / (1.0 - p)
    }
}

pub fn sequential_terms(profile: &EffortProfile) -> SequentialTerms {
    let m = profile.levels();
    let mut gamma = Vec::with_capacity(m + 1);
    gamma.push(1.0);
    for l in 0..m {
        gamma.push(gamma[l] * profile.probs[l].powi(profile.counts[l] as i32));
    }
    let s: Vec<f64> = (0..m)
        .map(|l| geometric_sum(profile.probs[l], profile.counts[l]))
        .collect();
    let mut z = vec![0.0; m + 1];
    for l in (0..m).rev() {
        z[l] = z[l + 1] + gamma[l] * s[l] * profile.rewards[l];
    }
    SequentialTerms { gamma, s, z }
}

/// Expected reward under naive sequential review with truthful ranking.
pub fn sequential_utility(profile: &EffortProfile) -> f64 {
    sequential_terms(profile).z[0]
}

pub fn utility(regime: Regime, profile: &EffortProfile) -> f64 {
    match regime {
        Regime::Parallel => parallel_utility(profile),
        Regime::Sequential => sequential_utility(profile),
    }
}

/// Gain from one more paper at level `i`, in closed form. Under sequential
/// review this is `Γ_i p_i u_i - (1 - p_i) Z_{i+1}`, which avoids the
/// cancellation of differencing two utilities when `Γ_i` is small.
pub fn marginal_gain(regime: Regime, profile: &EffortProfile, i: usize) -> Result<f64> {
    profile.check_level(i)?;
    let (p, u) = (profile.probs[i], profile.rewards[i]);
    Ok(match regime {
        Regime::Parallel => p * u,
        Regime::Sequential => {
            let t = sequential_terms(profile);
            t.gamma[i + 1] * p * u - (1.0 - p) * t.z[i + 1]
        }
    })
}

/// Gain from one more paper at level `i` as a literal utility difference.
pub fn marginal_gain_by_difference(
    regime: Regime,
    profile: &EffortProfile,
    i: usize,
) -> Result<f64> {
    profile.check_level(i)?;
    let more = profile.with_count(i, profile.counts[i] + 1);
    Ok(utility(regime, &more) - utility(regime, profile))
}

/// `MRS_{i,j}`: gain from a level-`i` paper over gain from a level-`j` paper.
pub fn mrs(regime: Regime, profile: &EffortProfile, i: usize, j: usize) -> Result<f64> {
    let num = marginal_gain(regime, profile, i)?;
    let den = marginal_gain(regime, profile, j)?;
    if den == 0.0 {
        return Err(Error::DegenerateProfile(format!(
            "adding a level-{j} paper does not change the utility"
        )));
    }
    Ok(num / den)
}

/// `(measured, predicted)` for `λ_i(k)`: the `k`-th extra level-`i` paper's
/// gain relative to the first one's, against `p_i^{k-1}`.
pub fn lambda_check(profile: &EffortProfile, i: usize, k: usize) -> Result<(f64, f64)> {
    profile.check_level(i)?;
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let n = profile.counts[i];
    let first = marginal_gain(Regime::Sequential, profile, i)?;
    if first == 0.0 {
        return Err(Error::DegenerateProfile(format!(
            "level-{i} papers add no utility"
        )));
    }
    let kth = marginal_gain(Regime::Sequential, &profile.with_count(i, n + k - 1), i)?;
    Ok((kth / first, profile.probs[i].powi(k as i32 - 1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DominanceVerdict {
    pub mrs_parallel: f64,
    pub mrs_sequential: f64,
    /// `MRS^s >= MRS^p` within tolerance.
    pub holds: bool,
    /// `MRS^s > MRS^p` beyond floating-point noise.
    pub strict: bool,
    /// Whether any paper sits at a level below `i`.
    pub strictness_expected: bool,
    pub gap: f64,
}

/// Compares sequential and parallel MRS between levels `i < j`.
pub fn verify_mrs_dominance(
    profile: &EffortProfile,
    i: usize,
    j: usize,
) -> Result<DominanceVerdict> {
    if i >= j {
        return Err(Error::param("level", "need i < j"));
    }
    profile.check_level(j)?;
    let mrs_parallel = mrs(Regime::Parallel, profile, i, j)?;
    let mrs_sequential = mrs(Regime::Sequential, profile, i, j)?;
    let gap = mrs_sequential - mrs_parallel;
    // Equality cases agree to a few ulps; strict cases differ by far more.
    let noise = 1e-9 * mrs_parallel.abs().max(1.0);
    Ok(DominanceVerdict {
        mrs_parallel,
        mrs_sequential,
        holds: gap >= -DOMINANCE_TOL * mrs_parallel.abs().max(1.0),
        strict: gap > noise,
        strictness_expected: profile.counts[i + 1..].iter().sum::<usize>() > 0,
        gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubstitutionVerdict {
    pub parallel_prefers_quality: bool,
    pub sequential_prefers_quality: bool,
    pub parallel: (f64, f64),
    pub sequential: (f64, f64),
    /// Parallel review prefers the extra level-`i` papers but sequential
    /// review does not.
    pub violated: bool,
}

/// Compares writing `n_i'` level-`i` papers against writing `n_j'` level-`j`
/// papers (other counts as in `base`) under both regimes.
pub fn verify_substitution(
    base: &EffortProfile,
    i: usize,
    j: usize,
    n_i_new: usize,
    n_j_new: usize,
) -> Result<SubstitutionVerdict> {
    if i >= j {
        return Err(Error::param("level", "need i < j"));
    }
    base.check_level(j)?;
    if n_i_new <= base.counts[i] || n_j_new <= base.counts[j] {
        return Err(Error::param(
            "counts",
            "new counts must exceed the base counts",
        ));
    }
    let quality = base.with_count(i, n_i_new);
    let quantity = base.with_count(j, n_j_new);
    let parallel = (parallel_utility(&quality), parallel_utility(&quantity));
    let sequential = (sequential_utility(&quality), sequential_utility(&quantity));
    let tol = DOMINANCE_TOL * parallel.0.abs().max(parallel.1.abs()).max(1.0);
    let parallel_prefers_quality = parallel.0 >= parallel.1 - tol;
    let sequential_prefers_quality = sequential.0 >= sequential.1 - tol;
    Ok(SubstitutionVerdict {
        parallel_prefers_quality,
        sequential_prefers_quality,
        parallel,
        sequential,
        violated: parallel.0 >= parallel.1 + tol && !sequential_prefers_quality,
    })
}

fn sorted_draws(rng: &mut Stream, k: usize, lo: f64, hi: f64, descending: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| lo + (hi - lo) * rng.uniform()).collect();
    v.sort_by(|a, b| {
        if descending {
            b.total_cmp(a)
        } else {
            a.total_cmp(b)
        }
    });
    v
}

/// Random profile: 2 to `max_levels` levels, counts uniform on `0..=6`,
/// probabilities sorted draws from `(0.05, 0.99)`, rewards sorted draws from
/// `(0.1, 2)` in the same order as the probabilities.
pub fn random_profile(rng: &mut Stream, max_levels: usize) -> EffortProfile {
    loop {
        let m = 2 + (rng.uniform() * (max_levels - 1) as f64) as usize;
        let counts = (0..m).map(|_| (rng.uniform() * 7.0) as usize).collect();
        let probs = sorted_draws(rng, m, 0.05, 0.99, true);
        let rewards = sorted_draws(rng, m, 0.1, 2.0, true);
        if let Ok(p) = EffortProfile::new(counts, probs, rewards) {
            return p;
        }
    }
}
