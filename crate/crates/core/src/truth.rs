//! Exact best-response oracles over discrete noise.
//!
//! An author's expected utility under a reported ranking is computed by
//! enumerating every joint noise realization and combining the mechanism's
//! exact per-round acceptance probabilities. Enumerating all `n!` rankings
//! then decides whether truth-telling is a best response on the instance.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::{
    make_bundle_mechanism, make_coin_flip, make_credit_pool, AcceptanceOracle, BundleSpec,
    CreditPoolSpec, ScoreFn,
};
use crate::model::{NoiseModel, Permutation, RewardFunction};
use crate::rng::Stream;

pub const MAX_PAPERS: usize = 8;
pub const MAX_NOISE_SUPPORT: usize = 6;
/// Slack for "weakly dominates".
pub const TRUTH_TOL: f64 = 1e-9;
/// Minimum gap reported as a violation.
pub const WITNESS_GAP: f64 = 1e-6;

pub type SharedOracle = Arc<dyn AcceptanceOracle + Send + Sync>;

#[derive(Clone)]
pub struct TruthInstance {
    qualities: Vec<f64>,
    noise: NoiseModel,
    atoms: Vec<(f64, f64)>,
    reward: RewardFunction,
    mechanism: SharedOracle,
}

impl std::fmt::Debug for TruthInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruthInstance")
            .field("qualities", &self.qualities)
            .field("noise", &self.noise)
            .field("reward", &self.reward)
            .finish_non_exhaustive()
    }
}

impl TruthInstance {
    pub fn new(
        qualities: Vec<f64>,
        noise: NoiseModel,
        reward: RewardFunction,
        mechanism: SharedOracle,
    ) -> Result<Self> {
        if qualities.is_empty() || qualities.len() > MAX_PAPERS {
            return Err(Error::param(
                "qualities",
                format!("need 1..={MAX_PAPERS} papers, got {}", qualities.len()),
            ));
        }
        if qualities.iter().any(|q| !q.is_finite()) {
            return Err(Error::param("qualities", "must be finite"));
        }
        noise.validate()?;
        let atoms = noise
            .atoms()
            .ok_or_else(|| Error::param("noise", "exact enumeration needs discrete noise"))?;
        if atoms.len() > MAX_NOISE_SUPPORT {
            return Err(Error::param(
                "noise",
                format!("support larger than {MAX_NOISE_SUPPORT}"),
            ));
        }
        Ok(TruthInstance {
            qualities,
            noise,
            atoms,
            reward,
            mechanism,
        })
    }

    pub fn qualities(&self) -> &[f64] {
        &self.qualities
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn reward(&self) -> RewardFunction {
        self.reward
    }

    pub fn mechanism(&self) -> &SharedOracle {
        &self.mechanism
    }

    pub fn len(&self) -> usize {
        self.qualities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qualities.is_empty()
    }

    /// Ranking by true quality, ties broken by index.
    pub fn truthful_permutation(&self) -> Permutation {
        rank_descending(&self.qualities)
    }

    fn paper_atoms(&self) -> Vec<Vec<Atom>> {
        self.qualities
            .iter()
            .map(|&q| {
                self.atoms
                    .iter()
                    .map(|&(e, p)| Atom {
                        score: q + e,
                        reward: self.reward.reward(q),
                        prob: p,
                    })
                    .collect()
            })
            .collect()
    }
}

/// Permutation listing papers by decreasing `values`, ties by index.
pub fn rank_descending(values: &[f64]) -> Permutation {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    Permutation::from_order(&order).expect("sorted indices form a bijection")
}

/// One joint outcome for a single paper.
#[derive(Clone, Copy, Debug)]
struct Atom {
    score: f64,
    reward: f64,
    prob: f64,
}

/// Expected utility when paper `p` has independent outcome atoms
/// `atoms[p]` and papers are reviewed in `order`.
fn enumerate_utility(
    mech: &dyn AcceptanceOracle,
    atoms: &[Vec<Atom>],
    order: &[usize],
) -> Result<f64> {
    let n = order.len();
    let mut idx = vec![0usize; n];
    let mut scores = vec![0.0; n];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for (round, &p) in order.iter().enumerate() {
            let a = atoms[p][idx[round]];
            scores[round] = a.score;
            weight *= a.prob;
        }
        if weight > 0.0 {
            let probs = mech.acceptance_probabilities(&scores)?;
            let value: f64 = order
                .iter()
                .enumerate()
                .map(|(round, &p)| atoms[p][idx[round]].reward * probs[round])
                .sum();
            total += weight * value;
        }
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(total);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < atoms[order[k]].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Exact `E[U_a(π)]`.
pub fn exact_expected_utility(instance: &TruthInstance, permutation: &Permutation) -> Result<f64> {
    if permutation.len() != instance.len() {
        return Err(Error::LengthMismatch {
            what: "permutation",
            got: permutation.len(),
            expected: instance.len(),
        });
    }
    enumerate_utility(
        instance.mechanism.as_ref(),
        &instance.paper_atoms(),
        &permutation.review_order(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub permutation: Permutation,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthVerdict {
    pub truthful_at_instance: bool,
    pub truthful: Permutation,
    pub truthful_utility: f64,
    pub best_utility: f64,
    /// Rankings within the tolerance of the best utility.
    pub best_permutations: Vec<Permutation>,
    /// Every ranking with its exact expected utility, in lexicographic order.
    pub utilities: Vec<(Permutation, f64)>,
    /// Best ranking and its advantage over the truthful one, when positive.
    pub witness: Option<Witness>,
}

fn verdict_from(truthful: Permutation, utilities: Vec<(Permutation, f64)>) -> TruthVerdict {
    let truthful_utility = utilities
        .iter()
        .find(|(p, _)| *p == truthful)
        .map(|(_, u)| *u)
        .expect("all rankings enumerated");
    let (best_perm, best_utility) = utilities
        .iter()
        .fold(None::<(&Permutation, f64)>, |acc, (p, u)| match acc {
            Some((_, b)) if b >= *u => acc,
            _ => Some((p, *u)),
        })
        .map(|(p, u)| (p.clone(), u))
        .expect("at least one ranking");
    let best_permutations = utilities
        .iter()
        .filter(|(_, u)| *u >= best_utility - TRUTH_TOL)
        .map(|(p, _)| p.clone())
        .collect();
    let gap = best_utility - truthful_utility;
    TruthVerdict {
        truthful_at_instance: truthful_utility >= best_utility - TRUTH_TOL,
        truthful,
        truthful_utility,
        best_utility,
        best_permutations,
        witness: (gap > 0.0).then_some(Witness {
            permutation: best_perm,
            gap,
        }),
        utilities,
    }
}

fn all_utilities(
    mech: &(dyn AcceptanceOracle + Send + Sync),
    atoms: &[Vec<Atom>],
) -> Result<Vec<(Permutation, f64)>> {
    Permutation::all(atoms.len())
        .into_par_iter()
        .map(|p| {
            let u = enumerate_utility(mech, atoms, &p.review_order())?;
            Ok((p, u))
        })
        .collect()
}

/// Enumerates all `n!` rankings.
pub fn best_response(instance: &TruthInstance) -> Result<TruthVerdict> {
    let utilities = all_utilities(instance.mechanism.as_ref(), &instance.paper_atoms())?;
    Ok(verdict_from(instance.truthful_permutation(), utilities))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViolationWitness {
    /// Zero-based index of the generated instance.
    pub attempt: usize,
    pub qualities: Vec<f64>,
    pub permutation: Permutation,
    pub truthful_utility: f64,
    pub manipulated_utility: f64,
    pub gap: f64,
}

/// Randomized search for an instance where some ranking beats the truthful
/// one by more than [`WITNESS_GAP`]. Instance `k` is generated from the
/// stream `(seed, "violation", k)`.
pub fn find_violation(
    mechanisms: impl Fn(&mut Stream) -> Result<SharedOracle>,
    instances: impl Fn(&mut Stream, SharedOracle) -> Result<TruthInstance>,
    budget: usize,
    seed: u64,
) -> Result<Option<ViolationWitness>> {
    for attempt in 0..budget {
        let mut rng = Stream::new(seed, "violation", attempt as u64);
        let mech = mechanisms(&mut rng)?;
        let instance = instances(&mut rng, mech)?;
        let verdict = best_response(&instance)?;
        if let Some(w) = verdict.witness.filter(|w| w.gap > WITNESS_GAP) {
            return Ok(Some(ViolationWitness {
                attempt,
                qualities: instance.qualities.clone(),
                permutation: w.permutation,
                truthful_utility: verdict.truthful_utility,
                manipulated_utility: verdict.best_utility,
                gap: w.gap,
            }));
        }
    }
    Ok(None)
}

/// Checks that ranking by noisy author signals is a best response.
///
/// Signals are drawn as `s = q + ξ` from `seed`. Conditioned on the signals,
/// each paper's quality is `s - ξ'` for a fresh draw `ξ'` and its score adds
/// review noise, so the author's expected utility is an exact enumeration
/// over joint `(ξ', ε)` atoms.
pub fn signal_noise_robustness_check(
    instance: &TruthInstance,
    signal_noise: &NoiseModel,
    seed: u64,
) -> Result<TruthVerdict> {
    signal_noise.validate()?;
    let xi = signal_noise
        .atoms()
        .ok_or_else(|| Error::param("signal_noise", "exact enumeration needs discrete noise"))?;
    if xi.len() > MAX_NOISE_SUPPORT {
        return Err(Error::param(
            "signal_noise",
            format!("support larger than {MAX_NOISE_SUPPORT}"),
        ));
    }
    let signals: Vec<f64> = instance
        .qualities
        .iter()
        .enumerate()
        .map(|(i, &q)| q + signal_noise.sample(&mut Stream::new(seed, "author-signal", i as u64)))
        .collect();
    let atoms: Vec<Vec<Atom>> = signals
        .iter()
        .map(|&s| {
            let mut v = Vec::with_capacity(xi.len() * instance.atoms.len());
            for &(x, px) in &xi {
                let q = s - x;
                for &(e, pe) in &instance.atoms {
                    v.push(Atom {
                        score: q + e,
                        reward: instance.reward.reward(q),
                        prob: px * pe,
                    });
                }
            }
            v
        })
        .collect();
    let utilities = all_utilities(instance.mechanism.as_ref(), &atoms)?;
    Ok(verdict_from(rank_descending(&signals), utilities))
}

fn uniform(rng: &mut Stream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

fn sorted_uniforms(rng: &mut Stream, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| uniform(rng, lo, hi)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Random nondecreasing step function into `[0, 1]` with 1 to 3
/// breakpoints uniform on `[-1, 1]`.
pub fn random_monotone_step(rng: &mut Stream) -> ScoreFn {
    let k = 1 + (rng.uniform() * 3.0) as usize;
    let breakpoints = sorted_uniforms(rng, k, -1.0, 1.0);
    let values = sorted_uniforms(rng, k + 1, 0.0, 1.0);
    ScoreFn::step(breakpoints, values).expect("sorted draws")
}

/// Random increasing convex piecewise-linear function: 2 to 4 knots
/// uniform on `[-1, 1]`, value at the first knot uniform on `[-1.5, 0.5]`,
/// segment slopes sorted uniform draws on `(0.1, 2)`.
pub fn random_convex_credit(rng: &mut Stream) -> ScoreFn {
    let k = 2 + (rng.uniform() * 3.0) as usize;
    let knots = sorted_uniforms(rng, k, -1.0, 1.0);
    let slopes = sorted_uniforms(rng, k - 1, 0.1, 2.0);
    let mut values = vec![uniform(rng, -1.5, 0.5)];
    for i in 1..k {
        values.push(values[i - 1] + slopes[i - 1] * (knots[i] - knots[i - 1]));
    }
    ScoreFn::piecewise_linear(knots, values).expect("sorted draws")
}

/// Random discrete noise with 1 to `max_support` atoms uniform on `[-1, 1]`
/// and normalized uniform weights.
pub fn random_discrete_noise(rng: &mut Stream, max_support: usize) -> NoiseModel {
    let k = 1 + (rng.uniform() * max_support as f64) as usize;
    let support: Vec<f64> = (0..k).map(|_| uniform(rng, -1.0, 1.0)).collect();
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = probs[..k - 1].iter().sum();
    probs[k - 1] = 1.0 - head;
    NoiseModel::discrete(support, probs).expect("normalized weights")
}

/// Random instance: 2 to `max_n` qualities uniform on `[-2, 2]`, random
/// discrete noise, count or clamped-identity reward.
pub fn random_instance(
    rng: &mut Stream,
    mech: SharedOracle,
    max_n: usize,
    max_support: usize,
) -> Result<TruthInstance> {
    let n = 2 + (rng.uniform() * (max_n - 1) as f64) as usize;
    let qualities = (0..n).map(|_| uniform(rng, -2.0, 2.0)).collect();
    let noise = random_discrete_noise(rng, max_support);
    let reward = if rng.uniform() < 0.5 {
        RewardFunction::CountAccepted
    } else {
        RewardFunction::ClampedIdentity
    };
    TruthInstance::new(qualities, noise, reward, mech)
}

/// Coin-flip with random monotone step acceptance and nondecreasing step
/// continuation.
pub fn random_coin_flip(rng: &mut Stream) -> Result<SharedOracle> {
    let p_acc = random_monotone_step(rng);
    let rho = random_monotone_step(rng);
    Ok(Arc::new(make_coin_flip(p_acc, rho)?))
}

/// Credit pool with `B1` uniform on `[0, 1]`, random convex credit and
/// random monotone step acceptance.
pub fn random_credit_pool(rng: &mut Stream) -> Result<SharedOracle> {
    let initial_credit = rng.uniform();
    let beta = random_convex_credit(rng);
    let p_acc = random_monotone_step(rng);
    Ok(Arc::new(make_credit_pool(CreditPoolSpec {
        initial_credit,
        beta,
        p_acc,
        credit_cap: None,
    })?))
}

/// Two-paper bundles, one acceptance to continue, threshold acceptance at 0.
pub fn archetype_bundle(_rng: &mut Stream) -> Result<SharedOracle> {
    Ok(Arc::new(make_bundle_mechanism(
        BundleSpec {
            bundle_size: 2,
            min_accepts: 1,
        },
        ScoreFn::Threshold(0.0),
    )?))
}

/// Two outstanding papers on `[3, 4]`, four borderline papers on
/// `[-0.5, 0.5]`, noise `±1`, count reward.
pub fn archetype_bundle_instance(rng: &mut Stream, mech: SharedOracle) -> Result<TruthInstance> {
    let mut q: Vec<f64> = (0..2).map(|_| uniform(rng, 3.0, 4.0)).collect();
    q.extend((0..4).map(|_| uniform(rng, -0.5, 0.5)));
    TruthInstance::new(
        q,
        NoiseModel::symmetric_two_point(1.0)?,
        RewardFunction::CountAccepted,
        mech,
    )
}

/// Credit pool capped at a level uniform on `[0.5, 1.5]`, `B1 = 0`,
/// `β(r) = r`, threshold acceptance at 0.
pub fn archetype_limited_credit_pool(rng: &mut Stream) -> Result<SharedOracle> {
    let cap = uniform(rng, 0.5, 1.5);
    Ok(Arc::new(make_credit_pool(CreditPoolSpec {
        initial_credit: 0.0,
        beta: ScoreFn::piecewise_linear(vec![0.0, 1.0], vec![0.0, 1.0])?,
        p_acc: ScoreFn::Threshold(0.0),
        credit_cap: Some(cap),
    })?))
}

/// Two outstanding papers on `[2.5, 3.5]` and two to four borderline papers
/// on `[-0.6, -0.4]`, noise `±0.5`, count reward.
pub fn archetype_limited_instance(rng: &mut Stream, mech: SharedOracle) -> Result<TruthInstance> {
    let borderline = 2 + (rng.uniform() * 3.0) as usize;
    let mut q: Vec<f64> = (0..2).map(|_| uniform(rng, 2.5, 3.5)).collect();
    q.extend((0..borderline).map(|_| uniform(rng, -0.6, -0.4)));
    TruthInstance::new(
        q,
        NoiseModel::symmetric_two_point(0.5)?,
        RewardFunction::CountAccepted,
        mech,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{make_naive_sequential, make_parallel};

    #[test]
    fn naive_order_matters() {
        let mech: SharedOracle = Arc::new(make_naive_sequential(ScoreFn::Threshold(0.0)).unwrap());
        let inst = TruthInstance::new(
            vec![2.0, -1.0],
            NoiseModel::zero(),
            RewardFunction::CountAccepted,
            mech,
        )
        .unwrap();
        let truthful = exact_expected_utility(&inst, &Permutation::identity(2)).unwrap();
        let reversed =
            exact_expected_utility(&inst, &Permutation::from_ranks(vec![1, 0]).unwrap()).unwrap();
        assert_eq!((truthful, reversed), (1.0, 0.0));
    }

    #[test]
    fn parallel_is_permutation_invariant() {
        let mech: SharedOracle = Arc::new(make_parallel(ScoreFn::Threshold(0.2)).unwrap());
        let noise = NoiseModel::discrete(vec![-0.5, 0.0, 0.7], vec![0.2, 0.5, 0.3]).unwrap();
        let inst = TruthInstance::new(
            vec![0.1, -0.4, 0.6, 0.3],
            noise,
            RewardFunction::ClampedIdentity,
            mech,
        )
        .unwrap();
        let v = best_response(&inst).unwrap();
        let (lo, hi) = v
            .utilities
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, u)| {
                (lo.min(*u), hi.max(*u))
            });
        assert!(hi - lo < 1e-12);
        assert_eq!(v.utilities.len(), 24);
    }

    #[test]
    fn bounds_are_enforced() {
        let mech: SharedOracle = Arc::new(make_parallel(ScoreFn::Threshold(0.0)).unwrap());
        assert!(TruthInstance::new(
            vec![0.0; 9],
            NoiseModel::zero(),
            RewardFunction::CountAccepted,
            mech.clone()
        )
        .is_err());
        let wide = NoiseModel::discrete(vec![0.0; 7], vec![1.0 / 7.0; 7]);
        if let Ok(noise) = wide {
            assert!(TruthInstance::new(
                vec![0.0],
                noise,
                RewardFunction::CountAccepted,
                mech.clone()
            )
            .is_err());
        }
        let g = NoiseModel::gaussian(1.0).unwrap();
        assert!(TruthInstance::new(vec![0.0], g, RewardFunction::CountAccepted, mech).is_err());
    }
}
