//! Concrete mechanisms: naive sequential, memoryless coin-flip, credit pool
//! (optionally capped), threshold sequential/parallel, bundles, and the
//! isotonic baseline.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::framework::{
    acceptance_chain_probabilities, run_mechanism, ReviewOutcome, ReviewState, SequentialMechanism,
    StateDist,
};
use crate::model::{NoiseModel, Permutation};
use crate::rng::Stream;

/// A real function of the review score, used for acceptance policies,
/// continuation probabilities and credit functions.
#[derive(Clone)]
pub enum ScoreFn {
    Constant(f64),
    /// 1 if `r >= tau`, else 0.
    Threshold(f64),
    /// `values[k]` where `k` is the number of breakpoints `<= r`.
    Step {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Linear interpolation between knots, extended linearly past both ends.
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ScoreFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFn::Constant(c) => write!(f, "Constant({c})"),
            ScoreFn::Threshold(t) => write!(f, "Threshold({t})"),
            ScoreFn::Step {
                breakpoints,
                values,
            } => {
                write!(
                    f,
                    "Step {{ breakpoints: {breakpoints:?}, values: {values:?} }}"
                )
            }
            ScoreFn::PiecewiseLinear { knots, values } => {
                write!(
                    f,
                    "PiecewiseLinear {{ knots: {knots:?}, values: {values:?} }}"
                )
            }
            ScoreFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ScoreFn {
    pub fn step(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::LengthMismatch {
                what: "step values",
                got: values.len(),
                expected: breakpoints.len() + 1,
            });
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1]))
            || breakpoints.iter().any(|b| !b.is_finite())
        {
            return Err(Error::param(
                "breakpoints",
                "must be finite and strictly increasing",
            ));
        }
        Ok(ScoreFn::Step {
            breakpoints,
            values,
        })
    }

    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "knot values",
                got: values.len(),
                expected: knots.len(),
            });
        }
        if knots.len() < 2 {
            return Err(Error::param("knots", "need at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1]))
            || knots.iter().chain(&values).any(|x| !x.is_finite())
        {
            return Err(Error::param(
                "knots",
                "must be finite and strictly increasing",
            ));
        }
        Ok(ScoreFn::PiecewiseLinear { knots, values })
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScoreFn::Custom(Arc::new(f))
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            ScoreFn::Constant(c) => *c,
            ScoreFn::Threshold(t) => {
                if r >= *t {
                    1.0
                } else {
                    0.0
                }
            }
            ScoreFn::Step {
                breakpoints,
                values,
            } => values[breakpoints.partition_point(|b| *b <= r)],
            ScoreFn::PiecewiseLinear { knots, values } => {
                let n = knots.len();
                let seg = knots.partition_point(|k| *k <= r).clamp(1, n - 1) - 1;
                let (x0, x1, y0, y1) = (knots[seg], knots[seg + 1], values[seg], values[seg + 1]);
                y0 + (y1 - y0) * (r - x0) / (x1 - x0)
            }
            ScoreFn::Custom(f) => f(r),
        }
    }

    /// Whether the function maps the grid into `[0, 1]`.
    pub fn is_probability_on(&self, grid: &[f64]) -> bool {
        grid.iter()
            .map(|&r| self.eval(r))
            .all(|p| (0.0..=1.0).contains(&p))
    }

    fn check_probability(&self, name: &'static str) -> Result<()> {
        let bad = match self {
            ScoreFn::Constant(c) => !(0.0..=1.0).contains(c),
            ScoreFn::Threshold(t) => t.is_nan(),
            ScoreFn::Step { values, .. } => values.iter().any(|v| !(0.0..=1.0).contains(v)),
            // Linear extrapolation leaves [0, 1] unless the function is flat.
            ScoreFn::PiecewiseLinear { values, .. } => {
                values.iter().any(|v| !(0.0..=1.0).contains(v))
                    || values.windows(2).any(|w| w[0] != w[1])
            }
            ScoreFn::Custom(_) => false,
        };
        if bad {
            return Err(Error::param(name, format!("{self:?} is not a probability")));
        }
        Ok(())
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// Reviews the next paper iff the current one was accepted.
#[derive(Clone, Debug)]
pub struct NaiveSequential {
    pub p_acc: ScoreFn,
}

pub fn make_naive_sequential(p_acc: ScoreFn) -> Result<NaiveSequential> {
    p_acc.check_probability("p_acc")?;
    Ok(NaiveSequential { p_acc })
}

impl SequentialMechanism for NaiveSequential {
    type State = ();

    fn initial_state(&self) {}

    fn acceptance_prob(&self, score: f64) -> f64 {
        clamp_prob(self.p_acc.eval(score))
    }

    fn review_prob(&self, _round: usize, _state: &()) -> f64 {
        1.0
    }

    fn transition(&self, _round: usize, _state: &(), _score: f64, accepted: bool) -> StateDist<()> {
        if accepted {
            StateDist::point(ReviewState::Live(()))
        } else {
            StateDist::point(ReviewState::Terminated)
        }
    }

    fn compare_states(&self, _a: &(), _b: &()) -> Ordering {
        Ordering::Equal
    }
}

/// `(α, γ)`: last acceptance outcome and last continuation coin. `(0, 0)` is
/// the termination state and is never represented here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoinFlipState {
    pub accepted: bool,
    pub heads: bool,
}

#[derive(Clone, Debug)]
pub struct CoinFlip {
    pub p_acc: ScoreFn,
    pub rho: ScoreFn,
}

pub fn make_coin_flip(p_acc: ScoreFn, rho: ScoreFn) -> Result<CoinFlip> {
    p_acc.check_probability("p_acc")?;
    rho.check_probability("rho")?;
    Ok(CoinFlip { p_acc, rho })
}

/// Coin-flip with `ρ ≡ 1`: every paper is reviewed independently.
pub fn make_parallel(p_acc: ScoreFn) -> Result<CoinFlip> {
    make_coin_flip(p_acc, ScoreFn::Constant(1.0))
}

impl SequentialMechanism for CoinFlip {
    type State = CoinFlipState;

    fn initial_state(&self) -> CoinFlipState {
        CoinFlipState {
            accepted: true,
            heads: false,
        }
    }

    fn acceptance_prob(&self, score: f64) -> f64 {
        clamp_prob(self.p_acc.eval(score))
    }

    fn review_prob(&self, _round: usize, _state: &CoinFlipState) -> f64 {
        1.0
    }

    fn transition(
        &self,
        _round: usize,
        _state: &CoinFlipState,
        score: f64,
        accepted: bool,
    ) -> StateDist<CoinFlipState> {
        let rho = clamp_prob(self.rho.eval(score));
        let mut d = StateDist::new();
        d.push(
            ReviewState::Live(CoinFlipState {
                accepted,
                heads: true,
            }),
            rho,
        );
        let tails = if accepted {
            ReviewState::Live(CoinFlipState {
                accepted,
                heads: false,
            })
        } else {
            ReviewState::Terminated
        };
        d.push(tails, 1.0 - rho);
        d
    }

    /// All live states are equivalent.
    fn compare_states(&self, _a: &CoinFlipState, _b: &CoinFlipState) -> Ordering {
        Ordering::Equal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdSeqSpec {
    pub tau_acc: f64,
    pub tau_rev: f64,
}

impl ThresholdSeqSpec {
    pub fn new(tau_acc: f64, tau_rev: f64) -> Result<Self> {
        if tau_acc.is_nan() || tau_rev.is_nan() {
            return Err(Error::param("tau", "thresholds must not be NaN"));
        }
        if tau_acc < tau_rev {
            return Err(Error::param(
                "tau_rev",
                format!("tau_acc = {tau_acc} must be at least tau_rev = {tau_rev}"),
            ));
        }
        Ok(ThresholdSeqSpec { tau_acc, tau_rev })
    }

    pub fn parallel(tau_acc: f64) -> Self {
        ThresholdSeqSpec {
            tau_acc,
            tau_rev: f64::NEG_INFINITY,
        }
    }
}

/// Coin-flip with threshold acceptance at `tau_acc` and threshold
/// continuation at `tau_rev`.
pub fn make_threshold_sequential(spec: ThresholdSeqSpec) -> Result<CoinFlip> {
    let spec = ThresholdSeqSpec::new(spec.tau_acc, spec.tau_rev)?;
    make_coin_flip(
        ScoreFn::Threshold(spec.tau_acc),
        ScoreFn::Threshold(spec.tau_rev),
    )
}

const CREDIT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CreditPoolSpec {
    pub initial_credit: f64,
    pub beta: ScoreFn,
    pub p_acc: ScoreFn,
    pub credit_cap: Option<f64>,
}

/// Reviews while the running credit `B` is nonnegative; each reviewed paper
/// adds `β(r)`. With a cap, credit is clamped after every addition.
#[derive(Clone, Debug)]
pub struct CreditPool {
    spec: CreditPoolSpec,
}

pub fn make_credit_pool(spec: CreditPoolSpec) -> Result<CreditPool> {
    if !(spec.initial_credit >= 0.0 && spec.initial_credit.is_finite()) {
        return Err(Error::param(
            "initial_credit",
            "must be finite and nonnegative",
        ));
    }
    if let Some(cap) = spec.credit_cap {
        if !(cap >= 0.0) {
            return Err(Error::param("credit_cap", "must be nonnegative"));
        }
    }
    spec.p_acc.check_probability("p_acc")?;
    Ok(CreditPool { spec })
}

impl CreditPool {
    pub fn spec(&self) -> &CreditPoolSpec {
        &self.spec
    }

    fn clamp(&self, b: f64) -> f64 {
        match self.spec.credit_cap {
            Some(cap) => b.min(cap),
            None => b,
        }
    }
}

impl SequentialMechanism for CreditPool {
    type State = f64;

    fn initial_state(&self) -> f64 {
        self.clamp(self.spec.initial_credit)
    }

    fn acceptance_prob(&self, score: f64) -> f64 {
        clamp_prob(self.spec.p_acc.eval(score))
    }

    fn review_prob(&self, _round: usize, credit: &f64) -> f64 {
        if *credit >= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn transition(
        &self,
        _round: usize,
        credit: &f64,
        score: f64,
        _accepted: bool,
    ) -> StateDist<f64> {
        let next = self.clamp(credit + self.spec.beta.eval(score));
        if next >= 0.0 {
            StateDist::point(ReviewState::Live(next))
        } else {
            StateDist::point(ReviewState::Terminated)
        }
    }

    /// Credits that differ only by summation-order rounding are equivalent.
    fn compare_states(&self, a: &f64, b: &f64) -> Ordering {
        if (a - b).abs() <= CREDIT_TOL * (1.0 + a.abs() + b.abs()) {
            Ordering::Equal
        } else {
            a.total_cmp(b)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BundleSpec {
    pub bundle_size: usize,
    /// Acceptances needed within a bundle to review the next bundle.
    pub min_accepts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BundleState {
    /// Position within the current bundle.
    pub position: usize,
    /// Acceptances so far in the current bundle.
    pub accepted: usize,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub spec: BundleSpec,
    pub p_acc: ScoreFn,
}

pub fn make_bundle_mechanism(spec: BundleSpec, p_acc: ScoreFn) -> Result<Bundle> {
    if spec.bundle_size == 0 {
        return Err(Error::param("bundle_size", "must be at least 1"));
    }
    if spec.min_accepts == 0 || spec.min_accepts > spec.bundle_size {
        return Err(Error::param("min_accepts", "must lie in 1..=bundle_size"));
    }
    p_acc.check_probability("p_acc")?;
    Ok(Bundle { spec, p_acc })
}

impl SequentialMechanism for Bundle {
    type State = BundleState;

    fn initial_state(&self) -> BundleState {
        BundleState {
            position: 0,
            accepted: 0,
        }
    }

    fn acceptance_prob(&self, score: f64) -> f64 {
        clamp_prob(self.p_acc.eval(score))
    }

    fn review_prob(&self, _round: usize, _state: &BundleState) -> f64 {
        1.0
    }

    fn transition(
        &self,
        _round: usize,
        state: &BundleState,
        _score: f64,
        accepted: bool,
    ) -> StateDist<BundleState> {
        let position = state.position + 1;
        let count = state.accepted + usize::from(accepted);
        if position < self.spec.bundle_size {
            return StateDist::point(ReviewState::Live(BundleState {
                position,
                accepted: count,
            }));
        }
        if count >= self.spec.min_accepts {
            StateDist::point(ReviewState::Live(self.initial_state()))
        } else {
            StateDist::point(ReviewState::Terminated)
        }
    }

    fn compare_states(&self, a: &BundleState, b: &BundleState) -> Ordering {
        a.accepted.cmp(&b.accepted)
    }
}

/// Euclidean projection of `values` onto nonincreasing sequences
/// (pool-adjacent-violators).
pub fn pava_nonincreasing(values: &[f64]) -> Vec<f64> {
    // Blocks of (sum, count); merge while a later block's mean exceeds
    // the previous one's.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s1 * c0 as f64 > s0 * c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        out.extend(std::iter::repeat_n(s / c as f64, c));
    }
    out
}

/// Projects per-paper `scores` onto the ordering reported by `permutation`:
/// the paper ranked first must have the largest adjusted score.
pub fn isotonic_adjust(scores: &[f64], permutation: &Permutation) -> Result<Vec<f64>> {
    if scores.len() != permutation.len() {
        return Err(Error::LengthMismatch {
            what: "scores",
            got: scores.len(),
            expected: permutation.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::param("scores", "must be finite"));
    }
    let order = permutation.review_order();
    let ranked: Vec<f64> = order.iter().map(|&p| scores[p]).collect();
    let fitted = pava_nonincreasing(&ranked);
    let mut out = vec![0.0; scores.len()];
    for (k, &p) in order.iter().enumerate() {
        out[p] = fitted[k];
    }
    Ok(out)
}

/// Per-paper acceptance flags: adjusted score `>= tau`.
pub fn isotonic_mechanism_accept(
    scores: &[f64],
    permutation: &Permutation,
    tau: f64,
) -> Result<Vec<bool>> {
    Ok(isotonic_adjust(scores, permutation)?
        .into_iter()
        .map(|s| s >= tau)
        .collect())
}

/// Reviews every paper, projects scores onto the reported ranking, then
/// thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IsotonicMechanism {
    pub tau: f64,
}

/// Per-round acceptance probabilities for fixed per-round scores.
pub trait AcceptanceOracle {
    /// `scores[i]` is the score of the paper reviewed in round `i`.
    fn acceptance_probabilities(&self, scores: &[f64]) -> Result<Vec<f64>>;
}

impl<M: SequentialMechanism> AcceptanceOracle for M {
    fn acceptance_probabilities(&self, scores: &[f64]) -> Result<Vec<f64>> {
        acceptance_chain_probabilities(self, scores)
    }
}

impl AcceptanceOracle for IsotonicMechanism {
    fn acceptance_probabilities(&self, scores: &[f64]) -> Result<Vec<f64>> {
        Ok(pava_nonincreasing(scores)
            .into_iter()
            .map(|s| if s >= self.tau { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Any of the built-in mechanisms behind one type.
#[derive(Clone, Debug)]
pub enum Mechanism {
    Naive(NaiveSequential),
    CoinFlip(CoinFlip),
    CreditPool(CreditPool),
    Bundle(Bundle),
    Isotonic(IsotonicMechanism),
}

impl Mechanism {
    /// Simulates one author. The isotonic mechanism reviews everything.
    pub fn simulate(
        &self,
        qualities: &[f64],
        permutation: &Permutation,
        noise: &NoiseModel,
        seed: u64,
    ) -> Result<ReviewOutcome> {
        match self {
            Mechanism::Naive(m) => run_mechanism(m, qualities, permutation, noise, seed),
            Mechanism::CoinFlip(m) => run_mechanism(m, qualities, permutation, noise, seed),
            Mechanism::CreditPool(m) => run_mechanism(m, qualities, permutation, noise, seed),
            Mechanism::Bundle(m) => run_mechanism(m, qualities, permutation, noise, seed),
            Mechanism::Isotonic(m) => {
                if permutation.len() != qualities.len() {
                    return Err(Error::LengthMismatch {
                        what: "permutation",
                        got: permutation.len(),
                        expected: qualities.len(),
                    });
                }
                noise.validate()?;
                let order = permutation.review_order();
                let scores: Vec<f64> = order
                    .iter()
                    .enumerate()
                    .map(|(round, &p)| {
                        let mut rng =
                            Stream::new(seed, "mechanism-round", round as u64).derive("noise", 0);
                        qualities[p] + noise.sample(&mut rng)
                    })
                    .collect();
                let accepted = m
                    .acceptance_probabilities(&scores)?
                    .iter()
                    .map(|p| *p == 1.0)
                    .collect();
                let n = scores.len();
                ReviewOutcome::new(
                    order,
                    vec![true; n],
                    accepted,
                    scores.into_iter().map(Some).collect(),
                )
            }
        }
    }
}

impl AcceptanceOracle for Mechanism {
    fn acceptance_probabilities(&self, scores: &[f64]) -> Result<Vec<f64>> {
        match self {
            Mechanism::Naive(m) => m.acceptance_probabilities(scores),
            Mechanism::CoinFlip(m) => m.acceptance_probabilities(scores),
            Mechanism::CreditPool(m) => m.acceptance_probabilities(scores),
            Mechanism::Bundle(m) => m.acceptance_probabilities(scores),
            Mechanism::Isotonic(m) => m.acceptance_probabilities(scores),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::review_chain_probabilities;

    #[test]
    fn score_fn_shapes() {
        let s = ScoreFn::step(vec![0.0, 1.0], vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(s.eval(-1.0), 0.1);
        assert_eq!(s.eval(0.0), 0.5);
        assert_eq!(s.eval(1.0), 0.9);
        let pl = ScoreFn::piecewise_linear(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert_eq!(pl.eval(0.5), 1.0);
        assert_eq!(pl.eval(-1.0), -2.0);
        assert_eq!(pl.eval(3.0), 6.0);
        assert_eq!(ScoreFn::Threshold(0.0).eval(0.0), 1.0);
        assert!(ScoreFn::step(vec![1.0, 0.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn probabilities_are_validated() {
        assert!(make_naive_sequential(ScoreFn::Constant(1.5)).is_err());
        assert!(make_coin_flip(ScoreFn::Constant(0.5), ScoreFn::Constant(-0.1)).is_err());
        assert!(make_threshold_sequential(ThresholdSeqSpec {
            tau_acc: 0.0,
            tau_rev: 1.0
        })
        .is_err());
        assert!(make_bundle_mechanism(
            BundleSpec {
                bundle_size: 2,
                min_accepts: 3
            },
            ScoreFn::Constant(0.5)
        )
        .is_err());
    }

    #[test]
    fn pava_examples() {
        assert_eq!(pava_nonincreasing(&[1.0, 3.0]), vec![2.0, 2.0]);
        assert_eq!(pava_nonincreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(pava_nonincreasing(&[-1.0, -1.0, 2.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(
            pava_nonincreasing(&[1.0, 0.0, 2.0, 5.0]),
            vec![2.0, 2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn coin_flip_chain_is_product() {
        let m = make_coin_flip(ScoreFn::Constant(0.5), ScoreFn::Constant(0.5)).unwrap();
        let chain = review_chain_probabilities(&m, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(chain, vec![1.0, 0.75, 0.5625]);
    }
}
