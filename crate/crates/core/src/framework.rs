//! Sequential review mechanisms as (acceptance policy, review policy, state
//! transition) triples over ordered review states.
//!
//! The termination state is part of [`ReviewState`] rather than of each
//! mechanism's own state type, so the framework enforces that it is never
//! reviewed, always absorbing, and strictly below every live state.
//! Mechanisms describe only their live states.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NoiseModel, Permutation};
use crate::rng::Stream;

const MASS_TOL: f64 = 1e-12;
const FOSD_TOL: f64 = 1e-12;
/// Largest number of distinct live states tracked by the exact recursion.
pub const MAX_TRACKED_STATES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ReviewState<S> {
    Live(S),
    Terminated,
}

impl<S> ReviewState<S> {
    pub fn is_terminated(&self) -> bool {
        matches!(self, ReviewState::Terminated)
    }

    pub fn live(&self) -> Option<&S> {
        match self {
            ReviewState::Live(s) => Some(s),
            ReviewState::Terminated => None,
        }
    }
}

/// Finite distribution over next-round states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDist<S> {
    atoms: Vec<(ReviewState<S>, f64)>,
}

impl<S: Clone + PartialEq> StateDist<S> {
    pub fn new() -> Self {
        StateDist { atoms: Vec::new() }
    }

    pub fn point(state: ReviewState<S>) -> Self {
        StateDist {
            atoms: vec![(state, 1.0)],
        }
    }

    /// Adds mass to `state`, merging with an equal atom. Zero mass is dropped.
    pub fn push(&mut self, state: ReviewState<S>, mass: f64) {
        if mass == 0.0 {
            return;
        }
        if let Some(slot) = self.atoms.iter_mut().find(|(s, _)| *s == state) {
            slot.1 += mass;
        } else {
            self.atoms.push((state, mass));
        }
    }

    pub fn atoms(&self) -> &[(ReviewState<S>, f64)] {
        &self.atoms
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum()
    }

    pub fn mass_of(&self, state: &ReviewState<S>) -> f64 {
        self.atoms
            .iter()
            .filter(|(s, _)| s == state)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn termination_mass(&self) -> f64 {
        self.mass_of(&ReviewState::Terminated)
    }

    fn check(&self) -> Result<()> {
        if self
            .atoms
            .iter()
            .any(|(_, p)| !(*p >= 0.0 && *p <= 1.0 + MASS_TOL))
        {
            return Err(Error::MechanismDefinition(
                "transition emitted a probability outside [0, 1]".into(),
            ));
        }
        let total = self.total();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MechanismDefinition(format!(
                "transition distribution sums to {total}, not 1"
            )));
        }
        Ok(())
    }

    fn sample(&self, u: f64) -> ReviewState<S> {
        let mut acc = 0.0;
        for (s, p) in &self.atoms {
            acc += p;
            if u < acc {
                return s.clone();
            }
        }
        self.atoms
            .last()
            .map(|(s, _)| s.clone())
            .unwrap_or(ReviewState::Terminated)
    }
}

impl<S: Clone + PartialEq> Default for StateDist<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// A sequential review mechanism.
///
/// `transition` receives the acceptance outcome of the current round so
/// that states may record it (the coin-flip states do). The unconditional
/// transition `μ(φ, r)` is [`marginal_transition`].
pub trait SequentialMechanism {
    type State: Clone + Debug + PartialEq;

    /// State of round one.
    fn initial_state(&self) -> Self::State;

    /// `P_acc(r)`, memoryless.
    fn acceptance_prob(&self, score: f64) -> f64;

    /// `P_rev` on a live state in `round` (0-based).
    fn review_prob(&self, round: usize, state: &Self::State) -> f64;

    /// Next-round state distribution given the current live state, the
    /// round's score and whether the round's paper was accepted.
    fn transition(
        &self,
        round: usize,
        state: &Self::State,
        score: f64,
        accepted: bool,
    ) -> StateDist<Self::State>;

    /// Total preorder on live states.
    fn compare_states(&self, a: &Self::State, b: &Self::State) -> Ordering;
}

/// Preorder on review states: the termination state is the unique minimum.
pub fn compare_review_states<M: SequentialMechanism>(
    mech: &M,
    a: &ReviewState<M::State>,
    b: &ReviewState<M::State>,
) -> Ordering {
    match (a, b) {
        (ReviewState::Terminated, ReviewState::Terminated) => Ordering::Equal,
        (ReviewState::Terminated, _) => Ordering::Less,
        (_, ReviewState::Terminated) => Ordering::Greater,
        (ReviewState::Live(x), ReviewState::Live(y)) => mech.compare_states(x, y),
    }
}

pub fn review_prob_of<M: SequentialMechanism>(
    mech: &M,
    round: usize,
    state: &ReviewState<M::State>,
) -> f64 {
    match state {
        ReviewState::Live(s) => mech.review_prob(round, s),
        ReviewState::Terminated => 0.0,
    }
}

/// `μ_round(φ, r)`: the transition averaged over the acceptance coin.
pub fn marginal_transition<M: SequentialMechanism>(
    mech: &M,
    round: usize,
    state: &ReviewState<M::State>,
    score: f64,
) -> Result<StateDist<M::State>> {
    let ReviewState::Live(s) = state else {
        return Ok(StateDist::point(ReviewState::Terminated));
    };
    let p_acc = mech.acceptance_prob(score);
    let mut out = StateDist::new();
    for (accepted, w) in [(true, p_acc), (false, 1.0 - p_acc)] {
        if w == 0.0 {
            continue;
        }
        let branch = mech.transition(round, s, score, accepted);
        branch.check()?;
        for (next, p) in branch.atoms {
            out.push(next, w * p);
        }
    }
    Ok(out)
}

/// `μ̃(r1, r2 | φ)`: the state after two consecutive transitions.
pub fn two_round_transition<M: SequentialMechanism>(
    mech: &M,
    round: usize,
    state: &ReviewState<M::State>,
    first: f64,
    second: f64,
) -> Result<StateDist<M::State>> {
    let mid = marginal_transition(mech, round, state, first)?;
    let mut out = StateDist::new();
    for (s, p) in mid.atoms() {
        for (t, q) in marginal_transition(mech, round + 1, s, second)?.atoms {
            out.push(t, p * q);
        }
    }
    Ok(out)
}

/// One author's realized review sequence, indexed by round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReviewOutcome {
    order: Vec<usize>,
    reviewed: Vec<bool>,
    accepted: Vec<bool>,
    scores: Vec<Option<f64>>,
    terminal_round: Option<usize>,
}

impl ReviewOutcome {
    /// Validates that acceptance implies review and that reviewed rounds
    /// form a prefix.
    pub fn new(
        order: Vec<usize>,
        reviewed: Vec<bool>,
        accepted: Vec<bool>,
        scores: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = order.len();
        for (what, len) in [
            ("reviewed", reviewed.len()),
            ("accepted", accepted.len()),
            ("scores", scores.len()),
        ] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    got: len,
                    expected: n,
                });
            }
        }
        Permutation::from_order(&order)?;
        if accepted.iter().zip(&reviewed).any(|(a, r)| *a && !*r) {
            return Err(Error::param(
                "accepted",
                "a paper was accepted without review",
            ));
        }
        if reviewed.windows(2).any(|w| !w[0] && w[1]) {
            return Err(Error::param(
                "reviewed",
                "reviewed rounds must form a prefix",
            ));
        }
        if reviewed.iter().zip(&scores).any(|(r, s)| *r != s.is_some()) {
            return Err(Error::param(
                "scores",
                "exactly the reviewed rounds carry a score",
            ));
        }
        let terminal_round = reviewed.iter().position(|r| !r);
        Ok(ReviewOutcome {
            order,
            reviewed,
            accepted,
            scores,
            terminal_round,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Paper reviewed in each round.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn reviewed(&self) -> &[bool] {
        &self.reviewed
    }

    pub fn accepted(&self) -> &[bool] {
        &self.accepted
    }

    pub fn scores(&self) -> &[Option<f64>] {
        &self.scores
    }

    /// First round that was not reviewed, if any.
    pub fn terminal_round(&self) -> Option<usize> {
        self.terminal_round
    }

    pub fn reviewed_count(&self) -> usize {
        self.reviewed.iter().filter(|r| **r).count()
    }

    /// Acceptance flags indexed by paper rather than by round.
    pub fn accepted_papers(&self) -> Vec<bool> {
        let mut out = vec![false; self.order.len()];
        for (round, &paper) in self.order.iter().enumerate() {
            out[paper] = self.accepted[round];
        }
        out
    }
}

fn round_stream(seed: u64, round: usize, label: &str) -> Stream {
    Stream::new(seed, "mechanism-round", round as u64).derive(label, 0)
}

/// Simulates one author's submissions in the order given by `permutation`.
pub fn run_mechanism<M: SequentialMechanism>(
    mech: &M,
    qualities: &[f64],
    permutation: &Permutation,
    noise: &NoiseModel,
    seed: u64,
) -> Result<ReviewOutcome> {
    if permutation.len() != qualities.len() {
        return Err(Error::LengthMismatch {
            what: "permutation",
            got: permutation.len(),
            expected: qualities.len(),
        });
    }
    noise.validate()?;
    let n = qualities.len();
    let order = permutation.review_order();
    let mut reviewed = vec![false; n];
    let mut accepted = vec![false; n];
    let mut scores = vec![None; n];
    let mut state = ReviewState::Live(mech.initial_state());
    for round in 0..n {
        let ReviewState::Live(live) = &state else {
            break;
        };
        let p_rev = mech.review_prob(round, live);
        if round_stream(seed, round, "review").uniform() >= p_rev {
            break;
        }
        let score = qualities[order[round]] + noise.sample(&mut round_stream(seed, round, "noise"));
        let acc = round_stream(seed, round, "accept").uniform() < mech.acceptance_prob(score);
        reviewed[round] = true;
        accepted[round] = acc;
        scores[round] = Some(score);
        if round + 1 < n {
            let next = mech.transition(round, live, score, acc);
            next.check()?;
            state = next.sample(round_stream(seed, round, "transition").uniform());
        }
    }
    ReviewOutcome::new(order, reviewed, accepted, scores)
}

/// Independent per-paper review with the same random draws as
/// [`run_mechanism`]: every round is reviewed and accepted with `P_acc`.
pub fn run_parallel(
    acceptance: impl Fn(f64) -> f64,
    qualities: &[f64],
    permutation: &Permutation,
    noise: &NoiseModel,
    seed: u64,
) -> Result<ReviewOutcome> {
    noise.validate()?;
    let order = permutation.review_order();
    let n = order.len();
    let mut accepted = vec![false; n];
    let mut scores = vec![None; n];
    for round in 0..n {
        let score = qualities[order[round]] + noise.sample(&mut round_stream(seed, round, "noise"));
        accepted[round] = round_stream(seed, round, "accept").uniform() < acceptance(score);
        scores[round] = Some(score);
    }
    ReviewOutcome::new(order, vec![true; n], accepted, scores)
}

/// Exact `Pr(round i is reviewed)` for fixed per-round scores, by forward
/// propagation of the state distribution.
pub fn review_chain_probabilities<M: SequentialMechanism>(
    mech: &M,
    scores: &[f64],
) -> Result<Vec<f64>> {
    let mut dist: StateDist<M::State> = StateDist::point(ReviewState::Live(mech.initial_state()));
    let mut out = Vec::with_capacity(scores.len());
    for (round, &score) in scores.iter().enumerate() {
        let mut p_review = 0.0;
        let mut next = StateDist::new();
        let last = round + 1 == scores.len();
        for (state, mass) in dist.atoms() {
            let ReviewState::Live(live) = state else {
                next.push(ReviewState::Terminated, *mass);
                continue;
            };
            let p_rev = mech.review_prob(round, live);
            if !(0.0..=1.0).contains(&p_rev) {
                return Err(Error::MechanismDefinition(format!(
                    "review probability {p_rev} outside [0, 1]"
                )));
            }
            p_review += mass * p_rev;
            if last {
                continue;
            }
            next.push(ReviewState::Terminated, mass * (1.0 - p_rev));
            if p_rev > 0.0 {
                for (s, q) in marginal_transition(mech, round, state, score)?.atoms {
                    next.push(s, mass * p_rev * q);
                }
            }
        }
        out.push(p_review);
        if next.atoms().len() > MAX_TRACKED_STATES {
            return Err(Error::UnsupportedMechanism(format!(
                "more than {MAX_TRACKED_STATES} distinct review states after round {}",
                round + 1
            )));
        }
        dist = next;
    }
    Ok(out)
}

/// `Pr(round i is accepted)`: review probability times the memoryless
/// acceptance probability.
pub fn acceptance_chain_probabilities<M: SequentialMechanism>(
    mech: &M,
    scores: &[f64],
) -> Result<Vec<f64>> {
    let chain = review_chain_probabilities(mech, scores)?;
    Ok(chain
        .into_iter()
        .zip(scores)
        .map(|(p, &r)| p * mech.acceptance_prob(r))
        .collect())
}

/// Whether `p_acc` is nondecreasing on the (sorted) grid.
pub fn check_acceptance_monotone(p_acc: impl Fn(f64) -> f64, score_grid: &[f64]) -> bool {
    let mut grid = score_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.windows(2).all(|w| p_acc(w[1]) >= p_acc(w[0]))
}

/// Whether `P_rev` respects the state preorder in each of the first `rounds`
/// rounds. The termination state is always included.
pub fn check_review_policy_monotone<M: SequentialMechanism>(
    mech: &M,
    states: &[ReviewState<M::State>],
    rounds: usize,
) -> bool {
    let mut all = states.to_vec();
    all.push(ReviewState::Terminated);
    (0..rounds).all(|round| {
        all.iter().all(|hi| {
            all.iter().all(|lo| {
                compare_review_states(mech, hi, lo) == Ordering::Less
                    || review_prob_of(mech, round, hi) >= review_prob_of(mech, round, lo) - FOSD_TOL
            })
        })
    })
}

/// Tail mass `Pr(X ⪰ a)`.
pub fn tail_mass<M: SequentialMechanism>(
    mech: &M,
    dist: &StateDist<M::State>,
    a: &ReviewState<M::State>,
) -> f64 {
    dist.atoms()
        .iter()
        .filter(|(s, _)| compare_review_states(mech, s, a) != Ordering::Less)
        .map(|(_, p)| p)
        .sum()
}

/// First-order stochastic dominance of `x` over `y` on the state preorder.
/// Tail masses only change at support points, so those are the thresholds
/// checked.
pub fn fosd_dominates<M: SequentialMechanism>(
    mech: &M,
    x: &StateDist<M::State>,
    y: &StateDist<M::State>,
) -> bool {
    x.atoms()
        .iter()
        .chain(y.atoms())
        .all(|(a, _)| tail_mass(mech, x, a) >= tail_mass(mech, y, a) - FOSD_TOL)
}

type PairDist<S> = Vec<((ReviewState<S>, ReviewState<S>), f64)>;

/// Distribution of `(max(X, Y), min(X, Y))` for independent `X`, `Y`.
fn max_min_pairs<M: SequentialMechanism>(
    mech: &M,
    x: &StateDist<M::State>,
    y: &StateDist<M::State>,
) -> PairDist<M::State> {
    let mut out = Vec::with_capacity(x.atoms().len() * y.atoms().len());
    for (a, p) in x.atoms() {
        for (b, q) in y.atoms() {
            let pair = if compare_review_states(mech, a, b) == Ordering::Less {
                (b.clone(), a.clone())
            } else {
                (a.clone(), b.clone())
            };
            out.push((pair, p * q));
        }
    }
    out
}

/// Joint dominance of state pairs: `Pr(Z̄ ⪰ a, Z̲ ⪰ b)` compared over all
/// ordered threshold pairs drawn from the supports.
fn joint_pair_dominates<M: SequentialMechanism>(
    mech: &M,
    z: &PairDist<M::State>,
    w: &PairDist<M::State>,
) -> bool {
    let mut points: Vec<ReviewState<M::State>> = Vec::new();
    for ((hi, lo), _) in z.iter().chain(w.iter()) {
        for s in [hi, lo] {
            if !points.contains(s) {
                points.push(s.clone());
            }
        }
    }
    let joint_tail =
        |d: &PairDist<M::State>, a: &ReviewState<M::State>, b: &ReviewState<M::State>| -> f64 {
            d.iter()
                .filter(|((hi, lo), _)| {
                    compare_review_states(mech, hi, a) != Ordering::Less
                        && compare_review_states(mech, lo, b) != Ordering::Less
                })
                .map(|(_, p)| p)
                .sum()
        };
    points.iter().all(|a| {
        points
            .iter()
            .all(|b| joint_tail(z, a, b) >= joint_tail(w, a, b) - FOSD_TOL)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TransitionWitness<S> {
    /// `μ(φ, high)` fails to dominate `μ(φ, low)`.
    Score {
        state: ReviewState<S>,
        low: f64,
        high: f64,
    },
    /// `μ(better, r)` fails to dominate `μ(worse, r)`.
    State {
        better: ReviewState<S>,
        worse: ReviewState<S>,
        score: f64,
    },
    /// `μ̃(high, low | φ)` fails to dominate `μ̃(low, high | φ)`.
    Swap {
        state: ReviewState<S>,
        low: f64,
        high: f64,
    },
    /// Pair condition fails for `r1 <= r2 <= r3 <= r4`, `r1 + r4 = r2 + r3`.
    Quadruple {
        state: ReviewState<S>,
        scores: [f64; 4],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionReport<S> {
    pub score_monotone: bool,
    pub state_monotone: bool,
    /// Both parts of the ordering condition.
    pub ordering_monotone: bool,
    pub swap_monotone: bool,
    pub quadruple_monotone: bool,
    /// No grid quadruple satisfied the sum constraint.
    pub quadruple_vacuous: bool,
    pub witnesses: Vec<TransitionWitness<S>>,
}

impl<S> TransitionReport<S> {
    pub fn all_pass(&self) -> bool {
        self.score_monotone && self.state_monotone && self.ordering_monotone
    }
}

/// Exhaustive check of the three transition monotonicity conditions on a
/// finite state list and score grid, for transitions out of `round`.
pub fn check_transition_monotone<M: SequentialMechanism>(
    mech: &M,
    states: &[ReviewState<M::State>],
    score_grid: &[f64],
    round: usize,
) -> Result<TransitionReport<M::State>> {
    let mut grid = score_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut all = states.to_vec();
    if !all.contains(&ReviewState::Terminated) {
        all.push(ReviewState::Terminated);
    }
    let mut witnesses = Vec::new();

    let mut one_step = Vec::with_capacity(all.len());
    for s in &all {
        let row = grid
            .iter()
            .map(|&r| marginal_transition(mech, round, s, r))
            .collect::<Result<Vec<_>>>()?;
        one_step.push(row);
    }

    let mut score_monotone = true;
    for (si, s) in all.iter().enumerate() {
        for lo in 0..grid.len() {
            for hi in lo + 1..grid.len() {
                if !fosd_dominates(mech, &one_step[si][hi], &one_step[si][lo]) {
                    score_monotone = false;
                    witnesses.push(TransitionWitness::Score {
                        state: s.clone(),
                        low: grid[lo],
                        high: grid[hi],
                    });
                }
            }
        }
    }

    let mut state_monotone = true;
    for (bi, better) in all.iter().enumerate() {
        for (wi, worse) in all.iter().enumerate() {
            if bi == wi || compare_review_states(mech, better, worse) == Ordering::Less {
                continue;
            }
            for (ri, &r) in grid.iter().enumerate() {
                if !fosd_dominates(mech, &one_step[bi][ri], &one_step[wi][ri]) {
                    state_monotone = false;
                    witnesses.push(TransitionWitness::State {
                        better: better.clone(),
                        worse: worse.clone(),
                        score: r,
                    });
                }
            }
        }
    }

    let mut swap_monotone = true;
    let mut quadruple_monotone = true;
    let mut quadruple_vacuous = true;
    let m = grid.len();
    for s in &all {
        let mut two = vec![vec![StateDist::new(); m]; m];
        for (i, &a) in grid.iter().enumerate() {
            for (j, &b) in grid.iter().enumerate() {
                two[i][j] = two_round_transition(mech, round, s, a, b)?;
            }
        }
        for lo in 0..m {
            for hi in lo + 1..m {
                if !fosd_dominates(mech, &two[hi][lo], &two[lo][hi]) {
                    swap_monotone = false;
                    witnesses.push(TransitionWitness::Swap {
                        state: s.clone(),
                        low: grid[lo],
                        high: grid[hi],
                    });
                }
            }
        }
        for i1 in 0..m {
            for i2 in i1..m {
                for i3 in i2..m {
                    for i4 in i3..m {
                        let (r1, r2, r3, r4) = (grid[i1], grid[i2], grid[i3], grid[i4]);
                        if ((r1 + r4) - (r2 + r3)).abs() > 1e-9 * (1.0 + r1.abs() + r4.abs()) {
                            continue;
                        }
                        quadruple_vacuous = false;
                        let front = max_min_pairs(mech, &two[i4][i1], &two[i2][i3]);
                        let back = max_min_pairs(mech, &two[i1][i4], &two[i3][i2]);
                        if !joint_pair_dominates(mech, &front, &back) {
                            quadruple_monotone = false;
                            witnesses.push(TransitionWitness::Quadruple {
                                state: s.clone(),
                                scores: [r1, r2, r3, r4],
                            });
                        }
                    }
                }
            }
        }
    }

    Ok(TransitionReport {
        score_monotone,
        state_monotone,
        ordering_monotone: swap_monotone && quadruple_monotone,
        swap_monotone,
        quadruple_monotone,
        quadruple_vacuous,
        witnesses,
    })
}

/// Live states reachable from the initial state within `rounds` rounds when
/// every score is drawn from `score_grid`.
pub fn reachable_states<M: SequentialMechanism>(
    mech: &M,
    score_grid: &[f64],
    rounds: usize,
) -> Result<Vec<ReviewState<M::State>>> {
    let mut seen = vec![ReviewState::Live(mech.initial_state())];
    let mut frontier = seen.clone();
    for round in 0..rounds.saturating_sub(1) {
        let mut next = Vec::new();
        for s in &frontier {
            for &r in score_grid {
                for (t, _) in marginal_transition(mech, round, s, r)?.atoms {
                    if !t.is_terminated() && !seen.contains(&t) {
                        seen.push(t.clone());
                        next.push(t);
                    }
                }
            }
            if seen.len() > MAX_TRACKED_STATES {
                return Err(Error::UnsupportedMechanism(format!(
                    "more than {MAX_TRACKED_STATES} reachable states"
                )));
            }
        }
        frontier = next;
    }
    Ok(seen)
}

type ScorePolicy = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type ReviewPolicy<S> = Arc<dyn Fn(usize, &ReviewState<S>) -> f64 + Send + Sync>;
type TransitionFn<S> = Arc<dyn Fn(usize, &S, f64, bool) -> StateDist<S> + Send + Sync>;
type OrderFn<S> = Arc<dyn Fn(&S, &S) -> Ordering + Send + Sync>;

/// A mechanism assembled from closures, for experiments and tests. The
/// review policy is given on all states including termination, and the
/// constructor rejects policies that would review from the termination
/// state.
#[derive(Clone)]
pub struct CustomTriple<S> {
    initial: S,
    p_acc: ScorePolicy,
    p_rev: ReviewPolicy<S>,
    transition: TransitionFn<S>,
    order: OrderFn<S>,
}

impl<S: Clone + Debug + PartialEq> CustomTriple<S> {
    /// `p_rev` is probed on the termination state for the first
    /// `check_rounds` rounds.
    pub fn new(
        initial: S,
        p_acc: impl Fn(f64) -> f64 + Send + Sync + 'static,
        p_rev: impl Fn(usize, &ReviewState<S>) -> f64 + Send + Sync + 'static,
        transition: impl Fn(usize, &S, f64, bool) -> StateDist<S> + Send + Sync + 'static,
        order: impl Fn(&S, &S) -> Ordering + Send + Sync + 'static,
        check_rounds: usize,
    ) -> Result<Self> {
        for round in 0..check_rounds.max(1) {
            let p = p_rev(round, &ReviewState::Terminated);
            if p != 0.0 {
                return Err(Error::MechanismDefinition(format!(
                    "review policy must be 0 on the termination state, got {p} in round {}",
                    round + 1
                )));
            }
        }
        Ok(CustomTriple {
            initial,
            p_acc: Arc::new(p_acc),
            p_rev: Arc::new(p_rev),
            transition: Arc::new(transition),
            order: Arc::new(order),
        })
    }
}

impl<S: Clone + Debug + PartialEq> Debug for CustomTriple<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomTriple")
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

impl<S: Clone + Debug + PartialEq> SequentialMechanism for CustomTriple<S> {
    type State = S;

    fn initial_state(&self) -> S {
        self.initial.clone()
    }

    fn acceptance_prob(&self, score: f64) -> f64 {
        (self.p_acc)(score)
    }

    fn review_prob(&self, round: usize, state: &S) -> f64 {
        (self.p_rev)(round, &ReviewState::Live(state.clone()))
    }

    fn transition(&self, round: usize, state: &S, score: f64, accepted: bool) -> StateDist<S> {
        (self.transition)(round, state, score, accepted)
    }

    fn compare_states(&self, a: &S, b: &S) -> Ordering {
        (self.order)(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaky(total: f64) -> CustomTriple<()> {
        CustomTriple::new(
            (),
            |_| 0.5,
            |_, s: &ReviewState<()>| if s.is_terminated() { 0.0 } else { 1.0 },
            move |_, _, _, _| {
                let mut d = StateDist::new();
                d.push(ReviewState::Live(()), total);
                d
            },
            |_, _| Ordering::Equal,
            4,
        )
        .unwrap()
    }

    #[test]
    fn transition_mass_is_validated() {
        let q = [1.0, 1.0, 1.0];
        let p = Permutation::identity(3);
        let err = run_mechanism(&leaky(0.9), &q, &p, &NoiseModel::zero(), 1).unwrap_err();
        assert!(matches!(err, Error::MechanismDefinition(_)));
        assert!(review_chain_probabilities(&leaky(0.9), &q).is_err());
        assert!(run_mechanism(&leaky(1.0), &q, &p, &NoiseModel::zero(), 1).is_ok());
    }

    #[test]
    fn reviewing_from_termination_is_rejected() {
        let r = CustomTriple::new(
            (),
            |_| 0.5,
            |_, _: &ReviewState<()>| 1.0,
            |_, _, _, _| StateDist::point(ReviewState::Live(())),
            |_, _| Ordering::Equal,
            4,
        );
        assert!(matches!(r, Err(Error::MechanismDefinition(_))));
    }

    #[test]
    fn outcome_invariants_are_enforced() {
        let ok = ReviewOutcome::new(
            vec![0, 1],
            vec![true, false],
            vec![true, false],
            vec![Some(1.0), None],
        );
        assert_eq!(ok.unwrap().terminal_round(), Some(1));
        assert!(ReviewOutcome::new(
            vec![0, 1],
            vec![false, true],
            vec![false, false],
            vec![None, Some(1.0)]
        )
        .is_err());
        assert!(ReviewOutcome::new(
            vec![0, 1],
            vec![true, false],
            vec![true, true],
            vec![Some(1.0), None]
        )
        .is_err());
    }

    #[test]
    fn acceptance_monotone_checker() {
        let grid: Vec<f64> = (-5..=5).map(|i| i as f64 * 0.5).collect();
        assert!(check_acceptance_monotone(
            |r| if r >= 0.0 { 1.0 } else { 0.0 },
            &grid
        ));
        assert!(check_acceptance_monotone(|_| 0.3, &grid));
        assert!(!check_acceptance_monotone(
            |r| if r == 1.0 {
                0.2
            } else if r >= 0.0 {
                1.0
            } else {
                0.0
            },
            &grid
        ));
    }
}
