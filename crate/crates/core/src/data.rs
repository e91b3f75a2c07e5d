//! Review datasets and model fitting.
//!
//! A dataset is a text file with one JSON object per line:
//!
//! ```text
//! {"score_set": {"min": 1, "max": 10}}
//! {"paper_id": "p1", "authors": ["a1", "a2"], "scores": [5, 6, 3]}
//! ```
//!
//! The `score_set` header is optional and must be the first non-blank line
//! when present; without it scores must lie in `{1, ..., 10}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::softmax::{PaperCountPmf, PosteriorGrid, SoftmaxSetting};
use crate::model::SoftmaxScoreModel;
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub paper_id: String,
    pub authors: Vec<String>,
    pub scores: Vec<i32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: i32,
    pub max: i32,
}

impl Default for ScoreRange {
    fn default() -> Self {
        ScoreRange { min: 1, max: 10 }
    }
}

impl ScoreRange {
    pub fn scores(&self) -> Vec<i32> {
        (self.min..=self.max).collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    score_set: ScoreRange,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    paper_id: String,
    authors: Vec<String>,
    scores: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub score_range: ScoreRange,
    pub records: Vec<SubmissionRecord>,
}

pub fn parse_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset_str(&text)
}

pub fn parse_dataset_str(text: &str) -> Result<Dataset> {
    let mut score_range = ScoreRange::default();
    let mut records = Vec::new();
    let mut seen_ids = BTreeSet::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let schema = |reason: String| Error::Schema {
            line: lineno,
            reason,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if first {
            first = false;
            if let Ok(h) = serde_json::from_str::<Header>(line) {
                if h.score_set.min > h.score_set.max {
                    return Err(schema("score_set min exceeds max".into()));
                }
                score_range = h.score_set;
                continue;
            }
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        if raw.authors.is_empty() {
            return Err(schema("authors must be nonempty".into()));
        }
        if raw.scores.is_empty() {
            return Err(schema("scores must be nonempty".into()));
        }
        if let Some(s) = raw
            .scores
            .iter()
            .find(|s| **s < score_range.min || **s > score_range.max)
        {
            return Err(schema(format!(
                "score {s} outside [{}, {}]",
                score_range.min, score_range.max
            )));
        }
        if !seen_ids.insert(raw.paper_id.clone()) {
            return Err(schema(format!("duplicate paper_id {}", raw.paper_id)));
        }
        records.push(SubmissionRecord {
            paper_id: raw.paper_id,
            authors: raw.authors,
            scores: raw.scores,
        });
    }
    Ok(Dataset {
        score_range,
        records,
    })
}

pub fn write_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    let header = serde_json::json!({"score_set": dataset.score_range});
    writeln!(out, "{header}").unwrap();
    for r in &dataset.records {
        writeln!(out, "{}", serde_json::to_string(r).unwrap()).unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Assignment {
    /// Paper id to its assigned author.
    pub paper_author: BTreeMap<String, String>,
    /// Selected authors with their remaining paper count at selection.
    pub selections: Vec<(String, usize)>,
}

impl Assignment {
    /// Papers per author, for authors with at least one paper.
    pub fn counts(&self) -> Vec<usize> {
        self.selections.iter().map(|s| s.1).collect()
    }
}

/// Repeatedly picks the author with the most unassigned papers (ties broken
/// by a seeded draw), gives them all of those papers, and removes them.
pub fn greedy_author_assignment(records: &[SubmissionRecord], seed: u64) -> Assignment {
    let mut author_ids: Vec<&str> = records
        .iter()
        .flat_map(|r| r.authors.iter().map(String::as_str))
        .collect();
    author_ids.sort_unstable();
    author_ids.dedup();
    let index: HashMap<&str, usize> = author_ids
        .iter()
        .enumerate()
        .map(|(i, a)| (*a, i))
        .collect();

    let mut papers_of: Vec<Vec<usize>> = vec![Vec::new(); author_ids.len()];
    let mut authors_of: Vec<Vec<usize>> = Vec::with_capacity(records.len());
    for (p, r) in records.iter().enumerate() {
        let mut a: Vec<usize> = r.authors.iter().map(|x| index[x.as_str()]).collect();
        a.sort_unstable();
        a.dedup();
        for &ai in &a {
            papers_of[ai].push(p);
        }
        authors_of.push(a);
    }
    let mut remaining: Vec<usize> = papers_of.iter().map(Vec::len).collect();
    let mut assigned = vec![false; records.len()];
    let mut paper_author = BTreeMap::new();
    let mut selections = Vec::new();
    let mut left = records.len();
    let mut round = 0u64;
    while left > 0 {
        let top = *remaining.iter().max().unwrap();
        let tied: Vec<usize> = (0..remaining.len())
            .filter(|&a| remaining[a] == top)
            .collect();
        let pick = if tied.len() == 1 {
            tied[0]
        } else {
            let u = Stream::new(seed, "assignment-tie", round).uniform();
            tied[((u * tied.len() as f64) as usize).min(tied.len() - 1)]
        };
        round += 1;
        selections.push((author_ids[pick].to_string(), top));
        for &p in &papers_of[pick] {
            if assigned[p] {
                continue;
            }
            assigned[p] = true;
            left -= 1;
            paper_author.insert(records[p].paper_id.clone(), author_ids[pick].to_string());
            for &a in &authors_of[p] {
                remaining[a] -= 1;
            }
        }
    }
    Assignment {
        paper_author,
        selections,
    }
}

pub fn empirical_paper_counts(assignment: &Assignment) -> Result<PaperCountPmf> {
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for a in assignment.paper_author.values() {
        *per.entry(a).or_default() += 1;
    }
    let counts: Vec<usize> = per.into_values().collect();
    PaperCountPmf::from_counts(&counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PriorFit {
    pub mu_q: f64,
    pub sigma_q: f64,
    pub degenerate: bool,
}

/// Mean and sample standard deviation of per-paper mean scores.
pub fn fit_quality_prior(records: &[SubmissionRecord]) -> Result<PriorFit> {
    if records.len() < 2 {
        return Err(Error::param(
            "records",
            "need at least two papers to fit a prior",
        ));
    }
    let means: Vec<f64> = records
        .iter()
        .map(|r| r.scores.iter().map(|&s| f64::from(s)).sum::<f64>() / r.scores.len() as f64)
        .collect();
    let n = means.len() as f64;
    let mu_q = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mu_q).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma_q = var.sqrt();
    let degenerate = sigma_q == 0.0;
    if degenerate {
        log::warn!("all papers have the same mean score; the quality prior is degenerate");
    }
    Ok(PriorFit {
        mu_q,
        sigma_q,
        degenerate,
    })
}

pub const TEMPERATURE_RANGE: (f64, f64) = (0.0, 5.0);
pub const TEMPERATURE_TOL: f64 = 1e-4;

/// Marginal log-likelihood of all score vectors at temperature `t`.
pub fn marginal_log_likelihood(
    records: &[SubmissionRecord],
    mu_q: f64,
    sigma_q: f64,
    score_set: &[i32],
    t: f64,
) -> Result<f64> {
    let groups = group_scores(records, score_set)?;
    marginal_ll_grouped(&groups, mu_q, sigma_q, score_set, t)
}

fn group_scores(
    records: &[SubmissionRecord],
    score_set: &[i32],
) -> Result<Vec<(Vec<usize>, usize)>> {
    let mut groups: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for r in records {
        let mut idx = r
            .scores
            .iter()
            .map(|s| {
                score_set
                    .binary_search(s)
                    .map_err(|_| Error::param("scores", format!("{s} is not in the score set")))
            })
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        *groups.entry(idx).or_default() += 1;
    }
    Ok(groups.into_iter().collect())
}

fn marginal_ll_grouped(
    groups: &[(Vec<usize>, usize)],
    mu_q: f64,
    sigma_q: f64,
    score_set: &[i32],
    t: f64,
) -> Result<f64> {
    let model = SoftmaxScoreModel::new(t, score_set.to_vec())?;
    let grid = PosteriorGrid::new(mu_q, sigma_q, &model)?;
    Ok(groups
        .iter()
        .map(|(idx, count)| *count as f64 * grid.log_evidence_by_index(idx))
        .sum())
}

/// Maximum of the marginal likelihood over the temperature, with a flat
/// prior: golden-section search on `[0, 5]`, then the same search on a
/// bracket around the first answer.
pub fn fit_temperature_map(
    records: &[SubmissionRecord],
    mu_q: f64,
    sigma_q: f64,
    score_set: &[i32],
) -> Result<f64> {
    if sigma_q == 0.0 {
        return Err(Error::DegeneratePrior(
            "sigma_q is zero; fit the prior with fit_quality_prior on non-constant data first"
                .into(),
        ));
    }
    if records.is_empty() {
        return Err(Error::param("records", "must be nonempty"));
    }
    let groups = group_scores(records, score_set)?;
    let f = |t: f64| {
        marginal_ll_grouped(&groups, mu_q, sigma_q, score_set, t).unwrap_or(f64::NEG_INFINITY)
    };
    let t0 = golden_max(f, TEMPERATURE_RANGE.0, TEMPERATURE_RANGE.1, TEMPERATURE_TOL);
    let lo = (t0 - 10.0 * TEMPERATURE_TOL).max(TEMPERATURE_RANGE.0);
    let hi = (t0 + 10.0 * TEMPERATURE_TOL).min(TEMPERATURE_RANGE.1);
    Ok(golden_max(f, lo, hi, TEMPERATURE_TOL * 1e-2))
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // Check the endpoints: the maximum may sit on the boundary.
    [a, mid, b]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((mid, f64::NEG_INFINITY), |best, x| {
            if x.1 > best.1 {
                x
            } else {
                best
            }
        })
        .0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FittedModel {
    pub paper_count_pmf: PaperCountPmf,
    pub mu_q: f64,
    pub sigma_q: f64,
    pub temperature: f64,
    pub score_range: ScoreRange,
    pub papers: usize,
    pub authors: usize,
}

/// How the quality spread is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum PriorEstimator {
    /// Mean scores stand in for qualities; their spread includes score
    /// noise, so `sigma_q` is biased upwards.
    #[default]
    MeanScores,
    /// `sigma_q` and the temperature jointly maximize the marginal
    /// likelihood; `mu_q` is still the mean of mean scores.
    MarginalLikelihood,
}

/// Maximizes the marginal likelihood over `sigma_q` (temperature profiled
/// out) on `[0.25 s, s]`, `s` the spread of mean scores.
pub fn fit_prior_marginal(
    records: &[SubmissionRecord],
    score_set: &[i32],
) -> Result<(PriorFit, f64)> {
    let moments = fit_quality_prior(records)?;
    if moments.degenerate {
        return Err(Error::DegeneratePrior(
            "mean scores have zero spread".into(),
        ));
    }
    let groups = group_scores(records, score_set)?;
    let mu = moments.mu_q;
    let profile = |sigma: f64| -> (f64, f64) {
        let f = |t: f64| {
            marginal_ll_grouped(&groups, mu, sigma, score_set, t).unwrap_or(f64::NEG_INFINITY)
        };
        let t = golden_max(f, TEMPERATURE_RANGE.0, TEMPERATURE_RANGE.1, TEMPERATURE_TOL);
        (f(t), t)
    };
    let sigma = golden_max(
        |s| profile(s).0,
        0.25 * moments.sigma_q,
        moments.sigma_q,
        1e-3,
    );
    let (_, t) = profile(sigma);
    Ok((
        PriorFit {
            mu_q: mu,
            sigma_q: sigma,
            degenerate: false,
        },
        t,
    ))
}

pub fn fit_model(dataset: &Dataset, seed: u64) -> Result<FittedModel> {
    fit_model_with(dataset, seed, PriorEstimator::MeanScores)
}

pub fn fit_model_with(
    dataset: &Dataset,
    seed: u64,
    estimator: PriorEstimator,
) -> Result<FittedModel> {
    if dataset.records.is_empty() {
        return Err(Error::param("dataset", "contains no records"));
    }
    let assignment = greedy_author_assignment(&dataset.records, seed);
    let pmf = empirical_paper_counts(&assignment)?;
    let scores = dataset.score_range.scores();
    let (prior, temperature) = match estimator {
        PriorEstimator::MeanScores => {
            let prior = fit_quality_prior(&dataset.records)?;
            let t = fit_temperature_map(&dataset.records, prior.mu_q, prior.sigma_q, &scores)?;
            (prior, t)
        }
        PriorEstimator::MarginalLikelihood => fit_prior_marginal(&dataset.records, &scores)?,
    };
    Ok(FittedModel {
        paper_count_pmf: pmf,
        mu_q: prior.mu_q,
        sigma_q: prior.sigma_q,
        temperature,
        score_range: dataset.score_range,
        papers: dataset.records.len(),
        authors: assignment.selections.len(),
    })
}

impl FittedModel {
    /// Flat `key = value` document, one entry per line.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        writeln!(out, "papers = {}", self.papers).unwrap();
        writeln!(out, "authors = {}", self.authors).unwrap();
        writeln!(out, "mu_q = {}", self.mu_q).unwrap();
        writeln!(out, "sigma_q = {}", self.sigma_q).unwrap();
        writeln!(out, "temperature = {}", self.temperature).unwrap();
        writeln!(out, "score_min = {}", self.score_range.min).unwrap();
        writeln!(out, "score_max = {}", self.score_range.max).unwrap();
        for (i, p) in self.paper_count_pmf.probs().iter().enumerate() {
            writeln!(out, "pi_n.{} = {}", i + 1, p).unwrap();
        }
        out
    }

    pub fn from_document(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &'static str| -> Result<&str> {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::param(k, "missing from fitted model document"))
        };
        let num = |k: &'static str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::param(k, e.to_string()))
        };
        let int = |k: &'static str| -> Result<i64> {
            get(k)?
                .parse::<i64>()
                .map_err(|e| Error::param(k, e.to_string()))
        };
        let mut probs: BTreeMap<usize, f64> = BTreeMap::new();
        for (k, v) in &kv {
            if let Some(n) = k.strip_prefix("pi_n.") {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::param("pi_n", format!("bad key {k}")))?;
                if n == 0 {
                    return Err(Error::param("pi_n", "counts start at 1"));
                }
                let p: f64 = v
                    .parse()
                    .map_err(|_| Error::param("pi_n", format!("bad value for {k}")))?;
                probs.insert(n, p);
            } else if ![
                "papers",
                "authors",
                "mu_q",
                "sigma_q",
                "temperature",
                "score_min",
                "score_max",
            ]
            .contains(&k.as_str())
            {
                return Err(Error::param("document", format!("unknown key {k}")));
            }
        }
        let max = probs.keys().max().copied().unwrap_or(0);
        let dense: Vec<f64> = (1..=max)
            .map(|n| probs.get(&n).copied().unwrap_or(0.0))
            .collect();
        let to_usize = |k: &'static str| -> Result<usize> {
            usize::try_from(int(k)?).map_err(|_| Error::param(k, "must be nonnegative"))
        };
        let m = FittedModel {
            paper_count_pmf: PaperCountPmf::new(dense)?,
            mu_q: num("mu_q")?,
            sigma_q: num("sigma_q")?,
            temperature: num("temperature")?,
            score_range: ScoreRange {
                min: int("score_min")? as i32,
                max: int("score_max")? as i32,
            },
            papers: to_usize("papers")?,
            authors: to_usize("authors")?,
        };
        crate::model::check_prior(m.mu_q, m.sigma_q, 1)?;
        SoftmaxScoreModel::new(m.temperature, m.score_range.scores())?;
        Ok(m)
    }

    pub fn softmax_setting(&self, reviews_per_paper: usize) -> Result<SoftmaxSetting> {
        SoftmaxSetting::new(
            self.paper_count_pmf.clone(),
            reviews_per_paper,
            self.mu_q,
            self.sigma_q,
            SoftmaxScoreModel::new(self.temperature, self.score_range.scores())?,
        )
    }
}

/// Parses `key = value` lines; blank lines and lines starting with `#` are
/// skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Schema {
                line: i + 1,
                reason: "expected `key = value`".into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Schema {
                line: i + 1,
                reason: "empty key".into(),
            });
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Schema {
                line: i + 1,
                reason: format!("duplicate key {k}"),
            });
        }
    }
    Ok(out)
}

/// Draws a dataset from the softmax model: authors get a paper count from
/// `pmf` until `papers` papers exist, each paper gets `reviews` scores.
pub fn synthetic_dataset(
    pmf: &PaperCountPmf,
    mu_q: f64,
    sigma_q: f64,
    model: &SoftmaxScoreModel,
    papers: usize,
    reviews: usize,
    seed: u64,
) -> Result<Dataset> {
    crate::model::check_prior(mu_q, sigma_q, 1)?;
    let set = model.score_set();
    if set.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::param(
            "score_set",
            "synthetic datasets need a contiguous score set",
        ));
    }
    if reviews == 0 {
        return Err(Error::param("reviews", "must be at least 1"));
    }
    let mut rng = Stream::new(seed, "synthetic-dataset", 0);
    let mut records = Vec::with_capacity(papers);
    let mut author = 0usize;
    while records.len() < papers {
        let n = pmf.sample(&mut rng).min(papers - records.len());
        for _ in 0..n {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let q = mu_q + sigma_q * z;
            let scores = (0..reviews).map(|_| model.sample(q, &mut rng)).collect();
            records.push(SubmissionRecord {
                paper_id: format!("p{}", records.len()),
                authors: vec![format!("a{author}")],
                scores,
            });
        }
        author += 1;
    }
    Ok(Dataset {
        score_range: ScoreRange {
            min: set[0],
            max: *set.last().unwrap(),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, authors: &[&str], scores: &[i32]) -> SubmissionRecord {
        SubmissionRecord {
            paper_id: id.into(),
            authors: authors.iter().map(|a| a.to_string()).collect(),
            scores: scores.to_vec(),
        }
    }

    #[test]
    fn greedy_trace() {
        let r = vec![rec("p1", &["A"], &[5]), rec("p2", &["A", "B"], &[5])];
        let a = greedy_author_assignment(&r, 0);
        assert_eq!(a.paper_author["p1"], "A");
        assert_eq!(a.paper_author["p2"], "A");
        assert_eq!(a.selections, vec![("A".to_string(), 2)]);
    }

    #[test]
    fn prior_arithmetic() {
        let r = vec![rec("p1", &["A"], &[4]), rec("p2", &["B"], &[5, 7])];
        let p = fit_quality_prior(&r).unwrap();
        assert_eq!(p.mu_q, 5.0);
        assert!((p.sigma_q - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\na = 1\n\nb=x y\n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "x y");
        assert!(parse_key_values("a = 1\na = 2").is_err());
        assert!(parse_key_values("nonsense").is_err());
    }
}
