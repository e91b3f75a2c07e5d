use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

/// Flags shared by every subcommand. Each one mirrors a `key = value`
/// entry of the `--config` file and overrides it.
#[derive(Args, Debug, Default)]
pub struct Opts {
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (required).
    #[arg(long)]
    pub seed: Option<String>,
    /// Quality samples (Gaussian) or simulated authors (softmax).
    #[arg(long)]
    pub samples: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<String>,
    /// parallel | naive | coinflip | creditpool | threshold-seq | isotonic | bundle | limited-creditpool
    #[arg(long)]
    pub mechanism: Option<String>,
    /// gaussian | softmax
    #[arg(long)]
    pub model: Option<String>,
    /// Papers per author: a list `2,3,5` or a range `2..10`.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_acc: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_rev: Option<String>,
    /// Softmax inverse temperature.
    #[arg(long, allow_hyphen_values = true)]
    pub temperature: Option<String>,
    /// Scores per paper in the softmax setting.
    #[arg(long)]
    pub reviews: Option<String>,
    /// Mean of the truncated geometric paper-count distribution (list allowed in `burden`).
    #[arg(long)]
    pub pi_mean: Option<String>,
    /// Largest paper count of the truncated geometric distribution.
    #[arg(long)]
    pub pi_max: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub acceptance_bar: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub score_min: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub score_max: Option<String>,
    /// Fitted model document supplying the softmax setting.
    #[arg(long)]
    pub fitted: Option<String>,
    /// Review dataset (JSON lines) for `fit`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// mean-scores | marginal
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub grid_points: Option<String>,
    /// Stochastic gradient iterations.
    #[arg(long)]
    pub iterations: Option<String>,
    /// Feasibility slack in standard errors.
    #[arg(long)]
    pub slack: Option<String>,
    /// Instances checked by `truthcheck`.
    #[arg(long)]
    pub instances: Option<String>,
    /// Acceptance probabilities per effort level, decreasing.
    #[arg(long)]
    pub probs: Option<String>,
    #[arg(long)]
    pub rewards: Option<String>,
    #[arg(long)]
    pub counts: Option<String>,
    /// Report wall time on stderr.
    #[arg(long)]
    pub timing: bool,
}

impl Opts {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("seed", &self.seed),
            ("samples", &self.samples),
            ("out", &self.out),
            ("mechanism", &self.mechanism),
            ("model", &self.model),
            ("n", &self.n),
            ("mu_q", &self.mu_q),
            ("sigma_q", &self.sigma_q),
            ("sigma_r", &self.sigma_r),
            ("tau_acc", &self.tau_acc),
            ("tau_rev", &self.tau_rev),
            ("temperature", &self.temperature),
            ("reviews", &self.reviews),
            ("pi_mean", &self.pi_mean),
            ("pi_max", &self.pi_max),
            ("acceptance_bar", &self.acceptance_bar),
            ("score_min", &self.score_min),
            ("score_max", &self.score_max),
            ("fitted", &self.fitted),
            ("dataset", &self.dataset),
            ("estimator", &self.estimator),
            ("grid_points", &self.grid_points),
            ("iterations", &self.iterations),
            ("slack", &self.slack),
            ("instances", &self.instances),
            ("probs", &self.probs),
            ("rewards", &self.rewards),
            ("counts", &self.counts),
        ]
    }
}

/// Merged configuration for one subcommand.
#[derive(Debug)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    /// Reads the config file, applies flags, and rejects keys the
    /// subcommand does not use.
    pub fn load(opts: &Opts, command: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                seqreview::data::parse_key_values(&text)
                    .with_context(|| format!("config {}", path.display()))?
            }
            None => BTreeMap::new(),
        };
        for (key, value) in opts.flags() {
            if let Some(v) = value {
                values.insert(key.to_string(), v.clone());
            }
        }
        if let Some(k) = values
            .keys()
            .find(|k| k.as_str() != "seed" && !allowed.contains(&k.as_str()))
        {
            bail!("key `{k}` is not used by `{command}`");
        }
        let p = Params { values };
        p.seed()?;
        Ok(p)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn seed(&self) -> Result<u64> {
        self.required("seed")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|e| anyhow!("invalid value for `{key}`: `{v}` ({e})"))
            })
            .transpose()
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    /// Comma- or semicolon-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let items: Vec<T> = v
            .split([',', ';'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| anyhow!("invalid value for `{key}`: `{s}` ({e})"))
            })
            .collect::<Result<_>>()?;
        if items.is_empty() {
            bail!("invalid value for `{key}`: empty list");
        }
        Ok(Some(items))
    }

    /// A list, or an inclusive range `a..b`.
    pub fn counts_list(&self, key: &str, default: usize) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(vec![default]),
            Some(v) if v.contains("..") => {
                let (a, b) = v.split_once("..").unwrap();
                let parse = |s: &str| {
                    s.trim()
                        .trim_start_matches('=')
                        .parse::<usize>()
                        .map_err(|e| anyhow!("invalid value for `{key}`: `{v}` ({e})"))
                };
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    bail!("invalid value for `{key}`: empty range `{v}`");
                }
                Ok((a..=b).collect())
            }
            Some(_) => Ok(self.list(key)?.unwrap()),
        }
    }
}
