//! `seqreview` command-line front end. Every subcommand writes CSV (or a
//! fitted-model document for `fit`) to `--out` or stdout.

mod commands;
mod params;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use params::{Opts, Params};

/// Worker threads for sample-level parallelism.
const WORKERS_ENV: &str = "SEQREVIEW_WORKERS";

#[derive(Parser)]
#[command(
    name = "seqreview",
    version,
    about = "Sequential peer-review mechanisms: simulation, optimization, fitting and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Utility, review burden and reviewed quality of one threshold mechanism.
    Simulate(Opts),
    /// Optimize thresholds; reports relative utility when all three families run.
    Optimize(Opts),
    /// Review burden of the sequential mechanism at matched conference utility.
    Burden(Opts),
    /// Fit a softmax review model to a dataset.
    Fit(Opts),
    /// Exact best-response checks on random or archetype instances.
    Truthcheck(Opts),
    /// Marginal rates of substitution under parallel and sequential review.
    Mrs(Opts),
}

fn configure_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("invalid value for {WORKERS_ENV}: `{v}`"))?;
    if n == 0 {
        bail!("invalid value for {WORKERS_ENV}: must be positive");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn write_output(p: &Params, bytes: &[u8]) -> Result<()> {
    match p.raw("out") {
        None | Some("-") => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
        Some(path) => {
            std::fs::write(path, bytes).with_context(|| format!("cannot write output {path}"))?
        }
    }
    Ok(())
}

type Handler = fn(&Params, commands::Output<'_>) -> Result<()>;

fn run(cli: Cli) -> Result<()> {
    configure_workers()?;
    let (name, opts, keys, f): (&str, &Opts, &[&str], Handler) = match &cli.command {
        Command::Simulate(o) => ("simulate", o, commands::SIMULATE_KEYS, commands::simulate),
        Command::Optimize(o) => ("optimize", o, commands::OPTIMIZE_KEYS, commands::optimize),
        Command::Burden(o) => ("burden", o, commands::BURDEN_KEYS, commands::burden),
        Command::Fit(o) => ("fit", o, commands::FIT_KEYS, commands::fit),
        Command::Truthcheck(o) => (
            "truthcheck",
            o,
            commands::TRUTHCHECK_KEYS,
            commands::truthcheck,
        ),
        Command::Mrs(o) => ("mrs", o, commands::MRS_KEYS, commands::mrs),
    };
    let start = Instant::now();
    let params = Params::load(opts, name, keys)?;
    let mut buf = Vec::new();
    f(&params, &mut buf)?;
    write_output(&params, &buf)?;
    if opts.timing {
        eprintln!("wall_time_s={:.3}", start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("{}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
