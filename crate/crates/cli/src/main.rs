use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fklab_cli::config::{Check, ExperimentConfig, SamplerName};
use fklab_cli::pipeline::{default_out, resolve_seed, run_config, RunOptions};
use fklab_cli::report::report;
use fklab_cli::verify::run_verify;

/// Exact and Monte Carlo checks of volume differential inequalities for
/// percolation and the random-cluster model.
#[derive(Parser)]
#[command(name = "fklab", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides FKLAB_SEED and the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Every check listed in the config.
    Run(RunArgs),
    /// Enumerated measures and curves, ignoring the configured sampler.
    Exact(RunArgs),
    /// Sampled curves with the configured sampler.
    Sample(RunArgs),
    /// Exact OSSS and edge-covariance checks.
    Osss(RunArgs),
    /// Differential and integrated inequalities on the β grid.
    Diffineq(RunArgs),
    /// Mean-field exponent fits and exponent inequalities.
    Exponents(RunArgs),
    /// Verifies a run directory and prints its summary.
    Report {
        /// Run directory or its manifest.json.
        path: PathBuf,
    },
    /// The full small-graph oracle suite.
    Verify {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    let (args, select): (RunArgs, fn(&mut ExperimentConfig)) = match cli.command {
        Command::Report { path } => {
            let s = report(&path)?;
            print!("{}", s.text);
            return Ok(if s.violations > 0 || s.failures > 0 { ExitCode::from(3) } else { ExitCode::SUCCESS });
        }
        Command::Verify { out } => {
            let v = run_verify(&out, cli.workers)?;
            for (name, ok, detail) in &v.suites {
                println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
            }
            println!("results in {}", v.dir.display());
            return Ok(if v.passed() { ExitCode::SUCCESS } else { ExitCode::from(3) });
        }
        Command::Run(a) => (a, |_| {}),
        Command::Exact(a) => (a, |c| {
            c.sampler.kind = SamplerName::Exact;
            c.checks = vec![Check::Measure, Check::Curves];
        }),
        Command::Sample(a) => (a, |c| c.checks = vec![Check::Curves]),
        Command::Osss(a) => (a, |c| c.checks = vec![Check::Osss, Check::Prop31]),
        Command::Diffineq(a) => (a, |c| {
            c.checks = vec![Check::Diffineq, Check::DiffineqLimit, Check::Integrated];
            if c.model.q == 1.0 {
                c.checks.push(Check::Menshikov);
            }
        }),
        Command::Exponents(a) => (a, |c| c.checks = vec![Check::Exponents]),
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    select(&mut cfg);
    cfg.validate()?;
    let env = std::env::var("FKLAB_SEED").ok();
    let (seed, seed_source) = resolve_seed(args.seed, env.as_deref(), cfg.seed)?;
    let opts = RunOptions { seed, seed_source, workers: cli.workers, out: default_out(&cfg, args.out.as_deref()) };
    let outcome = run_config(&cfg, &opts)?;
    println!("{}", outcome.dir.display());
    if outcome.manifest.partial {
        for (name, t) in outcome.manifest.failures() {
            eprintln!("task {name} failed: {}", t.error.as_deref().unwrap_or("unknown error"));
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
