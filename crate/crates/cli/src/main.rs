//! `backmap`: run the solver, sweep, counterexample and validation pipelines
//! from a JSON configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use backmap::harness::{self, RunConfig, Summary};
use backmap::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "backmap", version, about = "Back-to-coordinates maps of viscous swirl flows")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON configuration document.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration key by dotted path, e.g. `--set reduced.n_r=513`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory (default: `<output_dir>/<verb>-<hash>`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for parallel solver runs.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Seed for every random stream.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Integrate the configured solver(s) and write origin diagnostics and snapshots.
    Simulate,
    /// Tabulate F(t, s) over the angle sweep, its boundary degree and the ν table.
    Sweep,
    /// Locate the zero of F and record a, b and Q along the approach.
    Counterexample,
    /// Compare solver continuation with heat-kernel quadrature after the spin-up.
    Heatkernel,
    /// Monte Carlo magnetization at the probe points.
    Stochastic,
    /// Run the acceptance checks.
    Validate,
}

fn run(verb: Verb, cfg: &RunConfig, out: Option<&std::path::Path>) -> Result<Summary, Error> {
    match verb {
        Verb::Simulate => harness::run_simulate(cfg, out),
        Verb::Sweep => harness::run_sweep(cfg, out),
        Verb::Counterexample => harness::run_counterexample(cfg, out).map(|r| r.summary),
        Verb::Heatkernel => harness::run_heatkernel(cfg, out),
        Verb::Stochastic => harness::run_stochastic(cfg, out),
        Verb::Validate => harness::run_validation(cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let c = cli.common;
    let mut overrides = c.set;
    overrides.extend(c.seed.map(|s| format!("seed={s}")));
    overrides.extend(c.workers.map(|w| format!("workers={w}")));
    let cfg = match RunConfig::load(c.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(harness::error_exit_code(&e) as u8);
        }
    };
    if let Some(n) = cfg.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli.verb, &cfg, c.out.as_deref()) {
        Ok(summary) => {
            for check in &summary.checks {
                println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
            }
            println!("run directory: {}", summary.dir.display());
            ExitCode::from(harness::exit_code(&summary) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::error_exit_code(&e) as u8)
        }
    }
}
