//! `rmeq`: config-driven runs of the resolvent toolkit.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! or convergence failures.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rmeq::par::Execution;

use commands::Context;
use config::RunConfig;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<rmeq::Error> for Failure {
    fn from(e: rmeq::Error) -> Self {
        if e.is_numeric() {
            Failure::numeric(e.to_string())
        } else {
            Failure::config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("i/o: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rmeq",
    version,
    about = "Deterministic equivalents and concentration checks for sample-covariance resolvents"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides any seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write partial results instead of failing on the first bad point.
    #[arg(long, global = true)]
    keep_going: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the fixed point on a z grid or contour; writes fixed_point.csv.
    Solve,
    /// Spectral density on a grid; writes density.csv.
    Density {
        /// Use the Monte Carlo mean Stieltjes transform instead of the
        /// deterministic equivalent.
        #[arg(long)]
        mc: bool,
    },
    /// Contour estimate of tr(Π A); writes projector.csv.
    Projector {
        /// Average the empirical contour integral over draws.
        #[arg(long)]
        mc: bool,
        /// Also emit the deterministic estimate when `--mc` is given.
        #[arg(long)]
        deterministic: bool,
    },
    /// Run the suites listed in `verify.suites`; writes verify_<suite>.json.
    Verify,
    /// Dump one sampled X.
    Gen {
        /// Draw index.
        #[arg(long, default_value_t = 0)]
        draw: u64,
        /// Binary instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Monte Carlo spectrum summary; writes spectrum_stats.json.
    Stats {
        /// Radius of the event A_eps.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
}

fn configure_threads(threads: Option<usize>) -> Result<Execution, Failure> {
    match threads {
        Some(0) => Err(Failure::config("--threads must be positive")),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = configure_threads(cli.threads)?;
    let path = cli
        .config
        .ok_or_else(|| Failure::config("--config is required"))?;
    let mut config = RunConfig::load(&path)?;
    let base_dir = path
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    config.resolve(cli.seed, cli.out, &base_dir);
    let ctx = Context {
        config,
        base_dir,
        keep_going: cli.keep_going,
        exec,
    };
    match cli.command {
        Command::Solve => commands::solve(&ctx),
        Command::Density { mc } => commands::density(&ctx, mc),
        Command::Projector { mc, deterministic } => commands::projector(&ctx, mc, deterministic),
        Command::Verify => verify(&ctx),
        Command::Gen { draw, binary } => commands::generate(&ctx, draw, binary),
        Command::Stats { eps } => commands::stats(&ctx, eps),
    }
}

fn verify(ctx: &Context) -> Result<(), Failure> {
    let block = ctx
        .config
        .verify
        .as_ref()
        .ok_or_else(|| Failure::config("`verify` needs a `verify` block"))?;
    suites::check_names(&block.suites)?;
    ctx.prepare()?;
    let mut failed = Vec::new();
    for name in &block.suites {
        match suites::run(ctx, name) {
            Ok(r) => {
                ctx.write_json(&format!("verify_{name}.json"), &r.report)?;
                eprintln!("{name}: {}", if r.hard_pass { "pass" } else { "FAIL" });
                if !r.hard_pass {
                    failed.push(name.as_str());
                }
            }
            Err(e) if ctx.keep_going && e.code == 3 => {
                eprintln!("{name}: error: {}", e.message);
                failed.push(name.as_str());
            }
            Err(e) => return Err(e),
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::numeric(format!(
            "hard invariants failed in: {}",
            failed.join(", ")
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
