//! `ginlab` command-line front-end.
//!
//! Exit status: 0 when the workflow ran and its acceptance rule passed, 2 when it ran but
//! the statistical acceptance failed, 1 on any error.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod workflows;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ConfigError, Format};

#[derive(Parser, Debug)]
#[command(name = "ginlab", version, about = "Deformed Ginibre ensembles: sampling, identity checks and edge statistics")]
struct Cli {
    /// JSON configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (mandatory for stochastic commands, here or in the file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to GINLAB_THREADS, then the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample spectra of a deformed ensemble.
    Sample(SampleFlags),
    /// Edge-zoom histogram against the kernel prediction.
    EdgeStats(EdgeFlags),
    /// Evaluate the one-point edge prediction on a grid.
    KernelEval(KernelFlags),
    /// Two-sided Monte Carlo check of the duality identity.
    DualityCheck(DualityFlags),
    /// Duality check for products of characteristic polynomials.
    CharpolyCheck(DualityFlags),
    /// Monte Carlo versus closed form for the edge matrix integral.
    IntegralCheck(IntegralFlags),
    /// Two routes to the finite-N one-point function with a rank-one mean.
    Prop13Check(Prop13Flags),
    /// Fluctuation scaling of supercritical outliers.
    OutlierScaling(OutlierFlags),
    /// Edge drift under critical scaling of an outlier.
    CriticalScaling(CriticalFlags),
    /// Check a configuration file without running it.
    Validate { path: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::EdgeStats(_) => "edge-stats",
            Command::KernelEval(_) => "kernel-eval",
            Command::DualityCheck(_) => "duality-check",
            Command::CharpolyCheck(_) => "charpoly-check",
            Command::IntegralCheck(_) => "integral-check",
            Command::Prop13Check(_) => "prop13-check",
            Command::OutlierScaling(_) => "outlier-scaling",
            Command::CriticalScaling(_) => "critical-scaling",
            Command::Validate { .. } => "validate",
        }
    }

    fn flags(&self) -> serde_json::Map<String, serde_json::Value> {
        match self {
            Command::Sample(f) => config::overrides(f),
            Command::EdgeStats(f) => config::overrides(f),
            Command::KernelEval(f) => config::overrides(f),
            Command::DualityCheck(f) | Command::CharpolyCheck(f) => config::overrides(f),
            Command::IntegralCheck(f) => config::overrides(f),
            Command::Prop13Check(f) => config::overrides(f),
            Command::OutlierScaling(f) => config::overrides(f),
            Command::CriticalScaling(f) => config::overrides(f),
            Command::Validate { .. } => Default::default(),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SampleFlags {
    #[arg(long)]
    beta: Option<u8>,
    #[arg(long = "n", alias = "N")]
    n: Option<usize>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Jordan data file.
    #[arg(long)]
    jordan: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct EdgeFlags {
    #[arg(long)]
    beta: Option<u8>,
    #[arg(long = "n", alias = "N")]
    n: Option<usize>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long = "z0-re", allow_hyphen_values = true)]
    z0_re: Option<f64>,
    #[arg(long = "z0-im", allow_hyphen_values = true)]
    z0_im: Option<f64>,
    #[arg(long)]
    jordan: Option<PathBuf>,
    #[arg(long)]
    window: Option<f64>,
    /// Bins per side of the window.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long = "min-expected")]
    min_expected: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct KernelFlags {
    #[arg(long)]
    t: Option<u32>,
    /// start:stop:step along the normal coordinate.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    im: Option<f64>,
    #[arg(long)]
    beta: Option<u8>,
    #[arg(long = "z0-re", allow_hyphen_values = true)]
    z0_re: Option<f64>,
    #[arg(long = "z0-im", allow_hyphen_values = true)]
    z0_im: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct DualityFlags {
    #[arg(long)]
    beta: Option<u8>,
    /// Case file.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Run the seeded random suite.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    suite: bool,
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct IntegralFlags {
    #[arg(long)]
    t: Option<u32>,
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct Prop13Flags {
    #[arg(long = "n", alias = "N")]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    bin: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct OutlierFlags {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long = "theta-re", allow_hyphen_values = true)]
    theta_re: Option<f64>,
    #[arg(long = "theta-im", allow_hyphen_values = true)]
    theta_im: Option<f64>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long = "n-eff")]
    n_eff: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct CriticalFlags {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long = "z0-re", allow_hyphen_values = true)]
    z0_re: Option<f64>,
    #[arg(long = "z0-im", allow_hyphen_values = true)]
    z0_im: Option<f64>,
    #[arg(long = "theta-hat-re", allow_hyphen_values = true)]
    theta_hat_re: Option<f64>,
    #[arg(long = "theta-hat-im", allow_hyphen_values = true)]
    theta_hat_im: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    window: Option<f64>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, ConfigError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("GINLAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| ConfigError::Invalid(format!("GINLAB_THREADS must be a positive integer, got \"{v}\""))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    ginlab::numkit::init_sequential_linalg();

    match thread_count(cli.threads) {
        Ok(Some(n)) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        Ok(Some(_)) => {
            eprintln!("error: thread count must be positive");
            return ExitCode::from(1);
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    if let Command::Validate { path } = &cli.command {
        let (valid, diagnostics) = workflows::validate(path);
        println!("{}", serde_json::to_string_pretty(&diagnostics).expect("diagnostics serialize"));
        return ExitCode::from(if valid { 0 } else { 1 });
    }

    let globals = workflows::Globals { config: cli.config.clone(), seed: cli.seed, out: cli.out.clone(), format: cli.format };
    match workflows::run(cli.command.name(), cli.command.flags(), &globals) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
