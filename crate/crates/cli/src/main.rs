//! `sindex`: experiments on Gaussian single-index models.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sindex::Error;
use thiserror::Error as ThisError;

use crate::config::{apply_bounds_grid, apply_sweep_grid, Config};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot serialize report: {0}")]
    Report(#[from] toml::ser::Error),
}

impl CliError {
    /// 2: configuration or input, 3: numerical failure, 4: verification.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) => 2,
            CliError::Report(_) => 3,
            CliError::Library(e) => match e {
                Error::InvalidInput(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Sizing(_)
                | Error::InsufficientSamples(_) => 2,
                Error::Verification(_) => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sindex", version, about = "Gaussian single-index model experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory for the report and artifacts.
    #[arg(long, global = true, default_value = "sindex-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of independent seeds per experiment point.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML configuration, or a previous report to rerun.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset from a model and write it as CSV.
    Sample(ModelArgs),
    /// Information/generative exponents and the tabulated witness.
    Exponent(ExponentArgs),
    /// Partial-trace recovery with a known denoiser.
    Recover(RecoverArgs),
    /// Recovery without knowledge of the link.
    Agnostic(AgnosticArgs),
    /// Construct a link with a prescribed generative exponent.
    Forge(ForgeArgs),
    /// Spectrum of the partial-trace matrix across sample sizes.
    BbpSweep(SweepArgs),
    /// Recovery overlap across dimensions and sample sizes.
    PhaseSweep(SweepArgs),
    /// Low-degree and statistical-query sample-complexity tables.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Link, e.g. `square-gauss`, `hermite(3)`, `tanh(identity)`, `file:link.csv`.
    #[arg(long)]
    link: Option<String>,
    /// Channel, e.g. `deterministic`, `additive-gaussian(0.3)`, `massart(0.1)`.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Dataset CSV to use instead of sampling.
    #[arg(long)]
    data: Option<String>,
}

#[derive(Debug, Args)]
struct ExponentArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    kmax: Option<usize>,
    /// Sample size for noisy channels.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// Label levels in the witness table.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Debug, Args)]
struct RecoverArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    k: Option<usize>,
    /// Denoiser truncation constant.
    #[arg(long)]
    c: Option<f64>,
    /// Fraction of samples used to estimate a noisy denoiser.
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Debug, Args)]
struct AgnosticArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Largest candidate degree.
    #[arg(long = "max-k", visible_alias = "K")]
    max_k: Option<usize>,
    /// Degree of the label basis.
    #[arg(long, visible_alias = "M")]
    degree: Option<usize>,
    /// Validation split size.
    #[arg(long, visible_alias = "L")]
    validation: Option<usize>,
}

#[derive(Debug, Args)]
struct ForgeArgs {
    #[arg(long)]
    kstar: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Write the table even if quadrature verification fails.
    #[arg(long)]
    no_verify: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    /// Grid override `key=spec` (keys: d, n, n-mult, delta, delta-ratio).
    #[arg(long)]
    grid: Vec<String>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    kstar: Option<usize>,
    #[arg(long)]
    c_k: Option<f64>,
    /// Grid override `key=spec` (keys: d, delta, lambda, degree, r).
    #[arg(long)]
    grid: Vec<String>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ModelArgs {
    fn apply(self, c: &mut Config) {
        set(&mut c.model.link, self.link);
        set(&mut c.model.noise, self.noise);
        set(&mut c.model.d, self.d);
        set(&mut c.model.n, self.n);
        if self.data.is_some() {
            c.model.data = self.data;
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Exponent(_) => "exponent",
            Command::Recover(_) => "recover",
            Command::Agnostic(_) => "agnostic",
            Command::Forge(_) => "forge",
            Command::BbpSweep(_) => "bbp-sweep",
            Command::PhaseSweep(_) => "phase-sweep",
            Command::Bounds(_) => "bounds",
        }
    }
}

/// Loads the configuration and applies flag overrides.
fn resolve(common: &Common, command: Command) -> Result<Config, CliError> {
    let mut c = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    set(&mut c.run.seed, common.seed);
    set(&mut c.run.seeds, common.seeds);
    set(&mut c.run.threads, common.threads);
    match command {
        Command::Sample(a) => a.apply(&mut c),
        Command::Exponent(a) => {
            set(&mut c.exponent.kmax, a.kmax);
            set(&mut c.exponent.samples, a.samples);
            set(&mut c.exponent.levels, a.levels);
            if a.bins.is_some() {
                c.exponent.bins = a.bins;
            }
            a.model.apply(&mut c);
        }
        Command::Recover(a) => {
            if a.k.is_some() {
                c.recover.k = a.k;
            }
            set(&mut c.recover.c, a.c);
            set(&mut c.recover.holdout, a.holdout);
            a.model.apply(&mut c);
        }
        Command::Agnostic(a) => {
            set(&mut c.agnostic.max_k, a.max_k);
            set(&mut c.agnostic.degree, a.degree);
            if a.validation.is_some() {
                c.agnostic.validation = a.validation;
            }
            a.model.apply(&mut c);
        }
        Command::Forge(a) => {
            set(&mut c.forge.kstar, a.kstar);
            set(&mut c.forge.tau, a.tau);
            set(&mut c.forge.eps, a.eps);
            set(&mut c.forge.steps, a.steps);
            if a.no_verify {
                c.forge.verify = false;
            }
        }
        Command::BbpSweep(a) | Command::PhaseSweep(a) => {
            set(&mut c.sweep.k, a.k);
            set(&mut c.sweep.c, a.c);
            for g in &a.grid {
                apply_sweep_grid(&mut c.sweep, g)?;
            }
            a.model.apply(&mut c);
        }
        Command::Bounds(a) => {
            set(&mut c.bounds.kstar, a.kstar);
            set(&mut c.bounds.c_k, a.c_k);
            for g in &a.grid {
                apply_bounds_grid(&mut c.bounds, g)?;
            }
        }
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let name = cli.command.name();
    let config = resolve(&cli.common, cli.command)?;
    if config.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))?;
    }
    let out = &cli.common.out;
    match name {
        "sample" => commands::sample(&config, out),
        "exponent" => commands::exponent(&config, out),
        "recover" => commands::recover(&config, out),
        "agnostic" => commands::agnostic(&config, out),
        "forge" => commands::forge(&config, out),
        "bbp-sweep" => commands::bbp_sweep(&config, out),
        "phase-sweep" => commands::phase_sweep(&config, out),
        _ => commands::bounds(&config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sindex: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
