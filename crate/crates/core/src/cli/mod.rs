//! Command-line surface: train, eval, compare, oracle-check and sweep.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::codec::Profile;
use crate::error::Error;
use crate::nfwpo::ActorRule;

pub use config::RunConfig;
pub use manifest::{RunManifest, MANIFEST_FILE, MANIFEST_SCHEMA};

/// Environment variable holding the log filter, e.g. `debug`.
pub const LOG_ENV: &str = "NFWPO_LOG";

#[derive(Debug, Parser)]
#[command(name = "nfwpo", version, about = "Frame-level bit allocation with Frank-Wolfe policy optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent and write its checkpoint, metrics and report.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or `anchor`) and write R-D curve, deviation
    /// table and per-GOP traces.
    Eval(EvalArgs),
    /// Side-by-side table of several eval directories.
    Compare(CompareArgs),
    /// Compare a policy against the brute-force optimum on a tiny GOP.
    OracleCheck(OracleArgs),
    /// Train every (seed, method, profile) combination in separate processes
    /// and merge the results.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Nfwpo,
    /// NFWPO with the Frank-Wolfe step replaced by the unconstrained argmax.
    NfwpoUnconstrained,
    Single,
    Dual,
}

impl Method {
    pub fn rule(self, config: &RunConfig) -> ActorRule {
        match self {
            Method::Nfwpo => ActorRule::Nfwpo,
            Method::NfwpoUnconstrained => ActorRule::UnconstrainedArgmax,
            Method::Single => config.single_critic().rule(),
            Method::Dual => config.dual_critic().rule(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nfwpo => "nfwpo",
            Method::NfwpoUnconstrained => "nfwpo-unconstrained",
            Method::Single => "single",
            Method::Dual => "dual",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override `trainer.episodes`.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Override `env.profiles`, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_profile)]
    pub profiles: Option<Vec<Profile>>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long, value_enum, default_value = "nfwpo")]
    pub method: Method,
    /// Override `single.lambda`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Agent checkpoint, or `anchor` for the base-QP policy.
    #[arg(long)]
    pub checkpoint: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Eval output directories.
    #[arg(required = true, num_args = 2..)]
    pub runs: Vec<PathBuf>,
    /// Reference run for BD-rate; the first run when omitted.
    #[arg(long)]
    pub anchor: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Agent checkpoint, or `anchor`.
    #[arg(long)]
    pub checkpoint: String,
    #[arg(long, default_value_t = 3)]
    pub frames: usize,
    #[arg(long, value_parser = parse_profile, default_value = "easy")]
    pub profile: Profile,
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    #[arg(long, default_value_t = 32.0)]
    pub qp_level: f64,
    #[arg(long, default_value_t = 1.0)]
    pub budget_factor: f64,
    #[arg(long, default_value_t = crate::eval::RATE_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "nfwpo,single,dual")]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// One run per profile; the config's profile list when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_profile)]
    pub profiles: Option<Vec<Profile>>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Concurrent training processes.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse::<Profile>().map_err(|e| e.to_string())
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::SearchSpaceExceeded { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Train(a) => commands::train(&a).map(|_| ()),
        Command::Eval(a) => commands::eval(&a).map(|_| ()),
        Command::Compare(a) => commands::compare(&a).map(|_| ()),
        Command::OracleCheck(a) => commands::oracle_check(&a).map(|_| ()),
        Command::Sweep(a) => commands::sweep(&a).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
