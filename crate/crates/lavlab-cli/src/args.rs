//! Flags, config file and their merge.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lavlab::balance::ConditionSpec;
use serde::Deserialize;

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Parser, Debug)]
#[command(name = "lavlab", version, about = "Balance conditions, inner approximation and Lavrentiev gap experiments")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomized steps (overrides LAVLAB_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config; flags win over its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print full JSON reports to stdout.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// List catalog entries.
    #[command(after_help = "Example:\n  lavlab catalog --json")]
    Catalog {
        #[arg(long)]
        json: bool,
    },
    /// Sample a balance condition on a catalog problem.
    #[command(after_help = "Example:\n  lavlab check --problem mania --condition hiso --k1 2 --out r.json")]
    Check(CheckArgs),
    /// Dump the radial convex envelope of the ball-minimized integrand.
    #[command(after_help = "Example:\n  lavlab envelope --problem double_phase --x 0.5 --eps 0.01 --t 0 --cap 50")]
    Envelope(EnvelopeArgs),
    /// Run the subgraph approximation scheme along a dyadic schedule.
    #[command(after_help = "Example:\n  lavlab approx --problem power --target power:0.6 --levels 1-9 --out approx/")]
    Approx(ApproxArgs),
    /// Compare uniform and graded minima across mesh levels.
    #[command(after_help = "Example:\n  lavlab gap --problem mania --levels 256,512,1024,2048 --out g/")]
    Gap(GapArgs),
    /// Balance check followed by the scheme, bundled in one report.
    #[command(after_help = "Example:\n  lavlab demo --problem double_phase --condition hiso0 --target power:0.6 --out demo/")]
    Demo(DemoArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProblemArgs {
    /// Catalog entry name.
    #[arg(long)]
    pub problem: Option<String>,
    /// Parameter override, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExpectBalance {
    Satisfied,
    Violated,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExpectGap {
    Gap,
    NoGap,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// hiso0, hiso, hdelta2 or hconv.
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub eps_levels: Option<usize>,
    #[arg(long)]
    pub x_points: Option<usize>,
    #[arg(long)]
    pub t_points: Option<usize>,
    #[arg(long)]
    pub r_cap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit 2 when the opposite definite verdict is returned.
    #[arg(long, value_enum)]
    pub expect: Option<ExpectBalance>,
    /// Exit 3 on INCONCLUSIVE.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct EnvelopeArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Point x, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub x: Vec<f64>,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// Largest |xi| on the grid.
    #[arg(long, default_value_t = 100.0)]
    pub cap: f64,
    #[arg(long, default_value_t = 513)]
    pub points: usize,
    #[arg(long, default_value_t = 257)]
    pub ball_samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// power:<exponent>, singular, or identity.
    #[arg(long)]
    pub target: Option<String>,
    /// Schedule indices n, as `1-9` or `3,5,9`.
    #[arg(long, value_parser = parse_levels_u32)]
    pub levels: Option<Vec<u32>>,
    /// Level s in (0, 1).
    #[arg(long)]
    pub s: Option<f64>,
    /// Output mesh: uniform:n or graded:n:beta.
    #[arg(long)]
    pub mesh: Option<String>,
    /// Also match the datum at the endpoints on the last level.
    #[arg(long)]
    pub boundary: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GapArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Mesh sizes, comma separated and increasing.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub levels: Option<Vec<usize>>,
    /// Boundary values u(a),u(b).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub bc: Option<Vec<f64>>,
    /// Grading exponent of the Sobolev-side mesh (or use --mesh graded:n:beta).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mesh: Option<String>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub expect: Option<ExpectGap>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = parse_levels_u32)]
    pub levels: Option<Vec<u32>>,
    #[arg(long)]
    pub s: Option<f64>,
    /// Relative energy tolerance at the last level.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_param(raw: &str) -> Result<(String, f64), String> {
    let (k, v) = raw.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{raw}`"))?;
    let value = v.trim().parse::<f64>().map_err(|e| format!("bad value in `{raw}`: {e}"))?;
    Ok((k.trim().to_string(), value))
}

fn parse_levels_u32(raw: &str) -> Result<Vec<u32>, String> {
    let bad = || format!("expected `lo-hi` or a comma list, got `{raw}`");
    if let Some((lo, hi)) = raw.split_once('-') {
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    raw.split(',').map(|v| v.trim().parse::<u32>().map_err(|_| bad())).collect()
}

/// Config file contents; every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub problem: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub condition: Option<String>,
    pub spec: Option<ConditionSpec>,
    pub target: Option<String>,
    pub mesh: Option<String>,
    pub levels: Option<Vec<usize>>,
    pub schedule: Option<Vec<u32>>,
    pub s: Option<f64>,
    pub bc: Option<(f64, f64)>,
    pub beta: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub verbosity: Option<u8>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Problem name and parameters with flag overrides applied.
    pub fn problem(&self, flags: &ProblemArgs, fallback: &str) -> (String, BTreeMap<String, f64>) {
        let name = flags
            .problem
            .clone()
            .or_else(|| self.problem.clone())
            .unwrap_or_else(|| fallback.to_string());
        let mut params = self.params.clone();
        params.extend(flags.params.iter().cloned());
        (name, params)
    }
}

/// --seed, then LAVLAB_SEED, then the config, then the default.
pub fn resolve_seed(flag: Option<u64>, config: &Config) -> Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(raw) = std::env::var("LAVLAB_SEED") {
        return raw.trim().parse().map_err(|_| format!("LAVLAB_SEED must be an unsigned integer, got `{raw}`"));
    }
    Ok(config.seed.unwrap_or(DEFAULT_SEED))
}
