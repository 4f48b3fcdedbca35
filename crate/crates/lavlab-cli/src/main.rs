mod args;

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::Parser;
use lavlab::balance::{self, BallSampler, Condition, ConditionSpec, RadialEnvelope, Verdict};
use lavlab::gap::{self, GapExperiment, GapVerdict, ReportEntry};
use lavlab::lagrangian::{self, Lagrangian};
use lavlab::mesh::MeshSpec;
use lavlab::scheme::{dyadic_schedule, Scheme, SchemeConfig};
use serde::Serialize;

use args::{Cli, Command, Config, ExpectBalance, ExpectGap};

const EXIT_ERROR: u8 = 1;
const EXIT_UNEXPECTED: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_USAGE: u8 = 64;

type Outcome = Result<u8, String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(n) = cli.threads.or(config.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let seed = args::resolve_seed(cli.seed, &config)?;
    let verbose = cli.verbose.max(config.verbosity.unwrap_or(0));
    match cli.command {
        Command::Catalog { json } => catalog(json),
        Command::Check(a) => check(a, &config, verbose),
        Command::Envelope(a) => envelope(a, &config),
        Command::Approx(a) => approx(a, &config, seed, verbose),
        Command::Gap(a) => gap_cmd(a, &config, seed, verbose),
        Command::Demo(a) => demo(a, &config, seed, verbose),
    }
}

fn catalog(json: bool) -> Outcome {
    let entries = lagrangian::make_catalog();
    if json {
        let list: Vec<_> = entries.iter().map(|e| e.to_json()).collect();
        println!("{}", to_json(&list)?);
    } else {
        for e in entries {
            let defaults: Vec<String> = e.defaults().iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("{:<24} {:<40} [{}]", e.name, e.summary, defaults.join(", "));
        }
    }
    Ok(0)
}

fn build_problem(name: &str, params: &std::collections::BTreeMap<String, f64>) -> Result<Lagrangian, String> {
    lagrangian::build(name, params).map_err(|e| e.to_string())
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string_pretty(value).map_err(|e| e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    std::fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn parse_condition(raw: &str) -> Result<Condition, String> {
    raw.parse::<Condition>().map_err(|e| e.to_string())
}

fn check(a: args::CheckArgs, config: &Config, verbose: u8) -> Outcome {
    let (name, params) = config.problem(&a.problem, "mania");
    let lag = build_problem(&name, &params)?;
    let mut spec = config.spec.clone().unwrap_or_else(|| ConditionSpec::new(Condition::Hiso));
    if let Some(c) = a.condition.as_deref().or(config.condition.as_deref()) {
        spec.condition = parse_condition(c)?;
    }
    spec.k1 = a.k1.unwrap_or(spec.k1);
    spec.k2 = a.k2.unwrap_or(spec.k2);
    spec.p = a.p.or(spec.p);
    spec.eps_levels = a.eps_levels.unwrap_or(spec.eps_levels);
    spec.x_points = a.x_points.or(spec.x_points);
    spec.t_points = a.t_points.unwrap_or(spec.t_points);
    spec.r_cap = a.r_cap.unwrap_or(spec.r_cap);
    let report = balance::check_condition(&lag, lag.domain(), &spec).map_err(|e| e.to_string())?;
    let json = to_json(&report)?;
    if let Some(out) = a.out.as_ref().or(config.out.as_ref()) {
        write_file(out, &(json.clone() + "\n"))?;
    }
    let slope = report.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
    println!(
        "{} {} {}: max ratio {:.4e}, slope {slope}",
        report.lagrangian,
        spec.condition,
        report.verdict.label(),
        report.max_ratio
    );
    if verbose > 0 {
        println!("{json}");
    }
    let unexpected = matches!(
        (a.expect, &report.verdict),
        (Some(ExpectBalance::Satisfied), Verdict::Violated { .. }) | (Some(ExpectBalance::Violated), Verdict::Satisfied { .. })
    );
    Ok(if unexpected {
        EXIT_UNEXPECTED
    } else if a.strict && matches!(report.verdict, Verdict::Inconclusive { .. }) {
        EXIT_INCONCLUSIVE
    } else {
        0
    })
}

fn envelope(a: args::EnvelopeArgs, config: &Config) -> Outcome {
    let (name, params) = config.problem(&a.problem, "double_phase");
    let lag = build_problem(&name, &params)?;
    let sampler = BallSampler::new(a.ball_samples, a.eps * 0.25);
    let env = balance::radial_envelope(&lag, lag.domain(), &a.x, a.eps, a.t, a.cap, a.points, &sampler)
        .map_err(|e| e.to_string())?;
    let mut csv = String::new();
    match &env {
        RadialEnvelope::Isotropic { profile, envelope } => {
            csv.push_str("s,ball_min,envelope\n");
            for (s, v) in profile.grid().iter().zip(profile.values()) {
                let _ = writeln!(csv, "{s},{v},{}", envelope.value(*s));
            }
        }
        RadialEnvelope::Orthotropic { profiles, envelopes } => {
            csv.push_str("axis,s,ball_min,envelope\n");
            for (i, (profile, envelope)) in profiles.iter().zip(envelopes).enumerate() {
                for (s, v) in profile.grid().iter().zip(profile.values()) {
                    let _ = writeln!(csv, "{i},{s},{v},{}", envelope.value(*s));
                }
            }
        }
    }
    match a.out.as_ref() {
        Some(out) => write_file(out, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

/// Target profile on [a, b] from `power:<e>`, `identity` or `singular`.
fn target_profile(raw: &str, lag: &Lagrangian) -> Result<Arc<dyn Fn(f64) -> f64 + Send + Sync>, String> {
    let (a, b) = (lag.domain().lower()[0], lag.domain().upper()[0]);
    let unit = move |x: f64| ((x - a) / (b - a)).max(0.0);
    match raw.split_once(':') {
        Some(("power", e)) => {
            let e: f64 = e.parse().map_err(|_| format!("bad exponent in target `{raw}`"))?;
            if !(e > 0.0 && e.is_finite()) {
                return Err(format!("target exponent must be positive, got {e}"));
            }
            Ok(Arc::new(move |x| unit(x).powf(e)))
        }
        None if raw == "identity" => Ok(Arc::new(unit)),
        None if raw == "singular" => lag
            .singular_profile()
            .cloned()
            .map(|p| Arc::new(move |x: f64| p(x)) as Arc<dyn Fn(f64) -> f64 + Send + Sync>)
            .ok_or_else(|| format!("`{}` has no singular profile", lag.name())),
        _ => Err(format!("unknown target `{raw}` (use power:<e>, identity or singular)")),
    }
}

/// Affine datum through the target's endpoint values.
fn linear_datum(target: &Arc<dyn Fn(f64) -> f64 + Send + Sync>, lag: &Lagrangian) -> impl Fn(f64) -> f64 + Send + Sync {
    let (a, b) = (lag.domain().lower()[0], lag.domain().upper()[0]);
    let (ua, ub) = (target(a), target(b));
    move |x| ua + (ub - ua) * (x - a) / (b - a)
}

fn scheme_config(mesh: Option<&str>, seed: u64) -> Result<SchemeConfig, String> {
    let mut cfg = SchemeConfig {
        seed,
        ..SchemeConfig::default()
    };
    if let Some(raw) = mesh {
        let spec: MeshSpec = raw.parse().map_err(|e: lavlab::mesh::MeshError| e.to_string())?;
        if spec.mapped {
            return Err("the scheme samples on affine meshes; use uniform:n or graded:n:beta".into());
        }
        cfg.out_cells = spec.cells;
        cfg.out_beta = spec.grading.unwrap_or(1.0);
    }
    Ok(cfg)
}

fn schedule_levels(flag: Option<Vec<u32>>, config: &Config) -> Vec<u32> {
    flag.or_else(|| config.schedule.clone()).unwrap_or_else(|| (1..=9).collect())
}

fn approx(a: args::ApproxArgs, config: &Config, seed: u64, verbose: u8) -> Outcome {
    let (name, params) = config.problem(&a.problem, "power");
    let lag = build_problem(&name, &params)?;
    let target = target_profile(a.target.as_deref().or(config.target.as_deref()).unwrap_or("power:0.6"), &lag)?;
    let datum = linear_datum(&target, &lag);
    let schedule = dyadic_schedule(schedule_levels(a.levels, config));
    let s = a.s.or(config.s).unwrap_or(0.5);
    let eps_max = schedule.iter().map(|r| r.1).fold(0.0, f64::max);
    let cfg = scheme_config(a.mesh.as_deref().or(config.mesh.as_deref()), seed)?;
    let t = target.clone();
    let scheme = Scheme::new(lag, move |x| t(x), datum, eps_max, cfg).map_err(|e| e.to_string())?;
    let table = scheme.run(&schedule, s).map_err(|e| e.to_string())?;
    print!("{}", table.to_csv());
    let boundary = match (a.boundary, schedule.last()) {
        (true, Some(&(_, eps, delta))) => Some(scheme.boundary_match(eps, delta, s).map_err(|e| e.to_string())?),
        _ => None,
    };
    if let Some(bm) = &boundary {
        println!(
            "boundary: endpoint error {:.3e}, band deviation {:.3e} (bound {:.3e})",
            bm.endpoint_error,
            bm.band_deviation,
            bm.datum_lipschitz * schedule.last().map_or(0.0, |r| r.1)
        );
    }
    if let Some(dir) = a.out.as_ref().or(config.out.as_ref()) {
        gap::write_reports(dir, &[("scheme".into(), ReportEntry::Scheme(table.clone()))]).map_err(|e| e.to_string())?;
        if let Some(&(_, eps, delta)) = schedule.last() {
            let last = scheme.approximate(eps, delta, s).map_err(|e| e.to_string())?;
            write_file(&dir.join("approximant.csv"), &last.function.to_csv())?;
        }
        if let Some(bm) = &boundary {
            write_file(&dir.join("boundary.json"), &(to_json(bm)? + "\n"))?;
        }
    }
    if verbose > 0 {
        println!("{}", to_json(&table)?);
    }
    Ok(0)
}

fn gap_cmd(a: args::GapArgs, config: &Config, seed: u64, verbose: u8) -> Outcome {
    let (name, params) = config.problem(&a.problem, "mania");
    let mut exp = GapExperiment::new(name);
    exp.params = params;
    exp.seed = seed;
    if let Some(levels) = a.levels.or_else(|| config.levels.clone()) {
        exp.levels = levels;
    }
    exp.bc = match a.bc {
        Some(v) => Some((v[0], v[1])),
        None => config.bc,
    };
    if let Some(raw) = a.mesh.as_deref().or(config.mesh.as_deref()) {
        let spec: MeshSpec = raw.parse().map_err(|e: lavlab::mesh::MeshError| e.to_string())?;
        exp.graded_beta = spec.grading.unwrap_or(1.0);
    }
    if let Some(beta) = a.beta.or(config.beta) {
        exp.graded_beta = beta;
    }
    exp.max_sweeps = a.sweeps.unwrap_or(exp.max_sweeps);
    exp.restarts = a.restarts.unwrap_or(exp.restarts);
    let report = gap::lavrentiev_probe(&exp).map_err(|e| e.to_string())?;
    print!("{}", report.to_csv());
    println!("verdict {}: {}", report.verdict.label(), report.reason);
    if let Some(dir) = a.out.as_ref().or(config.out.as_ref()) {
        gap::write_reports(dir, &[("gap".into(), ReportEntry::Gap(report.clone()))]).map_err(|e| e.to_string())?;
    }
    if verbose > 0 {
        println!("{}", to_json(&report)?);
    }
    let unexpected = matches!(
        (a.expect, report.verdict),
        (Some(ExpectGap::Gap), GapVerdict::NoGap) | (Some(ExpectGap::NoGap), GapVerdict::Gap)
    );
    Ok(if unexpected {
        EXIT_UNEXPECTED
    } else if a.strict && report.verdict == GapVerdict::Inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        0
    })
}

fn demo(a: args::DemoArgs, config: &Config, seed: u64, verbose: u8) -> Outcome {
    let (name, params) = config.problem(&a.problem, "double_phase");
    let lag = build_problem(&name, &params)?;
    let mut spec = config.spec.clone().unwrap_or_else(|| ConditionSpec::new(Condition::Hiso0));
    if let Some(c) = a.condition.as_deref().or(config.condition.as_deref()) {
        spec.condition = parse_condition(c)?;
    }
    let target = target_profile(a.target.as_deref().or(config.target.as_deref()).unwrap_or("power:0.6"), &lag)?;
    let datum = linear_datum(&target, &lag);
    let schedule = dyadic_schedule(schedule_levels(a.levels, config));
    let s = a.s.or(config.s).unwrap_or(0.5);
    let cfg = scheme_config(config.mesh.as_deref(), seed)?;
    let t = target.clone();
    let report = gap::scheme_no_gap_demo(&lag, &spec, move |x| t(x), datum, &schedule, s, a.tolerance, cfg)
        .map_err(|e| e.to_string())?;
    print!("{}", report.table.to_csv());
    println!(
        "balance {}; final relative energy error {:.4} ({} tolerance {})",
        report.balance.verdict.label(),
        report.final_relative_error,
        if report.converged { "within" } else { "outside" },
        report.tolerance
    );
    if let Some(dir) = a.out.as_ref().or(config.out.as_ref()) {
        gap::write_reports(dir, &[("demo".into(), ReportEntry::Demo(report.clone()))]).map_err(|e| e.to_string())?;
    }
    if verbose > 0 {
        println!("{}", to_json(&report)?);
    }
    Ok(0)
}
