//! End-to-end Lavrentiev experiments and deterministic report output.
//!
//! The Lipschitz side is probed with affine elements on uniform meshes; the
//! Sobolev side with graded meshes whose cells are affine in the reference
//! coordinate, so that singular profiles such as x^(1/3) are representable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{check_condition, BalanceError, BalanceReport, ConditionSpec};
use crate::lagrangian::{self, CatalogError, Lagrangian};
use crate::mesh::{self, minimize_energy, Mesh1D, MeshError, MinimizeOptions, PLFunction};
use crate::scheme::{ConvergenceTable, Scheme, SchemeConfig, SchemeError};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum GapError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error("experiment needs a 1D problem, `{name}` has dimension {dim}")]
    Dimension { name: String, dim: usize },
    #[error("levels must be nonempty and strictly increasing")]
    BadLevels,
    #[error("graded beta must be at least 1, got {0}")]
    BadBeta(f64),
    #[error("refusing demo: balance check returned {verdict} ({detail})")]
    Refused { verdict: String, detail: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize {what}: {source}")]
    Json {
        what: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapExperiment {
    pub problem: String,
    pub params: BTreeMap<String, f64>,
    /// Boundary values; the domain datum at the endpoints when absent.
    pub bc: Option<(f64, f64)>,
    pub levels: Vec<usize>,
    pub graded_beta: f64,
    pub max_sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Coarsest uniform mesh of the warm-start ladder.
    pub coarse_start: usize,
    pub separation: f64,
    pub stability: f64,
    pub cross_validation: f64,
    pub quad_order: usize,
}

impl Default for GapExperiment {
    fn default() -> Self {
        Self {
            problem: "mania".into(),
            params: BTreeMap::new(),
            bc: None,
            levels: vec![256, 512, 1024, 2048],
            graded_beta: 3.0,
            max_sweeps: 2000,
            restarts: 0,
            seed: 0x5eed,
            coarse_start: 16,
            separation: 5.0,
            stability: 0.2,
            cross_validation: 0.03,
            quad_order: 5,
        }
    }
}

impl GapExperiment {
    pub fn new(problem: impl Into<String>) -> Self {
        Self {
            problem: problem.into(),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), GapError> {
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[1] <= w[0]) || self.levels[0] == 0 {
            return Err(GapError::BadLevels);
        }
        if !(self.graded_beta >= 1.0 && self.graded_beta.is_finite()) {
            return Err(GapError::BadBeta(self.graded_beta));
        }
        Ok(())
    }

    fn options(&self, salt: u64) -> MinimizeOptions {
        MinimizeOptions {
            max_sweeps: self.max_sweeps,
            restarts: self.restarts,
            seed: self.seed ^ salt,
            order: self.quad_order,
            ..MinimizeOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GapVerdict {
    Gap,
    NoGap,
    Inconclusive,
}

impl GapVerdict {
    pub fn label(self) -> &'static str {
        match self {
            GapVerdict::Gap => "GAP",
            GapVerdict::NoGap => "NO_GAP",
            GapVerdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradedStart {
    SingularProfile,
    UniformSolution,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelResult {
    pub n: usize,
    pub uniform: Option<f64>,
    pub graded: Option<f64>,
    pub uniform_sweeps: usize,
    pub graded_sweeps: usize,
    pub graded_start: GradedStart,
    /// Energy of the graded warm start before descent.
    pub graded_initial: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeparationStats {
    /// uniform / graded at the top level.
    pub top_ratio: f64,
    /// uniform / graded at the level below.
    pub previous_ratio: f64,
    /// |U_top − U_prev| / U_prev.
    pub uniform_drift: f64,
    /// |U_top − G_top| / max(|U_top|, |G_top|).
    pub cross_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub problem: String,
    pub params: BTreeMap<String, f64>,
    pub bc: (f64, f64),
    pub levels: Vec<usize>,
    pub uniform: Vec<Option<f64>>,
    pub graded: Vec<Option<f64>>,
    pub verdict: GapVerdict,
    pub reason: String,
    pub stats: Option<SeparationStats>,
    pub seed: u64,
    pub tool_version: String,
    pub experiment: GapExperiment,
    pub details: Vec<LevelResult>,
}

impl GapReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,uniform_min_energy,graded_min_energy\n");
        let cell = |v: &Option<f64>| v.map(|e| e.to_string()).unwrap_or_else(|| "nan".into());
        for ((n, u), g) in self.levels.iter().zip(&self.uniform).zip(&self.graded) {
            out.push_str(&format!("{n},{},{}\n", cell(u), cell(g)));
        }
        out
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn resolve_bc(lag: &Lagrangian, bc: Option<(f64, f64)>) -> (f64, f64) {
    bc.unwrap_or_else(|| {
        let d = lag.domain();
        (d.datum(d.lower()), d.datum(d.upper()))
    })
}

/// Uniform levels strictly below `first`, doubling from `coarse`.
fn ladder(coarse: usize, first: usize) -> Vec<usize> {
    std::iter::successors(Some(coarse.max(1)), |&n| Some(n * 2))
        .take_while(|&n| n < first)
        .collect()
}

/// Verdict from per-level minima (see [`GapExperiment`] thresholds).
pub fn classify(exp: &GapExperiment, rows: &[LevelResult]) -> (GapVerdict, String, Option<SeparationStats>) {
    let ok: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.uniform?, r.graded?))).collect();
    let failed = rows.len() - ok.len();
    if 2 * failed > rows.len() {
        return (
            GapVerdict::Inconclusive,
            format!("{failed} of {} levels failed to produce finite energies", rows.len()),
            None,
        );
    }
    if ok.len() < 2 {
        return (GapVerdict::Inconclusive, "fewer than two usable levels".into(), None);
    }
    let (up, gp) = ok[ok.len() - 2];
    let (ut, gt) = ok[ok.len() - 1];
    let ratio = |u: f64, g: f64| if g > 0.0 { u / g } else { f64::INFINITY };
    let stats = SeparationStats {
        top_ratio: ratio(ut, gt),
        previous_ratio: ratio(up, gp),
        uniform_drift: (ut - up).abs() / up.abs().max(f64::MIN_POSITIVE),
        cross_gap: (ut - gt).abs() / ut.abs().max(gt.abs()).max(f64::MIN_POSITIVE),
    };
    if stats.cross_gap <= exp.cross_validation {
        let reason = format!(
            "uniform and graded minima agree within {:.3}% at the top level",
            100.0 * stats.cross_gap
        );
        return (GapVerdict::NoGap, reason, Some(stats));
    }
    let separated = stats.top_ratio >= exp.separation && stats.previous_ratio >= exp.separation;
    let stable = stats.uniform_drift <= exp.stability;
    let graded_settles = gt <= gp * (1.0 + exp.stability) + 1e-12;
    let (verdict, reason) = match (separated, stable, graded_settles) {
        (true, true, true) => (
            GapVerdict::Gap,
            format!(
                "uniform/graded ratio >= {} on the top two levels with uniform drift {:.2}%",
                exp.separation,
                100.0 * stats.uniform_drift
            ),
        ),
        (false, _, _) => (GapVerdict::Inconclusive, "separation below threshold".into()),
        (_, false, _) => (GapVerdict::Inconclusive, "uniform minima not stable across the top levels".into()),
        (_, _, false) => (GapVerdict::Inconclusive, "graded minima increase with refinement".into()),
    };
    (verdict, reason, Some(stats))
}

/// Runs both mesh families on every level and classifies the outcome.
pub fn lavrentiev_probe(exp: &GapExperiment) -> Result<GapReport, GapError> {
    exp.validate()?;
    let lag = lagrangian::build(&exp.problem, &exp.params)?;
    if lag.dim() != 1 {
        return Err(GapError::Dimension {
            name: exp.problem.clone(),
            dim: lag.dim(),
        });
    }
    let (a, b) = (lag.domain().lower()[0], lag.domain().upper()[0]);
    let bc = resolve_bc(&lag, exp.bc);

    let mut warm: Option<PLFunction> = None;
    for n in ladder(exp.coarse_start, exp.levels[0]) {
        let mesh = Mesh1D::uniform(a, b, n)?;
        if let Ok(out) = minimize_energy(&lag, &mesh, bc, warm.as_ref(), &exp.options(n as u64)) {
            warm = Some(out.function);
        }
    }
    let mut uniform = Vec::with_capacity(exp.levels.len());
    for &n in &exp.levels {
        let mesh = Mesh1D::uniform(a, b, n)?;
        let outcome = minimize_energy(&lag, &mesh, bc, warm.as_ref(), &exp.options(n as u64));
        if let Ok(out) = &outcome {
            warm = Some(out.function.clone());
        }
        uniform.push(outcome);
    }

    let profile = lag.singular_profile().cloned();
    let rows: Vec<LevelResult> = exp
        .levels
        .par_iter()
        .zip(uniform.par_iter())
        .map(|(&n, uni)| {
            let mut row = LevelResult {
                n,
                uniform: None,
                graded: None,
                uniform_sweeps: 0,
                graded_sweeps: 0,
                graded_start: GradedStart::UniformSolution,
                graded_initial: None,
                failure: None,
            };
            match uni {
                Ok(out) => {
                    row.uniform = finite(out.energy);
                    row.uniform_sweeps = out.sweeps;
                }
                Err(e) => row.failure = Some(format!("uniform: {e}")),
            }
            let mesh = match Mesh1D::graded_mapped(a, b, n, exp.graded_beta) {
                Ok(m) => m,
                Err(e) => {
                    row.failure = Some(format!("graded: {e}"));
                    return row;
                }
            };
            let init = match (&profile, uni) {
                (Some(p), _) => {
                    row.graded_start = GradedStart::SingularProfile;
                    let (pa, pb) = (p(a), p(b));
                    Some(PLFunction::interpolate(mesh.clone(), |x| {
                        let th = (x - a) / (b - a);
                        p(x) + (bc.0 - pa) * (1.0 - th) + (bc.1 - pb) * th
                    }))
                }
                (None, Ok(out)) => Some(PLFunction::interpolate(mesh.clone(), |x| out.function.eval(x))),
                (None, Err(_)) => None,
            };
            match minimize_energy(&lag, &mesh, bc, init.as_ref(), &exp.options(!(n as u64))) {
                Ok(out) => {
                    row.graded = finite(out.energy);
                    row.graded_initial = finite(out.initial_energy);
                    row.graded_sweeps = out.sweeps;
                }
                Err(e) => {
                    let msg = format!("graded: {e}");
                    row.failure = Some(row.failure.map_or(msg.clone(), |f| format!("{f}; {msg}")));
                }
            }
            row
        })
        .collect();

    let (verdict, reason, stats) = classify(exp, &rows);
    Ok(GapReport {
        problem: exp.problem.clone(),
        params: lag.params().clone(),
        bc,
        levels: exp.levels.clone(),
        uniform: rows.iter().map(|r| r.uniform).collect(),
        graded: rows.iter().map(|r| r.graded).collect(),
        verdict,
        reason,
        stats,
        seed: exp.seed,
        tool_version: TOOL_VERSION.into(),
        experiment: exp.clone(),
        details: rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub n: usize,
    pub graded_energy: f64,
    pub uniform_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManiaReference {
    pub beta: f64,
    pub rows: Vec<ReferenceRow>,
    /// Graded interpolant of x^(1/3) at the finest level.
    pub finest: PLFunction,
}

/// Interpolants of the cube-root profile on graded and uniform meshes.
pub fn mania_reference(levels: &[usize], beta: f64, order: usize) -> Result<ManiaReference, GapError> {
    if levels.is_empty() {
        return Err(GapError::BadLevels);
    }
    let lag = lagrangian::make_mania();
    let mut rows = Vec::with_capacity(levels.len());
    let mut finest = None;
    for &n in levels {
        let graded = PLFunction::interpolate(Mesh1D::graded_mapped(0.0, 1.0, n, beta)?, f64::cbrt);
        let uniform = PLFunction::interpolate(Mesh1D::uniform(0.0, 1.0, n)?, f64::cbrt);
        rows.push(ReferenceRow {
            n,
            graded_energy: mesh::energy(&lag, &graded, order)?,
            uniform_energy: mesh::energy(&lag, &uniform, order)?,
        });
        finest = Some(graded);
    }
    Ok(ManiaReference {
        beta,
        rows,
        finest: finest.expect("levels nonempty"),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoReport {
    pub balance: BalanceReport,
    pub table: ConvergenceTable,
    pub tolerance: f64,
    pub final_relative_error: f64,
    pub converged: bool,
}

/// Refuses unless `spec` yields SATISFIED for `lag`, then runs the scheme.
#[allow(clippy::too_many_arguments)]
pub fn scheme_no_gap_demo(
    lag: &Lagrangian,
    spec: &ConditionSpec,
    target: impl Fn(f64) -> f64 + Send + Sync + 'static,
    datum: impl Fn(f64) -> f64 + Send + Sync + 'static,
    schedule: &[(u32, f64, f64)],
    s: f64,
    tolerance: f64,
    config: SchemeConfig,
) -> Result<DemoReport, GapError> {
    let balance = check_condition(lag, lag.domain(), spec)?;
    if !balance.verdict.is_satisfied() {
        let detail = serde_json::to_string(&balance.verdict).unwrap_or_default();
        return Err(GapError::Refused {
            verdict: balance.verdict.label().into(),
            detail,
        });
    }
    let eps_max = schedule.iter().map(|r| r.1).fold(0.0, f64::max);
    let scheme = Scheme::new(lag.clone(), target, datum, eps_max, config)?;
    let table = scheme.run(schedule, s)?;
    let final_relative_error = table
        .last()
        .map_or(f64::INFINITY, |r| (r.energy - r.target_energy).abs() / r.target_energy.abs());
    Ok(DemoReport {
        balance,
        table,
        tolerance,
        converged: final_relative_error <= tolerance,
        final_relative_error,
    })
}

/// Anything [`write_reports`] can serialize.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", content = "report", rename_all = "snake_case")]
pub enum ReportEntry {
    Gap(GapReport),
    Scheme(ConvergenceTable),
    Demo(DemoReport),
    Balance(BalanceReport),
}

impl ReportEntry {
    fn kind(&self) -> &'static str {
        match self {
            ReportEntry::Gap(_) => "gap",
            ReportEntry::Scheme(_) => "scheme",
            ReportEntry::Demo(_) => "demo",
            ReportEntry::Balance(_) => "balance",
        }
    }

    fn csv(&self) -> String {
        match self {
            ReportEntry::Gap(r) => r.to_csv(),
            ReportEntry::Scheme(t) => t.to_csv(),
            ReportEntry::Demo(d) => d.table.to_csv(),
            ReportEntry::Balance(b) => b.rows_csv(),
        }
    }
}

#[derive(Serialize)]
struct IndexEntry<'a> {
    name: &'a str,
    kind: &'static str,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Index<'a> {
    schema_version: u32,
    tool_version: &'static str,
    reports: Vec<IndexEntry<'a>>,
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, GapError> {
    fs::write(&path, contents).map_err(|source| GapError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn to_json(what: &str, value: &impl Serialize) -> Result<String, GapError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|source| GapError::Json {
            what: what.into(),
            source,
        })
}

/// Writes `<name>.json`, `<name>.csv`, `<name>.dat` per entry and an `index.json`.
/// Output bytes depend only on the entries.
pub fn write_reports(dir: &Path, entries: &[(String, ReportEntry)]) -> Result<Vec<PathBuf>, GapError> {
    fs::create_dir_all(dir).map_err(|source| GapError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut index = Index {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        reports: Vec::new(),
    };
    for (name, entry) in entries {
        let csv = entry.csv();
        let dat: String = csv
            .lines()
            .enumerate()
            .map(|(i, line)| if i == 0 { format!("# {}\n", line.replace(',', " ")) } else { format!("{}\n", line.replace(',', " ")) })
            .collect();
        let files = [
            (format!("{name}.json"), to_json(name, entry)?),
            (format!("{name}.csv"), csv),
            (format!("{name}.dat"), dat),
        ];
        let mut listed = Vec::new();
        for (file, contents) in files {
            written.push(write(dir.join(&file), &contents)?);
            listed.push(file);
        }
        index.reports.push(IndexEntry {
            name,
            kind: entry.kind(),
            files: listed,
        });
    }
    written.push(write(dir.join("index.json"), &to_json("index", &index)?)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, u: f64, g: f64) -> LevelResult {
        LevelResult {
            n,
            uniform: finite(u),
            graded: finite(g),
            uniform_sweeps: 0,
            graded_sweeps: 0,
            graded_start: GradedStart::UniformSolution,
            graded_initial: None,
            failure: None,
        }
    }

    #[test]
    fn classification_rules() {
        let exp = GapExperiment::default();
        let gap = [row(4, 0.03, 1e-9), row(8, 0.026, 1e-10)];
        assert_eq!(classify(&exp, &gap).0, GapVerdict::Gap);
        let none = [row(4, 1.0, 1.001), row(8, 1.0, 1.002)];
        assert_eq!(classify(&exp, &none).0, GapVerdict::NoGap);
        let drifting = [row(4, 0.05, 1e-9), row(8, 0.026, 1e-10)];
        assert_eq!(classify(&exp, &drifting).0, GapVerdict::Inconclusive);
        let broken = [row(4, f64::NAN, 1.0), row(8, 1.0, f64::INFINITY), row(16, 1.0, 1.0)];
        assert_eq!(classify(&exp, &broken).0, GapVerdict::Inconclusive);
    }

    #[test]
    fn ladder_stops_below_first_level() {
        assert_eq!(ladder(16, 256), vec![16, 32, 64, 128]);
        assert!(ladder(16, 16).is_empty());
    }
}
