//! Sample-based checks of the balance conditions H^iso₀, H^iso, H_Δ2 and H^conv.
//!
//! Every check sweeps (ε, x, t, ξ) grids, evaluates the ratio
//! f(x, t, ξ) / (bound + 1) wherever the antecedent of the condition holds,
//! and turns the ε-trend of the largest ratio into a verdict.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convex::{self, ConvexEnvelope, ConvexError, SampledProfile};
use crate::lagrangian::{unit_directions, Domain, Lagrangian, Structure, MAX_DIM};

/// Radial samples used by the standalone envelope operation.
pub const ENVELOPE_POINTS: usize = 513;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("point {0:?} lies outside the closed domain")]
    OutsideDomain(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0:?} integrands are not supported here")]
    UnsupportedStructure(Structure),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Hiso0,
    Hiso,
    Hdelta2,
    Hconv,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Hiso0 => "hiso0",
            Condition::Hiso => "hiso",
            Condition::Hdelta2 => "hdelta2",
            Condition::Hconv => "hconv",
        })
    }
}

impl FromStr for Condition {
    type Err = BalanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hiso0" => Ok(Condition::Hiso0),
            "hiso" => Ok(Condition::Hiso),
            "hdelta2" | "hd2" => Ok(Condition::Hdelta2),
            "hconv" => Ok(Condition::Hconv),
            other => Err(BalanceError::InvalidSpec(format!("unknown condition `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Ball sampling

/// Nested sample sets for B(x, ε) ∩ Ω̄.
///
/// Radii follow the ladder ε·2^(−k/q) down to `floor`, so halving ε selects a
/// subset of the same points and sampled infima are monotone in ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSampler {
    pub per_octave: usize,
    pub angles: usize,
    pub floor: f64,
}

impl BallSampler {
    pub fn new(ball_samples: usize, floor: f64) -> Self {
        Self {
            per_octave: (ball_samples / 32).max(2),
            angles: 16,
            floor,
        }
    }

    fn radii(&self, eps: f64) -> Vec<(usize, f64)> {
        let q = self.per_octave;
        let base: Vec<f64> = (0..q).map(|j| (-(j as f64) / q as f64).exp2()).collect();
        (0..)
            .map(|k| (k, eps * base[k % q] * (-((k / q) as f64)).exp2()))
            .take_while(|&(k, r)| r >= self.floor && r > 0.0 && k < 64 * q)
            .collect()
    }

    pub fn points(&self, domain: &Domain, x: &[f64], eps: f64) -> BallPoints {
        let dim = domain.dim();
        let mut coords = Vec::with_capacity(dim * 256);
        coords.extend_from_slice(x);
        let inside = |y: &[f64]| domain.contains_closed(y);
        let q = self.per_octave;
        let directions: Vec<Vec<f64>> = match dim {
            1 => vec![vec![1.0], vec![-1.0]],
            3 => unit_directions(3, 0),
            _ => Vec::new(),
        };
        let mut y = [0.0; MAX_DIM];
        for (k, r) in self.radii(eps) {
            if dim == 2 {
                let m = self.angles.max(4);
                let step = 2.0 * std::f64::consts::PI / m as f64;
                let offset = (k % q) as f64 / q as f64 * step;
                for j in 0..m {
                    let th = offset + step * j as f64;
                    y[0] = x[0] + r * th.cos();
                    y[1] = x[1] + r * th.sin();
                    if inside(&y[..2]) {
                        coords.extend_from_slice(&y[..2]);
                    }
                }
            } else {
                for d in &directions {
                    for i in 0..dim {
                        y[i] = x[i] + r * d[i];
                    }
                    if inside(&y[..dim]) {
                        coords.extend_from_slice(&y[..dim]);
                    }
                }
            }
        }
        for i in 0..dim {
            for (bound, reached) in [
                (domain.lower()[i], x[i] - eps <= domain.lower()[i]),
                (domain.upper()[i], x[i] + eps >= domain.upper()[i]),
            ] {
                if reached {
                    y[..dim].copy_from_slice(x);
                    y[i] = bound;
                    coords.extend_from_slice(&y[..dim]);
                }
            }
        }
        BallPoints { dim, coords }
    }
}

/// Flat list of sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoints {
    dim: usize,
    coords: Vec<f64>,
}

impl BallPoints {
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Minimum of f(·, t, ξ) over the sample points.
pub fn ball_min(lag: &Lagrangian, ball: &BallPoints, t: f64, xi: &[f64]) -> f64 {
    ball.iter().map(|y| lag.eval(y, t, xi)).fold(f64::INFINITY, f64::min)
}

fn ball_min_axis(lag: &Lagrangian, ball: &BallPoints, axis: usize, t: f64, s: f64) -> f64 {
    ball.iter()
        .map(|y| lag.axis(axis, y, t, s).unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min)
}

fn validate_point(domain: &Domain, x: &[f64], eps: f64) -> Result<(), BalanceError> {
    if x.len() != domain.dim() {
        return Err(BalanceError::DimensionMismatch {
            expected: domain.dim(),
            got: x.len(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(BalanceError::BadEpsilon(eps));
    }
    if !domain.contains_closed(x) {
        return Err(BalanceError::OutsideDomain(x.to_vec()));
    }
    Ok(())
}

/// Sampled f_B⁻ = ess inf of f(·, t, ξ) over B(x, ε) ∩ Ω.
pub fn inf_over_ball(
    lag: &Lagrangian,
    domain: &Domain,
    x: &[f64],
    eps: f64,
    t: f64,
    xi: &[f64],
    sampler: &BallSampler,
) -> Result<f64, BalanceError> {
    validate_point(domain, x, eps)?;
    if xi.len() != lag.dim() {
        return Err(BalanceError::DimensionMismatch {
            expected: lag.dim(),
            got: xi.len(),
        });
    }
    Ok(ball_min(lag, &sampler.points(domain, x, eps), t, xi))
}

/// Radial grid on [0, cap]: zero, a geometric run toward zero and a uniform run.
pub fn radial_grid(cap: f64, n: usize) -> Vec<f64> {
    let n = n.max(4);
    let uniform = n / 2;
    let geometric = n - 1 - uniform;
    let mut grid: Vec<f64> = std::iter::once(0.0)
        .chain((0..geometric).map(|j| {
            let top = 1.0 / uniform as f64;
            cap * top * (-24.0 * (1.0 - j as f64 / geometric as f64)).exp2()
        }))
        .chain((1..=uniform).map(|j| cap * j as f64 / uniform as f64))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Convex minorant of s ↦ f_B⁻(t, s e) (isotropic) or of each axis term (orthotropic).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "structure", rename_all = "snake_case")]
pub enum RadialEnvelope {
    Isotropic {
        profile: SampledProfile,
        envelope: ConvexEnvelope,
    },
    Orthotropic {
        profiles: Vec<SampledProfile>,
        envelopes: Vec<ConvexEnvelope>,
    },
}

impl RadialEnvelope {
    /// Envelope value at ξ: radial in |ξ|, or summed over |ξ_i|.
    pub fn value(&self, xi: &[f64]) -> f64 {
        match self {
            RadialEnvelope::Isotropic { envelope, .. } => {
                envelope.value(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
            }
            RadialEnvelope::Orthotropic { envelopes, .. } => {
                envelopes.iter().zip(xi).map(|(e, v)| e.value(v.abs())).sum()
            }
        }
    }
}

fn finite_profile(grid: &[f64], values: Vec<f64>) -> Result<SampledProfile, ConvexError> {
    let keep = values.iter().position(|v| !v.is_finite()).unwrap_or(values.len());
    SampledProfile::new(grid[..keep].to_vec(), values[..keep].to_vec())
}

#[allow(clippy::too_many_arguments)]
pub fn radial_envelope(
    lag: &Lagrangian,
    domain: &Domain,
    x: &[f64],
    eps: f64,
    t: f64,
    cap: f64,
    points: usize,
    sampler: &BallSampler,
) -> Result<RadialEnvelope, BalanceError> {
    validate_point(domain, x, eps)?;
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(BalanceError::InvalidSpec(format!("envelope cap must be positive, got {cap}")));
    }
    let ball = sampler.points(domain, x, eps);
    envelope_on_ball(lag, &ball, t, &radial_grid(cap, points))
}

fn envelope_on_ball(
    lag: &Lagrangian,
    ball: &BallPoints,
    t: f64,
    grid: &[f64],
) -> Result<RadialEnvelope, BalanceError> {
    match lag.structure() {
        Structure::Isotropic => {
            let mut xi = [0.0; MAX_DIM];
            let values = grid
                .iter()
                .map(|&s| {
                    xi[0] = s;
                    ball_min(lag, ball, t, &xi[..lag.dim()])
                })
                .collect();
            let profile = finite_profile(grid, values)?;
            let envelope = convex::convex_minorant(&profile);
            Ok(RadialEnvelope::Isotropic { profile, envelope })
        }
        Structure::Orthotropic => {
            let profiles = (0..lag.dim())
                .map(|i| {
                    let values = grid.iter().map(|&s| ball_min_axis(lag, ball, i, t, s)).collect();
                    finite_profile(grid, values)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let envelopes = profiles.iter().map(convex::convex_minorant).collect();
            Ok(RadialEnvelope::Orthotropic { profiles, envelopes })
        }
        Structure::General => Err(BalanceError::UnsupportedStructure(Structure::General)),
    }
}

// ---------------------------------------------------------------------------
// Specification

/// Parameters of a balance sweep. `None` grids are filled with defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionSpec {
    pub condition: Condition,
    pub k1: f64,
    /// Also the constant L₂ of H^iso₀.
    pub k2: f64,
    pub p: Option<f64>,
    pub eps_grid: Option<Vec<f64>>,
    pub eps_levels: usize,
    pub t_grid: Option<Vec<f64>>,
    pub t_points: usize,
    pub x_grid: Option<Vec<Vec<f64>>>,
    pub x_points: Option<usize>,
    pub companions: bool,
    /// Target magnitudes as fractions of the per-ε cap.
    pub xi_fractions: Option<Vec<f64>>,
    pub xi_magnitudes: usize,
    pub xi_angles: usize,
    pub ball_samples: usize,
    pub ball_floor: Option<f64>,
    pub envelope_points: usize,
    pub envelope_cap_factor: f64,
    pub hull_angles: usize,
    pub hull_radii: usize,
    pub hull_radius_factor: f64,
    pub r_cap: f64,
    pub satisfied_slope: f64,
    pub violated_slope: f64,
}

impl Default for ConditionSpec {
    fn default() -> Self {
        Self {
            condition: Condition::Hiso,
            k1: 1.0,
            k2: 2.0,
            p: None,
            eps_grid: None,
            eps_levels: 10,
            t_grid: None,
            t_points: 17,
            x_grid: None,
            x_points: None,
            companions: true,
            xi_fractions: None,
            xi_magnitudes: 33,
            xi_angles: 8,
            ball_samples: 257,
            ball_floor: None,
            envelope_points: 97,
            envelope_cap_factor: 2.0,
            hull_angles: 256,
            hull_radii: 16,
            hull_radius_factor: 64.0,
            r_cap: 1e6,
            satisfied_slope: -0.1,
            violated_slope: -0.5,
        }
    }
}

impl ConditionSpec {
    pub fn new(condition: Condition) -> Self {
        Self {
            condition,
            ..Self::default()
        }
    }

    /// Fills every grid from the defaults for `lag` on `domain`.
    pub fn resolve(&self, lag: &Lagrangian, domain: &Domain) -> Result<ResolvedSpec, BalanceError> {
        let dim = domain.dim();
        if lag.dim() != dim {
            return Err(BalanceError::DimensionMismatch {
                expected: lag.dim(),
                got: dim,
            });
        }
        let bad = |m: &str| Err(BalanceError::InvalidSpec(m.to_string()));
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return bad("k1 and k2 must be positive");
        }
        let p = self.p.unwrap_or(lag.growth());
        if !(p >= 1.0) {
            return bad("p must be at least 1");
        }
        let diam = domain.diam();
        let eps_grid = match &self.eps_grid {
            Some(g) => g.clone(),
            None => (1..=self.eps_levels).map(|k| diam * (-(k as f64)).exp2()).collect(),
        };
        if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eps grid must be nonempty and positive");
        }
        let t_grid = match &self.t_grid {
            Some(g) => g.clone(),
            None => {
                let n = self.t_points.max(1);
                if n == 1 {
                    vec![0.0]
                } else {
                    (0..n).map(|i| -self.k1 + 2.0 * self.k1 * i as f64 / (n - 1) as f64).collect()
                }
            }
        };
        let x_grid = match &self.x_grid {
            Some(g) => g.clone(),
            None => domain.grid(self.x_points.unwrap_or(match dim {
                1 => 33,
                2 => 9,
                _ => 5,
            })),
        };
        if t_grid.is_empty() || x_grid.is_empty() {
            return bad("t and x grids must be nonempty");
        }
        for x in &x_grid {
            validate_point(domain, x, 1.0)?;
        }
        let xi_fractions = match &self.xi_fractions {
            Some(f) => f.clone(),
            None => {
                let n = self.xi_magnitudes.max(2);
                (0..n).map(|k| (-12.0 * (1.0 - k as f64 / (n - 1) as f64)).exp2()).collect()
            }
        };
        let min_eps = eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let floor = self.ball_floor.unwrap_or(min_eps * 0.25);
        Ok(ResolvedSpec {
            condition: self.condition,
            dim,
            k1: self.k1,
            k2: self.k2,
            p,
            eps_grid,
            t_grid,
            x_grid,
            companions: self.companions,
            xi_fractions,
            xi_angles: self.xi_angles.max(1),
            sampler: BallSampler::new(self.ball_samples, floor),
            envelope_points: self.envelope_points.max(3),
            envelope_cap_factor: self.envelope_cap_factor.max(1.0),
            hull_angles: self.hull_angles.max(4),
            hull_radii: self.hull_radii.max(2),
            hull_radius_factor: self.hull_radius_factor.max(1.0),
            r_cap: self.r_cap,
            satisfied_slope: self.satisfied_slope,
            violated_slope: self.violated_slope,
        })
    }
}

/// The specification with every grid filled in, as recorded in reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedSpec {
    pub condition: Condition,
    pub dim: usize,
    pub k1: f64,
    pub k2: f64,
    pub p: f64,
    pub eps_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<Vec<f64>>,
    pub companions: bool,
    pub xi_fractions: Vec<f64>,
    pub xi_angles: usize,
    pub sampler: BallSampler,
    pub envelope_points: usize,
    pub envelope_cap_factor: f64,
    pub hull_angles: usize,
    pub hull_radii: usize,
    pub hull_radius_factor: f64,
    pub r_cap: f64,
    pub satisfied_slope: f64,
    pub violated_slope: f64,
}

impl ResolvedSpec {
    fn dim_f(&self) -> f64 {
        self.dim as f64
    }

    /// Upper end of the swept |ξ| range at scale ε.
    pub fn cap(&self, eps: f64) -> f64 {
        let n = self.dim_f();
        match self.condition {
            Condition::Hiso0 => self.k2 * eps.powf(-(1.0f64).min(n / self.p)),
            Condition::Hiso | Condition::Hconv => (self.k2 * eps.powf(-n)).powf(1.0 / self.p.max(n)),
            Condition::Hdelta2 => self.k2 * eps.powf(-n),
        }
    }

    fn antecedent_rhs(&self, eps: f64) -> f64 {
        match self.condition {
            Condition::Hiso0 => self.cap(eps),
            _ => self.k2 * eps.powf(-self.dim_f()),
        }
    }

    fn antecedent_lhs(&self, bound: f64, xi_norm: f64) -> f64 {
        match self.condition {
            Condition::Hiso0 => xi_norm,
            Condition::Hdelta2 => bound,
            Condition::Hiso | Condition::Hconv => bound + xi_norm.powf(self.p.max(self.dim_f())),
        }
    }

    fn directions(&self, structure: Structure) -> Vec<Vec<f64>> {
        match (self.dim, structure) {
            (1, Structure::General) => vec![vec![1.0], vec![-1.0]],
            (1, _) => vec![vec![1.0]],
            (_, Structure::Isotropic) => {
                let mut e = vec![0.0; self.dim];
                e[0] = 1.0;
                vec![e]
            }
            (2, Structure::Orthotropic) => (0..self.xi_angles)
                .map(|k| {
                    let th = 0.5 * std::f64::consts::PI * k as f64 / (self.xi_angles.max(2) - 1) as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect(),
            (2, _) => unit_directions(2, 2 * self.xi_angles),
            (_, Structure::Orthotropic) => unit_directions(self.dim, 0)
                .into_iter()
                .filter(|d| d.iter().all(|c| *c >= 0.0))
                .collect(),
            _ => unit_directions(self.dim, 0),
        }
    }

    fn targets(&self, eps: f64, structure: Structure) -> Vec<Vec<f64>> {
        let cap = self.cap(eps);
        let dirs = self.directions(structure);
        self.xi_fractions
            .iter()
            .flat_map(|&fr| dirs.iter().map(move |d| d.iter().map(|c| c * fr * cap).collect()))
            .collect()
    }

    fn x_points(&self, domain: &Domain, eps: f64) -> Vec<Vec<f64>> {
        let mut out = self.x_grid.clone();
        if self.companions {
            for x in &self.x_grid {
                for i in 0..self.dim {
                    for sign in [-1.0, 1.0] {
                        let mut y = x.clone();
                        y[i] += sign * eps;
                        if domain.contains_closed(&y) {
                            out.push(y);
                        }
                    }
                }
            }
        }
        out
    }

    fn hull_samples_directions(&self) -> Vec<Vec<f64>> {
        if self.dim == 2 {
            unit_directions(2, self.hull_angles)
        } else {
            unit_directions(self.dim, 0)
        }
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Satisfied { c_est: f64 },
    Violated { growth_exponent: f64 },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Verdict::Satisfied { .. })
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Satisfied { .. } => "SATISFIED",
            Verdict::Violated { .. } => "VIOLATED",
            Verdict::Inconclusive { .. } => "INCONCLUSIVE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub t: f64,
    pub xi: Vec<f64>,
    pub eps: f64,
    pub f_value: f64,
    pub bound_value: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub cap: f64,
    pub evaluated: usize,
    pub antecedent_points: usize,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceReport {
    pub lagrangian: String,
    pub params: BTreeMap<String, f64>,
    pub spec: ResolvedSpec,
    pub verdict: Verdict,
    pub max_ratio: f64,
    pub slope: Option<f64>,
    pub rows: Vec<EpsRow>,
    /// Largest-ratio point at each ε.
    pub witnesses: Vec<Witness>,
}

impl BalanceReport {
    /// CSV of the per-ε table.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("eps,cap,evaluated,antecedent_points,max_ratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.eps, r.cap, r.evaluated, r.antecedent_points, r.max_ratio
            ));
        }
        out
    }
}

/// Single-point evaluation of a condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointProbe {
    pub f_value: f64,
    pub bound_value: f64,
    pub antecedent_lhs: f64,
    pub antecedent_rhs: f64,
    pub antecedent_ok: bool,
    pub ratio: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Per-(x, t) bound provider.
enum Bound {
    Ball,
    Envelope(RadialEnvelope),
    Hull(Vec<(Vec<f64>, f64)>),
}

impl Bound {
    fn build(
        spec: &ResolvedSpec,
        lag: &Lagrangian,
        ball: &BallPoints,
        t: f64,
        eps: f64,
    ) -> Result<Self, BalanceError> {
        if spec.condition != Condition::Hconv {
            return Ok(Bound::Ball);
        }
        let cap = spec.cap(eps);
        match lag.structure() {
            Structure::General => {
                let lo = cap / 64.0;
                let hi = cap * spec.hull_radius_factor;
                let n = spec.hull_radii;
                let radii: Vec<f64> = (0..n)
                    .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
                    .collect();
                let mut samples = vec![(vec![0.0; spec.dim], ball_min(lag, ball, t, &vec![0.0; spec.dim]))];
                for d in spec.hull_samples_directions() {
                    for &r in &radii {
                        let xi: Vec<f64> = d.iter().map(|c| c * r).collect();
                        let v = ball_min(lag, ball, t, &xi);
                        samples.push((xi, v));
                    }
                }
                Ok(Bound::Hull(samples))
            }
            _ => {
                let grid = radial_grid(cap * spec.envelope_cap_factor, spec.envelope_points);
                Ok(Bound::Envelope(envelope_on_ball(lag, ball, t, &grid)?))
            }
        }
    }

    fn value(&self, lag: &Lagrangian, ball: &BallPoints, t: f64, xi: &[f64]) -> f64 {
        match self {
            Bound::Ball => ball_min(lag, ball, t, xi),
            Bound::Envelope(env) => env.value(xi),
            Bound::Hull(samples) => convex::envelope_upper_bound(samples, xi),
        }
    }
}

/// Evaluates one (x, t, ξ, ε) point under `spec`.
#[allow(clippy::too_many_arguments)]
pub fn probe_point(
    lag: &Lagrangian,
    domain: &Domain,
    spec: &ConditionSpec,
    x: &[f64],
    t: f64,
    xi: &[f64],
    eps: f64,
) -> Result<PointProbe, BalanceError> {
    let resolved = spec.resolve(lag, domain)?;
    validate_point(domain, x, eps)?;
    let ball = resolved.sampler.points(domain, x, eps);
    let bound = Bound::build(&resolved, lag, &ball, t, eps)?;
    Ok(evaluate(&resolved, lag, &ball, &bound, x, t, xi, eps))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    spec: &ResolvedSpec,
    lag: &Lagrangian,
    ball: &BallPoints,
    bound: &Bound,
    x: &[f64],
    t: f64,
    xi: &[f64],
    eps: f64,
) -> PointProbe {
    let bound_value = bound.value(lag, ball, t, xi);
    let f_value = lag.eval(x, t, xi);
    let antecedent_lhs = spec.antecedent_lhs(bound_value, norm(xi));
    let antecedent_rhs = spec.antecedent_rhs(eps);
    PointProbe {
        f_value,
        bound_value,
        antecedent_lhs,
        antecedent_rhs,
        antecedent_ok: antecedent_lhs <= antecedent_rhs * (1.0 + 1e-12),
        ratio: f_value / (bound_value + 1.0),
    }
}

struct XResult {
    evaluated: usize,
    antecedent: usize,
    best: Option<Witness>,
}

fn sweep_x(
    spec: &ResolvedSpec,
    lag: &Lagrangian,
    domain: &Domain,
    x: &[f64],
    eps: f64,
    targets: &[Vec<f64>],
) -> Result<XResult, BalanceError> {
    let ball = spec.sampler.points(domain, x, eps);
    let mut out = XResult {
        evaluated: 0,
        antecedent: 0,
        best: None,
    };
    for &t in &spec.t_grid {
        let bound = Bound::build(spec, lag, &ball, t, eps)?;
        for xi in targets {
            let probe = evaluate(spec, lag, &ball, &bound, x, t, xi, eps);
            out.evaluated += 1;
            if !probe.antecedent_ok || probe.ratio.is_nan() {
                continue;
            }
            out.antecedent += 1;
            if out.best.as_ref().is_none_or(|w| probe.ratio > w.ratio) {
                out.best = Some(Witness {
                    x: x.to_vec(),
                    t,
                    xi: xi.clone(),
                    eps,
                    f_value: probe.f_value,
                    bound_value: probe.bound_value,
                    ratio: probe.ratio,
                });
            }
        }
    }
    Ok(out)
}

/// Least-squares slope of log(ratio) against log(ε).
fn trend_slope(rows: &[EpsRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.antecedent_points > 0 && r.max_ratio > 0.0 && r.max_ratio.is_finite())
        .map(|r| (r.eps.ln(), r.max_ratio.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn decide(spec: &ResolvedSpec, structure: Structure, max_ratio: f64, slope: Option<f64>) -> Verdict {
    let Some(slope) = slope else {
        return Verdict::Inconclusive {
            reason: "fewer than two scales with admissible points".into(),
        };
    };
    let general_conv = spec.condition == Condition::Hconv && structure == Structure::General;
    if max_ratio <= spec.r_cap && slope >= spec.satisfied_slope {
        if general_conv {
            return Verdict::Inconclusive {
                reason: "upper envelope bounds cannot certify the condition".into(),
            };
        }
        return Verdict::Satisfied {
            c_est: max_ratio.max(1.0),
        };
    }
    if max_ratio > spec.r_cap && slope <= spec.violated_slope {
        return Verdict::Violated { growth_exponent: -slope };
    }
    Verdict::Inconclusive {
        reason: format!("max ratio {max_ratio:.4e} with trend slope {slope:.3}"),
    }
}

/// Sweeps the grids of `spec` and returns a verdict with witnesses.
pub fn check_condition(lag: &Lagrangian, domain: &Domain, spec: &ConditionSpec) -> Result<BalanceReport, BalanceError> {
    let resolved = spec.resolve(lag, domain)?;
    let mut rows = Vec::new();
    let mut witnesses = Vec::new();
    for &eps in &resolved.eps_grid {
        let targets = resolved.targets(eps, lag.structure());
        let xs = resolved.x_points(domain, eps);
        let results = xs
            .par_iter()
            .map(|x| sweep_x(&resolved, lag, domain, x, eps, &targets))
            .collect::<Result<Vec<_>, _>>()?;
        let mut row = EpsRow {
            eps,
            cap: resolved.cap(eps),
            evaluated: 0,
            antecedent_points: 0,
            max_ratio: 0.0,
        };
        let mut best: Option<Witness> = None;
        for r in results {
            row.evaluated += r.evaluated;
            row.antecedent_points += r.antecedent;
            if let Some(w) = r.best {
                if best.as_ref().is_none_or(|b| w.ratio > b.ratio) {
                    best = Some(w);
                }
            }
        }
        if let Some(w) = best {
            row.max_ratio = w.ratio;
            witnesses.push(w);
        }
        rows.push(row);
    }
    let max_ratio = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let slope = trend_slope(&rows);
    let verdict = decide(&resolved, lag.structure(), max_ratio, slope);
    Ok(BalanceReport {
        lagrangian: lag.name().to_string(),
        params: lag.params().clone(),
        spec: resolved,
        verdict,
        max_ratio,
        slope,
        rows,
        witnesses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsoConvReport {
    pub hiso: BalanceReport,
    pub hconv: BalanceReport,
    /// False when H^iso is SATISFIED while H^conv is VIOLATED.
    pub consistent: bool,
}

/// Runs H^iso and H^conv with the same grids.
pub fn check_iso_implies_conv(
    lag: &Lagrangian,
    domain: &Domain,
    spec: &ConditionSpec,
) -> Result<IsoConvReport, BalanceError> {
    if lag.structure() == Structure::General {
        return Err(BalanceError::UnsupportedStructure(Structure::General));
    }
    let hiso = check_condition(lag, domain, &ConditionSpec {
        condition: Condition::Hiso,
        ..spec.clone()
    })?;
    let hconv = check_condition(lag, domain, &ConditionSpec {
        condition: Condition::Hconv,
        ..spec.clone()
    })?;
    let consistent = !(hiso.verdict.is_satisfied() && hconv.verdict.is_violated());
    Ok(IsoConvReport { hiso, hconv, consistent })
}
