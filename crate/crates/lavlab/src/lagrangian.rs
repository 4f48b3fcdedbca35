//! Integrands f(x, t, ξ), box domains and the built-in catalog.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown catalog entry `{0}`")]
    UnknownEntry(String),
    #[error("entry `{entry}` has no parameter `{name}`")]
    UnknownParameter { entry: String, name: String },
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn invalid(name: &str, value: f64, reason: &'static str) -> CatalogError {
    CatalogError::InvalidParameter {
        name: name.to_string(),
        value,
        reason,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Isotropic,
    Orthotropic,
    General,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub vanishes_at_zero: bool,
    pub claims_delta2: bool,
    pub claims_convex_in_xi: bool,
}

pub type Integrand = dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync;
/// One orthotropic summand f_i(x, t, |ξ_i|).
pub type AxisTerm = dyn Fn(&[f64], f64, f64) -> f64 + Send + Sync;
pub type Profile = dyn Fn(f64) -> f64 + Send + Sync;
pub type Weight = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
pub type Datum = dyn Fn(&[f64]) -> f64 + Send + Sync;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Axis-aligned box with a Lipschitz boundary datum.
#[derive(Clone)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    datum: Arc<Datum>,
    datum_lipschitz: f64,
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("datum_lipschitz", &self.datum_lipschitz)
            .finish()
    }
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self, CatalogError> {
        Self::boxed(vec![a], vec![b])
    }

    pub fn cube(dim: usize, a: f64, b: f64) -> Result<Self, CatalogError> {
        Self::boxed(vec![a; dim], vec![b; dim])
    }

    /// Box with zero boundary datum.
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CatalogError> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() > MAX_DIM {
            return Err(CatalogError::InvalidDomain(format!(
                "bounds of lengths {} and {} (max dimension {MAX_DIM})",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(CatalogError::InvalidDomain(format!(
                "need finite a_i < b_i, got {lower:?} and {upper:?}"
            )));
        }
        Ok(Self {
            lower,
            upper,
            datum: Arc::new(|_| 0.0),
            datum_lipschitz: 0.0,
        })
    }

    /// Attaches φ with declared Lipschitz rank, checked on a sample grid.
    pub fn with_datum(
        mut self,
        datum: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Result<Self, CatalogError> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(invalid("datum_lipschitz", lipschitz, "must be finite and nonnegative"));
        }
        let pts = self.grid(9);
        for (i, x) in pts.iter().enumerate() {
            for y in &pts[i + 1..] {
                let d: f64 = norm(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
                if (datum(x) - datum(y)).abs() > lipschitz * d * (1.0 + 1e-12) + 1e-12 {
                    return Err(invalid(
                        "datum_lipschitz",
                        lipschitz,
                        "boundary datum exceeds its declared Lipschitz rank",
                    ));
                }
            }
        }
        self.datum = Arc::new(datum);
        self.datum_lipschitz = lipschitz;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn diam(&self) -> f64 {
        norm(&self.upper.iter().zip(&self.lower).map(|(b, a)| b - a).collect::<Vec<_>>())
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (a, b)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*a, *b);
        }
    }

    pub fn datum(&self, x: &[f64]) -> f64 {
        (self.datum)(x)
    }

    pub fn datum_lipschitz(&self) -> f64 {
        self.datum_lipschitz
    }

    /// Tensor grid with `per_axis` points per axis, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let axis: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| {
                (0..per_axis)
                    .map(|i| a + (b - a) * i as f64 / (per_axis - 1) as f64)
                    .collect()
            })
            .collect();
        axis.iter().fold(vec![Vec::new()], |acc, coords| {
            acc.iter()
                .flat_map(|prefix| {
                    coords.iter().map(move |c| {
                        let mut p = prefix.clone();
                        p.push(*c);
                        p
                    })
                })
                .collect()
        })
    }
}

/// Convex increasing profiles ψ on [0, ∞) with ψ(0) = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi {
    Power(f64),
    /// s log(1 + s)
    XLogOnePlusX,
    /// s^p log(e + s)
    PowerLog(f64),
    /// exp(s) - 1
    ExpMinusOne,
}

impl Psi {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Psi::Power(p) => s.powf(p),
            Psi::XLogOnePlusX => s * s.ln_1p(),
            Psi::PowerLog(p) => s.powf(p) * (std::f64::consts::E + s).ln(),
            Psi::ExpMinusOne => s.exp_m1(),
        }
    }
}

/// An integrand with metadata. Cheap to clone, immutable, thread-safe.
#[derive(Clone)]
pub struct Lagrangian {
    name: String,
    dim: usize,
    growth: f64,
    structure: Structure,
    flags: Flags,
    params: BTreeMap<String, f64>,
    integrand: Arc<Integrand>,
    axes: Vec<Arc<AxisTerm>>,
    domain: Domain,
    singular_profile: Option<Arc<Profile>>,
}

impl fmt::Debug for Lagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lagrangian")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("growth", &self.growth)
            .field("structure", &self.structure)
            .field("flags", &self.flags)
            .field("params", &self.params)
            .finish()
    }
}

impl Lagrangian {
    /// General constructor. The default domain is the unit cube.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        growth: f64,
        structure: Structure,
        integrand: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be in 1..={MAX_DIM}");
        Self {
            name: name.into(),
            dim,
            growth,
            structure,
            flags: Flags::default(),
            params: BTreeMap::new(),
            integrand: Arc::new(integrand),
            axes: Vec::new(),
            domain: Domain::cube(dim, 0.0, 1.0).expect("unit cube"),
            singular_profile: None,
        }
    }

    /// Orthotropic sum Σ f_i(x, t, |ξ_i|).
    pub fn orthotropic(name: impl Into<String>, growth: f64, axes: Vec<Arc<AxisTerm>>) -> Self {
        let terms = axes.clone();
        let mut lag = Self::new(name, axes.len(), growth, Structure::Orthotropic, move |x, t, xi| {
            terms.iter().zip(xi).map(|(f, s)| f(x, t, s.abs())).sum()
        });
        lag.axes = axes;
        lag
    }

    pub fn with_flags(mut self, flags: Flags) -> Self {
        self.flags = flags;
        self
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        assert_eq!(domain.dim(), self.dim, "domain dimension");
        self.domain = domain;
        self
    }

    pub fn with_singular_profile(mut self, profile: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.singular_profile = Some(Arc::new(profile));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Growth exponent p.
    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn flags(&self) -> Flags {
        self.flags
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Known singular minimizer shape, if the entry has one.
    pub fn singular_profile(&self) -> Option<&Arc<Profile>> {
        self.singular_profile.as_ref()
    }

    /// Unchecked evaluation; slices must have length `dim`.
    #[inline]
    pub fn eval(&self, x: &[f64], t: f64, xi: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(xi.len(), self.dim);
        (self.integrand)(x, t, xi)
    }

    pub fn checked_eval(&self, x: &[f64], t: f64, xi: &[f64]) -> Result<f64, CatalogError> {
        for got in [x.len(), xi.len()] {
            if got != self.dim {
                return Err(CatalogError::DimensionMismatch {
                    expected: self.dim,
                    got,
                });
            }
        }
        Ok(self.eval(x, t, xi))
    }

    /// f(x, t, s e₁).
    #[inline]
    pub fn radial(&self, x: &[f64], t: f64, s: f64) -> f64 {
        let mut xi = [0.0; MAX_DIM];
        xi[0] = s;
        self.eval(x, t, &xi[..self.dim])
    }

    /// Orthotropic summand i at |ξ_i| = s.
    pub fn axis(&self, i: usize, x: &[f64], t: f64, s: f64) -> Option<f64> {
        self.axes.get(i).map(|f| f(x, t, s))
    }

    pub fn axes(&self) -> &[Arc<AxisTerm>] {
        &self.axes
    }

    /// g = (f − f(x, t, 0))₊, which vanishes at ξ = 0.
    pub fn reduced(&self) -> Lagrangian {
        let mut out = self.clone();
        out.name = format!("{}_reduced", self.name);
        out.flags.vanishes_at_zero = true;
        if self.structure == Structure::Orthotropic {
            out.axes = self
                .axes
                .iter()
                .map(|f| {
                    let f = Arc::clone(f);
                    Arc::new(move |x: &[f64], t: f64, s: f64| (f(x, t, s) - f(x, t, 0.0)).max(0.0))
                        as Arc<AxisTerm>
                })
                .collect();
            let terms = out.axes.clone();
            out.integrand = Arc::new(move |x, t, xi| {
                terms.iter().zip(xi).map(|(f, s)| f(x, t, s.abs())).sum()
            });
        } else {
            let f = Arc::clone(&self.integrand);
            let dim = self.dim;
            out.integrand = Arc::new(move |x, t, xi| {
                let zero = [0.0; MAX_DIM];
                (f(x, t, xi) - f(x, t, &zero[..dim])).max(0.0)
            });
        }
        out
    }
}

/// K_m = max f over x in a closed-domain grid, |t| ≤ m and |ξ| ≤ m.
pub fn bounded_set_max(lag: &Lagrangian, domain: &Domain, m: f64, per_axis: usize) -> f64 {
    let ts: Vec<f64> = (0..per_axis)
        .map(|i| -m + 2.0 * m * i as f64 / (per_axis.max(2) - 1) as f64)
        .collect();
    let dirs = unit_directions(lag.dim, per_axis);
    let radii: Vec<f64> = (0..per_axis).map(|i| m * i as f64 / (per_axis.max(2) - 1) as f64).collect();
    let mut best = 0.0f64;
    for x in domain.grid(per_axis) {
        for &t in &ts {
            for d in &dirs {
                for &r in &radii {
                    let xi: Vec<f64> = d.iter().map(|c| c * r).collect();
                    best = best.max(lag.eval(&x, t, &xi));
                }
            }
        }
    }
    best
}

/// Unit vectors: ±1 in 1D, `count` angles in 2D, axis and diagonal directions in 3D.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count.max(4))
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / count.max(4) as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for a in [-1.0, 0.0, 1.0] {
                for b in [-1.0, 0.0, 1.0] {
                    for c in [-1.0, 0.0, 1.0] {
                        let v: Vec<f64> = vec![a, b, c];
                        let n = norm(&v);
                        if n > 0.0 {
                            out.push(v.iter().map(|x| x / n).collect());
                        }
                    }
                }
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Constructors

/// (t³ − x)² ξ⁶ on (0, 1) with datum u(0) = 0, u(1) = 1.
pub fn make_mania() -> Lagrangian {
    let domain = Domain::interval(0.0, 1.0)
        .and_then(|d| d.with_datum(|x| x[0], 1.0))
        .expect("static domain");
    Lagrangian::new("mania", 1, 1.0, Structure::Isotropic, |x, t, xi| {
        let d = t * t * t - x[0];
        d * d * xi[0].powi(6)
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_domain(domain)
    .with_singular_profile(f64::cbrt)
}

/// (x⁴ − t⁶)² |ξ|²⁷ + ν |ξ|² on (−1, 1).
pub fn make_ball_mizel(nu: f64) -> Result<Lagrangian, CatalogError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(invalid("nu", nu, "must be positive"));
    }
    let domain = Domain::interval(-1.0, 1.0)?;
    Ok(Lagrangian::new("ball_mizel", 1, 2.0, Structure::Isotropic, move |x, t, xi| {
        let d = x[0].powi(4) - t.powi(6);
        let s = xi[0].abs();
        d * d * s.powi(27) + nu * s * s
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_params(params(&[("nu", nu)]))
    .with_domain(domain))
}

/// (ξ − 1/(2t))² for t ≠ 0 and 0 at t = 0; discontinuous in t.
pub fn make_cerf_mariconda() -> Lagrangian {
    Lagrangian::new("cerf_mariconda", 1, 2.0, Structure::General, |_, t, xi| {
        if t == 0.0 {
            0.0
        } else {
            let d = xi[0] - 0.5 / t;
            d * d
        }
    })
    .with_flags(Flags {
        vanishes_at_zero: false,
        claims_delta2: false,
        claims_convex_in_xi: true,
    })
}

/// |ξ|^{r(x,t)} with r(x, t) = r0 + r1 |x| / (1 + t²), a log-Hölder exponent.
pub fn make_variable_exponent(dim: usize, r0: f64, r1: f64) -> Result<Lagrangian, CatalogError> {
    if !(r0 >= 1.0) {
        return Err(invalid("r0", r0, "exponent must be at least 1"));
    }
    if !(r1 >= 0.0) {
        return Err(invalid("r1", r1, "must be nonnegative"));
    }
    Ok(Lagrangian::new("variable_exponent", dim, 1.0, Structure::Isotropic, move |x, t, xi| {
        let r = r0 + r1 * norm(x) / (1.0 + t * t);
        norm(xi).powf(r)
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_params(params(&[("dim", dim as f64), ("r0", r0), ("r1", r1), ("c_log", 1.0)])))
}

/// Weight a(x, t) of a phase term.
#[derive(Clone)]
pub enum PhaseWeight {
    Zero,
    /// |x|^ϰ
    PowerOfNorm(f64),
    Custom(Arc<Weight>),
}

impl PhaseWeight {
    fn into_fn(self) -> Arc<Weight> {
        match self {
            PhaseWeight::Zero => Arc::new(|_, _| 0.0),
            PhaseWeight::PowerOfNorm(k) => Arc::new(move |x, _| norm(x).powf(k)),
            PhaseWeight::Custom(f) => f,
        }
    }
}

/// |ξ|^p + a(x, t) |ξ|^q.
pub fn make_double_phase(dim: usize, p: f64, q: f64, weight: PhaseWeight) -> Result<Lagrangian, CatalogError> {
    if !(p >= 1.0) {
        return Err(invalid("p", p, "must be at least 1"));
    }
    if !(q >= p) {
        return Err(invalid("q", q, "must be at least p"));
    }
    let kappa = match weight {
        PhaseWeight::PowerOfNorm(k) if !(k >= 0.0) => return Err(invalid("kappa", k, "must be nonnegative")),
        PhaseWeight::PowerOfNorm(k) => Some(k),
        _ => None,
    };
    let a = weight.into_fn();
    let mut ps = vec![("dim", dim as f64), ("p", p), ("q", q), ("c_weight", 1.0)];
    if let Some(k) = kappa {
        ps.push(("kappa", k));
    }
    Ok(Lagrangian::new("double_phase", dim, p, Structure::Isotropic, move |x, t, xi| {
        let s = norm(xi);
        s.powf(p) + a(x, t) * s.powf(q)
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_params(params(&ps)))
}

/// |ξ|^p + Σ_j a_j(x) |ξ|^{q_j} with a_j = |x|^{ϰ_j}.
pub fn make_multi_phase(dim: usize, p: f64, phases: &[(f64, f64)]) -> Result<Lagrangian, CatalogError> {
    if !(p >= 1.0) {
        return Err(invalid("p", p, "must be at least 1"));
    }
    for &(q, k) in phases {
        if !(q >= p) {
            return Err(invalid("q", q, "must be at least p"));
        }
        if !(k >= 0.0) {
            return Err(invalid("kappa", k, "must be nonnegative"));
        }
    }
    let phases = phases.to_vec();
    let mut ps = vec![("dim".to_string(), dim as f64), ("p".to_string(), p)];
    for (j, (q, k)) in phases.iter().enumerate() {
        ps.push((format!("q{}", j + 1), *q));
        ps.push((format!("kappa{}", j + 1), *k));
    }
    Ok(Lagrangian::new("multi_phase", dim, p, Structure::Isotropic, move |x, _, xi| {
        let s = norm(xi);
        let r = norm(x);
        s.powf(p) + phases.iter().map(|(q, k)| r.powf(*k) * s.powf(*q)).sum::<f64>()
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_params(ps.into_iter().collect()))
}

/// ψ(|ξ|) + a(x) ψ(|ξ|)^γ with a = |x|^{N(γ−1)}.
pub fn make_orlicz_two_phase(dim: usize, psi: Psi, gamma: f64) -> Result<Lagrangian, CatalogError> {
    if !(gamma > 1.0) {
        return Err(invalid("gamma", gamma, "must exceed 1"));
    }
    let kappa = dim as f64 * (gamma - 1.0);
    Ok(Lagrangian::new("orlicz_two_phase", dim, 1.0, Structure::Isotropic, move |x, _, xi| {
        let v = psi.eval(norm(xi));
        v + norm(x).powf(kappa) * v.powf(gamma)
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: !matches!(psi, Psi::ExpMinusOne),
        claims_convex_in_xi: true,
    })
    .with_params(params(&[("dim", dim as f64), ("gamma", gamma), ("c_weight", 1.0)])))
}

/// ψ₀(|ξ|) + a(x) ψ₁(|ξ|) with ψ₁/ψ₀ nondecreasing and a = |x|^ϰ.
pub fn make_orlicz_general(dim: usize, psi0: Psi, psi1: Psi, kappa: f64) -> Result<Lagrangian, CatalogError> {
    if !(kappa >= 0.0) {
        return Err(invalid("kappa", kappa, "must be nonnegative"));
    }
    let probe = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let ratios: Vec<f64> = probe.iter().map(|&s| psi1.eval(s) / psi0.eval(s)).collect();
    if ratios.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
        return Err(invalid("psi1", 0.0, "psi1/psi0 must be nondecreasing"));
    }
    Ok(Lagrangian::new("orlicz_general", dim, 1.0, Structure::Isotropic, move |x, _, xi| {
        let s = norm(xi);
        psi0.eval(s) + norm(x).powf(kappa) * psi1.eval(s)
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_params(params(&[("dim", dim as f64), ("kappa", kappa), ("c_weight", 1.0)])))
}

fn exp_weight(kappa: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync + Copy {
    move |x: &[f64]| {
        let r = norm(x);
        if r == 0.0 {
            0.0
        } else {
            (-r.powf(-kappa)).exp()
        }
    }
}

fn check_exp_params(p: f64, q: f64, kappa: f64) -> Result<(), CatalogError> {
    if !(p >= 1.0) {
        return Err(invalid("p", p, "must be at least 1"));
    }
    if !(q > 0.0) {
        return Err(invalid("q", q, "must be positive"));
    }
    if !(kappa > 0.0) {
        return Err(invalid("kappa", kappa, "must be positive"));
    }
    Ok(())
}

/// |ξ|^p + a(x) exp(|ξ|^q) with a = exp(−|x|^{−ϰ}); not convex when q < 1.
pub fn make_exp_phase(dim: usize, p: f64, q: f64, kappa: f64) -> Result<Lagrangian, CatalogError> {
    check_exp_params(p, q, kappa)?;
    let a = exp_weight(kappa);
    Ok(Lagrangian::new("exp_phase", dim, p, Structure::Isotropic, move |x, _, xi| {
        let s = norm(xi);
        s.powf(p) + a(x) * s.powf(q).exp()
    })
    .with_flags(Flags {
        vanishes_at_zero: false,
        claims_delta2: false,
        claims_convex_in_xi: q >= 1.0,
    })
    .with_params(params(&[("dim", dim as f64), ("p", p), ("q", q), ("kappa", kappa)])))
}

/// Convex partner of [`make_exp_phase`]: below r* = q^{−1/q} the exponential
/// is replaced by its tangent line at r*, which passes through the origin.
pub fn make_exp_phase_convexified(dim: usize, p: f64, q: f64, kappa: f64) -> Result<Lagrangian, CatalogError> {
    check_exp_params(p, q, kappa)?;
    let a = exp_weight(kappa);
    let r_star = q.powf(-1.0 / q);
    let slope = r_star.powf(q).exp() / r_star;
    Ok(Lagrangian::new("exp_phase_convexified", dim, p, Structure::Isotropic, move |x, _, xi| {
        let s = norm(xi);
        let phase = if s <= r_star { slope * s } else { s.powf(q).exp() };
        s.powf(p) + a(x) * phase
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: false,
        claims_convex_in_xi: true,
    })
    .with_params(params(&[
        ("dim", dim as f64),
        ("p", p),
        ("q", q),
        ("kappa", kappa),
        ("r_star", r_star),
    ])))
}

/// ψ(|⟨υ(x), ξ⟩|) + |ξ|^{N/γ} in N = 2 with υ(x) = (sign(x₁)|x₁|^γ, 1).
pub fn make_anisotropic(psi: Psi, gamma: f64) -> Result<Lagrangian, CatalogError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", gamma, "must lie in (0, 1]"));
    }
    let exponent = 2.0 / gamma;
    Ok(Lagrangian::new("anisotropic", 2, exponent, Structure::General, move |x, _, xi| {
        let v0 = x[0].signum() * x[0].abs().powf(gamma);
        psi.eval((v0 * xi[0] + xi[1]).abs()) + norm(xi).powf(exponent)
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_params(params(&[("gamma", gamma)]))
    .with_domain(Domain::cube(2, -1.0, 1.0)?))
}

/// |⟨x, ξ⟩|⁴ + |ξ| on (−1, 1)².
pub fn make_counterexample() -> Lagrangian {
    Lagrangian::new("counterexample", 2, 1.0, Structure::General, |x, _, xi| {
        let d = x[0] * xi[0] + x[1] * xi[1];
        d.powi(4) + norm(xi)
    })
    .with_flags(Flags {
        vanishes_at_zero: true,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
    .with_domain(Domain::cube(2, -1.0, 1.0).expect("static domain"))
}

/// Σ_i |ξ_i|^p + |x|^ϰ |ξ_i|^q.
pub fn make_orthotropic(dim: usize, p: f64, q: f64, kappa: f64) -> Result<Lagrangian, CatalogError> {
    if !(p >= 1.0) {
        return Err(invalid("p", p, "must be at least 1"));
    }
    if !(q >= p) {
        return Err(invalid("q", q, "must be at least p"));
    }
    if !(kappa >= 0.0) {
        return Err(invalid("kappa", kappa, "must be nonnegative"));
    }
    let axes: Vec<Arc<AxisTerm>> = (0..dim)
        .map(|_| Arc::new(move |x: &[f64], _: f64, s: f64| s.powf(p) + norm(x).powf(kappa) * s.powf(q)) as Arc<AxisTerm>)
        .collect();
    Ok(Lagrangian::orthotropic("orthotropic", p, axes)
        .with_flags(Flags {
            vanishes_at_zero: true,
            claims_delta2: true,
            claims_convex_in_xi: true,
        })
        .with_params(params(&[("dim", dim as f64), ("p", p), ("q", q), ("kappa", kappa)])))
}

/// |ξ|^p, independent of (x, t).
pub fn make_power(dim: usize, p: f64) -> Result<Lagrangian, CatalogError> {
    if !(p >= 1.0) {
        return Err(invalid("p", p, "must be at least 1"));
    }
    Ok(Lagrangian::new("power", dim, p, Structure::Isotropic, move |_, _, xi| norm(xi).powf(p))
        .with_flags(Flags {
            vanishes_at_zero: true,
            claims_delta2: true,
            claims_convex_in_xi: true,
        })
        .with_params(params(&[("dim", dim as f64), ("p", p)]))
        .with_domain(
            Domain::cube(dim, 0.0, 1.0)?.with_datum(move |x| x[0], 1.0)?,
        ))
}

/// ξ² + (t − x)² on (0, 1).
pub fn make_quadratic_fidelity() -> Lagrangian {
    Lagrangian::new("quadratic_fidelity", 1, 2.0, Structure::Isotropic, |x, t, xi| {
        let d = t - x[0];
        xi[0] * xi[0] + d * d
    })
    .with_flags(Flags {
        vanishes_at_zero: false,
        claims_delta2: true,
        claims_convex_in_xi: true,
    })
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

// ---------------------------------------------------------------------------
// Catalog

/// Named parameter set with every key of an entry filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params(BTreeMap<String, f64>);

impl Params {
    pub fn get(&self, key: &str) -> f64 {
        self.0[key]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn dim(&self) -> Result<usize, CatalogError> {
        let d = self.get("dim");
        if d.fract() != 0.0 || !(1.0..=MAX_DIM as f64).contains(&d) {
            return Err(invalid("dim", d, "must be an integer in 1..=3"));
        }
        Ok(d as usize)
    }
}

type Builder = fn(&Params) -> Result<Lagrangian, CatalogError>;

pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub origin: &'static str,
    defaults: &'static [(&'static str, f64)],
    builder: Builder,
}

impl fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CatalogEntry").field("name", &self.name).finish()
    }
}

#[derive(Serialize)]
struct EntryJson<'a> {
    name: &'a str,
    summary: &'a str,
    origin: &'a str,
    params: BTreeMap<&'a str, f64>,
}

impl CatalogEntry {
    pub fn defaults(&self) -> Params {
        Params(self.defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    /// Builds with the given overrides; unknown keys are rejected.
    pub fn build(&self, overrides: &BTreeMap<String, f64>) -> Result<Lagrangian, CatalogError> {
        let mut params = self.defaults();
        for (k, v) in overrides {
            match params.0.get_mut(k) {
                Some(slot) => *slot = *v,
                None => {
                    return Err(CatalogError::UnknownParameter {
                        entry: self.name.to_string(),
                        name: k.clone(),
                    })
                }
            }
        }
        (self.builder)(&params)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(EntryJson {
            name: self.name,
            summary: self.summary,
            origin: self.origin,
            params: self.defaults.iter().copied().collect(),
        })
        .expect("entry serializes")
    }
}

static CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "mania",
        summary: "(t^3 - x)^2 xi^6 on (0,1)",
        origin: "Manià (1934)",
        defaults: &[],
        builder: |_| Ok(make_mania()),
    },
    CatalogEntry {
        name: "ball_mizel",
        summary: "(x^4 - t^6)^2 |xi|^27 + nu |xi|^2 on (-1,1)",
        origin: "Ball and Mizel (1985)",
        defaults: &[("nu", 1.0)],
        builder: |p| make_ball_mizel(p.get("nu")),
    },
    CatalogEntry {
        name: "cerf_mariconda",
        summary: "(xi - 1/(2t))^2, discontinuous at t = 0",
        origin: "Cerf and Mariconda",
        defaults: &[],
        builder: |_| Ok(make_cerf_mariconda()),
    },
    CatalogEntry {
        name: "variable_exponent",
        summary: "|xi|^r(x,t), r = r0 + r1 |x| / (1 + t^2)",
        origin: "Zhikov variable exponent",
        defaults: &[("dim", 1.0), ("r0", 2.0), ("r1", 0.5)],
        builder: |p| make_variable_exponent(p.dim()?, p.get("r0"), p.get("r1")),
    },
    CatalogEntry {
        name: "double_phase",
        summary: "|xi|^p + |x|^kappa |xi|^q",
        origin: "Zhikov double phase",
        defaults: &[("dim", 1.0), ("p", 2.0), ("q", 2.5), ("kappa", 0.25)],
        builder: |p| make_double_phase(p.dim()?, p.get("p"), p.get("q"), PhaseWeight::PowerOfNorm(p.get("kappa"))),
    },
    CatalogEntry {
        name: "multi_phase",
        summary: "|xi|^p + |x|^kappa1 |xi|^q1 + |x|^kappa2 |xi|^q2",
        origin: "multi-phase power model",
        defaults: &[("dim", 1.0), ("p", 2.0), ("q1", 2.25), ("kappa1", 0.25), ("q2", 2.5), ("kappa2", 0.5)],
        builder: |p| {
            make_multi_phase(
                p.dim()?,
                p.get("p"),
                &[(p.get("q1"), p.get("kappa1")), (p.get("q2"), p.get("kappa2"))],
            )
        },
    },
    CatalogEntry {
        name: "orlicz_two_phase",
        summary: "psi(|xi|) + |x|^(N(gamma-1)) psi(|xi|)^gamma, psi(s) = s log(1+s)",
        origin: "Orlicz two-phase model",
        defaults: &[("dim", 1.0), ("gamma", 1.5)],
        builder: |p| make_orlicz_two_phase(p.dim()?, Psi::XLogOnePlusX, p.get("gamma")),
    },
    CatalogEntry {
        name: "orlicz_general",
        summary: "psi0(|xi|) + |x|^kappa psi1(|xi|), psi0 = s^2, psi1 = s^2 log(e+s)",
        origin: "generalized Orlicz model",
        defaults: &[("dim", 1.0), ("kappa", 0.5)],
        builder: |p| make_orlicz_general(p.dim()?, Psi::Power(2.0), Psi::PowerLog(2.0), p.get("kappa")),
    },
    CatalogEntry {
        name: "exp_phase",
        summary: "|xi|^p + exp(-|x|^-kappa) exp(|xi|^q)",
        origin: "exponential phase model of Koch, Ruf and Schäffner",
        defaults: &[("dim", 1.0), ("p", 2.0), ("q", 0.5), ("kappa", 1.0)],
        builder: |p| make_exp_phase(p.dim()?, p.get("p"), p.get("q"), p.get("kappa")),
    },
    CatalogEntry {
        name: "exp_phase_convexified",
        summary: "exp_phase with exp(s^q) replaced by a linear minorant below r* = q^(-1/q)",
        origin: "exponential phase model of Koch, Ruf and Schäffner",
        defaults: &[("dim", 1.0), ("p", 2.0), ("q", 0.5), ("kappa", 1.0)],
        builder: |p| make_exp_phase_convexified(p.dim()?, p.get("p"), p.get("q"), p.get("kappa")),
    },
    CatalogEntry {
        name: "anisotropic",
        summary: "|<v(x), xi>|^2 + |xi|^(2/gamma) in 2D",
        origin: "fully anisotropic model",
        defaults: &[("gamma", 0.5)],
        builder: |p| make_anisotropic(Psi::Power(2.0), p.get("gamma")),
    },
    CatalogEntry {
        name: "counterexample",
        summary: "|<x, xi>|^4 + |xi| on (-1,1)^2",
        origin: "anisotropic counterexample",
        defaults: &[],
        builder: |_| Ok(make_counterexample()),
    },
    CatalogEntry {
        name: "orthotropic",
        summary: "sum_i |xi_i|^p + |x|^kappa |xi_i|^q",
        origin: "orthotropic double phase",
        defaults: &[("dim", 2.0), ("p", 2.0), ("q", 2.5), ("kappa", 0.5)],
        builder: |p| make_orthotropic(p.dim()?, p.get("p"), p.get("q"), p.get("kappa")),
    },
    CatalogEntry {
        name: "power",
        summary: "|xi|^p",
        origin: "Dirichlet energy family",
        defaults: &[("dim", 1.0), ("p", 2.0)],
        builder: |p| make_power(p.dim()?, p.get("p")),
    },
    CatalogEntry {
        name: "quadratic_fidelity",
        summary: "xi^2 + (t - x)^2 on (0,1)",
        origin: "smooth reference problem",
        defaults: &[],
        builder: |_| Ok(make_quadratic_fidelity()),
    },
];

pub fn make_catalog() -> &'static [CatalogEntry] {
    CATALOG
}

pub fn lookup(name: &str) -> Result<&'static CatalogEntry, CatalogError> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CatalogError::UnknownEntry(name.to_string()))
}

/// Looks up `name` and builds it with `overrides`.
pub fn build(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Lagrangian, CatalogError> {
    lookup(name)?.build(overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mania_values() {
        let f = make_mania();
        let eps: f64 = 0.1;
        let v = f.eval(&[1.0 - eps], 1.0, &[1.0 / eps]);
        assert!((v - 1e4).abs() < 1e-6 * 1e4);
        assert_eq!(f.eval(&[0.3], 0.7, &[0.0]), 0.0);
        let oracle = (0.125f64 - 0.5).powi(2) * 64.0;
        assert!((f.eval(&[0.5], 0.5, &[2.0]) - oracle).abs() < 1e-12);
        assert!((oracle - 9.0).abs() < 1e-12);
    }

    #[test]
    fn ball_mizel_values() {
        assert!(make_ball_mizel(0.0).is_err());
        assert!(make_ball_mizel(-1.0).is_err());
        let f = make_ball_mizel(1.0).unwrap();
        let eps: f64 = 0.01;
        let v = f.eval(&[eps], 0.0, &[eps.powf(-0.5)]);
        let want = eps.powf(-5.5) + 1.0 / eps;
        assert!((v - want).abs() < 1e-9 * want);
        assert_eq!(f.eval(&[0.2], 0.4, &[0.0]), 0.0);
        let g = make_ball_mizel(0.3).unwrap();
        assert!((g.eval(&[0.0], 0.0, &[1.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn double_phase_values() {
        let f = make_double_phase(1, 2.0, 2.5, PhaseWeight::Zero).unwrap();
        assert!((f.eval(&[0.4], 1.0, &[3.0]) - 9.0).abs() < 1e-12);
        let g = make_double_phase(2, 1.0, 2.0, PhaseWeight::PowerOfNorm(1.0)).unwrap();
        assert!((g.eval(&[0.5, 0.0], 0.0, &[2.0, 0.0]) - 4.0).abs() < 1e-12);
        assert!(make_double_phase(1, 0.5, 2.0, PhaseWeight::Zero).is_err());
        assert!(make_double_phase(1, 2.0, 1.5, PhaseWeight::Zero).is_err());
    }

    #[test]
    fn counterexample_value() {
        let f = make_counterexample();
        let eps: f64 = 0.01;
        let v = f.eval(&[0.0, eps.sqrt()], 0.0, &[0.0, 1.0 / eps]);
        assert!((v - 10100.0).abs() < 1e-8);
    }

    #[test]
    fn convexified_exp_phase_is_comparable() {
        let fd = make_exp_phase(1, 2.0, 0.5, 1.0).unwrap();
        let fw = make_exp_phase_convexified(1, 2.0, 0.5, 1.0).unwrap();
        let r_star = fw.params()["r_star"];
        assert!((r_star - 4.0).abs() < 1e-12);
        let bound = r_star.powf(0.5).exp();
        for i in 0..200 {
            let s = 10.0 * i as f64 / 199.0;
            for x in [0.0, 0.3, 1.0] {
                let (d, w) = (fd.eval(&[x], 0.0, &[s]), fw.eval(&[x], 0.0, &[s]));
                assert!(w <= d + 1e-12, "f_W ≤ f_D at s={s}");
                assert!(d <= w + bound + 1e-12, "f_D ≤ f_W + C at s={s}");
            }
        }
    }

    #[test]
    fn catalog_lookup_and_overrides() {
        assert!(make_catalog().len() >= 10);
        assert!(lookup("nope").is_err());
        let over: BTreeMap<String, f64> = [("nu".to_string(), 0.5)].into();
        let f = build("ball_mizel", &over).unwrap();
        assert_eq!(f.params()["nu"], 0.5);
        let bad: BTreeMap<String, f64> = [("mu".to_string(), 0.5)].into();
        assert!(matches!(build("ball_mizel", &bad), Err(CatalogError::UnknownParameter { .. })));
        let json = lookup("double_phase").unwrap().to_json();
        assert_eq!(json["params"]["kappa"], 0.25);
    }

    #[test]
    fn checked_eval_rejects_wrong_dimension() {
        let f = make_counterexample();
        assert!(f.checked_eval(&[0.0], 0.0, &[1.0, 0.0]).is_err());
        assert!(f.checked_eval(&[0.0, 0.0], 0.0, &[1.0, 0.0]).is_ok());
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::interval(1.0, 0.0).is_err());
        assert!(Domain::interval(0.0, 1.0).unwrap().with_datum(|x| 2.0 * x[0], 1.0).is_err());
        let d = Domain::cube(2, -1.0, 1.0).unwrap();
        assert!((d.diam() - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.grid(3).len(), 9);
    }
}
