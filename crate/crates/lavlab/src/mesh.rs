//! 1D meshes, continuous piecewise-linear functions, energies and a
//! derivative-free coordinate-descent minimizer.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lagrangian::Lagrangian;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("need a < b, got [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("need at least one cell")]
    NoCells,
    #[error("grading exponent must be at least 1, got {0}")]
    BadGrading(f64),
    #[error("nodes must be finite and strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("expected {expected} nodal values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("invalid mesh spec `{0}` (use uniform:n, graded:n:beta or mapped:n:beta)")]
    BadSpec(String),
    #[error("energies need a 1D integrand, got dimension {0}")]
    Dimension(usize),
    #[error("initial energy is not finite")]
    NonFinite,
    #[error("quadrature order must be at least 1")]
    BadOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshKind {
    Uniform,
    Graded { beta: f64 },
    Custom,
}

/// Shape of the cell interpolant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Element {
    /// Linear in x; the function space is Lipschitz.
    Affine,
    /// Linear in s = ((x − a)/(b − a))^(1/β); not Lipschitz at a.
    Mapped { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    kind: MeshKind,
    element: Element,
}

impl Mesh1D {
    fn check(a: f64, b: f64, n: usize) -> Result<(), MeshError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(MeshError::BadInterval(a, b));
        }
        if n == 0 {
            return Err(MeshError::NoCells);
        }
        Ok(())
    }

    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self, MeshError> {
        Self::check(a, b, n)?;
        let mut nodes: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
        nodes[n] = b;
        Ok(Self {
            nodes,
            kind: MeshKind::Uniform,
            element: Element::Affine,
        })
    }

    /// Nodes a + (b − a)(i/n)^β clustered at a, affine cells.
    pub fn graded(a: f64, b: f64, n: usize, beta: f64) -> Result<Self, MeshError> {
        Self::check(a, b, n)?;
        if !(beta >= 1.0 && beta.is_finite()) {
            return Err(MeshError::BadGrading(beta));
        }
        let mut nodes: Vec<f64> = (0..=n)
            .map(|i| a + (b - a) * (i as f64 / n as f64).powf(beta))
            .collect();
        nodes[n] = b;
        Ok(Self {
            nodes,
            kind: MeshKind::Graded { beta },
            element: Element::Affine,
        })
    }

    /// Graded nodes with cells linear in the reference coordinate.
    pub fn graded_mapped(a: f64, b: f64, n: usize, beta: f64) -> Result<Self, MeshError> {
        let mut mesh = Self::graded(a, b, n, beta)?;
        mesh.element = Element::Mapped { beta };
        Ok(mesh)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, MeshError> {
        if nodes.len() < 2 {
            return Err(MeshError::NoCells);
        }
        if !nodes[0].is_finite() {
            return Err(MeshError::NotIncreasing(0));
        }
        if let Some(i) = nodes.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(MeshError::NotIncreasing(i + 1));
        }
        Ok(Self {
            nodes,
            kind: MeshKind::Custom,
            element: Element::Affine,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        self.nodes[self.cells()]
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    pub fn element(&self) -> Element {
        self.element
    }

    /// Cell containing x (clamped to the mesh).
    pub fn locate(&self, x: f64) -> usize {
        self.nodes.partition_point(|&v| v <= x).saturating_sub(1).min(self.cells() - 1)
    }

    fn reference(&self, x: f64, beta: f64) -> f64 {
        ((x - self.a()) / (self.b() - self.a())).clamp(0.0, 1.0).powf(1.0 / beta)
    }

    fn reference_node(&self, i: usize) -> f64 {
        i as f64 / self.cells() as f64
    }

    /// Smallest cell width.
    pub fn min_width(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Textual mesh choice: `uniform:n`, `graded:n:beta` or `mapped:n:beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub cells: usize,
    pub grading: Option<f64>,
    pub mapped: bool,
}

impl MeshSpec {
    pub fn build(&self, a: f64, b: f64) -> Result<Mesh1D, MeshError> {
        match (self.grading, self.mapped) {
            (None, _) => Mesh1D::uniform(a, b, self.cells),
            (Some(beta), false) => Mesh1D::graded(a, b, self.cells, beta),
            (Some(beta), true) => Mesh1D::graded_mapped(a, b, self.cells, beta),
        }
    }
}

impl FromStr for MeshSpec {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MeshError::BadSpec(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let cells = parts.get(1).and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0).ok_or_else(bad)?;
        let beta = || parts.get(2).and_then(|v| v.parse::<f64>().ok()).filter(|b| *b >= 1.0).ok_or_else(bad);
        match (parts[0], parts.len()) {
            ("uniform", 2) => Ok(Self {
                cells,
                grading: None,
                mapped: false,
            }),
            ("graded", 3) => Ok(Self {
                cells,
                grading: Some(beta()?),
                mapped: false,
            }),
            ("mapped", 3) => Ok(Self {
                cells,
                grading: Some(beta()?),
                mapped: true,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.grading, self.mapped) {
            (None, _) => write!(f, "uniform:{}", self.cells),
            (Some(b), false) => write!(f, "graded:{}:{b}", self.cells),
            (Some(b), true) => write!(f, "mapped:{}:{b}", self.cells),
        }
    }
}

/// Continuous function given by nodal values; linear per cell in x or in the
/// mesh's reference coordinate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PLFunction {
    mesh: Mesh1D,
    values: Vec<f64>,
}

impl PLFunction {
    pub fn new(mesh: Mesh1D, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != mesh.nodes.len() {
            return Err(MeshError::ValueCount {
                expected: mesh.nodes.len(),
                got: values.len(),
            });
        }
        Ok(Self { mesh, values })
    }

    /// Nodal interpolant of `u`.
    pub fn interpolate(mesh: Mesh1D, u: impl Fn(f64) -> f64) -> Self {
        let values = mesh.nodes.iter().map(|&x| u(x)).collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.mesh.locate(x);
        let (u0, u1) = (self.values[i], self.values[i + 1]);
        let theta = match self.mesh.element {
            Element::Affine => {
                let (x0, x1) = (self.mesh.nodes[i], self.mesh.nodes[i + 1]);
                (x - x0) / (x1 - x0)
            }
            Element::Mapped { beta } => {
                let (s0, s1) = (self.mesh.reference_node(i), self.mesh.reference_node(i + 1));
                (self.mesh.reference(x, beta) - s0) / (s1 - s0)
            }
        };
        u0 + (u1 - u0) * theta
    }

    /// Derivative inside cell `i` at x.
    pub fn slope_at(&self, i: usize, x: f64) -> f64 {
        let du = self.values[i + 1] - self.values[i];
        match self.mesh.element {
            Element::Affine => du / (self.mesh.nodes[i + 1] - self.mesh.nodes[i]),
            Element::Mapped { beta } => {
                let len = self.mesh.b() - self.mesh.a();
                let r = ((x - self.mesh.a()) / len).max(0.0);
                let ds = r.powf(1.0 / beta - 1.0) / (beta * len);
                du * self.mesh.cells() as f64 * ds
            }
        }
    }

    /// Largest |u'|; infinite for a mapped first cell with nonzero increment.
    pub fn lipschitz_rank(&self) -> f64 {
        match self.mesh.element {
            Element::Affine => self
                .values
                .windows(2)
                .zip(self.mesh.nodes.windows(2))
                .map(|(u, x)| ((u[1] - u[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max),
            Element::Mapped { .. } => (0..self.mesh.cells())
                .map(|i| self.slope_at(i, self.mesh.nodes[i]).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// ∫|u − g| by per-cell Gauss–Legendre.
    pub fn l1_distance(&self, g: impl Fn(f64) -> f64, order: usize) -> f64 {
        let rule = GaussLegendre::new(order);
        self.mesh
            .nodes
            .windows(2)
            .map(|w| rule.integrate(w[0], w[1], |x| (self.eval(x) - g(x)).abs()))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,u\n");
        for (x, u) in self.mesh.nodes.iter().zip(&self.values) {
            out.push_str(&format!("{x},{u}\n"));
        }
        out
    }
}

/// Per-cell energy evaluator with a fixed quadrature rule.
struct CellEnergy<'a> {
    lag: &'a Lagrangian,
    mesh: &'a Mesh1D,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> CellEnergy<'a> {
    fn new(lag: &'a Lagrangian, mesh: &'a Mesh1D, order: usize) -> Result<Self, MeshError> {
        if lag.dim() != 1 {
            return Err(MeshError::Dimension(lag.dim()));
        }
        if order == 0 {
            return Err(MeshError::BadOrder);
        }
        let rule = GaussLegendre::new(order);
        Ok(Self {
            lag,
            mesh,
            nodes: rule.nodes().to_vec(),
            weights: rule.weights().to_vec(),
        })
    }

    fn eval(&self, i: usize, u0: f64, u1: f64) -> f64 {
        let m = self.mesh;
        match m.element {
            Element::Affine => {
                let (x0, x1) = (m.nodes[i], m.nodes[i + 1]);
                let h = x1 - x0;
                let xi = [(u1 - u0) / h];
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(&r, &w)| {
                        let th = 0.5 * (r + 1.0);
                        0.5 * h * w * self.lag.eval(&[x0 + h * th], u0 + (u1 - u0) * th, &xi)
                    })
                    .sum()
            }
            Element::Mapped { beta } => {
                let (s0, s1) = (m.reference_node(i), m.reference_node(i + 1));
                let (a, len) = (m.a(), m.b() - m.a());
                let ds = s1 - s0;
                let du_ds = (u1 - u0) / ds;
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(&r, &w)| {
                        let th = 0.5 * (r + 1.0);
                        let s = s0 + ds * th;
                        let dx_ds = len * beta * s.powf(beta - 1.0);
                        let x = a + len * s.powf(beta);
                        0.5 * ds * w * dx_ds * self.lag.eval(&[x], u0 + (u1 - u0) * th, &[du_ds / dx_ds])
                    })
                    .sum()
            }
        }
    }
}

/// ∫ f(x, u, u') dx with `order`-point Gauss–Legendre per cell.
pub fn energy(lag: &Lagrangian, u: &PLFunction, order: usize) -> Result<f64, MeshError> {
    let cells = CellEnergy::new(lag, &u.mesh, order)?;
    Ok((0..u.mesh.cells()).map(|i| cells.eval(i, u.values[i], u.values[i + 1])).sum())
}

/// Energy of a bilinear function on a tensor grid (2D integrands).
pub fn energy_tensor(lag: &Lagrangian, xs: &[f64], ys: &[f64], values: &[f64], order: usize) -> Result<f64, MeshError> {
    if lag.dim() != 2 {
        return Err(MeshError::Dimension(lag.dim()));
    }
    if order == 0 {
        return Err(MeshError::BadOrder);
    }
    if values.len() != xs.len() * ys.len() {
        return Err(MeshError::ValueCount {
            expected: xs.len() * ys.len(),
            got: values.len(),
        });
    }
    let rule = GaussLegendre::new(order);
    let at = |i: usize, j: usize| values[i * ys.len() + j];
    let mut total = 0.0;
    for i in 0..xs.len().saturating_sub(1) {
        for j in 0..ys.len().saturating_sub(1) {
            let (hx, hy) = (xs[i + 1] - xs[i], ys[j + 1] - ys[j]);
            let (u00, u10, u01, u11) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
            for (px, wx) in rule.points(0.0, 1.0) {
                for (py, wy) in rule.points(0.0, 1.0) {
                    let u = u00 * (1.0 - px) * (1.0 - py) + u10 * px * (1.0 - py) + u01 * (1.0 - px) * py + u11 * px * py;
                    let gx = ((u10 - u00) * (1.0 - py) + (u11 - u01) * py) / hx;
                    let gy = ((u01 - u00) * (1.0 - px) + (u11 - u10) * px) / hy;
                    let x = [xs[i] + hx * px, ys[j] + hy * py];
                    total += wx * wy * hx * hy * lag.eval(&x, u, &[gx, gy]);
                }
            }
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Maximum coordinate-descent sweeps per start.
    pub max_sweeps: usize,
    /// Extra perturbed starts after the first descent.
    pub restarts: usize,
    pub seed: u64,
    /// Relative energy decrease per sweep below which a start stops.
    pub tol: f64,
    pub order: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 2000,
            restarts: 0,
            seed: 0x5eed,
            tol: 1e-13,
            order: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Minimized {
    pub function: PLFunction,
    pub energy: f64,
    pub initial_energy: f64,
    pub sweeps: usize,
}

/// Brent's derivative-free line minimizer on [lo, hi].
fn brent(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, fx)
}

struct Descent<'a> {
    cells: CellEnergy<'a>,
    values: Vec<f64>,
    cell_e: Vec<f64>,
}

impl Descent<'_> {
    fn total(&self) -> f64 {
        self.cell_e.iter().sum()
    }

    fn reset(&mut self) {
        self.cell_e = (0..self.values.len() - 1)
            .map(|i| self.cells.eval(i, self.values[i], self.values[i + 1]))
            .collect();
    }

    /// One Gauss–Seidel sweep; returns the energy decrease.
    fn sweep(&mut self) -> f64 {
        let n = self.values.len() - 1;
        let mut decrease = 0.0;
        for i in 1..n {
            let (left, right) = (self.values[i - 1], self.values[i + 1]);
            let current = self.cell_e[i - 1] + self.cell_e[i];
            let local = |v: f64| self.cells.eval(i - 1, left, v) + self.cells.eval(i, v, right);
            let mut center = self.values[i];
            let mut half = (right - left).abs().max((center - left).abs()).max((right - center).abs()) + 1.0;
            let mut best = (center, current);
            for _ in 0..4 {
                let (x, fx) = brent(local, center - half, center + half, 1e-12);
                if fx < best.1 {
                    best = (x, fx);
                }
                if (x - center).abs() < 0.9 * half {
                    break;
                }
                center = x;
                half *= 2.0;
            }
            if best.1 < current {
                self.values[i] = best.0;
                self.cell_e[i - 1] = self.cells.eval(i - 1, left, best.0);
                self.cell_e[i] = self.cells.eval(i, best.0, right);
                decrease += current - (self.cell_e[i - 1] + self.cell_e[i]);
            }
        }
        decrease
    }

    fn run(&mut self, opts: &MinimizeOptions) -> usize {
        let mut sweeps = 0;
        while sweeps < opts.max_sweeps {
            let before = self.total();
            let dec = self.sweep();
            sweeps += 1;
            if sweeps % 64 == 0 {
                self.reset();
            }
            if dec <= opts.tol * (1.0 + before.abs()) {
                break;
            }
        }
        self.reset();
        sweeps
    }
}

/// Coordinate descent on nodal values with fixed endpoint values `bc`.
///
/// Each accepted move strictly lowers the energy. Restarts perturb the best
/// iterate with seeded noise and keep whichever result is lower.
pub fn minimize_energy(
    lag: &Lagrangian,
    mesh: &Mesh1D,
    bc: (f64, f64),
    init: Option<&PLFunction>,
    opts: &MinimizeOptions,
) -> Result<Minimized, MeshError> {
    let cells = CellEnergy::new(lag, mesh, opts.order)?;
    let n = mesh.cells();
    let mut values: Vec<f64> = match init {
        Some(u) if u.mesh == *mesh => u.values.clone(),
        Some(u) => mesh.nodes.iter().map(|&x| u.eval(x)).collect(),
        None => mesh
            .nodes
            .iter()
            .map(|&x| bc.0 + (bc.1 - bc.0) * (x - mesh.a()) / (mesh.b() - mesh.a()))
            .collect(),
    };
    values[0] = bc.0;
    values[n] = bc.1;
    let mut state = Descent {
        cells,
        values,
        cell_e: Vec::new(),
    };
    state.reset();
    let initial_energy = state.total();
    if !initial_energy.is_finite() {
        return Err(MeshError::NonFinite);
    }
    let mut sweeps = state.run(opts);
    let mut best = (state.values.clone(), state.total());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let spread = best.0.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
            - best.0.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        let amp = 0.05 * spread.max(1e-3);
        state.values = best.0.clone();
        for v in &mut state.values[1..n] {
            *v += amp * rng.gen_range(-1.0..1.0);
        }
        state.reset();
        if !state.total().is_finite() {
            continue;
        }
        sweeps += state.run(opts);
        if state.total() < best.1 {
            best = (state.values.clone(), state.total());
        }
    }
    Ok(Minimized {
        function: PLFunction {
            mesh: mesh.clone(),
            values: best.0,
        },
        energy: best.1,
        initial_energy,
        sweeps,
    })
}
