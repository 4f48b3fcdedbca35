//! Inner approximation by level sets of a mollified subgraph indicator (1D).
//!
//! For a profile u extended by the datum φ outside the domain, the field
//! v(x,t) = ∫ 1[t ≤ ū(x−y)] ρ_ε(y) dy + δα(t) is strictly decreasing in t and
//! its s-level x ↦ v⁻¹(x,s) is Lipschitz with rank at most C̄_δ/ε.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lagrangian::Lagrangian;
use crate::mesh::{self, Mesh1D, MeshError, PLFunction};
use crate::quadrature::GaussLegendre;

const CDF_CELLS: usize = 4096;
const INVERSE_TOL: f64 = 1e-12;
/// Levels tried in order when a certificate fails at the requested s.
pub const S_FALLBACK: [f64; 2] = [0.37, 0.61];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("the scheme is implemented for 1D integrands only (got dimension {0})")]
    Dimension(usize),
    #[error("eps = {eps} must lie in (0, {eps0}) so the kernel window stays in the extension")]
    BadEps { eps: f64, eps0: f64 },
    #[error("delta = {0} must lie in (0, 1)")]
    BadDelta(f64),
    #[error("level s = {0} must lie in (0, 1)")]
    BadLevel(f64),
    #[error("profile is not bounded or not finite")]
    Unbounded,
    #[error("boundary datum is not Lipschitz (estimated rank {0})")]
    NonLipschitzDatum(f64),
    #[error("slack constant c0 must be positive, got {0}")]
    BadSlack(f64),
    #[error("{kind} certificate failed between nodes {i} and {j}: {detail}")]
    Certificate {
        kind: &'static str,
        i: usize,
        j: usize,
        detail: String,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// 1 iff t ≤ u(x).
pub fn indicator_subgraph(u: impl Fn(f64) -> f64, x: f64, t: f64) -> u8 {
    u8::from(t <= u(x))
}

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

fn bump_derivative(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - r * r;
        -2.0 * r / (d * d) * bump(r)
    }
}

/// Which side of x the kernel samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// Support (−1, 1).
    Centered,
    /// Support (1/4, 3/4): v(x,·) only sees ū on (x − 3ε/4, x − ε/4).
    Left,
    /// Support (−3/4, −1/4): the mirror of `Left`.
    Right,
}

/// Normalized exp(−1/(1−r²)) bump with a tabulated CDF.
#[derive(Clone, Debug)]
pub struct Kernel {
    variant: KernelVariant,
    normalizer: f64,
    cdf: Arc<Vec<f64>>,
}

impl Kernel {
    pub fn new(variant: KernelVariant) -> Self {
        let rule = GaussLegendre::new(16);
        let h = 2.0 / CDF_CELLS as f64;
        let mut cdf = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for k in 0..CDF_CELLS {
            let r0 = -1.0 + k as f64 * h;
            acc += rule.integrate(r0, r0 + h, bump);
            cdf.push(acc);
        }
        let normalizer = acc;
        cdf.iter_mut().for_each(|c| *c /= normalizer);
        cdf[CDF_CELLS] = 1.0;
        Self {
            variant,
            normalizer,
            cdf: Arc::new(cdf),
        }
    }

    pub fn centered() -> Self {
        Self::new(KernelVariant::Centered)
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    /// Reuses the tabulated CDF for another variant.
    pub fn with_variant(&self, variant: KernelVariant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    fn squeeze(&self) -> (f64, f64) {
        match self.variant {
            KernelVariant::Centered => (1.0, 0.0),
            KernelVariant::Left => (4.0, -2.0),
            KernelVariant::Right => (4.0, 2.0),
        }
    }

    /// Unit-scale support.
    pub fn support(&self) -> (f64, f64) {
        match self.variant {
            KernelVariant::Centered => (-1.0, 1.0),
            KernelVariant::Left => (0.25, 0.75),
            KernelVariant::Right => (-0.75, -0.25),
        }
    }

    /// Unit-scale density ρ(y).
    pub fn density(&self, y: f64) -> f64 {
        let (k, c) = self.squeeze();
        k * bump(k * y + c) / self.normalizer
    }

    /// Unit-scale derivative ρ'(y).
    pub fn density_derivative(&self, y: f64) -> f64 {
        let (k, c) = self.squeeze();
        k * k * bump_derivative(k * y + c) / self.normalizer
    }

    /// Base CDF at r ∈ [−1, 1] by cubic Hermite interpolation of the table.
    fn base_cdf(&self, r: f64) -> f64 {
        if r <= -1.0 {
            return 0.0;
        }
        if r >= 1.0 {
            return 1.0;
        }
        let h = 2.0 / CDF_CELLS as f64;
        let pos = (r + 1.0) / h;
        let k = (pos as usize).min(CDF_CELLS - 1);
        let th = pos - k as f64;
        let r0 = -1.0 + k as f64 * h;
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        let (d0, d1) = (bump(r0) / self.normalizer * h, bump(r0 + h) / self.normalizer * h);
        let th2 = th * th;
        let th3 = th2 * th;
        (2.0 * th3 - 3.0 * th2 + 1.0) * c0
            + (th3 - 2.0 * th2 + th) * d0
            + (-2.0 * th3 + 3.0 * th2) * c1
            + (th3 - th2) * d1
    }

    /// ∫_{y0}^{y1} ρ at unit scale.
    pub fn mass(&self, y0: f64, y1: f64) -> f64 {
        let (k, c) = self.squeeze();
        self.base_cdf(k * y1 + c) - self.base_cdf(k * y0 + c)
    }

    pub fn sup_norm(&self) -> f64 {
        self.squeeze().0 * bump(0.0) / self.normalizer
    }

    /// ‖ρ'‖_{L¹} = 2‖ρ‖_∞ for a unimodal bump.
    pub fn derivative_l1(&self) -> f64 {
        2.0 * self.sup_norm()
    }
}

/// Continuous piecewise-linear ū on [a − margin, b + margin]: the profile
/// inside the domain and the datum outside.
#[derive(Clone, Debug, Serialize)]
pub struct ExtendedProfile {
    nodes: Vec<f64>,
    values: Vec<f64>,
    domain: (f64, f64),
    margin: f64,
    bound: f64,
}

impl ExtendedProfile {
    /// `inner` must use affine cells; `margin_cells` cells sample φ on each side.
    pub fn new(inner: &PLFunction, datum: impl Fn(f64) -> f64, margin: f64, margin_cells: usize) -> Self {
        let mesh = inner.mesh();
        let (a, b) = (mesh.a(), mesh.b());
        let cells = margin_cells.max(1);
        let h = margin / cells as f64;
        let mut nodes = Vec::with_capacity(mesh.nodes().len() + 2 * cells);
        let mut values = Vec::with_capacity(nodes.capacity());
        for k in 0..cells {
            let z = a - margin + k as f64 * h;
            nodes.push(z);
            values.push(datum(z));
        }
        nodes.extend_from_slice(mesh.nodes());
        values.extend_from_slice(inner.values());
        for k in 1..=cells {
            let z = b + k as f64 * h;
            nodes.push(z);
            values.push(datum(z));
        }
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            nodes,
            values,
            domain: (a, b),
            margin,
            bound,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// M = sup |ū| (NaN values are ignored).
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eval(&self, z: f64) -> f64 {
        let j = self.nodes.partition_point(|&n| n <= z).saturating_sub(1).min(self.nodes.len() - 2);
        let (z0, z1) = (self.nodes[j], self.nodes[j + 1]);
        self.values[j] + (self.values[j + 1] - self.values[j]) * (z - z0) / (z1 - z0)
    }

    /// Largest slope over the margin cells.
    pub fn datum_lipschitz(&self) -> f64 {
        let (a, b) = self.domain;
        self.nodes
            .windows(2)
            .zip(self.values.windows(2))
            .filter(|(z, _)| z[1] <= a || z[0] >= b)
            .map(|(z, w)| ((w[1] - w[0]) / (z[1] - z[0])).abs())
            .fold(0.0, f64::max)
    }

    /// ∫ 1[t ≤ ū(x − y)] ρ_ε(y) dy, with crossings located exactly per cell.
    pub fn subgraph_mass(&self, kernel: &Kernel, eps: f64, x: f64, t: f64) -> f64 {
        let (ylo, yhi) = kernel.support();
        let (zlo, zhi) = (x - eps * yhi, x - eps * ylo);
        let start = self.nodes.partition_point(|&n| n <= zlo).saturating_sub(1);
        let mut total = 0.0;
        for j in start..self.nodes.len() - 1 {
            let (z0, z1) = (self.nodes[j], self.nodes[j + 1]);
            if z0 >= zhi {
                break;
            }
            let (c0, c1) = (z0.max(zlo), z1.min(zhi));
            if c1 <= c0 {
                continue;
            }
            let (w0, w1) = (self.values[j], self.values[j + 1]);
            let lerp = |z: f64| w0 + (w1 - w0) * (z - z0) / (z1 - z0);
            let (wa, wb) = (lerp(c0), lerp(c1));
            let (p, q) = match (wa >= t, wb >= t) {
                (true, true) => (c0, c1),
                (false, false) => continue,
                (above, _) => {
                    let zc = (c0 + (t - wa) / (wb - wa) * (c1 - c0)).clamp(c0, c1);
                    if above {
                        (c0, zc)
                    } else {
                        (zc, c1)
                    }
                }
            };
            total += kernel.mass((x - q) / eps, (x - p) / eps);
        }
        total
    }
}

/// Positive, strictly decreasing α with −α'(t) ≥ c0 + Σ_{u(z)=t} (f + |u'|^p)/|u'| on [−M, M]
/// (in cell averages on the tabulation grid) and a c0·e^{−(|t|−M)} tail outside.
#[derive(Clone, Debug, Serialize)]
pub struct SlackFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    c0: f64,
    bound: f64,
    c_m: f64,
}

impl SlackFunction {
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// M = sup |ū|.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// ess inf of −α' on [−M, M].
    pub fn c_m(&self) -> f64 {
        self.c_m
    }

    /// α(−∞).
    pub fn sup_norm(&self) -> f64 {
        self.values[0] + self.c0
    }

    /// Past this t, α < 10⁻⁶.
    pub fn tail_threshold(&self) -> f64 {
        self.bound + (self.c0 / 1e-6).ln().max(0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let m = self.bound;
        if t >= m {
            return self.c0 * (-(t - m)).exp();
        }
        if t <= -m {
            return self.values[0] + self.c0 * (1.0 - (t + m).exp());
        }
        let k = self.grid.partition_point(|&g| g <= t).saturating_sub(1).min(self.grid.len() - 2);
        let (t0, t1) = (self.grid[k], self.grid[k + 1]);
        self.values[k] + (self.values[k + 1] - self.values[k]) * (t - t0) / (t1 - t0)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let m = self.bound;
        if t >= m || t < -m {
            return -self.c0 * (-(t.abs() - m)).exp();
        }
        let k = self.grid.partition_point(|&g| g <= t).saturating_sub(1).min(self.grid.len() - 2);
        (self.values[k + 1] - self.values[k]) / (self.grid[k + 1] - self.grid[k])
    }
}

/// Builds α from the coarea sums of the extended profile.
///
/// The cumulative ∫_t^M Σ_{crossings} (f + |m|^p)/|m| dτ equals
/// Σ_cells ∫_{ū(z) ≥ t} (f(z, ū, m) + |m|^p) dz, which is tabulated on `points` levels.
pub fn build_alpha(
    lag: &Lagrangian,
    profile: &ExtendedProfile,
    p: f64,
    c0: f64,
    points: usize,
) -> Result<SlackFunction, SchemeError> {
    if lag.dim() != 1 {
        return Err(SchemeError::Dimension(lag.dim()));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(SchemeError::BadSlack(c0));
    }
    let m = profile.bound();
    if !m.is_finite() {
        return Err(SchemeError::Unbounded);
    }
    let n = points.max(2);
    let grid: Vec<f64> = if m > 0.0 {
        (0..n).map(|k| -m + 2.0 * m * k as f64 / (n - 1) as f64).collect()
    } else {
        vec![-f64::MIN_POSITIVE, 0.0]
    };
    let (a, b) = profile.domain();
    let rule = GaussLegendre::new(5);
    let density = |z: f64, w: f64, slope: f64| lag.eval(&[z.clamp(a, b)], w, &[slope]) + slope.abs().powf(p);
    // bucket[k] collects contributions of cells lying entirely at levels ≥ grid[k]
    let mut bucket = vec![0.0; n];
    let mut partial = vec![0.0; n];
    let nodes = profile.nodes();
    let values = profile.values();
    for j in 0..nodes.len() - 1 {
        let (z0, z1, w0, w1) = (nodes[j], nodes[j + 1], values[j], values[j + 1]);
        if !(w0.is_finite() && w1.is_finite()) || w0 == w1 {
            continue;
        }
        let slope = (w1 - w0) / (z1 - z0);
        let (lo, hi) = (w0.min(w1), w0.max(w1));
        let full = rule.integrate(z0, z1, |z| density(z, w0 + slope * (z - z0), slope));
        // levels k with grid[k] ≤ lo get the whole cell
        let k_lo = grid.partition_point(|&g| g <= lo);
        if k_lo > 0 {
            bucket[k_lo - 1] += full;
        }
        let k_hi = grid.partition_point(|&g| g < hi);
        for k in k_lo..k_hi.min(n) {
            let zc = z0 + (grid[k] - w0) / slope;
            let (s0, s1) = if slope > 0.0 { (zc, z1) } else { (z0, zc) };
            partial[k] += rule.integrate(s0, s1, |z| density(z, w0 + slope * (z - z0), slope));
        }
    }
    // cells whose minimum is at or above grid[k] count for every level ≤ grid[k]
    let mut acc = 0.0;
    let mut cumulative = vec![0.0; n];
    for k in (0..n).rev() {
        acc += bucket[k];
        cumulative[k] = acc + partial[k];
    }
    let values: Vec<f64> = grid
        .iter()
        .zip(&cumulative)
        .map(|(&t, &area)| c0 * (m - t) + area + c0)
        .collect();
    let c_m = values
        .windows(2)
        .zip(grid.windows(2))
        .map(|(v, g)| (v[0] - v[1]) / (g[1] - g[0]))
        .fold(f64::INFINITY, f64::min);
    Ok(SlackFunction {
        grid,
        values,
        c0,
        bound: m,
        c_m,
    })
}

/// v_{ε,δ}(x, t) = (1_ū ∗_x ρ_ε)(x, t) + δα(t).
#[derive(Clone, Debug)]
pub struct SubgraphField {
    profile: Arc<ExtendedProfile>,
    kernel: Kernel,
    eps: f64,
    delta: f64,
    alpha: Arc<SlackFunction>,
}

impl SubgraphField {
    pub fn new(
        profile: Arc<ExtendedProfile>,
        kernel: Kernel,
        eps: f64,
        delta: f64,
        alpha: Arc<SlackFunction>,
    ) -> Result<Self, SchemeError> {
        let eps0 = profile.margin();
        if !(eps > 0.0 && eps < eps0) {
            return Err(SchemeError::BadEps { eps, eps0 });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(SchemeError::BadDelta(delta));
        }
        Ok(Self {
            profile,
            kernel,
            eps,
            delta,
            alpha,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn alpha(&self) -> &SlackFunction {
        &self.alpha
    }

    pub fn bound(&self) -> f64 {
        self.profile.bound()
    }

    /// The convolution part alone.
    pub fn convolution(&self, x: f64, t: f64) -> f64 {
        let m = self.profile.bound();
        if t <= -m {
            1.0
        } else if t > m {
            0.0
        } else {
            self.profile.subgraph_mass(&self.kernel, self.eps, x, t)
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.convolution(x, t) + self.delta * self.alpha.eval(t)
    }

    /// M_s: every s-level lies in [−M_s, M_s], independently of ε and δ < 1.
    pub fn level_bound(&self, s: f64) -> f64 {
        self.profile.bound() + (self.alpha.c0() / s).ln().max(0.0)
    }

    /// C̄_δ = ‖ρ'‖_{L¹} / (δ c_M).
    pub fn c_bar(&self) -> f64 {
        self.kernel.derivative_l1() / (self.delta * self.alpha.c_m())
    }

    /// inf{t : v(x,t) ≤ s} by bisection on [−M_s, M_s].
    pub fn generalized_inverse(&self, x: f64, s: f64) -> Result<f64, SchemeError> {
        if !(s > 0.0 && s < 1.0) {
            return Err(SchemeError::BadLevel(s));
        }
        let bound = self.level_bound(s);
        let (mut lo, mut hi) = (-bound, bound);
        while hi - lo > INVERSE_TOL * (1.0 + bound) {
            let mid = 0.5 * (lo + hi);
            if self.eval(x, mid) <= s {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Samples v(x, t + C̄|x−y|/ε) ≤ v(y, t) on random triples with |x − y| ≤ ε.
    pub fn coupling_check(&self, samples: usize, seed: u64) -> CouplingCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = self.profile.domain();
        let c_bar = self.c_bar();
        let bound = self.level_bound(0.5);
        let mut worst = f64::NEG_INFINITY;
        let mut violations = 0;
        for _ in 0..samples {
            let x = rng.gen_range(a..=b);
            let y = (x + self.eps * rng.gen_range(-1.0..=1.0)).clamp(a, b);
            let t = rng.gen_range(-bound..=bound);
            let shifted = t + c_bar * (x - y).abs() / self.eps;
            let gap = self.eval(x, shifted) - self.eval(y, t);
            worst = worst.max(gap);
            if gap > 1e-12 {
                violations += 1;
            }
        }
        CouplingCheck {
            samples,
            violations,
            worst_gap: worst,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CouplingCheck {
    pub samples: usize,
    pub violations: usize,
    /// max of v(x, t + C̄|x−y|/ε) − v(y, t); nonpositive when the coupling holds.
    pub worst_gap: f64,
}

/// Level set of a field sampled on a mesh, with its certificates.
#[derive(Clone, Debug, Serialize)]
pub struct Approximation {
    pub function: PLFunction,
    pub eps: f64,
    pub delta: f64,
    pub s: f64,
    pub level_bound: f64,
    pub c_bar: f64,
    pub rank: f64,
    pub rank_bound: f64,
}

/// Samples x ↦ v⁻¹(x, s) on `out_mesh` and certifies ‖·‖_∞ ≤ M_s and rank ≤ C̄/ε.
pub fn approximate(field: &SubgraphField, s: f64, out_mesh: &Mesh1D) -> Result<Approximation, SchemeError> {
    let values: Vec<f64> = out_mesh
        .nodes()
        .par_iter()
        .map(|&x| field.generalized_inverse(x, s))
        .collect::<Result<_, _>>()?;
    let level_bound = field.level_bound(s);
    if let Some(i) = values.iter().position(|v| v.abs() > level_bound) {
        return Err(SchemeError::Certificate {
            kind: "sup-norm",
            i,
            j: i,
            detail: format!("|u| = {} exceeds M_s = {level_bound}", values[i].abs()),
        });
    }
    let c_bar = field.c_bar();
    let rank_bound = c_bar / field.eps();
    let slack = 2.0 * INVERSE_TOL * (1.0 + level_bound);
    for (i, (w, x)) in values.windows(2).zip(out_mesh.nodes().windows(2)).enumerate() {
        let jump = (w[1] - w[0]).abs();
        if jump > rank_bound * (x[1] - x[0]) * (1.0 + 1e-9) + slack {
            return Err(SchemeError::Certificate {
                kind: "lipschitz",
                i,
                j: i + 1,
                detail: format!("slope {} exceeds C/eps = {rank_bound}", jump / (x[1] - x[0])),
            });
        }
    }
    let function = PLFunction::new(out_mesh.clone(), values)?;
    let rank = function.lipschitz_rank();
    Ok(Approximation {
        function,
        eps: field.eps(),
        delta: field.delta(),
        s,
        level_bound,
        c_bar,
        rank,
        rank_bound,
    })
}

/// ε_n = min(2⁻ⁿ, δ_n²) with δ_n = 2^{−n/2}.
pub fn dyadic_schedule(levels: impl IntoIterator<Item = u32>) -> Vec<(u32, f64, f64)> {
    levels
        .into_iter()
        .map(|n| {
            let delta = 2f64.powf(-(n as f64) / 2.0);
            (n, 2f64.powi(-(n as i32)).min(delta * delta), delta)
        })
        .collect()
}

/// Discretization parameters for a scheme run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchemeConfig {
    /// Affine graded mesh carrying the source profile.
    pub source_cells: usize,
    pub source_beta: f64,
    /// Mesh on which approximants are sampled.
    pub out_cells: usize,
    pub out_beta: f64,
    pub margin_cells: usize,
    /// Extension margin is max(margin_fraction · diam, margin_eps_factor · ε_max).
    pub margin_fraction: f64,
    pub margin_eps_factor: f64,
    pub c0: f64,
    pub alpha_points: usize,
    pub quad_order: usize,
    pub coupling_samples: usize,
    pub seed: u64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            source_cells: 4096,
            source_beta: 3.0,
            out_cells: 2048,
            out_beta: 2.0,
            margin_cells: 256,
            margin_fraction: 0.25,
            margin_eps_factor: 1.25,
            c0: 1.0,
            alpha_points: 4097,
            quad_order: 5,
            coupling_samples: 1000,
            seed: 0x5eed,
        }
    }
}

/// A target profile u on (a, b), its datum φ, and everything derived from them.
pub struct Scheme {
    lag: Lagrangian,
    target: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    datum: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    profile: Arc<ExtendedProfile>,
    alpha: Arc<SlackFunction>,
    kernel: Kernel,
    out_mesh: Mesh1D,
    config: SchemeConfig,
    target_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeRow {
    pub n: u32,
    pub eps: f64,
    pub delta: f64,
    pub s: f64,
    pub l1_error: f64,
    pub rank: f64,
    pub rank_bound: f64,
    pub level_bound: f64,
    pub sup_norm: f64,
    pub energy: f64,
    pub target_energy: f64,
    pub coupling: CouplingCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub lagrangian: String,
    pub config: SchemeConfig,
    pub rows: Vec<SchemeRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,eps,delta,l1_error,rank,energy,target_energy\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n, r.eps, r.delta, r.l1_error, r.rank, r.energy, r.target_energy
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&SchemeRow> {
        self.rows.last()
    }
}

/// Result of matching the datum at both endpoints.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryMatch {
    pub matched: PLFunction,
    pub pre_truncation: PLFunction,
    /// Width ε/8 of the cutoff band at each endpoint.
    pub band: f64,
    pub datum_lipschitz: f64,
    /// sup over the bands of |pre_truncation − φ|.
    pub band_deviation: f64,
    pub endpoint_error: f64,
    pub energy_matched: f64,
    pub energy_pre_truncation: f64,
    /// Largest integrand value seen on the bands by either function.
    pub band_integrand_max: f64,
}

impl Scheme {
    /// `target` is u on the closed domain, `datum` is φ on the margins.
    pub fn new(
        lag: Lagrangian,
        target: impl Fn(f64) -> f64 + Send + Sync + 'static,
        datum: impl Fn(f64) -> f64 + Send + Sync + 'static,
        eps_max: f64,
        config: SchemeConfig,
    ) -> Result<Self, SchemeError> {
        if lag.dim() != 1 {
            return Err(SchemeError::Dimension(lag.dim()));
        }
        let (a, b) = (lag.domain().lower()[0], lag.domain().upper()[0]);
        let source_mesh = Mesh1D::graded(a, b, config.source_cells, config.source_beta)?;
        let source = PLFunction::interpolate(source_mesh, &target);
        if source.values().iter().any(|v| !v.is_finite()) {
            return Err(SchemeError::Unbounded);
        }
        let margin = (config.margin_fraction * (b - a)).max(config.margin_eps_factor * eps_max);
        let profile = ExtendedProfile::new(&source, &datum, margin, config.margin_cells);
        let lip = profile.datum_lipschitz();
        if !(lip.is_finite() && lip < 1e12) {
            return Err(SchemeError::NonLipschitzDatum(lip));
        }
        let alpha = build_alpha(&lag, &profile, lag.growth(), config.c0, config.alpha_points)?;
        let out_mesh = Mesh1D::graded(a, b, config.out_cells, config.out_beta)?;
        let fine = Mesh1D::graded(a, b, 4 * config.out_cells, config.out_beta.max(5.0))?;
        let target_energy = mesh::energy(&lag, &PLFunction::interpolate(fine, &target), config.quad_order)?;
        Ok(Self {
            lag,
            target: Arc::new(target),
            datum: Arc::new(datum),
            profile: Arc::new(profile),
            alpha: Arc::new(alpha),
            kernel: Kernel::centered(),
            out_mesh,
            config,
            target_energy,
        })
    }

    /// Replaces the reference energy (for instance by a closed form).
    pub fn with_target_energy(mut self, energy: f64) -> Self {
        self.target_energy = energy;
        self
    }

    pub fn profile(&self) -> &Arc<ExtendedProfile> {
        &self.profile
    }

    pub fn alpha(&self) -> &Arc<SlackFunction> {
        &self.alpha
    }

    pub fn out_mesh(&self) -> &Mesh1D {
        &self.out_mesh
    }

    pub fn target_energy(&self) -> f64 {
        self.target_energy
    }

    pub fn field(&self, variant: KernelVariant, eps: f64, delta: f64) -> Result<SubgraphField, SchemeError> {
        SubgraphField::new(
            self.profile.clone(),
            self.kernel.with_variant(variant),
            eps,
            delta,
            self.alpha.clone(),
        )
    }

    pub fn approximate(&self, eps: f64, delta: f64, s: f64) -> Result<Approximation, SchemeError> {
        approximate(&self.field(KernelVariant::Centered, eps, delta)?, s, &self.out_mesh)
    }

    fn row(&self, n: u32, eps: f64, delta: f64, s: f64) -> Result<SchemeRow, SchemeError> {
        let field = self.field(KernelVariant::Centered, eps, delta)?;
        let mut outcome = approximate(&field, s, &self.out_mesh);
        for alt in S_FALLBACK {
            if matches!(outcome, Err(SchemeError::Certificate { .. })) {
                outcome = approximate(&field, alt, &self.out_mesh);
            }
        }
        let approx = outcome?;
        let target = self.target.clone();
        Ok(SchemeRow {
            n,
            eps,
            delta,
            s: approx.s,
            l1_error: approx.function.l1_distance(|x| target(x), self.config.quad_order),
            rank: approx.rank,
            rank_bound: approx.rank_bound,
            level_bound: approx.level_bound,
            sup_norm: approx.function.max_abs(),
            energy: mesh::energy(&self.lag, &approx.function, self.config.quad_order)?,
            target_energy: self.target_energy,
            coupling: field.coupling_check(self.config.coupling_samples, self.config.seed ^ u64::from(n)),
        })
    }

    /// One row per (n, ε_n, δ_n).
    pub fn run(&self, schedule: &[(u32, f64, f64)], s: f64) -> Result<ConvergenceTable, SchemeError> {
        let rows = schedule
            .par_iter()
            .map(|&(n, eps, delta)| self.row(n, eps, delta, s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConvergenceTable {
            lagrangian: self.lag.name().to_string(),
            config: self.config,
            rows,
        })
    }

    /// Decentered level sets near each endpoint, blended in the middle, then a
    /// smooth cutoff on bands of width ε/8 forcing the datum at a and b.
    pub fn boundary_match(&self, eps: f64, delta: f64, s: f64) -> Result<BoundaryMatch, SchemeError> {
        let left = approximate(&self.field(KernelVariant::Left, eps, delta)?, s, &self.out_mesh)?;
        let right = approximate(&self.field(KernelVariant::Right, eps, delta)?, s, &self.out_mesh)?;
        let (a, b) = (self.out_mesh.a(), self.out_mesh.b());
        let mid = 0.5 * (a + b);
        let blend_half = 0.25 * (b - a);
        let band = eps / 8.0;
        let datum = &self.datum;
        let nodes = self.out_mesh.nodes();
        let pre: Vec<f64> = nodes
            .iter()
            .zip(left.function.values().iter().zip(right.function.values()))
            .map(|(&x, (&l, &r))| {
                let lam = smoothstep((x - (mid - blend_half)) / (2.0 * blend_half));
                (1.0 - lam) * l + lam * r
            })
            .collect();
        let matched: Vec<f64> = nodes
            .iter()
            .zip(&pre)
            .map(|(&x, &v)| {
                let eta = 1.0 - smoothstep((x - a) / band) + smoothstep((x - (b - band)) / band);
                v + eta * (datum(x) - v)
            })
            .collect();
        let in_band = |x: f64| x - a <= band || b - x <= band;
        let band_deviation = nodes
            .iter()
            .zip(&pre)
            .filter(|(&x, _)| in_band(x))
            .map(|(&x, &v)| (v - datum(x)).abs())
            .fold(0.0, f64::max);
        let n = nodes.len() - 1;
        let endpoint_error = (matched[0] - datum(a)).abs().max((matched[n] - datum(b)).abs());
        let pre_truncation = PLFunction::new(self.out_mesh.clone(), pre)?;
        let matched = PLFunction::new(self.out_mesh.clone(), matched)?;
        let band_integrand_max = band_integrand_max(&self.lag, &[&matched, &pre_truncation], band);
        Ok(BoundaryMatch {
            energy_matched: mesh::energy(&self.lag, &matched, self.config.quad_order)?,
            energy_pre_truncation: mesh::energy(&self.lag, &pre_truncation, self.config.quad_order)?,
            matched,
            pre_truncation,
            band,
            datum_lipschitz: self.profile.datum_lipschitz(),
            band_deviation,
            endpoint_error,
            band_integrand_max,
        })
    }
}

fn smoothstep(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    r * r * (3.0 - 2.0 * r)
}

fn band_integrand_max(lag: &Lagrangian, functions: &[&PLFunction], band: f64) -> f64 {
    let rule = GaussLegendre::new(5);
    let mut worst = 0.0f64;
    for u in functions {
        let mesh = u.mesh();
        let (a, b) = (mesh.a(), mesh.b());
        for (i, w) in mesh.nodes().windows(2).enumerate() {
            if w[0] - a > band && b - w[1] > band {
                continue;
            }
            for (x, _) in rule.points(w[0], w[1]) {
                worst = worst.max(lag.eval(&[x], u.eval(x), &[u.slope_at(i, x)]));
            }
        }
    }
    worst
}
