//! Greatest convex minorants of sampled radial profiles, the hat operation
//! and the convexified integrand F^ε.

use serde::Serialize;
use thiserror::Error;

use crate::balance::{self, BalanceError, BallSampler};
use crate::lagrangian::{Domain, Lagrangian, Structure};
use crate::lp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("grid has {grid} points but {values} values")]
    LengthMismatch { grid: usize, values: usize },
    #[error("grid must be strictly increasing from a nonnegative start (index {0})")]
    BadGrid(usize),
    #[error("sample value at index {0} is negative or not finite")]
    BadValue(usize),
    #[error("point {s} outside the sampled range [{lo}, {hi})")]
    OutOfRange { s: f64, lo: f64, hi: f64 },
    #[error("family members must share one grid")]
    GridMismatch,
    #[error("empty family")]
    EmptyFamily,
    #[error("{0:?} integrands have no radial envelope")]
    UnsupportedStructure(Structure),
    #[error(transparent)]
    Balance(#[from] Box<BalanceError>),
}

/// Samples w(s_j) of a radial profile on an increasing grid in [0, ∞).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledProfile {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SampledProfile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, ConvexError> {
        if grid.len() != values.len() {
            return Err(ConvexError::LengthMismatch {
                grid: grid.len(),
                values: values.len(),
            });
        }
        if grid.len() < 2 {
            return Err(ConvexError::TooFewSamples(grid.len()));
        }
        if !(grid[0] >= 0.0) || !grid[0].is_finite() {
            return Err(ConvexError::BadGrid(0));
        }
        if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(ConvexError::BadGrid(i + 1));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ConvexError::BadValue(i));
        }
        Ok(Self { grid, values })
    }

    /// Samples `w` on `grid`.
    pub fn from_fn(grid: Vec<f64>, w: impl Fn(f64) -> f64) -> Result<Self, ConvexError> {
        let values = grid.iter().map(|&s| w(s)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn segment(&self, s: f64) -> usize {
        let last = self.grid.len() - 2;
        self.grid.partition_point(|&g| g <= s).saturating_sub(1).min(last)
    }

    /// Right slope of the piecewise-linear interpolant, extended by its end slopes.
    pub fn right_slope(&self, s: f64) -> f64 {
        let i = self.segment(s);
        (self.values[i + 1] - self.values[i]) / (self.grid[i + 1] - self.grid[i])
    }

    pub fn interpolate(&self, s: f64) -> f64 {
        let i = self.segment(s);
        self.values[i] + self.right_slope(s) * (s - self.grid[i])
    }
}

/// Piecewise-affine greatest convex minorant, given by its breakpoints.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexEnvelope {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl ConvexEnvelope {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn breakpoint_values(&self) -> &[f64] {
        &self.values
    }

    fn segment(&self, s: f64) -> usize {
        let last = self.breakpoints.len() - 2;
        self.breakpoints.partition_point(|&b| b <= s).saturating_sub(1).min(last)
    }

    fn slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.breakpoints[i + 1] - self.breakpoints[i])
    }

    /// Value at s; beyond the last sample the final slope continues.
    pub fn value(&self, s: f64) -> f64 {
        let i = self.segment(s);
        self.values[i] + self.slope(i) * (s - self.breakpoints[i])
    }

    pub fn right_derivative(&self, s: f64) -> f64 {
        self.slope(self.segment(s))
    }

    pub fn final_slope(&self) -> f64 {
        self.slope(self.breakpoints.len() - 2)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().expect("nonempty"))
    }

    /// Largest breakpoint s_t ≤ t: the envelope touches w there and is affine on [s_t, t].
    pub fn contact_point(&self, t: f64) -> Result<f64, ConvexError> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return Err(ConvexError::OutOfRange { s: t, lo, hi });
        }
        let i = self.breakpoints.partition_point(|&b| b <= t) - 1;
        Ok(self.breakpoints[i])
    }
}

/// Lower convex hull of the samples (monotone chain).
pub fn convex_minorant(profile: &SampledProfile) -> ConvexEnvelope {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(profile.grid.len());
    for (&s, &w) in profile.grid.iter().zip(&profile.values) {
        while hull.len() >= 2 {
            let (s0, w0) = hull[hull.len() - 2];
            let (s1, w1) = hull[hull.len() - 1];
            if (s1 - s0) * (w - w0) - (w1 - w0) * (s - s0) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((s, w));
    }
    let (breakpoints, values) = hull.into_iter().unzip();
    ConvexEnvelope { breakpoints, values }
}

/// D⁺(min_y w_y)**(s) against min_y D⁺w_y(s) for a family on a common grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeComparison {
    pub envelope_slope: f64,
    pub family_min_slope: f64,
    pub holds: bool,
}

pub fn essinf_derivative_bound(family: &[SampledProfile], s: f64) -> Result<SlopeComparison, ConvexError> {
    let first = family.first().ok_or(ConvexError::EmptyFamily)?;
    if family.iter().any(|w| w.grid != first.grid) {
        return Err(ConvexError::GridMismatch);
    }
    let (lo, hi) = (first.grid[0], *first.grid.last().expect("nonempty"));
    if !(s >= lo && s < hi) {
        return Err(ConvexError::OutOfRange { s, lo, hi });
    }
    let mins: Vec<f64> = (0..first.grid.len())
        .map(|j| family.iter().map(|w| w.values[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let lower = SampledProfile::new(first.grid.clone(), mins)?;
    let envelope_slope = convex_minorant(&lower).right_derivative(s);
    let family_min_slope = family.iter().map(|w| w.right_slope(s)).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + envelope_slope.abs().max(family_min_slope.abs()));
    Ok(SlopeComparison {
        envelope_slope,
        family_min_slope,
        holds: envelope_slope >= family_min_slope - tol,
    })
}

/// Values above this count as an infinite recession slope.
const RECESSION_CAP: f64 = 1e12;

/// Recession value lim (h(λd) − h(0))/λ, estimated from dyadic differences.
pub fn recession(h: impl Fn(&[f64]) -> f64, direction: &[f64]) -> f64 {
    let scaled = |lambda: f64| -> Vec<f64> { direction.iter().map(|d| d * lambda).collect() };
    let mut last = 0.0;
    for k in 0..60 {
        let lambda = (k as f64).exp2();
        let r = (h(&scaled(2.0 * lambda)) - h(&scaled(lambda))) / lambda;
        if !r.is_finite() || r > RECESSION_CAP {
            return f64::INFINITY;
        }
        last = r;
    }
    last
}

/// ĥ(q^x, q^t): −q^t h(−q^x/q^t) for q^t < 0, recession for q^t = 0, +∞ otherwise.
pub fn hat(h: impl Fn(&[f64]) -> f64, qx: &[f64], qt: f64) -> f64 {
    if qt < 0.0 {
        let xi: Vec<f64> = qx.iter().map(|q| -q / qt).collect();
        -qt * h(&xi)
    } else if qt == 0.0 {
        recession(h, qx)
    } else {
        f64::INFINITY
    }
}

/// F^ε(x, t, q) = hat of (f_B⁻)** at (q^x, q^t).
#[allow(clippy::too_many_arguments)]
pub fn f_eps(
    lag: &Lagrangian,
    domain: &Domain,
    x: &[f64],
    eps: f64,
    t: f64,
    qx: &[f64],
    qt: f64,
    sampler: &BallSampler,
) -> Result<f64, ConvexError> {
    if lag.structure() == Structure::General {
        return Err(ConvexError::UnsupportedStructure(Structure::General));
    }
    if qt > 0.0 {
        return Ok(f64::INFINITY);
    }
    let ball = sampler.points(domain, x, eps);
    if qt == 0.0 {
        let lower = |xi: &[f64]| balance::ball_min(lag, &ball, t, xi);
        return Ok(recession(lower, qx));
    }
    let xi: Vec<f64> = qx.iter().map(|q| -q / qt).collect();
    let size = xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cap = 4.0 * size.max(xi.iter().map(|v| v * v).sum::<f64>().sqrt()) + 1.0;
    let env = balance::radial_envelope(lag, domain, x, eps, t, cap, balance::ENVELOPE_POINTS, sampler)
        .map_err(Box::new)?;
    Ok(-qt * env.value(&xi))
}

/// Certified upper bound on the convex envelope at `target` from samples (ξ_i, v_i):
/// min Σλ_i v_i over convex weights with Σλ_i ξ_i = target, or +∞ outside the hull.
pub fn envelope_upper_bound(samples: &[(Vec<f64>, f64)], target: &[f64]) -> f64 {
    let columns: Vec<Vec<f64>> = samples
        .iter()
        .filter(|(_, v)| v.is_finite())
        .map(|(xi, _)| xi.iter().copied().chain(std::iter::once(1.0)).collect())
        .collect();
    let costs: Vec<f64> = samples.iter().filter(|(_, v)| v.is_finite()).map(|(_, v)| *v).collect();
    let rhs: Vec<f64> = target.iter().copied().chain(std::iter::once(1.0)).collect();
    match lp::minimize(&columns, &costs, &rhs) {
        Some(sol) => sol.value,
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minorant_of_four_points() {
        let w = SampledProfile::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 2.0, 1.0, 3.0]).unwrap();
        let env = convex_minorant(&w);
        assert_eq!(env.breakpoints(), &[0.0, 2.0, 3.0]);
        assert!((env.value(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(env.contact_point(1.0).unwrap(), 0.0);
        assert_eq!(env.contact_point(2.0).unwrap(), 2.0);
        assert!(env.contact_point(3.5).is_err());
    }

    #[test]
    fn convex_profile_is_its_own_minorant() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let w = SampledProfile::from_fn(grid.clone(), |s| s * s).unwrap();
        let env = convex_minorant(&w);
        for &s in &grid {
            assert!((env.value(s) - s * s).abs() < 1e-12);
        }
    }

    #[test]
    fn slopes_and_extension() {
        let w = SampledProfile::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        let env = convex_minorant(&w);
        assert_eq!(env.right_derivative(0.0), 2.0);
        assert_eq!(env.value(3.0), 6.0);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            SampledProfile::new(vec![0.0], vec![1.0]),
            Err(ConvexError::TooFewSamples(1))
        ));
        assert!(SampledProfile::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(SampledProfile::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(SampledProfile::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn derivative_bound_examples() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let fam = [
            SampledProfile::from_fn(grid.clone(), |s| s).unwrap(),
            SampledProfile::from_fn(grid.clone(), |s| 2.0 * s).unwrap(),
        ];
        let c = essinf_derivative_bound(&fam, 0.0).unwrap();
        assert!(c.holds);
        assert!((c.envelope_slope - 1.0).abs() < 1e-12);
        let fam = [
            SampledProfile::from_fn(grid.clone(), |s| s * s).unwrap(),
            SampledProfile::from_fn(grid.clone(), |s| (s - 1.0).powi(2) + 0.5).unwrap(),
        ];
        for s in [0.0, 0.5, 1.0, 2.0] {
            assert!(essinf_derivative_bound(&fam, s).unwrap().holds, "s={s}");
        }
        assert!(essinf_derivative_bound(&[], 0.0).is_err());
    }

    #[test]
    fn hat_examples() {
        let sq = |xi: &[f64]| xi.iter().map(|v| v * v).sum::<f64>();
        assert!((hat(sq, &[1.0, 0.0], -2.0) - 0.5).abs() < 1e-15);
        assert_eq!(hat(sq, &[1.0, 0.0], 0.0), f64::INFINITY);
        assert_eq!(hat(sq, &[0.0, 0.0], 0.0), 0.0);
        assert_eq!(hat(sq, &[1.0, 0.0], 1.0), f64::INFINITY);
        let one = |_: &[f64]| 1.0;
        assert_eq!(hat(one, &[3.0], -2.5), 2.5);
        assert_eq!(hat(one, &[3.0], 0.0), 0.0);
        let lin = |xi: &[f64]| xi[0].abs();
        assert_eq!(hat(lin, &[3.0], 0.0), 3.0);
    }

    #[test]
    fn upper_bound_matches_one_dimensional_hull() {
        let samples: Vec<(Vec<f64>, f64)> = (0..=20)
            .map(|i| {
                let s = i as f64 * 0.25;
                (vec![s], if (1.0..3.0).contains(&s) { 10.0 } else { s })
            })
            .collect();
        let ub = envelope_upper_bound(&samples, &[2.0]);
        assert!((ub - 2.0).abs() < 1e-9);
        assert_eq!(envelope_upper_bound(&samples, &[6.0]), f64::INFINITY);
    }
}
