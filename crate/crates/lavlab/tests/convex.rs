use std::collections::BTreeMap;

use lavlab::balance::BallSampler;
use lavlab::convex::{self, SampledProfile};
use lavlab::lagrangian;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Test-side lower hull: Andrew's monotone chain with a cross-product test.
fn oracle_hull(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        while hull.len() >= 2 {
            let (ax, ay) = hull[hull.len() - 2];
            let (bx, by) = hull[hull.len() - 1];
            let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((x, y));
    }
    hull
}

fn oracle_eval(hull: &[(f64, f64)], s: f64) -> f64 {
    let k = hull.partition_point(|p| p.0 <= s).clamp(1, hull.len() - 1);
    let ((x0, y0), (x1, y1)) = (hull[k - 1], hull[k]);
    y0 + (y1 - y0) * (s - x0) / (x1 - x0)
}

fn random_monotone(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut s = 0.0;
    let mut w = rng.gen_range(0.0..1.0);
    let mut grid = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        grid.push(s);
        values.push(w);
        s += rng.gen_range(1e-3..0.1);
        // Occasional jumps make the hull nontrivial.
        w += if rng.gen_bool(0.05) { rng.gen_range(0.0..5.0) } else { rng.gen_range(0.0..0.05) };
    }
    (grid, values)
}

#[test]
fn minorant_matches_monotone_chain_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (grid, values) = random_monotone(&mut rng, 1024);
        let hull = oracle_hull(&grid, &values);
        let env = convex::convex_minorant(&SampledProfile::new(grid.clone(), values.clone()).unwrap());
        let scale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for w in grid.windows(2) {
            for s in [w[0], 0.5 * (w[0] + w[1])] {
                let diff = (env.value(s) - oracle_eval(&hull, s)).abs();
                assert!(diff <= 1e-9 * scale, "s={s}: {} vs {}", env.value(s), oracle_eval(&hull, s));
            }
        }
        for (&s, &v) in grid.iter().zip(&values) {
            assert!(env.value(s) <= v + 1e-12 * scale, "envelope above the samples at {s}");
        }
    }
}

#[test]
fn contact_points_touch_and_envelope_is_affine_beyond() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let (grid, values) = random_monotone(&mut rng, 256);
        let profile = SampledProfile::new(grid.clone(), values).unwrap();
        let env = convex::convex_minorant(&profile);
        for &t in &grid {
            let c = env.contact_point(t).unwrap();
            assert!(c <= t);
            assert!((env.value(c) - profile.interpolate(c)).abs() <= 1e-9 * (1.0 + env.value(c).abs()));
            if t > c {
                let slope = (env.value(t) - env.value(c)) / (t - c);
                for k in 1..4 {
                    let m = c + (t - c) * k as f64 / 4.0;
                    let affine = env.value(c) + slope * (m - c);
                    assert!((env.value(m) - affine).abs() <= 1e-9 * (1.0 + affine.abs()));
                }
            }
        }
    }
}

#[test]
fn derivative_of_envelope_of_minimum_dominates_family_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
    for _ in 0..100 {
        let members = rng.gen_range(2..6);
        let family: Vec<SampledProfile> = (0..members)
            .map(|_| {
                let (a, b, c, d) = (
                    rng.gen_range(0.0..3.0),
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(2.0..3.0),
                );
                SampledProfile::from_fn(grid.clone(), |s| a * (s - b).powi(2) + c * s + d).unwrap()
            })
            .collect();
        for _ in 0..20 {
            let s = grid[rng.gen_range(0..grid.len() - 1)];
            let cmp = convex::essinf_derivative_bound(&family, s).unwrap();
            assert!(cmp.holds, "s={s}: {cmp:?}");
        }
    }
}

#[test]
fn hat_of_one_is_abs_qt() {
    let one = |_: &[f64]| 1.0;
    for qt in [-3.5, -1.0, -1e-9, 0.0] {
        assert_eq!(convex::hat(one, &[0.7, -2.0], qt), qt.abs());
    }
    assert_eq!(convex::hat(one, &[1.0], 1.0), f64::INFINITY);
}

#[test]
fn recession_of_linear_growth() {
    let h = |xi: &[f64]| (1.0 + xi[0] * xi[0]).sqrt();
    assert!((convex::recession(h, &[2.0]) - 2.0).abs() < 1e-9);
    assert_eq!(convex::recession(|xi: &[f64]| xi[0] * xi[0], &[1.0]), f64::INFINITY);
}

#[test]
fn f_eps_vanishes_on_pure_time_directions() {
    let sampler = BallSampler::new(65, 1e-6);
    for entry in lagrangian::make_catalog() {
        let lag = entry.build(&BTreeMap::new()).unwrap();
        if !lag.flags().vanishes_at_zero || lag.structure() == lagrangian::Structure::General {
            continue;
        }
        let domain = lag.domain().clone();
        let x: Vec<f64> = (0..lag.dim()).map(|i| 0.5 * (domain.lower()[i] + domain.upper()[i])).collect();
        let zero = vec![0.0; lag.dim()];
        for qt in [-2.0, -0.5, 0.0] {
            let v = convex::f_eps(&lag, &domain, &x, 0.1, 0.3, &zero, qt, &sampler).unwrap();
            assert_eq!(v, 0.0, "{} at q_t={qt}", lag.name());
        }
    }
}

#[test]
fn envelope_upper_bound_of_convex_samples() {
    // Samples of |ξ|² on a square; the LP bound at the centre mixes the corners.
    let pts: Vec<(Vec<f64>, f64)> = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
        .iter()
        .map(|&(a, b)| (vec![a, b], a * a + b * b))
        .collect();
    assert!((convex::envelope_upper_bound(&pts, &[0.0, 0.0]) - 2.0).abs() < 1e-12);
    assert!((convex::envelope_upper_bound(&pts, &[1.0, 0.0]) - 2.0).abs() < 1e-12);
    assert_eq!(convex::envelope_upper_bound(&pts, &[2.0, 0.0]), f64::INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn hat_is_one_homogeneous(
        qx in prop::array::uniform2(-50.0f64..50.0),
        qt in -50.0f64..-1e-3,
        lambda in 1e-3f64..1e3,
    ) {
        let h = |xi: &[f64]| {
            let r2 = xi[0] * xi[0] + xi[1] * xi[1];
            1.0 + r2 + r2.powf(0.75)
        };
        let base = convex::hat(h, &qx, qt);
        let scaled = convex::hat(h, &[lambda * qx[0], lambda * qx[1]], lambda * qt);
        prop_assert!((scaled - lambda * base).abs() <= 1e-12 * (lambda * base).abs());
    }
}
