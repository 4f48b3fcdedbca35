use std::collections::BTreeMap;

use lavlab::lagrangian::{self, CatalogError, Lagrangian, Structure};
use proptest::prelude::*;

fn entries() -> Vec<Lagrangian> {
    lagrangian::make_catalog()
        .iter()
        .map(|e| e.build(&BTreeMap::new()).expect("defaults build"))
        .collect()
}

fn point(lag: &Lagrangian, frac: &[f64; 3]) -> Vec<f64> {
    let d = lag.domain();
    (0..lag.dim())
        .map(|i| d.lower()[i] + frac[i] * (d.upper()[i] - d.lower()[i]))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[test]
fn catalog_has_unique_names_and_rejects_unknowns() {
    let cat = lagrangian::make_catalog();
    assert!(cat.len() >= 10);
    let mut names: Vec<_> = cat.iter().map(|e| e.name).collect();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), cat.len());
    assert!(matches!(lagrangian::lookup("no_such_entry"), Err(CatalogError::UnknownEntry(_))));
    let mut bad = BTreeMap::new();
    bad.insert("zeta".to_string(), 1.0);
    assert!(lagrangian::build("mania", &bad).is_err());
}

#[test]
fn closed_form_examples() {
    let mania = lagrangian::build("mania", &BTreeMap::new()).unwrap();
    let eps: f64 = 0.05;
    // (t³ − x)² ξ⁶ at (1 − ε, 1, 1/ε)
    let want = eps * eps * eps.powi(-6);
    assert!((mania.eval(&[1.0 - eps], 1.0, &[1.0 / eps]) - want).abs() <= 1e-9 * want);

    let bm = lagrangian::build("ball_mizel", &BTreeMap::new()).unwrap();
    let want = eps.powi(8) * eps.powf(-13.5) + 1.0 / eps;
    let got = bm.eval(&[eps], 0.0, &[eps.powf(-0.5)]);
    assert!((got - want).abs() <= 1e-9 * want);

    let ce = lagrangian::build("counterexample", &BTreeMap::new()).unwrap();
    let got = ce.eval(&[0.0, eps.sqrt()], 0.0, &[0.0, 1.0 / eps]);
    let want = eps.powf(-2.0) + 1.0 / eps;
    assert!((got - want).abs() <= 1e-9 * want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn integrands_are_finite_nonnegative_and_structured(
        idx in 0usize..64,
        frac in prop::array::uniform3(0.0f64..=1.0),
        t in -3.0f64..3.0,
        xi in prop::array::uniform3(-20.0f64..20.0),
        lambda in 0.0f64..=1.0,
        other in prop::array::uniform3(-20.0f64..20.0),
    ) {
        let all = entries();
        let lag = &all[idx % all.len()];
        let dim = lag.dim();
        let x = point(lag, &frac);
        let xi = &xi[..dim];
        let v = lag.eval(&x, t, xi);
        prop_assert!(v.is_finite() && v >= 0.0, "{} gave {v}", lag.name());

        let zero = vec![0.0; dim];
        if lag.flags().vanishes_at_zero {
            prop_assert_eq!(lag.eval(&x, t, &zero), 0.0);
        }
        let reduced = lag.reduced();
        prop_assert_eq!(reduced.eval(&x, t, &zero), 0.0);
        prop_assert!(reduced.eval(&x, t, xi) >= 0.0);

        match lag.structure() {
            Structure::Isotropic => {
                let r = lag.radial(&x, t, norm(xi));
                prop_assert!((r - v).abs() <= 1e-9 * (1.0 + v.abs()), "{}: {r} vs {v}", lag.name());
            }
            Structure::Orthotropic => {
                let sum: f64 = (0..dim).map(|i| lag.axis(i, &x, t, xi[i].abs()).unwrap()).sum();
                prop_assert!((sum - v).abs() <= 1e-9 * (1.0 + v.abs()));
            }
            Structure::General => {}
        }

        if lag.flags().claims_convex_in_xi {
            let eta = &other[..dim];
            let mid: Vec<f64> = xi.iter().zip(eta).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let lhs = lag.eval(&x, t, &mid);
            let rhs = lambda * v + (1.0 - lambda) * lag.eval(&x, t, eta);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "{} not convex: {lhs} > {rhs}", lag.name());
        }
    }

    #[test]
    fn overrides_round_trip(nu in 0.01f64..10.0) {
        let mut o = BTreeMap::new();
        o.insert("nu".to_string(), nu);
        let bm = lagrangian::build("ball_mizel", &o).unwrap();
        prop_assert_eq!(bm.params()["nu"], nu);
        prop_assert!((bm.eval(&[0.0], 0.0, &[1.0]) - nu).abs() < 1e-12);
    }
}
