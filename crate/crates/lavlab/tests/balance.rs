use std::collections::BTreeMap;

use lavlab::balance::{self, BallSampler, Condition, ConditionSpec};
use lavlab::lagrangian;
use proptest::prelude::*;

fn build(name: &str) -> lavlab::Lagrangian {
    lagrangian::build(name, &BTreeMap::new()).unwrap()
}

#[test]
fn mania_probe_matches_closed_form() {
    let lag = build("mania");
    let spec = ConditionSpec {
        k1: 2.0,
        ..ConditionSpec::new(Condition::Hiso)
    };
    for eps in [0.1f64, 0.05, 0.01] {
        let probe = balance::probe_point(&lag, lag.domain(), &spec, &[1.0 - eps], 1.0, &[1.0 / eps], eps).unwrap();
        // f = ε² ε⁻⁶ = ε⁻⁴ and f_B⁻ = 0 because x = 1 lies in the ball.
        assert!((probe.f_value - eps.powi(-4)).abs() <= 1e-9 * eps.powi(-4));
        assert_eq!(probe.bound_value, 0.0);
        assert!((probe.ratio - eps.powi(-4)).abs() <= 1e-9 * eps.powi(-4));
    }
}

#[test]
fn power_integrand_is_balanced() {
    let lag = build("power");
    let report = balance::check_condition(&lag, lag.domain(), &ConditionSpec::new(Condition::Hiso)).unwrap();
    assert!(report.verdict.is_satisfied(), "{:?}", report.verdict);
    assert!(report.max_ratio <= 1.0);
    assert!(report.rows_csv().starts_with("eps,cap,evaluated,antecedent_points,max_ratio\n"));
}

#[test]
fn sweeps_are_deterministic() {
    let lag = build("mania");
    let spec = ConditionSpec {
        eps_levels: 4,
        ..ConditionSpec::new(Condition::Hiso)
    };
    let a = balance::check_condition(&lag, lag.domain(), &spec).unwrap();
    let b = balance::check_condition(&lag, lag.domain(), &spec).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert!(a.verdict.is_violated());
}

#[test]
fn condition_names_parse() {
    for (raw, c) in [
        ("hiso0", Condition::Hiso0),
        ("HISO", Condition::Hiso),
        ("hd2", Condition::Hdelta2),
        ("hconv", Condition::Hconv),
    ] {
        assert_eq!(raw.parse::<Condition>().unwrap(), c);
    }
    assert!("hfoo".parse::<Condition>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ball_infimum_is_monotone_in_radius(
        x in 0.0f64..=1.0,
        t in -1.0f64..1.0,
        xi in 0.1f64..20.0,
        k in 1u32..8,
    ) {
        let lag = build("mania");
        let sampler = BallSampler::new(257, 1e-9);
        let eps = 0.5f64.powi(k as i32);
        let small = balance::inf_over_ball(&lag, lag.domain(), &[x], eps / 2.0, t, &[xi], &sampler).unwrap();
        let large = balance::inf_over_ball(&lag, lag.domain(), &[x], eps, t, &[xi], &sampler).unwrap();
        prop_assert!(large <= small);
        prop_assert!(small <= lag.eval(&[x], t, &[xi]));
    }

    #[test]
    fn envelope_lies_below_ball_infimum(
        x in 0.0f64..=1.0,
        j in 0usize..257,
    ) {
        let lag = build("double_phase");
        let sampler = BallSampler::new(129, 1e-9);
        let grid = balance::radial_grid(40.0, 257);
        let s = grid[j % grid.len()];
        let env = balance::radial_envelope(&lag, lag.domain(), &[x], 0.05, 0.0, 40.0, 257, &sampler).unwrap();
        let inf = balance::inf_over_ball(&lag, lag.domain(), &[x], 0.05, 0.0, &[s], &sampler).unwrap();
        prop_assert!(env.value(&[s]) <= inf + 1e-9 * (1.0 + inf));
    }
}
