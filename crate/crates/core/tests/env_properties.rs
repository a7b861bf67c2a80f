use proptest::prelude::*;
use rwre_core::EnvSpec;

fn beta_spec() -> impl Strategy<Value = EnvSpec> {
    (1.2f64..6.0, 0.3f64..4.0)
        .prop_filter("transient", |(a, b)| b < a)
        .prop_map(|(a, b)| EnvSpec::beta(a, b).unwrap())
}

fn discrete_spec() -> impl Strategy<Value = EnvSpec> {
    prop::collection::vec((0.05f64..5.0, 0.05f64..1.0), 2..5).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let atoms = pairs.iter().map(|p| p.0).collect();
        let mut probs: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
        let rest: f64 = probs[1..].iter().sum();
        probs[0] = 1.0 - rest;
        EnvSpec::discrete(atoms, probs).unwrap()
    })
}

fn any_spec() -> impl Strategy<Value = EnvSpec> {
    prop_oneof![beta_spec(), discrete_spec()]
}

/// Upper end of the moment grid.
fn s_max(spec: &EnvSpec) -> f64 {
    spec.alpha_inf().min(8.0) * 0.95
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn holder_convexity(spec in any_spec(), u1 in 0.0f64..1.0, u2 in 0.0f64..1.0, t in 0.01f64..0.99) {
        let hi = s_max(&spec);
        let (s1, s2) = (u1.min(u2) * hi, u1.max(u2) * hi);
        let mid = spec.lambda(t * s1 + (1.0 - t) * s2).unwrap();
        let bound = spec.lambda(s1).unwrap().powf(t) * spec.lambda(s2).unwrap().powf(1.0 - t);
        prop_assert!(mid <= bound * (1.0 + 1e-9), "{mid} > {bound}");
    }

    #[test]
    fn derivative_is_monotone(spec in any_spec()) {
        let hi = s_max(&spec);
        let grid: Vec<f64> = (0..100).map(|i| hi * i as f64 / 99.0).collect();
        let d: Vec<f64> = grid.iter().map(|&s| spec.lambda_prime(s).unwrap()).collect();
        for w in d.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn legendre_duality(spec in any_spec(), u in 0.02f64..0.98) {
        let s = u * s_max(&spec);
        let rho = spec.lambda_prime(s).unwrap();
        let expected = s * rho - spec.log_cumulant(s).unwrap();
        let got = spec.legendre(rho).unwrap();
        prop_assert!((got - expected).abs() < 1e-8 * expected.abs().max(1.0), "{got} vs {expected}");
    }

    #[test]
    fn derivative_matches_central_difference(spec in any_spec(), u in 0.01f64..0.99) {
        let s = u * s_max(&spec);
        let h = 1e-6;
        let fd = (spec.log_cumulant(s + h).unwrap() - spec.log_cumulant(s - h).unwrap()) / (2.0 * h);
        prop_assert!((spec.lambda_prime(s).unwrap() - fd).abs() < 1e-5);
    }

    #[test]
    fn alpha_is_stable_under_tiny_perturbation(big in 1.2f64..4.0, small in 0.05f64..0.8, p in 0.05f64..0.6) {
        let mean_log = p * big.ln() + (1.0 - p) * small.ln();
        prop_assume!(mean_log < -0.05);
        let a = EnvSpec::discrete(vec![big, small], vec![p, 1.0 - p]).unwrap().solve_alpha().unwrap();
        let q = p + 1e-9;
        let b = EnvSpec::discrete(vec![big, small], vec![q, 1.0 - q]).unwrap().solve_alpha().unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn profile_invariants(spec in any_spec()) {
        prop_assume!(spec.atoms().is_none_or(|a| a.iter().any(|(x, _)| *x > 1.0)));
        prop_assume!(spec.mean_log_a() < -1e-3);
        let p = spec.profile().unwrap();
        prop_assert!(p.alpha > 0.0);
        prop_assert!((spec.lambda(p.alpha).unwrap() - 1.0).abs() < 1e-9);
        prop_assert!(p.rho0 > 0.0);
        let lstar = spec.legendre(p.rho0).unwrap();
        prop_assert!((lstar - p.alpha * p.rho0).abs() < 1e-8 * lstar.max(1.0));
        if p.mean_a < 1.0 {
            prop_assert!((p.speed_v - (1.0 - p.mean_a) / (1.0 + p.mean_a)).abs() < 1e-15);
        } else {
            prop_assert_eq!(p.speed_v, 0.0);
        }
    }
}

#[test]
fn lambda_at_zero_is_one() {
    for spec in [
        EnvSpec::beta(3.0, 1.0).unwrap(),
        EnvSpec::two_point(2.0, 0.25, 0.5).unwrap(),
        EnvSpec::deterministic(0.7).unwrap(),
    ] {
        assert_eq!(spec.lambda(0.0).unwrap(), 1.0);
    }
}
