use std::sync::OnceLock;

use fou_core::clark_ocone::{
    adjoint_pairings, correction_terms, eta_integrand, map_j_to_h, representation_check, EtaRoute, Estimator,
    RegularizedAdjoint,
};
use fou_core::girsanov::j_from_h;
use fou_core::grid::{make_grid, RngSpec};
use fou_core::kernel::{c_h, kernel_matrix, DiscreteKernel, HurstParam};
use fou_core::lsi::{entropy_identity_check, entropy_mc, lsi_constants, plugin_entropy};
use fou_core::malliavin::CylindricalFunctional;
use fou_core::simulate::{simulate_batch, ModelParams};
use proptest::prelude::*;

fn kernel() -> &'static DiscreteKernel {
    static K: OnceLock<DiscreteKernel> = OnceLock::new();
    K.get_or_init(|| kernel_matrix(HurstParam::new(0.75).unwrap(), &make_grid(64).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn direction_map_round_trip(h in prop::collection::vec(-2.0f64..2.0, 64), alpha in 0.0f64..3.0) {
        let k = kernel();
        let back = map_j_to_h(&j_from_h(&h, 1, alpha, k).unwrap(), 1, alpha, k).unwrap();
        for (a, b) in back.iter().zip(&h) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn reordered_pairing_agrees(p in prop::collection::vec(-2.0f64..2.0, 64), j in prop::collection::vec(-2.0f64..2.0, 64), alpha in 0.1f64..2.0) {
        let (a, b) = adjoint_pairings(&p, &j, 1, alpha, kernel()).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn entropy_is_homogeneous_and_nonnegative(g in prop::collection::vec(0.0f64..10.0, 2..200), lambda in 0.01f64..100.0) {
        let a = plugin_entropy(&g).unwrap();
        let scaled: Vec<f64> = g.iter().map(|v| lambda * v).collect();
        let b = plugin_entropy(&scaled).unwrap();
        prop_assert!((b.entropy - lambda * a.entropy).abs() <= 1e-9 * (1.0 + b.entropy.abs()));
        prop_assert!(a.entropy >= -1e-12);
    }

    #[test]
    fn lsi_factor_grows_with_alpha(hv in 0.55f64..0.95, c1 in 0.1f64..2.0, c2 in -2.0f64..0.0, a1 in 0.0f64..2.0, da in 0.01f64..1.0) {
        let h = HurstParam::new(hv).unwrap();
        let lo = lsi_constants(h, a1, c1, c2, c_h(h));
        let hi = lsi_constants(h, a1 + da, c1, c2, c_h(h));
        prop_assert!(lo.lsi_factor >= 4.0);
        prop_assert!(hi.lsi_factor > lo.lsi_factor);
    }
}

#[test]
fn discrete_eta_reproduces_linear_functional_exactly() {
    let k = kernel();
    let p = ModelParams::new(k.hurst(), 2.0, 1).unwrap();
    let f = CylindricalFunctional::shipped("linear", 1).unwrap();
    let r = representation_check(&f, &p, k, 300, RngSpec::new(1, 0), Estimator::Exact, EtaRoute::Discrete).unwrap();
    assert!(r.residual_var_ratio < 1e-20);
    assert!((r.stochastic_integral_var - r.var_f).abs() <= 1e-9 * r.var_f);
}

#[test]
fn pointwise_route_fits_linear_fbm_functional() {
    let h = HurstParam::new(0.75).unwrap();
    let k = kernel_matrix(h, &make_grid(128).unwrap());
    let p = ModelParams::fbm_limit(h, 1).unwrap();
    let f = CylindricalFunctional::shipped("linear", 1).unwrap();
    let r = representation_check(&f, &p, &k, 2000, RngSpec::new(2, 0), Estimator::Exact, EtaRoute::PointwiseKernel)
        .unwrap();
    assert!(r.residual_var_ratio < 0.02, "{r:?}");
}

#[test]
fn regression_integrand_is_adapted_and_deterministic() {
    let k = kernel();
    let p = ModelParams::new(k.hurst(), 1.0, 1).unwrap();
    let f = CylindricalFunctional::shipped("quadratic", 1).unwrap();
    let paths = simulate_batch(&p, k, 400, RngSpec::new(6, 0)).unwrap();
    let est = Estimator::Regression { degree: 2 };
    let a = eta_integrand(&f, &p, k, &paths, est, EtaRoute::Discrete).unwrap();
    let b = eta_integrand(&f, &p, k, &paths, est, EtaRoute::Discrete).unwrap();
    assert_eq!(a, b);
    // paths sharing a prefix share the integrand on that prefix: η_k only sees X_{t_k}
    assert!(a[0][0] == a[1][0]);
}

#[test]
fn regularized_terms_report_the_diagonal() {
    let k = kernel();
    let reg = RegularizedAdjoint::new(k.hurst(), k.grid());
    let g = k.row(63).to_vec();
    let t = correction_terms(&g, 1, 1.0, k, Some(&reg), None).unwrap();
    assert_eq!(t.a.len(), 64);
    assert!(t.a.iter().all(|v| v.is_finite() && *v > 0.0));
    assert!(t.delta.is_none());
}

#[test]
fn entropy_identity_for_linear_functional() {
    let k = kernel();
    let p = ModelParams::new(k.hurst(), 1.0, 1).unwrap();
    let f = CylindricalFunctional::shipped("linear", 1).unwrap();
    let r = entropy_identity_check(&f, &p, k, 1e-3, 20_000, RngSpec::new(3, 0)).unwrap();
    assert!(r.z.abs() <= 4.0, "{r:?}");
}

#[test]
fn bump_entropy_is_stable_under_doubling() {
    let k = kernel();
    let p = ModelParams::new(k.hurst(), 1.0, 1).unwrap();
    let f = CylindricalFunctional::shipped("gauss", 1).unwrap();
    let a = entropy_mc(&f, &p, k, 10_000, RngSpec::new(5, 0)).unwrap();
    let b = entropy_mc(&f, &p, k, 20_000, RngSpec::new(5, 0)).unwrap();
    assert!((a.entropy - b.entropy).abs() <= 2.0 * a.se.max(b.se), "{a:?} {b:?}");
}
