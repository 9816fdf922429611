use std::sync::OnceLock;

use fou_core::girsanov::{density_mean, girsanov_density, ibp_check, j_from_h};
use fou_core::grid::{make_grid, sample_bm_increments, RngSpec};
use fou_core::kernel::{kernel_matrix, DiscreteKernel, HurstParam};
use fou_core::malliavin::{
    directional_derivative, finite_difference_derivative, CylindricalFunctional, Direction, FUNCTIONAL_LABELS,
};
use fou_core::simulate::{simulate_bundle, ModelParams};
use proptest::prelude::*;

fn kernel() -> &'static DiscreteKernel {
    static K: OnceLock<DiscreteKernel> = OnceLock::new();
    K.get_or_init(|| kernel_matrix(HurstParam::new(0.75).unwrap(), &make_grid(64).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn derivative_matches_finite_difference(stream in 0u64..10_000, fi in 0usize..5, di in 0usize..3) {
        let k = kernel();
        let p = ModelParams::new(k.hurst(), 1.0, 2).unwrap();
        let b = simulate_bundle(&p, k, RngSpec::new(19, stream)).unwrap();
        let f = CylindricalFunctional::shipped(FUNCTIONAL_LABELS[fi], 2).unwrap();
        let dir = [Direction::Const1, Direction::Ramp, Direction::Cosine][di];
        let h = dir.realize(k.grid(), 2, None).unwrap();
        let exact = directional_derivative(&f, &b.fou, &h, k).unwrap();
        let fd = finite_difference_derivative(&f, &b.fou, &h, k, 1e-6).unwrap();
        prop_assert!((exact - fd).abs() <= 1e-3 * exact.abs().max(1e-3), "{exact} vs {fd}");
    }

    #[test]
    fn derivative_is_linear_in_direction(stream in 0u64..10_000, s in -3.0f64..3.0) {
        let k = kernel();
        let p = ModelParams::new(k.hurst(), 0.5, 1).unwrap();
        let b = simulate_bundle(&p, k, RngSpec::new(23, stream)).unwrap();
        let f = CylindricalFunctional::shipped("quadratic", 1).unwrap();
        let h1 = Direction::Ramp.values(k.grid(), 1, None).unwrap();
        let h2 = Direction::Cosine.values(k.grid(), 1, None).unwrap();
        let mix: Vec<f64> = h1.iter().zip(&h2).map(|(a, c)| a + s * c).collect();
        let d = |h: Vec<f64>| {
            let e = fou_core::fracops::CMElement::new(k.grid(), 1, h).unwrap();
            directional_derivative(&f, &b.fou, &e, k).unwrap()
        };
        let lhs = d(mix);
        let rhs = d(h1) + s * d(h2);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }
}

#[test]
fn zero_direction_has_unit_density() {
    let k = kernel();
    let j = j_from_h(&vec![0.0; 64], 1, 1.0, k).unwrap();
    let incr = sample_bm_increments(k.grid(), 1, RngSpec::new(1, 1));
    let d = girsanov_density(&j, &incr, 1, 0.5, k.grid().dt()).unwrap();
    assert!(d.rho().iter().all(|r| *r == 1.0));
}

#[test]
fn density_has_unit_mean() {
    let k = kernel();
    let p = ModelParams::new(k.hurst(), 1.0, 1).unwrap();
    let m = density_mean(Direction::AdaptedTanh, &p, k, 20_000, 0.5, RngSpec::new(4, 0)).unwrap();
    assert!((m.mean - 1.0).abs() <= 4.0 * m.se, "{} ± {}", m.mean, m.se);
}

#[test]
fn integration_by_parts_small_run() {
    let k = kernel();
    let p = ModelParams::new(k.hurst(), 0.5, 1).unwrap();
    let f = CylindricalFunctional::shipped("gauss", 1).unwrap();
    let r = ibp_check(&f, Direction::Ramp, &p, k, 20_000, RngSpec::new(8, 0)).unwrap();
    assert!(r.z.abs() <= 3.0, "{r:?}");
}
