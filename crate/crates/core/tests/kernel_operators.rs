use std::sync::OnceLock;

use fou_core::fracops::{
    apply_k, apply_k_adjoint, apply_k_inverse_adjoint, apply_k_inverse_marchaud, apply_k_inverse_matrix,
};
use fou_core::grid::make_grid;
use fou_core::kernel::{eval_kernel, fbm_covariance, kernel_matrix, DiscreteKernel, HurstParam};
use proptest::prelude::*;

fn kernel64() -> &'static DiscreteKernel {
    static K: OnceLock<DiscreteKernel> = OnceLock::new();
    K.get_or_init(|| kernel_matrix(HurstParam::new(0.7).unwrap(), &make_grid(64).unwrap()))
}

fn cells() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_self_similar(hv in 0.55f64..0.95, t in 0.05f64..1.0, frac in 0.02f64..0.98, c in 0.1f64..1.0) {
        let h = HurstParam::new(hv).unwrap();
        let s = frac * t;
        let lhs = eval_kernel(h, c * t, c * s).unwrap();
        let rhs = c.powf(hv - 0.5) * eval_kernel(h, t, s).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs());
        prop_assert!(lhs > 0.0);
    }

    #[test]
    fn covariance_is_symmetric_and_bounded(hv in 0.55f64..0.95, t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let h = HurstParam::new(hv).unwrap();
        let r = fbm_covariance(h, t, s);
        prop_assert_eq!(r, fbm_covariance(h, s, t));
        prop_assert!(r * r <= fbm_covariance(h, t, t) * fbm_covariance(h, s, s) * (1.0 + 1e-12));
    }

    #[test]
    fn triangular_round_trip(h in cells()) {
        let k = kernel64();
        let back = apply_k_inverse_matrix(k, &apply_k(k, &h, 1).unwrap(), 1).unwrap();
        let err: f64 = back.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * norm.max(1e-300));
    }

    #[test]
    fn adjoint_pairings(h in cells(), y in prop::collection::vec(-2.0f64..2.0, 65)) {
        // cells pair with weight dt, points with weight 1
        let k = kernel64();
        let dt = k.grid().dt();
        let mut y = y;
        y[0] = 0.0;
        let kh = apply_k(k, &h, 1).unwrap();
        let lhs: f64 = kh.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ky = apply_k_adjoint(k, &y, 1).unwrap();
        let rhs: f64 = h.iter().zip(&ky).map(|(a, b)| a * b).sum::<f64>() * dt;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));

        let kinv_y = apply_k_inverse_matrix(k, &y, 1).unwrap();
        let lhs: f64 = kinv_y.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() * dt;
        let adj = apply_k_inverse_adjoint(k, &h, 1).unwrap();
        let rhs: f64 = adj.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }
}

#[test]
fn kernel_matrix_is_lower_triangular_with_positive_diagonal() {
    let k = kernel64();
    for i in 0..k.n() {
        assert!(k.entry(i, i) > 0.0);
        assert_eq!(k.row(i).len(), i + 1);
    }
}

#[test]
fn marchaud_inverse_converges_to_triangular_solve() {
    let h = HurstParam::new(0.75).unwrap();
    let mut errs = Vec::new();
    for n in [64, 128, 256] {
        let k = kernel_matrix(h, &make_grid(n).unwrap());
        let x: Vec<f64> = (0..n).map(|j| (3.0 * k.grid().midpoint(j)).cos()).collect();
        let g = apply_k(&k, &x, 1).unwrap();
        let a = apply_k_inverse_matrix(&k, &g, 1).unwrap();
        let b = apply_k_inverse_marchaud(h, k.grid(), &g, 1).unwrap();
        let num: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = a.iter().map(|p| p * p).sum();
        errs.push((num / den).sqrt());
    }
    assert!(errs[1] <= 0.75 * errs[0] && errs[2] <= 0.75 * errs[1], "{errs:?}");
}

#[test]
fn inverse_rejects_paths_not_starting_at_zero() {
    let k = kernel64();
    let mut g = vec![0.0; 65];
    g[0] = 1.0;
    assert!(apply_k_inverse_matrix(k, &g, 1).is_err());
    assert!(apply_k(k, &[0.0; 10], 1).is_err());
}
