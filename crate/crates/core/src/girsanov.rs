//! Pull-back drift `β = (Kh)' + α Kh`, the integrand `j = K^{-1}∫β`, the
//! Girsanov density and the Monte Carlo check of the integration-by-parts
//! identity `E[F ∫⟨j, dB⟩] = E[D_hF]`.

use serde::{Deserialize, Serialize};

use crate::error::{FouError, Result};
use crate::fracops::{apply_k, apply_k_inverse_matrix, left_difference_integral, CMElement};
use crate::grid::{sample_bm_increments, RngSpec};
use crate::kernel::{inverse_normalization, DiscreteKernel, KernelConstants};
use crate::malliavin::{gather_at, pair_gradient, CylindricalFunctional, Direction};
use crate::mc::{mean_se, par_map_ordered, require_samples, z_score, MeanSe};
use crate::simulate::{fbm_from_increments, fou_from_fbm, FouScheme, ModelParams};
use crate::special::gamma;

/// `β` on cells for a direction `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PullbackDrift {
    pub beta: Vec<f64>,
    pub source_h: CMElement,
    pub alpha: f64,
}

/// `β_i = ((Kh)_{t_{i+1}} - (Kh)_{t_i}) / dt + α (Kh)_{t_i}`.
pub fn pullback_drift(h: &CMElement, alpha: f64, kernel: &DiscreteKernel) -> Result<PullbackDrift> {
    let kh = h.kh_or_compute(kernel)?;
    Ok(PullbackDrift {
        beta: drift_from_kh(&kh, h.dim(), alpha, kernel.grid().dt()),
        source_h: h.clone(),
        alpha,
    })
}

pub(crate) fn drift_from_kh(kh: &[f64], dim: usize, alpha: f64, dt: f64) -> Vec<f64> {
    let n = kh.len() / dim - 1;
    let mut beta = vec![0.0; n * dim];
    for k in 0..n {
        for c in 0..dim {
            let (now, next) = (kh[k * dim + c], kh[(k + 1) * dim + c]);
            beta[k * dim + c] = (next - now) / dt + alpha * now;
        }
    }
    beta
}

/// Left-point running integral of a cell array: `G_{t_i} = Σ_{k<i} β_k dt`.
pub fn running_integral(cells: &[f64], dim: usize, dt: f64) -> Vec<f64> {
    let n = cells.len() / dim;
    let mut out = vec![0.0; (n + 1) * dim];
    for k in 0..n {
        for c in 0..dim {
            out[(k + 1) * dim + c] = out[k * dim + c] + cells[k * dim + c] * dt;
        }
    }
    out
}

/// Left-point running integral of a point array: `Σ_{k<i} y_{t_k} dt`.
pub fn running_integral_points(points: &[f64], dim: usize, dt: f64) -> Vec<f64> {
    let n = points.len() / dim - 1;
    running_integral(&points[..n * dim], dim, dt)
}

/// `j = K^{-1}(∫_0^· β)` by triangular solve.
pub fn j_integrand(drift: &PullbackDrift, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
    let dim = drift.source_h.dim();
    let g = running_integral(&drift.beta, dim, kernel.grid().dt());
    apply_k_inverse_matrix(kernel, &g, dim)
}

/// `j` from the first line of the decomposition: `h + α K^{-1}(∫_0^· Kh)`.
pub fn j_integrand_split(h: &CMElement, alpha: f64, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
    let kh = h.kh_or_compute(kernel)?;
    let dim = h.dim();
    let integral = running_integral_points(&kh, dim, kernel.grid().dt());
    let corr = apply_k_inverse_matrix(kernel, &integral, dim)?;
    Ok(h.values().iter().zip(&corr).map(|(a, b)| a + alpha * b).collect())
}

/// `j` for cell values `h`, going through `Kh` and `β`.
pub fn j_from_h(h: &[f64], dim: usize, alpha: f64, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
    let kh = apply_k(kernel, h, dim)?;
    let dt = kernel.grid().dt();
    let g = running_integral(&drift_from_kh(&kh, dim, alpha, dt), dim, dt);
    apply_k_inverse_matrix(kernel, &g, dim)
}

/// `ρ` on the grid, kept in log form.
#[derive(Debug, Clone, PartialEq)]
pub struct GirsanovDensity {
    pub r: f64,
    pub log_rho: Vec<f64>,
    pub integrand: Vec<f64>,
}

impl GirsanovDensity {
    pub fn rho(&self) -> Vec<f64> {
        self.log_rho.iter().map(|v| v.exp()).collect()
    }

    pub fn terminal(&self) -> f64 {
        self.log_rho.last().copied().unwrap_or(0.0).exp()
    }
}

/// `log ρ_{t_{i+1}} = log ρ_{t_i} - r⟨j_i, ΔB_i⟩ - (r²/2)|j_i|² dt`.
pub fn girsanov_density(j: &[f64], increments: &[f64], dim: usize, r: f64, dt: f64) -> Result<GirsanovDensity> {
    if j.len() != increments.len() {
        return Err(FouError::Dimension { expected: increments.len(), got: j.len() });
    }
    let n = j.len() / dim;
    let mut log_rho = vec![0.0; n + 1];
    for k in 0..n {
        let (mut stoch, mut sq) = (0.0, 0.0);
        for c in 0..dim {
            let v = j[k * dim + c];
            stoch += v * increments[k * dim + c];
            sq += v * v;
        }
        log_rho[k + 1] = log_rho[k] - r * stoch - 0.5 * r * r * sq * dt;
    }
    Ok(GirsanovDensity {
        r,
        log_rho,
        integrand: j.to_vec(),
    })
}

/// The three correction terms of `j - h`, evaluated at grid points `t_1..t_n`
/// from the fractional-derivative formula (index 0 is the origin, left 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
    pub i3: Vec<f64>,
}

/// Splits `α K^{-1}(∫_0^· Kh)` into `I1 + I2 + I3`.
pub fn decompose(h: &CMElement, alpha: f64, kernel: &DiscreteKernel) -> Result<Decomposition> {
    let kh = h.kh_or_compute(kernel)?;
    let dim = h.dim();
    let grid = kernel.grid();
    let (n, dt) = (grid.n_steps(), grid.dt());
    let hp = kernel.hurst();
    let a = hp.excess();
    let pref = alpha * inverse_normalization(hp) / gamma(1.0 - a);
    let mut out = Decomposition {
        i1: vec![0.0; (n + 1) * dim],
        i2: vec![0.0; (n + 1) * dim],
        i3: vec![0.0; (n + 1) * dim],
    };
    let weights = power_difference_weights(n, dt, a);
    let mut col = vec![0.0; n + 1];
    for c in 0..dim {
        for k in 0..=n {
            col[k] = kh[k * dim + c];
        }
        for k in 1..=n {
            let s = grid.time(k);
            out.i1[k * dim + c] = pref * s.powf(-a) * col[k];
            let w = &weights[k];
            let conv: f64 = w.iter().zip(&col[..k]).map(|(wi, v)| wi * v).sum();
            out.i2[k * dim + c] = pref * a * s.powf(a) * conv;
            out.i3[k * dim + c] = pref * a * left_difference_integral(&col[..=k], dt, a);
        }
    }
    Ok(out)
}

/// `∫_0^{t_k} (t_k^{-a} - u^{-a}) (t_k - u)^{-1-a} φ(u) du` as weights on the
/// nodes `t_0..t_{k-1}` for piecewise-constant `φ` (left value per cell).
fn power_difference_weights(n: usize, dt: f64, a: f64) -> Vec<Vec<f64>> {
    let rule = crate::quad::gl16();
    let mut w = vec![Vec::new(); n + 1];
    for (k, wk) in w.iter_mut().enumerate().skip(1) {
        let s = k as f64 * dt;
        let f = |u: f64| {
            let diff = -s.powf(-a) * (-a * (u / s).ln()).exp_m1();
            diff / (s - u).powf(1.0 + a)
        };
        *wk = (0..k)
            .map(|l| {
                let (lo, hi) = (l as f64 * dt, (l + 1) as f64 * dt);
                match (l == 0, l + 1 == k) {
                    (true, true) => {
                        let mid = 0.5 * (lo + hi);
                        rule.integrate_left_singular(lo, mid, -a, f) + rule.integrate_right_singular(mid, hi, -a, f)
                    }
                    (true, false) => rule.integrate_left_singular(lo, hi, -a, f),
                    (false, true) => rule.integrate_right_singular(lo, hi, -a, f),
                    (false, false) => rule.integrate(lo, hi, f),
                }
            })
            .collect();
    }
    w
}

/// The L² bound on `j` with `I1`, `I2` replaced by their analytic bounds and
/// `I3` measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2BoundReport {
    pub j_norm2: f64,
    pub h_norm2: f64,
    pub i1_coefficient: f64,
    pub i2_coefficient: f64,
    pub i3_norm2: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn l2_bound_check(
    h: &CMElement,
    alpha: f64,
    kernel: &DiscreteKernel,
    consts: &KernelConstants,
) -> Result<L2BoundReport> {
    let dt = kernel.grid().dt();
    let hp = kernel.hurst();
    let (hv, a) = (hp.value(), hp.excess());
    let drift = pullback_drift(h, alpha, kernel)?;
    let j = j_integrand(&drift, kernel)?;
    let j_norm2 = j.iter().map(|v| v * v).sum::<f64>() * dt;
    let h_norm2 = h.values().iter().map(|v| v * v).sum::<f64>() * dt;
    let dec = decompose(h, alpha, kernel)?;
    let i3_norm2 = dec.i3.iter().map(|v| v * v).sum::<f64>() * dt;
    let denom = gamma(1.0 - a) * ((2.0 - 2.0 * hv) * (4.0 - 4.0 * hv)).sqrt();
    let norm = inverse_normalization(hp);
    let i1_coefficient = (norm * alpha * consts.c1 / denom).powi(2);
    let i2_coefficient = (norm * a * alpha * consts.c1 * consts.c2 / denom).powi(2);
    let rhs = 4.0 * ((1.0 + i1_coefficient + i2_coefficient) * h_norm2 + i3_norm2);
    Ok(L2BoundReport {
        j_norm2,
        h_norm2,
        i1_coefficient,
        i2_coefficient,
        i3_norm2,
        rhs,
        holds: j_norm2 <= rhs,
    })
}

/// Result of the paired integration-by-parts Monte Carlo test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbpReport {
    pub functional: String,
    pub direction: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub se_diff: f64,
    pub z: f64,
    pub n_paths: usize,
}

impl IbpReport {
    pub fn passes(&self, z_max: f64) -> bool {
        self.z.abs() <= z_max
    }
}

struct Prepared {
    dir: Direction,
    kh: Vec<f64>,
    j: Vec<f64>,
}

/// Runs every `(F, h)` pair on one shared set of paths: path `i` uses
/// stream `rng.stream_id + i`.
pub fn ibp_suite(
    functionals: &[CylindricalFunctional],
    directions: &[Direction],
    params: &ModelParams,
    kernel: &DiscreteKernel,
    n_paths: usize,
    rng: RngSpec,
) -> Result<Vec<IbpReport>> {
    require_samples(n_paths, 100)?;
    params.check_kernel(kernel)?;
    let dim = params.dim();
    let grid = kernel.grid();
    let dt = grid.dt();
    let alpha = params.alpha();
    for f in functionals {
        if f.dim != dim {
            return Err(FouError::Dimension { expected: dim, got: f.dim });
        }
    }
    let indices: Vec<Vec<usize>> = functionals.iter().map(|f| f.indices(grid)).collect::<Result<_>>()?;
    let prepared: Vec<Option<Prepared>> = directions
        .iter()
        .map(|d| {
            if d.is_deterministic() {
                let h = d.values(grid, dim, None)?;
                let kh = apply_k(kernel, &h, dim)?;
                let j = j_from_h(&h, dim, alpha, kernel)?;
                Ok(Some(Prepared { dir: *d, kh, j }))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let n_pairs = functionals.len() * directions.len();

    let samples: Vec<Result<Vec<(f64, f64)>>> = par_map_ordered(n_paths, |p| {
        let incr = sample_bm_increments(grid, dim, rng.offset(p as u64));
        let fbm = fbm_from_increments(kernel, &incr, dim);
        let x = fou_from_fbm(&fbm, dim, alpha, dt, FouScheme::Euler);
        let mut out = Vec::with_capacity(n_pairs);
        let per_dir: Vec<(Vec<f64>, Vec<f64>)> = directions
            .iter()
            .zip(&prepared)
            .map(|(d, prep)| match prep {
                Some(pr) => Ok((pr.kh.clone(), pr.j.clone())),
                None => {
                    let h = d.values(grid, dim, Some(&x))?;
                    let kh = apply_k(kernel, &h, dim)?;
                    let j = j_from_h(&h, dim, alpha, kernel)?;
                    Ok((kh, j))
                }
            })
            .collect::<Result<_>>()?;
        let stoch: Vec<f64> = per_dir
            .iter()
            .map(|(_, j)| j.iter().zip(&incr).map(|(a, b)| a * b).sum())
            .collect();
        for (f, idx) in functionals.iter().zip(&indices) {
            let xv = gather_at(&x, dim, idx);
            let fv = f.eval_at(&xv);
            let grad = f.grad_at(&xv);
            for (k, (kh, _)) in per_dir.iter().enumerate() {
                out.push((fv * stoch[k], pair_gradient(&grad, kh, dim, idx)));
            }
        }
        Ok(out)
    });
    let samples: Vec<Vec<(f64, f64)>> = samples.into_iter().collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(n_pairs);
    for (fi, f) in functionals.iter().enumerate() {
        for (di, d) in directions.iter().enumerate() {
            let k = fi * directions.len() + di;
            let lhs: Vec<f64> = samples.iter().map(|s| s[k].0).collect();
            let rhs: Vec<f64> = samples.iter().map(|s| s[k].1).collect();
            let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            let (l, r, dd) = (mean_se(&lhs), mean_se(&rhs), mean_se(&diff));
            reports.push(IbpReport {
                functional: f.label.clone(),
                direction: prepared[di].as_ref().map_or(d.label(), |p| p.dir.label()).to_string(),
                lhs: l.mean,
                rhs: r.mean,
                se_lhs: l.se,
                se_rhs: r.se,
                se_diff: dd.se,
                z: z_score(dd.mean, 0.0, dd.se),
                n_paths,
            });
        }
    }
    Ok(reports)
}

/// Single-pair version of [`ibp_suite`].
pub fn ibp_check(
    f: &CylindricalFunctional,
    dir: Direction,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    n_paths: usize,
    rng: RngSpec,
) -> Result<IbpReport> {
    let mut r = ibp_suite(std::slice::from_ref(f), &[dir], params, kernel, n_paths, rng)?;
    Ok(r.remove(0))
}

/// Monte Carlo mean of `ρ_1` for direction `dir` at scale `r`.
pub fn density_mean(
    dir: Direction,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    n_paths: usize,
    r: f64,
    rng: RngSpec,
) -> Result<MeanSe> {
    require_samples(n_paths, 100)?;
    params.check_kernel(kernel)?;
    let dim = params.dim();
    let grid = kernel.grid();
    let dt = grid.dt();
    let fixed = if dir.is_deterministic() {
        Some(j_from_h(&dir.values(grid, dim, None)?, dim, params.alpha(), kernel)?)
    } else {
        None
    };
    let vals: Vec<Result<f64>> = par_map_ordered(n_paths, |p| {
        let incr = sample_bm_increments(grid, dim, rng.offset(p as u64));
        let j = match &fixed {
            Some(j) => j.clone(),
            None => {
                let fbm = fbm_from_increments(kernel, &incr, dim);
                let x = fou_from_fbm(&fbm, dim, params.alpha(), dt, FouScheme::Euler);
                j_from_h(&dir.values(grid, dim, Some(&x))?, dim, params.alpha(), kernel)?
            }
        };
        Ok(girsanov_density(&j, &incr, dim, r, dt)?.terminal())
    });
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(mean_se(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::kernel::{kernel_matrix, HurstParam};
    use approx::assert_relative_eq;

    fn kernel(hv: f64, n: usize) -> DiscreteKernel {
        kernel_matrix(HurstParam::new(hv).unwrap(), &make_grid(n).unwrap())
    }

    fn elem(k: &DiscreteKernel, d: Direction, dim: usize) -> CMElement {
        d.realize(k.grid(), dim, None).unwrap()
    }

    #[test]
    fn drift_linearity_and_zero() {
        let k = kernel(0.7, 32);
        let zero = CMElement::zeros(k.grid(), 1);
        assert!(pullback_drift(&zero, 1.0, &k).unwrap().beta.iter().all(|v| *v == 0.0));
        let h1 = elem(&k, Direction::Ramp, 1);
        let h2 = elem(&k, Direction::Cosine, 1);
        let sum = CMElement::new(k.grid(), 1, h1.values().iter().zip(h2.values()).map(|(a, b)| a + b).collect()).unwrap();
        let (b1, b2, bs) = (
            pullback_drift(&h1, 0.8, &k).unwrap().beta,
            pullback_drift(&h2, 0.8, &k).unwrap().beta,
            pullback_drift(&sum, 0.8, &k).unwrap().beta,
        );
        for i in 0..32 {
            assert_relative_eq!(bs[i], b1[i] + b2[i], max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn alpha_zero_gives_h() {
        let k = kernel(0.75, 64);
        let h = elem(&k, Direction::Cosine, 2);
        let j = j_integrand(&pullback_drift(&h, 0.0, &k).unwrap(), &k).unwrap();
        for (a, b) in j.iter().zip(h.values()) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn two_routes_to_j_agree() {
        let k = kernel(0.75, 64);
        let h = elem(&k, Direction::Ramp, 1);
        let a = j_integrand(&pullback_drift(&h, 1.3, &k).unwrap(), &k).unwrap();
        let b = j_integrand_split(&h, 1.3, &k).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn density_trivial_cases() {
        let incr = [0.1, -0.2, 0.3];
        let d = girsanov_density(&[1.0, 2.0, 3.0], &incr, 1, 0.0, 0.1).unwrap();
        assert!(d.rho().iter().all(|v| *v == 1.0));
        let d = girsanov_density(&[0.0; 3], &incr, 1, 0.7, 0.1).unwrap();
        assert!(d.rho().iter().all(|v| *v == 1.0));
        let d = girsanov_density(&[1.0, 1.0, 1.0], &incr, 1, 0.5, 0.1).unwrap();
        let want = -0.5 * 0.2 - 0.125 * 0.3;
        assert_relative_eq!(d.log_rho[3], want, max_relative = 1e-14);
    }

    #[test]
    fn decomposition_matches_matrix_route() {
        // h + I1 + I2 + I3 approximates the matrix j away from t = 0
        let k = kernel(0.75, 256);
        let h = elem(&k, Direction::Const1, 1);
        let j = j_integrand(&pullback_drift(&h, 1.0, &k).unwrap(), &k).unwrap();
        let d = decompose(&h, 1.0, &k).unwrap();
        for cell in [64, 128, 255] {
            let pt = cell + 1;
            let sum = 1.0 + d.i1[pt] + d.i2[pt] + d.i3[pt];
            let mid = 0.5 * (j[cell] + j[(cell + 1).min(255)]);
            assert!((sum - mid).abs() < 0.02 * mid.abs(), "cell {cell}: {sum} vs {mid}");
        }
    }

    #[test]
    fn small_sample_rejected() {
        let k = kernel(0.7, 16);
        let p = ModelParams::new(k.hurst(), 1.0, 1).unwrap();
        let f = CylindricalFunctional::shipped("linear", 1).unwrap();
        assert!(matches!(
            ibp_check(&f, Direction::Const1, &p, &k, 50, RngSpec::new(1, 0)),
            Err(FouError::InsufficientSamples { .. })
        ));
    }
}
