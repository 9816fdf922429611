//! Brownian motion, fractional Brownian motion (through the kernel matrix)
//! and the fractional Ornstein-Uhlenbeck process `dX = -αX dt + dB^H`.

use serde::{Deserialize, Serialize};

use crate::error::{FouError, Result};
use crate::fracops::lower_apply;
use crate::grid::{sample_bm_increments, RngSpec, VecPath};
use crate::kernel::{DiscreteKernel, HurstParam};
use crate::mc::par_map_ordered;

/// Model parameters `(H, α, dim)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    hurst: HurstParam,
    alpha: f64,
    dim: usize,
}

impl ModelParams {
    /// Requires `α > 0`.
    pub fn new(hurst: HurstParam, alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(FouError::Domain(format!(
                "mean-reversion rate must be positive, got {alpha} (use ModelParams::fbm_limit for α = 0)"
            )));
        }
        Self::checked(hurst, alpha, dim)
    }

    /// `α = 0`: the process reduces to fBm. Used for reduction tests.
    pub fn fbm_limit(hurst: HurstParam, dim: usize) -> Result<Self> {
        Self::checked(hurst, 0.0, dim)
    }

    /// Accepts any `α >= 0`, dispatching to [`ModelParams::fbm_limit`] at zero.
    pub fn with_alpha(hurst: HurstParam, alpha: f64, dim: usize) -> Result<Self> {
        if alpha == 0.0 {
            Self::fbm_limit(hurst, dim)
        } else {
            Self::new(hurst, alpha, dim)
        }
    }

    fn checked(hurst: HurstParam, alpha: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(FouError::Domain("dimension must be at least 1".into()));
        }
        Ok(Self { hurst, alpha, dim })
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Errors unless `kernel` was built for the same `H`.
    pub fn check_kernel(&self, kernel: &DiscreteKernel) -> Result<()> {
        if kernel.hurst() != self.hurst {
            return Err(FouError::Configuration(format!(
                "kernel built for H={} but model has H={}",
                kernel.hurst().value(),
                self.hurst.value()
            )));
        }
        Ok(())
    }
}

/// Time stepping for the fOU equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FouScheme {
    /// `X_{i+1} = X_i - αX_i dt + ΔB^H_i`.
    #[default]
    Euler,
    /// `X_{t_i} = Σ_{j<i} e^{-α(t_i - t_j)} ΔB^H_j`.
    VariationOfConstants,
}

/// One realization of `B`, `B^H` and `X` driven by the same increments.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub bm: VecPath,
    pub fbm: VecPath,
    pub fou: VecPath,
    /// `ΔB`, `n_steps × dim`.
    pub increments: Vec<f64>,
    pub rng: RngSpec,
}

/// `B^H_{t_{i+1}} = Σ_{j<=i} M[i][j] ΔB_j`, i.e. `K` applied to `ΔB/dt`.
pub fn fbm_from_increments(kernel: &DiscreteKernel, increments: &[f64], dim: usize) -> Vec<f64> {
    lower_apply(kernel, increments, dim, 1.0)
}

/// Brownian path from its increments.
pub fn cumulative(increments: &[f64], dim: usize) -> Vec<f64> {
    let n = increments.len() / dim;
    let mut out = vec![0.0; (n + 1) * dim];
    for k in 0..n {
        for c in 0..dim {
            out[(k + 1) * dim + c] = out[k * dim + c] + increments[k * dim + c];
        }
    }
    out
}

/// fOU path from an fBm path (both on points).
pub fn fou_from_fbm(fbm: &[f64], dim: usize, alpha: f64, dt: f64, scheme: FouScheme) -> Vec<f64> {
    if alpha == 0.0 {
        return fbm.to_vec();
    }
    let n = fbm.len() / dim - 1;
    let mut x = vec![0.0; fbm.len()];
    match scheme {
        FouScheme::Euler => {
            let damp = 1.0 - alpha * dt;
            for k in 0..n {
                for c in 0..dim {
                    let d = fbm[(k + 1) * dim + c] - fbm[k * dim + c];
                    x[(k + 1) * dim + c] = damp * x[k * dim + c] + d;
                }
            }
        }
        FouScheme::VariationOfConstants => {
            // Σ_{j<i} e^{-α(t_i - t_j)} ΔB^H_j = e^{-α dt}(previous sum + ΔB^H_{i-1})
            let decay = (-alpha * dt).exp();
            for k in 0..n {
                for c in 0..dim {
                    let d = fbm[(k + 1) * dim + c] - fbm[k * dim + c];
                    x[(k + 1) * dim + c] = decay * (x[k * dim + c] + d);
                }
            }
        }
    }
    x
}

pub fn simulate_bundle(params: &ModelParams, kernel: &DiscreteKernel, rng: RngSpec) -> Result<PathBundle> {
    simulate_bundle_with(params, kernel, rng, FouScheme::Euler)
}

pub fn simulate_bundle_with(
    params: &ModelParams,
    kernel: &DiscreteKernel,
    rng: RngSpec,
    scheme: FouScheme,
) -> Result<PathBundle> {
    params.check_kernel(kernel)?;
    let grid = kernel.grid();
    let dim = params.dim();
    let increments = sample_bm_increments(grid, dim, rng);
    let fbm = fbm_from_increments(kernel, &increments, dim);
    let fou = fou_from_fbm(&fbm, dim, params.alpha(), grid.dt(), scheme);
    Ok(PathBundle {
        bm: VecPath::from_values(grid, dim, cumulative(&increments, dim))?,
        fbm: VecPath::from_values(grid, dim, fbm)?,
        fou: VecPath::from_values(grid, dim, fou)?,
        increments,
        rng,
    })
}

/// Path `i` uses stream `base.stream_id + i`.
pub fn simulate_batch(
    params: &ModelParams,
    kernel: &DiscreteKernel,
    n_paths: usize,
    base: RngSpec,
) -> Result<Vec<PathBundle>> {
    if n_paths == 0 {
        return Err(FouError::InsufficientSamples { min: 1, got: 0 });
    }
    params.check_kernel(kernel)?;
    par_map_ordered(n_paths, |i| simulate_bundle(params, kernel, base.offset(i as u64)))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::kernel::kernel_matrix;

    fn kernel(hv: f64, n: usize) -> DiscreteKernel {
        kernel_matrix(HurstParam::new(hv).unwrap(), &make_grid(n).unwrap())
    }

    #[test]
    fn params_validation() {
        let h = HurstParam::new(0.7).unwrap();
        assert!(ModelParams::new(h, 0.0, 1).is_err());
        assert!(ModelParams::new(h, -1.0, 1).is_err());
        assert!(ModelParams::new(h, 1.0, 0).is_err());
        assert_eq!(ModelParams::with_alpha(h, 0.0, 2).unwrap().alpha(), 0.0);
    }

    #[test]
    fn kernel_mismatch() {
        let k = kernel(0.7, 16);
        let p = ModelParams::new(HurstParam::new(0.8).unwrap(), 1.0, 1).unwrap();
        assert!(matches!(
            simulate_bundle(&p, &k, RngSpec::new(1, 0)),
            Err(FouError::Configuration(_))
        ));
    }

    #[test]
    fn alpha_zero_is_fbm() {
        let k = kernel(0.75, 64);
        let p = ModelParams::fbm_limit(k.hurst(), 2).unwrap();
        for scheme in [FouScheme::Euler, FouScheme::VariationOfConstants] {
            let b = simulate_bundle_with(&p, &k, RngSpec::new(3, 9), scheme).unwrap();
            assert_eq!(b.fou.values(), b.fbm.values());
        }
    }

    #[test]
    fn bundle_is_coherent() {
        let k = kernel(0.75, 64);
        let p = ModelParams::new(k.hurst(), 1.0, 2).unwrap();
        let b = simulate_bundle(&p, &k, RngSpec::new(5, 1)).unwrap();
        let kh = crate::fracops::apply_k(&k, &b.increments.iter().map(|v| v / k.grid().dt()).collect::<Vec<_>>(), 2).unwrap();
        for (a, c) in kh.iter().zip(b.fbm.values()) {
            assert!((a - c).abs() < 1e-12);
        }
        assert_eq!(b.bm.at(64)[0], b.increments.iter().step_by(2).sum::<f64>());
    }

    #[test]
    fn batch_determinism() {
        let k = kernel(0.6, 32);
        let p = ModelParams::new(k.hurst(), 0.5, 1).unwrap();
        let base = RngSpec::new(11, 100);
        let a = simulate_batch(&p, &k, 5, base).unwrap();
        let b = simulate_batch(&p, &k, 5, base).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], simulate_bundle(&p, &k, base).unwrap());
        assert_eq!(a[3], simulate_bundle(&p, &k, base.offset(3)).unwrap());
        assert_ne!(a[0].increments, a[1].increments);
    }

    #[test]
    fn schemes_agree_to_first_order() {
        let mut prev = f64::INFINITY;
        for n in [64, 128, 256] {
            let k = kernel(0.75, n);
            let p = ModelParams::new(k.hurst(), 2.0, 1).unwrap();
            // same noise stream, different resolution: compare the scheme gap only
            let e = simulate_bundle_with(&p, &k, RngSpec::new(8, 0), FouScheme::Euler).unwrap();
            let v = simulate_bundle_with(&p, &k, RngSpec::new(8, 0), FouScheme::VariationOfConstants).unwrap();
            let gap = e
                .fou
                .values()
                .iter()
                .zip(v.fou.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap < prev);
            prev = gap;
        }
    }
}
