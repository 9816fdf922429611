//! Log-Sobolev constants and Monte Carlo checks of the entropy inequality
//! `Ent(F²) <= lsi_factor · E∫|K^{-1}DF|² dt`.

use serde::{Deserialize, Serialize};

use crate::clark_ocone::{eta_weights, EtaRoute, PathData, RegularizedAdjoint};
use crate::error::{FouError, Result};
use crate::grid::RngSpec;
use crate::kernel::{DiscreteKernel, HurstParam, KernelConstants};
use crate::malliavin::{gather_at, spread_gradient, CylindricalFunctional};
use crate::mc::{mean, par_chunks, require_samples, z_score};
use crate::quad::{gh12, gl4};
use crate::simulate::ModelParams;
use crate::special::{beta, gamma};

/// The explicit constants of the inequality for one `(H, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LSIConstants {
    pub hurst: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub c_h: f64,
    pub c: f64,
    pub c_hat: f64,
    pub lsi_factor: f64,
}

pub fn lsi_constants(h: HurstParam, alpha: f64, c1: f64, c2: f64, c_h: f64) -> LSIConstants {
    let hv = h.value();
    let a = h.excess();
    let g2 = gamma(1.0 - a).powi(2);
    let tail = 2.0 - 2.0 * hv;
    let c = (1.0 + 4.0 + c2 * c2 * a * a) / (g2 * tail);
    let c_hat = (c1 * c1 + 4.0 * c1 * c1 + c1 * c1 * c2 * c2 * a * a) / (g2 * tail)
        + 2.0 * c_h * c_h * (beta(a, 1.0 - a).powi(2) + 1.0 / (a * a)) / g2;
    let a2 = alpha * alpha;
    let lsi_factor = 4.0
        * (1.0 + 4.0 * a2 * a2 * (2.0 * alpha).exp() * c1 * c1 * (1.0 + a2) * c / tail + 2.0 * a2 * c_hat / tail);
    LSIConstants {
        hurst: hv,
        alpha,
        c1,
        c2,
        c_h,
        c,
        c_hat,
        lsi_factor,
    }
}

/// Constants with `C1` fitted on a lattice of the given density.
pub fn lsi_constants_for(h: HurstParam, alpha: f64, c1_density: usize) -> Result<LSIConstants> {
    let k = KernelConstants::compute(h, c1_density)?;
    Ok(lsi_constants(h, alpha, k.c1, k.c2, k.c_h))
}

/// Plug-in `E[G ln G] - E[G] ln E[G]` with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub entropy: f64,
    pub se: f64,
    pub mean_g: f64,
    /// All samples identical: the entropy is exactly zero.
    pub degenerate: bool,
    pub n: usize,
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 { 0.0 } else { x * x.ln() }
}

/// Plug-in entropy of nonnegative samples.
pub fn plugin_entropy(g: &[f64]) -> Result<EntropyEstimate> {
    require_samples(g.len(), 2)?;
    if g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(FouError::Domain("entropy needs finite nonnegative samples".into()));
    }
    let n = g.len();
    if g.iter().all(|v| *v == g[0]) {
        return Ok(EntropyEstimate { entropy: 0.0, se: 0.0, mean_g: g[0], degenerate: true, n });
    }
    let glg: Vec<f64> = g.iter().map(|v| xlnx(*v)).collect();
    let m1 = mean(&glg);
    let m2 = mean(g);
    let entropy = m1 - xlnx(m2);
    // gradient (1, -(ln m2 + 1)) on (mean G ln G, mean G)
    let d2 = -(m2.ln() + 1.0);
    let lin: Vec<f64> = glg.iter().zip(g).map(|(a, b)| a + d2 * b).collect();
    let se = (crate::mc::variance(&lin) / n as f64).sqrt();
    Ok(EntropyEstimate { entropy, se, mean_g: m2, degenerate: false, n })
}

fn check_setup(f: &CylindricalFunctional, params: &ModelParams, kernel: &DiscreteKernel) -> Result<Vec<usize>> {
    params.check_kernel(kernel)?;
    if f.dim != params.dim() {
        return Err(FouError::Dimension { expected: params.dim(), got: f.dim });
    }
    f.indices(kernel.grid())
}

/// Per path `(F², ∫|K^{-1}DF|² dt)`.
fn sample_pairs(
    f: &CylindricalFunctional,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    n_paths: usize,
    rng: RngSpec,
) -> Result<Vec<(f64, f64)>> {
    let idx = check_setup(f, params, kernel)?;
    let dim = params.dim();
    let dt = kernel.grid().dt();
    let parts = par_chunks(n_paths, 256, |range| {
        range
            .map(|i| {
                let path = PathData::simulate(kernel, dim, params.alpha(), rng.offset(i as u64));
                let xv = gather_at(&path.x, dim, &idx);
                let fv = f.eval_at(&xv);
                let g = spread_gradient(kernel, &f.grad_at(&xv), dim, &idx);
                (fv * fv, g.iter().map(|v| v * v).sum::<f64>() * dt)
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Entropy of `F²` under the fOU law.
pub fn entropy_mc(
    f: &CylindricalFunctional,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    n_paths: usize,
    rng: RngSpec,
) -> Result<EntropyEstimate> {
    require_samples(n_paths, 2)?;
    let pairs = sample_pairs(f, params, kernel, n_paths, rng)?;
    let g: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    plugin_entropy(&g)
}

/// Both sides of the inequality for one functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub functional: String,
    pub hurst: f64,
    pub alpha: f64,
    pub c1: f64,
    pub lsi_factor: f64,
    pub entropy: f64,
    pub se_entropy: f64,
    /// `E∫|K^{-1}DF|² dt`.
    pub dirichlet: f64,
    pub se_dirichlet: f64,
    pub rhs: f64,
    pub margin: f64,
    pub se_margin: f64,
    pub margin_z: f64,
    pub holds: bool,
    pub degenerate: bool,
    pub n_paths: usize,
}

/// Estimates `Ent(F²)` and `lsi_factor · E∫|K^{-1}DF|²dt` on shared paths.
/// `holds` means `margin >= -3 SE`.
pub fn lsi_check(
    f: &CylindricalFunctional,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    consts: &LSIConstants,
    n_paths: usize,
    rng: RngSpec,
) -> Result<EntropyReport> {
    require_samples(n_paths, 100)?;
    if (consts.hurst - params.hurst().value()).abs() > 1e-12 || (consts.alpha - params.alpha()).abs() > 1e-12 {
        return Err(FouError::Configuration("LSI constants were computed for a different (H, α)".into()));
    }
    let pairs = sample_pairs(f, params, kernel, n_paths, rng)?;
    let g: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let q: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ent = plugin_entropy(&g)?;
    let l = consts.lsi_factor;
    let mq = mean(&q);
    let se_q = (crate::mc::variance(&q) / n_paths as f64).sqrt();
    let rhs = l * mq;
    let margin = rhs - ent.entropy;
    let se_margin = if ent.degenerate {
        l * se_q
    } else {
        // gradient (-1, ln m2 + 1, L) on (mean G ln G, mean G, mean Q)
        let d2 = ent.mean_g.ln() + 1.0;
        let lin: Vec<f64> = g.iter().zip(&q).map(|(gv, qv)| -xlnx(*gv) + d2 * gv + l * qv).collect();
        (crate::mc::variance(&lin) / n_paths as f64).sqrt()
    };
    Ok(EntropyReport {
        functional: f.label.clone(),
        hurst: consts.hurst,
        alpha: consts.alpha,
        c1: consts.c1,
        lsi_factor: l,
        entropy: ent.entropy,
        se_entropy: ent.se,
        dirichlet: mq,
        se_dirichlet: se_q,
        rhs,
        margin,
        se_margin,
        margin_z: z_score(margin, 0.0, se_margin),
        holds: margin >= -3.0 * se_margin,
        degenerate: ent.degenerate,
        n_paths,
    })
}

/// `E∫_cell 2|η|² M_t² / G_t dt` given `M` at the left end, where inside the
/// cell `M_t = M + |η| W_τ` and `G_t = M_t² + |η|²(dt - τ) + rest`.
/// Gauss-Legendre in `√τ`, Gauss-Hermite in `W_τ/√τ`.
fn cell_contribution(m: f64, e2: f64, rest: f64, dt: f64) -> f64 {
    if e2 == 0.0 {
        return 0.0;
    }
    let sd = e2.sqrt();
    gl4().integrate(0.0, 1.0, |u| {
        let tau = dt * u * u;
        let s = sd * tau.sqrt();
        let floor = e2 * (dt - tau) + rest;
        let inner = gh12().expect(|z| {
            let x = m + s * z;
            x * x / (x * x + floor)
        });
        2.0 * e2 * inner * 2.0 * dt * u
    })
}

/// Entropy of `G = F² + ε` against `½ E∫|η^G_t|²/G_t dt` for a functional
/// with constant gradient, where `G_t = M_t² + V_t + ε` is known in closed
/// form from the deterministic integrand of `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub functional: String,
    pub epsilon: f64,
    pub entropy: f64,
    pub se_entropy: f64,
    pub martingale_side: f64,
    pub se_martingale_side: f64,
    pub z: f64,
    pub n_paths: usize,
}

pub fn entropy_identity_check(
    f: &CylindricalFunctional,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    epsilon: f64,
    n_paths: usize,
    rng: RngSpec,
) -> Result<IdentityReport> {
    require_samples(n_paths, 100)?;
    let idx = check_setup(f, params, kernel)?;
    if !crate::clark_ocone::gradient_is_constant(f) {
        return Err(FouError::Configuration(format!(
            "the entropy identity check needs a constant gradient, '{}' has none",
            f.label
        )));
    }
    if !(epsilon > 0.0) {
        return Err(FouError::Domain("epsilon must be positive".into()));
    }
    let dim = params.dim();
    let n = kernel.n();
    let dt = kernel.grid().dt();
    let weights = eta_weights(f, params.alpha(), kernel, EtaRoute::Discrete)?;
    let m = idx.len() * dim;
    let grad = f.grad_at(&vec![0.0; m]);
    let mut eta = vec![0.0; n * dim];
    for (i, z) in weights.iter().enumerate() {
        for c in 0..dim {
            for k in 0..n {
                eta[k * dim + c] += grad[i * dim + c] * z[k];
            }
        }
    }
    let e_f = f.eval_at(&vec![0.0; m]);
    // remaining variance V_k = Σ_{l>=k} |η_l|² dt
    let mut v = vec![0.0; n + 1];
    for k in (0..n).rev() {
        v[k] = v[k + 1] + (0..dim).map(|c| eta[k * dim + c].powi(2)).sum::<f64>() * dt;
    }
    let parts = par_chunks(n_paths, 256, |range| {
        range
            .map(|i| {
                let path = PathData::simulate(kernel, dim, params.alpha(), rng.offset(i as u64));
                let mut mart = e_f;
                let mut acc = 0.0;
                for k in 0..n {
                    let e2: f64 = (0..dim).map(|c| eta[k * dim + c].powi(2)).sum();
                    acc += cell_contribution(mart, e2, v[k + 1] + epsilon, dt);
                    mart += (0..dim).map(|c| eta[k * dim + c] * path.increments[k * dim + c]).sum::<f64>();
                }
                let xv = gather_at(&path.x, dim, &idx);
                let fv = f.eval_at(&xv);
                (fv * fv + epsilon, acc)
            })
            .collect::<Vec<_>>()
    });
    let pairs: Vec<(f64, f64)> = parts.into_iter().flatten().collect();
    let g: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ent = plugin_entropy(&g)?;
    let rs = crate::mc::mean_se(&r);
    // the two sides share paths; difference SE from the linearized statistic
    let d2 = -(ent.mean_g.ln() + 1.0);
    let lin: Vec<f64> = g.iter().zip(&r).map(|(gv, rv)| xlnx(*gv) + d2 * gv - rv).collect();
    let se_diff = (crate::mc::variance(&lin) / n_paths as f64).sqrt();
    Ok(IdentityReport {
        functional: f.label.clone(),
        epsilon,
        entropy: ent.entropy,
        se_entropy: ent.se,
        martingale_side: rs.mean,
        se_martingale_side: rs.se,
        z: z_score(ent.entropy, rs.mean, se_diff),
        n_paths,
    })
}

/// Largest pathwise ratios of the two intermediate bounds on `P`:
/// `(∫_t^1 P)² / (C‖g‖²)` and `(∫_t^1 K(s,t)P_s ds)² / (Ĉ t^{1-2H}‖g‖²)`,
/// maximized over `t` and paths, with `g = K^{-1}DF` and the regularized `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateBoundReport {
    pub functional: String,
    pub max_ratio_p: f64,
    pub max_ratio_kp: f64,
    pub holds: bool,
    pub n_paths: usize,
}

pub fn intermediate_bounds(
    f: &CylindricalFunctional,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    consts: &LSIConstants,
    n_paths: usize,
    rng: RngSpec,
) -> Result<IntermediateBoundReport> {
    let idx = check_setup(f, params, kernel)?;
    let dim = params.dim();
    let grid = kernel.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let reg = RegularizedAdjoint::new(kernel.hurst(), grid);
    let expo = 1.0 - 2.0 * params.hurst().value();
    let ratios = par_chunks(n_paths, 16, |range| -> Result<(f64, f64)> {
        let mut worst = (0.0f64, 0.0f64);
        for i in range {
            let path = PathData::simulate(kernel, dim, params.alpha(), rng.offset(i as u64));
            let xv = gather_at(&path.x, dim, &idx);
            let g = spread_gradient(kernel, &f.grad_at(&xv), dim, &idx);
            let norm2 = g.iter().map(|v| v * v).sum::<f64>() * dt;
            if norm2 == 0.0 {
                continue;
            }
            let p = reg.apply(&g, dim)?;
            for c in 0..dim {
                let mut tail = 0.0;
                for j in (0..n).rev() {
                    tail += p[j * dim + c] * dt;
                    worst.0 = worst.0.max(tail * tail / (consts.c * norm2));
                }
                for j in 0..n {
                    let kp: f64 = (j..n).map(|r| kernel.entry(r, j) * p[(r + 1).min(n - 1) * dim + c]).sum::<f64>() * dt;
                    let bound = consts.c_hat * grid.midpoint(j).powf(expo) * norm2;
                    worst.1 = worst.1.max(kp * kp / bound);
                }
            }
        }
        Ok(worst)
    });
    let mut worst = (0.0f64, 0.0f64);
    for r in ratios {
        let r = r?;
        worst = (worst.0.max(r.0), worst.1.max(r.1));
    }
    Ok(IntermediateBoundReport {
        functional: f.label.clone(),
        max_ratio_p: worst.0,
        max_ratio_kp: worst.1,
        holds: worst.0 <= 1.0 && worst.1 <= 1.0,
        n_paths,
    })
}
