//! The explicit Clark-Ocone integrand `η` for functionals of the fOU path:
//! the inverse map `j ↦ h`, the correction terms `δ`, `P`, and the
//! representation check `F = E[F] + ∫⟨η, dB⟩`.
//!
//! Two constructions of `P` are provided. The discrete one is the exact grid
//! adjoint of the composed linear maps (so `η` is exact for linear `F`). The
//! regularized one evaluates the right-sided fractional derivative in
//! difference (Marchaud) form, which is the only finite reading of `P`:
//! the coefficient of `g_t` alone contains `∫ (u - t)^{-1/2-H} du`, which
//! diverges for `H > 1/2`.

use serde::{Deserialize, Serialize};

use crate::error::{FouError, Result};
use crate::fracops::{apply_k, apply_k_adjoint, apply_k_inverse_adjoint, apply_k_inverse_matrix};
use crate::grid::{sample_bm_increments, RngSpec, TimeGrid};
use crate::kernel::{c_h, inner_integral, inverse_normalization, DiscreteKernel, HurstParam};
use crate::malliavin::{gather_at, CylindricalFunctional};
use crate::mc::{mean_se, par_chunks, require_samples, variance, z_score};
use crate::quad::{gl16, gl8};
use crate::simulate::{fbm_from_increments, fou_from_fbm, FouScheme, ModelParams, PathBundle};
use crate::special::gamma;

/// `c_{k+1} = (1 - α dt) c_k + y_{t_k} dt`, `c_0 = 0`: the discrete
/// `e^{-αt}∫_0^t e^{αu} y_u du`.
fn damped_integral(y: &[f64], dim: usize, alpha: f64, dt: f64) -> Vec<f64> {
    let n = y.len() / dim - 1;
    let q = 1.0 - alpha * dt;
    let mut c = vec![0.0; (n + 1) * dim];
    for k in 0..n {
        for d in 0..dim {
            c[(k + 1) * dim + d] = q * c[k * dim + d] + y[k * dim + d] * dt;
        }
    }
    c
}

/// Inverse of `h ↦ j`: `h = K^{-1}(Kj - α e^{-α·}∫_0^· e^{αu}(Kj)_u du)`.
pub fn map_j_to_h(j: &[f64], dim: usize, alpha: f64, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
    let dt = kernel.grid().dt();
    let y = apply_k(kernel, j, dim)?;
    let c = damped_integral(&y, dim, alpha, dt);
    let x: Vec<f64> = y.iter().zip(&c).map(|(a, b)| a - alpha * b).collect();
    apply_k_inverse_matrix(kernel, &x, dim)
}

/// `δ_k = α² c_k - α (Kj)_{t_k}` on cells.
pub fn delta_from_j(j: &[f64], dim: usize, alpha: f64, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
    let n = kernel.n();
    let dt = kernel.grid().dt();
    let y = apply_k(kernel, j, dim)?;
    let c = damped_integral(&y, dim, alpha, dt);
    Ok((0..n * dim).map(|i| alpha * alpha * c[i] - alpha * y[i]).collect())
}

/// Discrete `P`: the grid adjoint `S* (K^{-1})* g` with `S` the left-point
/// running integral.
pub fn p_discrete(g: &[f64], dim: usize, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
    let n = kernel.n();
    let v = apply_k_inverse_adjoint(kernel, g, dim)?;
    let mut p = vec![0.0; n * dim];
    for d in 0..dim {
        let mut acc = 0.0;
        for j in (0..n).rev() {
            acc += v[(j + 1) * dim + d];
            p[j * dim + d] = acc;
        }
    }
    Ok(p)
}

/// `w_l = dt (α² dt Σ_{k>l} (1 - α dt)^{k-1-l} P_k - α P_l)` on points
/// (`w_n = 0`): the exact adjoint of `y ↦ δ`.
pub fn damped_adjoint_discrete(p: &[f64], dim: usize, alpha: f64, dt: f64) -> Vec<f64> {
    let n = p.len() / dim;
    let q = 1.0 - alpha * dt;
    let mut w = vec![0.0; (n + 1) * dim];
    for d in 0..dim {
        let mut tail = 0.0;
        for l in (0..n).rev() {
            if l + 1 < n {
                tail = p[(l + 1) * dim + d] + q * tail;
            }
            w[l * dim + d] = dt * (alpha * alpha * dt * tail - alpha * p[l * dim + d]);
        }
    }
    w
}

/// `w_{t_k} = dt (α² ∫_{t_k}^1 e^{-α(u - t_k)} P_u du - α P_{t_k})` for
/// piecewise-constant `P`, on points (`w_n = 0`).
pub fn damped_adjoint_continuous(p: &[f64], dim: usize, alpha: f64, dt: f64) -> Vec<f64> {
    let n = p.len() / dim;
    let decay = (-alpha * dt).exp();
    let cell_weight = -(-alpha * dt).exp_m1();
    let mut w = vec![0.0; (n + 1) * dim];
    for d in 0..dim {
        let mut tail = 0.0;
        for k in (0..n).rev() {
            tail = p[k * dim + d] + decay * tail;
            w[k * dim + d] = dt * (alpha * cell_weight * tail - alpha * p[k * dim + d]);
        }
    }
    w
}

/// Regularized `P` at cell midpoints for piecewise-constant `g`:
///
/// ```text
/// P_t = N/Γ(3/2-H) [ g_t (1-t)^{1/2-H} + (H-1/2) t^{1/2-H} ∫_t^1 (t^{H-1/2} g_t - u^{H-1/2} g_u) / (u-t)^{1/2+H} du ]
/// ```
///
/// with `N = 1/(c_H Γ(H-1/2))`. Splitting the numerator as
/// `g_t (t^a - u^a) + u^a (g_t - g_u)` leaves one integrable singular
/// integral per cell and smooth cell integrals for the differences.
#[derive(Debug, Clone)]
pub struct RegularizedAdjoint {
    grid: TimeGrid,
    self_coef: Vec<f64>,
    cross: Vec<Vec<f64>>,
}

impl RegularizedAdjoint {
    pub fn new(h: HurstParam, grid: &TimeGrid) -> Self {
        let n = grid.n_steps();
        let dt = grid.dt();
        let a = h.excess();
        let scale = inverse_normalization(h) / gamma(1.0 - a);
        let mut self_coef = Vec::with_capacity(n);
        let mut cross = Vec::with_capacity(n);
        for j in 0..n {
            let t = grid.midpoint(j);
            let ta = t.powf(a);
            let lambda = gl16().integrate_left_geometric(t, 1.0, -a, 24, |u| {
                if u <= t {
                    return 0.0;
                }
                // t^a - u^a without cancellation near u = t
                -ta * (a * ((u - t) / t).ln_1p()).exp_m1() / (u - t).powf(1.0 + a)
            });
            let row: Vec<f64> = (j + 1..n)
                .map(|l| {
                    let (lo, hi) = (l as f64 * dt, (l + 1) as f64 * dt);
                    gl8().integrate(lo, hi, |u| u.powf(a) / (u - t).powf(1.0 + a))
                })
                .collect();
            let front = a * t.powf(-a);
            let diag = (1.0 - t).powf(-a) + front * lambda + front * row.iter().sum::<f64>();
            self_coef.push(scale * diag);
            cross.push(row.into_iter().map(|w| scale * front * w).collect());
        }
        Self {
            grid: grid.clone(),
            self_coef,
            cross,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Grid-regularized coefficient of `g_t` (finite only because the
    /// divergent part is cut at the cell boundary).
    pub fn diagonal_coefficient(&self) -> &[f64] {
        &self.self_coef
    }

    pub fn apply(&self, g: &[f64], dim: usize) -> Result<Vec<f64>> {
        let n = self.grid.n_steps();
        if g.len() != n * dim {
            return Err(FouError::Dimension { expected: n * dim, got: g.len() });
        }
        let mut p = vec![0.0; n * dim];
        for j in 0..n {
            for d in 0..dim {
                let mut acc = self.self_coef[j] * g[j * dim + d];
                for (off, w) in self.cross[j].iter().enumerate() {
                    acc -= w * g[(j + 1 + off) * dim + d];
                }
                if !acc.is_finite() {
                    return Err(FouError::Regularization {
                        cell: j,
                        reason: format!("non-finite P (g = {})", g[j * dim + d]),
                    });
                }
                p[j * dim + d] = acc;
            }
        }
        Ok(p)
    }
}

/// How `P` (and hence `η`) is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaRoute {
    /// Exact grid adjoint.
    Discrete,
    /// Marchaud-regularized `P` with the continuous exponential integral.
    Regularized,
    /// `α = 0` only: `η_t = Σ_i K(t_i, t) ∇^i f` from the pointwise kernel.
    PointwiseKernel,
}

impl EtaRoute {
    pub fn label(self) -> &'static str {
        match self {
            Self::Discrete => "discrete",
            Self::Regularized => "regularized",
            Self::PointwiseKernel => "pointwise_kernel",
        }
    }
}

/// Per-path correction terms on cells (`w` on points).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTerms {
    /// `δ` for the direction `j`, when one was supplied.
    pub delta: Option<Vec<f64>>,
    /// Grid-regularized `A` (regularized route only, empty otherwise).
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    /// Inner quantity `g + K* w` before conditioning.
    pub eta: Vec<f64>,
}

/// Correction terms for `g = K^{-1}DF` on one path.
pub fn correction_terms(
    g: &[f64],
    dim: usize,
    alpha: f64,
    kernel: &DiscreteKernel,
    regularized: Option<&RegularizedAdjoint>,
    j: Option<&[f64]>,
) -> Result<CorrectionTerms> {
    let dt = kernel.grid().dt();
    let (p, w, a) = match regularized {
        None => {
            let p = p_discrete(g, dim, kernel)?;
            let w = damped_adjoint_discrete(&p, dim, alpha, dt);
            (p, w, Vec::new())
        }
        Some(reg) => {
            let p = reg.apply(g, dim)?;
            let w = damped_adjoint_continuous(&p, dim, alpha, dt);
            (p, w, reg.diagonal_coefficient().to_vec())
        }
    };
    let corr = apply_k_adjoint(kernel, &w, dim)?;
    let eta = g.iter().zip(&corr).map(|(a, b)| a + b).collect();
    let delta = j.map(|j| delta_from_j(j, dim, alpha, kernel)).transpose()?;
    Ok(CorrectionTerms { delta, a, p, w, eta })
}

/// `(⟨P, δ⟩, ⟨∫_t^1 K(s,t)(…)ds, j⟩)` for one coordinate layout: the first
/// from `δ` directly, the second from an independent explicit double sum.
pub fn adjoint_pairings(p: &[f64], j: &[f64], dim: usize, alpha: f64, kernel: &DiscreteKernel) -> Result<(f64, f64)> {
    let n = kernel.n();
    let dt = kernel.grid().dt();
    let delta = delta_from_j(j, dim, alpha, kernel)?;
    let direct = p.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>() * dt;
    let q = 1.0 - alpha * dt;
    let mut reordered = 0.0;
    for d in 0..dim {
        let w: Vec<f64> = (0..=n)
            .map(|l| {
                if l >= n {
                    return 0.0;
                }
                let mut s = 0.0;
                for k in (l + 1)..n {
                    s += q.powi((k - 1 - l) as i32) * p[k * dim + d];
                }
                dt * (alpha * alpha * dt * s - alpha * p[l * dim + d])
            })
            .collect();
        for cell in 0..n {
            let mut coef = 0.0;
            for i in cell..n {
                coef += kernel.entry(i, cell) * w[i + 1];
            }
            reordered += coef * j[cell * dim + d] * dt;
        }
    }
    Ok((direct, reordered))
}

/// Unit-gradient integrands: entry `i` is `η` (before conditioning) for
/// `F = x_{t_i}` in one coordinate, so that for general `F`
/// `Y_{k,c} = Σ_i ∇^i_c f · Z_i[k]`.
pub fn eta_weights(
    f: &CylindricalFunctional,
    alpha: f64,
    kernel: &DiscreteKernel,
    route: EtaRoute,
) -> Result<Vec<Vec<f64>>> {
    let grid = kernel.grid();
    let n = grid.n_steps();
    let idx = f.indices(grid)?;
    let reg = (route == EtaRoute::Regularized).then(|| RegularizedAdjoint::new(kernel.hurst(), grid));
    idx.iter()
        .map(|&k| {
            if k == 0 {
                return Ok(vec![0.0; n]);
            }
            match route {
                EtaRoute::PointwiseKernel => {
                    if alpha != 0.0 {
                        return Err(FouError::Configuration(
                            "the pointwise-kernel integrand is only valid at alpha = 0".into(),
                        ));
                    }
                    let h = kernel.hurst();
                    let (a, ch) = (h.excess(), c_h(h));
                    let t = grid.time(k);
                    Ok((0..n)
                        .map(|j| {
                            let s = grid.midpoint(j);
                            if s < t {
                                ch * s.powf(-a) * inner_integral(a, t, s)
                            } else {
                                0.0
                            }
                        })
                        .collect())
                }
                _ => {
                    let mut g = vec![0.0; n];
                    g[..k].copy_from_slice(kernel.row(k - 1));
                    Ok(correction_terms(&g, 1, alpha, kernel, reg.as_ref(), None)?.eta)
                }
            }
        })
        .collect()
}

/// Conditional-expectation strategy for `η_t = E[Y_t | F_t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `Y` is path-independent; use it as is.
    Exact,
    /// Least squares on `{1, x, …, x^degree}` of the current state `X_{t_k}`
    /// (all coordinates), one fit per time slice.
    Regression { degree: usize },
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Self::Exact => "exact".into(),
            Self::Regression { degree } => format!("regression(degree={degree})"),
        }
    }
}

/// Whether `∇f` is the same at a handful of probe points.
pub fn gradient_is_constant(f: &CylindricalFunctional) -> bool {
    let m = f.times.len() * f.dim;
    let probe = |seed: f64| -> Vec<f64> { (0..m).map(|i| (seed * (i as f64 + 1.3)).sin() * 1.7).collect() };
    let base = f.grad_at(&vec![0.0; m]);
    [0.37, 1.91, -2.6].iter().all(|s| f.grad_at(&probe(*s)) == base)
}

/// Least-squares fit per time slice.
#[derive(Debug, Clone)]
struct SliceFits {
    degree: usize,
    dim: usize,
    /// per slice: `n_features × dim` coefficients (dropped features are 0)
    coefs: Vec<Vec<f64>>,
}

fn n_features(degree: usize, dim: usize) -> usize {
    1 + degree * dim
}

fn fill_features(x: &[f64], degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    let mut pos = 1;
    for &v in x {
        let mut pw = 1.0;
        for _ in 0..degree {
            pw *= v;
            out[pos] = pw;
            pos += 1;
        }
    }
}

impl SliceFits {
    fn predict(&self, k: usize, x: &[f64], buf: &mut [f64], out: &mut [f64]) {
        fill_features(x, self.degree, buf);
        let coefs = &self.coefs[k];
        for (c, o) in out.iter_mut().enumerate() {
            *o = buf.iter().enumerate().map(|(f, v)| v * coefs[f * self.dim + c]).sum();
        }
    }
}

/// Solves the normal equations of one slice after dropping constant
/// features; returns `p × dim` coefficients.
fn solve_slice(ata: &[f64], atb: &[f64], p: usize, dim: usize, count: f64, slice: usize) -> Result<Vec<f64>> {
    let mut keep = vec![0usize];
    for f in 1..p {
        let m = ata[f] / count;
        let var = ata[f * p + f] / count - m * m;
        if var > 1e-12 * (1.0 + ata[f * p + f] / count) {
            keep.push(f);
        }
    }
    let r = keep.len();
    let mut a = vec![0.0; r * r];
    let mut b = vec![0.0; r * dim];
    for (i, &fi) in keep.iter().enumerate() {
        for (j, &fj) in keep.iter().enumerate() {
            a[i * r + j] = ata[fi * p + fj];
        }
        for c in 0..dim {
            b[i * dim + c] = atb[fi * dim + c];
        }
    }
    // Cholesky a = L Lᵀ
    let mut l = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..=i {
            let mut s = a[i * r + j];
            for k in 0..j {
                s -= l[i * r + k] * l[j * r + k];
            }
            if i == j {
                if !(s > 1e-13 * a[i * r + i].abs().max(f64::MIN_POSITIVE)) {
                    return Err(FouError::Estimator {
                        slice,
                        reason: "normal equations are singular; use more paths or a smaller basis".into(),
                    });
                }
                l[i * r + i] = s.sqrt();
            } else {
                l[i * r + j] = s / l[j * r + j];
            }
        }
    }
    let mut coefs = vec![0.0; p * dim];
    for c in 0..dim {
        let mut y = vec![0.0; r];
        for i in 0..r {
            let mut s = b[i * dim + c];
            for k in 0..i {
                s -= l[i * r + k] * y[k];
            }
            y[i] = s / l[i * r + i];
        }
        let mut x = vec![0.0; r];
        for i in (0..r).rev() {
            let mut s = y[i];
            for k in i + 1..r {
                s -= l[k * r + i] * x[k];
            }
            x[i] = s / l[i * r + i];
        }
        for (i, &fi) in keep.iter().enumerate() {
            coefs[fi * dim + c] = x[i];
        }
    }
    Ok(coefs)
}

/// One simulated path: fOU values on points and the driving increments.
pub struct PathData {
    pub x: Vec<f64>,
    pub increments: Vec<f64>,
}

impl PathData {
    /// Euler fOU path driven by the noise of `rng`.
    pub fn simulate(kernel: &DiscreteKernel, dim: usize, alpha: f64, rng: RngSpec) -> Self {
        let grid = kernel.grid();
        let increments = sample_bm_increments(grid, dim, rng);
        let fbm = fbm_from_increments(kernel, &increments, dim);
        let x = fou_from_fbm(&fbm, dim, alpha, grid.dt(), FouScheme::Euler);
        Self { x, increments }
    }
}

const CHUNK: usize = 256;

struct Problem<'a> {
    f: &'a CylindricalFunctional,
    indices: Vec<usize>,
    weights: Vec<Vec<f64>>,
    n: usize,
    dim: usize,
}

impl Problem<'_> {
    /// `Y_{k,·}` for every slice, `n × dim`.
    fn inner(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let xv = gather_at(x, self.dim, &self.indices);
        let fv = self.f.eval_at(&xv);
        let grad = self.f.grad_at(&xv);
        let mut y = vec![0.0; self.n * self.dim];
        for (i, z) in self.weights.iter().enumerate() {
            for c in 0..self.dim {
                let gc = grad[i * self.dim + c];
                if gc == 0.0 {
                    continue;
                }
                for k in 0..self.n {
                    y[k * self.dim + c] += gc * z[k];
                }
            }
        }
        (fv, y)
    }
}

fn fit_slices<S>(problem: &Problem, n_paths: usize, source: &S, degree: usize) -> Result<SliceFits>
where
    S: Fn(usize) -> Result<PathData> + Sync,
{
    let (n, dim) = (problem.n, problem.dim);
    let p = n_features(degree, dim);
    let parts = par_chunks(n_paths, CHUNK, |range| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut ata = vec![0.0; n * p * p];
        let mut atb = vec![0.0; n * p * dim];
        let mut phi = vec![0.0; p];
        for path in range {
            let data = source(path)?;
            let (_, y) = problem.inner(&data.x);
            for k in 0..n {
                fill_features(&data.x[k * dim..(k + 1) * dim], degree, &mut phi);
                let a = &mut ata[k * p * p..(k + 1) * p * p];
                for i in 0..p {
                    for j in 0..p {
                        a[i * p + j] += phi[i] * phi[j];
                    }
                }
                let b = &mut atb[k * p * dim..(k + 1) * p * dim];
                for i in 0..p {
                    for c in 0..dim {
                        b[i * dim + c] += phi[i] * y[k * dim + c];
                    }
                }
            }
        }
        Ok((ata, atb))
    });
    let mut ata = vec![0.0; n * p * p];
    let mut atb = vec![0.0; n * p * dim];
    for part in parts {
        let (a, b) = part?;
        ata.iter_mut().zip(&a).for_each(|(s, v)| *s += v);
        atb.iter_mut().zip(&b).for_each(|(s, v)| *s += v);
    }
    let coefs = (0..n)
        .map(|k| {
            solve_slice(
                &ata[k * p * p..(k + 1) * p * p],
                &atb[k * p * dim..(k + 1) * p * dim],
                p,
                dim,
                n_paths as f64,
                k,
            )
        })
        .collect::<Result<_>>()?;
    Ok(SliceFits { degree, dim, coefs })
}

/// Result of a representation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub functional: String,
    pub estimator: String,
    pub route: String,
    pub e_f: f64,
    pub se_e_f: f64,
    pub var_f: f64,
    pub residual_var: f64,
    pub residual_var_ratio: f64,
    /// `Var(∫⟨η, dB⟩)` and `E∫|η|²dt`, equal for deterministic `η`.
    pub stochastic_integral_var: f64,
    pub eta_l2_mean: f64,
    /// z-score of the lag-1 product of consecutive martingale increments.
    pub increment_lag1_z: f64,
    pub n_paths: usize,
}

struct Fitted<'a> {
    problem: Problem<'a>,
    fits: Option<SliceFits>,
}

impl Fitted<'_> {
    /// `(F, η)` on one path.
    fn eta(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (fv, y) = self.problem.inner(x);
        match &self.fits {
            None => (fv, y),
            Some(fits) => {
                let dim = self.problem.dim;
                let mut eta = vec![0.0; y.len()];
                let mut buf = vec![0.0; n_features(fits.degree, dim)];
                for k in 0..self.problem.n {
                    fits.predict(k, &x[k * dim..(k + 1) * dim], &mut buf, &mut eta[k * dim..(k + 1) * dim]);
                }
                (fv, eta)
            }
        }
    }
}

fn prepare<'a, S>(
    f: &'a CylindricalFunctional,
    alpha: f64,
    kernel: &DiscreteKernel,
    n_paths: usize,
    source: &S,
    estimator: Estimator,
    route: EtaRoute,
) -> Result<Fitted<'a>>
where
    S: Fn(usize) -> Result<PathData> + Sync,
{
    let problem = Problem {
        f,
        indices: f.indices(kernel.grid())?,
        weights: eta_weights(f, alpha, kernel, route)?,
        n: kernel.n(),
        dim: f.dim,
    };
    let fits = match estimator {
        Estimator::Exact => {
            if !gradient_is_constant(f) {
                return Err(FouError::Estimator {
                    slice: 0,
                    reason: format!("exact estimator needs a constant gradient, '{}' has none", f.label),
                });
            }
            None
        }
        Estimator::Regression { degree } => Some(fit_slices(&problem, n_paths, source, degree)?),
    };
    Ok(Fitted { problem, fits })
}

fn check_setup(f: &CylindricalFunctional, params: &ModelParams, kernel: &DiscreteKernel) -> Result<()> {
    params.check_kernel(kernel)?;
    if f.dim != params.dim() {
        return Err(FouError::Dimension { expected: params.dim(), got: f.dim });
    }
    Ok(())
}

/// Adapted `η` (cells) for each of the given paths.
pub fn eta_integrand(
    f: &CylindricalFunctional,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    paths: &[PathBundle],
    estimator: Estimator,
    route: EtaRoute,
) -> Result<Vec<Vec<f64>>> {
    check_setup(f, params, kernel)?;
    let source = |i: usize| -> Result<PathData> {
        Ok(PathData {
            x: paths[i].fou.values().to_vec(),
            increments: paths[i].increments.clone(),
        })
    };
    let fitted = prepare(f, params.alpha(), kernel, paths.len(), &source, estimator, route)?;
    Ok(paths.iter().map(|b| fitted.eta(b.fou.values()).1).collect())
}

/// Simulates `n_paths` fOU paths (stream `rng.stream_id + i` for path `i`),
/// estimates `η` and measures how much of `Var F` the representation misses.
pub fn representation_check(
    f: &CylindricalFunctional,
    params: &ModelParams,
    kernel: &DiscreteKernel,
    n_paths: usize,
    rng: RngSpec,
    estimator: Estimator,
    route: EtaRoute,
) -> Result<RepresentationReport> {
    require_samples(n_paths, 100)?;
    check_setup(f, params, kernel)?;
    let grid = kernel.grid().clone();
    let dim = params.dim();
    let alpha = params.alpha();
    let source = |i: usize| -> Result<PathData> { Ok(PathData::simulate(kernel, dim, alpha, rng.offset(i as u64))) };
    let fitted = prepare(f, alpha, kernel, n_paths, &source, estimator, route)?;
    let dt = grid.dt();
    let n = grid.n_steps();
    // per path: (F, ∫⟨η, dB⟩, ∫|η|² dt, Σ_k d_k d_{k+1})
    let parts = par_chunks(n_paths, CHUNK, |range| -> Result<Vec<[f64; 4]>> {
        range
            .map(|i| {
                let data = source(i)?;
                let (fv, eta) = fitted.eta(&data.x);
                let mut stoch = 0.0;
                let mut prev = 0.0;
                let mut lag = 0.0;
                for k in 0..n {
                    let d: f64 = (0..dim).map(|c| eta[k * dim + c] * data.increments[k * dim + c]).sum();
                    stoch += d;
                    if k > 0 {
                        lag += prev * d;
                    }
                    prev = d;
                }
                let l2 = eta.iter().map(|v| v * v).sum::<f64>() * dt;
                Ok([fv, stoch, l2, lag])
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(n_paths);
    for part in parts {
        rows.extend(part?);
    }
    let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let (fs, stoch, l2, lag) = (col(0), col(1), col(2), col(3));
    let var_f = variance(&fs);
    if !(var_f > 1e-300) {
        return Err(FouError::DegenerateFunctional(format!(
            "'{}' has zero variance; the representation ratio is undefined",
            f.label
        )));
    }
    let ef = mean_se(&fs);
    let resid: Vec<f64> = fs.iter().zip(&stoch).map(|(a, b)| a - ef.mean - b).collect();
    let residual_var = variance(&resid);
    let lag = mean_se(&lag);
    Ok(RepresentationReport {
        functional: f.label.clone(),
        estimator: estimator.label(),
        route: route.label().into(),
        e_f: ef.mean,
        se_e_f: ef.se,
        var_f,
        residual_var,
        residual_var_ratio: residual_var / var_f,
        stochastic_integral_var: variance(&stoch),
        eta_l2_mean: mean_se(&l2).mean,
        increment_lag1_z: z_score(lag.mean, 0.0, lag.se),
        n_paths,
    })
}
