//! The fractional Volterra kernel
//!
//! ```text
//! K(t, s) = c_H s^{1/2-H} ∫_s^t u^{H-1/2} (u - s)^{H-3/2} du,   0 < s < t,
//! ```
//!
//! its normalization `c_H`, a cell-averaged lower-triangular discretization,
//! and the two constants entering the bounds: `C1` (a fitted sup of
//! `K(t, s) s^{H-1/2}`) and `C2` (the self-similar singular integral).
//!
//! The inner integral is computed after the substitution `w = (u - s)^{H-1/2}`,
//! which removes the `(u - s)^{H-3/2}` endpoint singularity. Matrix cells away
//! from the diagonal and from `s = 0` are accumulated row by row from the
//! closed-form time derivative `∂_t K(t, s) = c_H s^{1/2-H} t^{H-1/2} (t - s)^{H-3/2}`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FouError, Result};
use crate::grid::TimeGrid;
use crate::quad::{gl16, gl32, gl8, GaussLegendre};
use crate::special::{beta, gamma};

/// Hurst index restricted to the long-memory range `1/2 < H < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.5 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(FouError::Domain(format!(
                "Hurst parameter must lie in (1/2, 1), got {h}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `H - 1/2`, the exponent that appears everywhere.
    pub fn excess(self) -> f64 {
        self.0 - 0.5
    }
}

/// `c_H = sqrt(H (2H - 1) / B(2 - 2H, H - 1/2))`.
pub fn c_h(h: HurstParam) -> f64 {
    let hv = h.value();
    (hv * (2.0 * hv - 1.0) / beta(2.0 - 2.0 * hv, hv - 0.5)).sqrt()
}

/// `1 / (c_H Γ(H - 1/2))`: the factor by which the Marchaud form of the
/// inverse operator must be scaled so that it inverts the operator built
/// from the normalized kernel.
pub fn inverse_normalization(h: HurstParam) -> f64 {
    1.0 / (c_h(h) * gamma(h.excess()))
}

/// `∫_s^t u^a (u - s)^{a-1} du` for `0 < s < t`.
pub(crate) fn inner_integral(a: f64, t: f64, s: f64) -> f64 {
    if s >= t {
        return 0.0;
    }
    let end = (t - s).powf(a);
    let inv_a = 1.0 / a;
    // integrand (s + w^{1/a})^a changes character where w ~ s^a
    let scale = s.powf(a);
    let levels = if end > scale {
        ((end / scale).log2().ceil() as usize).min(60) + 1
    } else {
        1
    };
    let f = |w: f64| (s + w.powf(inv_a)).powf(a);
    gl32().integrate_left_geometric(0.0, end, 0.0, levels, f) * inv_a
}

fn kernel_unchecked(a: f64, ch: f64, t: f64, s: f64) -> f64 {
    if s >= t {
        0.0
    } else {
        ch * s.powf(-a) * inner_integral(a, t, s)
    }
}

/// Pointwise kernel value `K(t, s)`; zero for `s >= t`.
pub fn eval_kernel(h: HurstParam, t: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(FouError::Domain(format!(
            "kernel needs s > 0 (s^{{1/2-H}} diverges at 0), got s = {s}"
        )));
    }
    if !(t > 0.0 && t <= 1.0 + 1e-12) {
        return Err(FouError::Domain(format!("kernel needs 0 < t <= 1, got t = {t}")));
    }
    Ok(kernel_unchecked(h.excess(), c_h(h), t, s))
}

/// Closed-form fBm covariance `½(t^{2H} + s^{2H} - |t - s|^{2H})`.
pub fn fbm_covariance(h: HurstParam, t: f64, s: f64) -> f64 {
    let two_h = 2.0 * h.value();
    0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h))
}

/// Lower-triangular discretization of `K`.
///
/// Row `i` corresponds to time `t_{i+1}`, column `j` to cell `[t_j, t_{j+1}]`,
/// and `entry(i, j) = (1/dt) ∫_{cell j} K(t_{i+1}, s) ds` for `j >= 1`.
/// The first column holds the root-mean-square `sqrt((1/dt) ∫_0^dt K² ds)`
/// instead of the mean: most of the variance of `B^H` sits in the
/// `s^{1/2-H}` spike of that cell and the mean would drop it.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    hurst: HurstParam,
    grid: TimeGrid,
    packed: Vec<f64>,
    first_column_mean: Vec<f64>,
}

impl DiscreteKernel {
    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n_steps()
    }

    /// Entries `0..=i` of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.packed[start..start + i + 1]
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[i * (i + 1) / 2 + j]
        }
    }

    /// Plain cell means of the first column, kept for diagnostics.
    pub fn first_column_mean(&self) -> &[f64] {
        &self.first_column_mean
    }

    /// `Σ_k M[i][k] M[j][k] dt`, the discrete covariance of `B^H` at
    /// `t_{i+1}` and `t_{j+1}`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let (ri, rj) = (self.row(i), self.row(j));
        ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>() * self.grid.dt()
    }

    /// Full square matrix as CSV with a `# H=<value> n=<value>` header.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        let _ = writeln!(out, "# H={} n={}", self.hurst.value(), n);
        for i in 0..n {
            for j in 0..n {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.entry(i, j));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the cell-averaged kernel matrix on `grid`.
pub fn kernel_matrix(h: HurstParam, grid: &TimeGrid) -> DiscreteKernel {
    let n = grid.n_steps();
    let dt = grid.dt();
    let a = h.excess();
    let ch = c_h(h);

    let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| build_column(a, ch, grid, j))
        .collect();

    let mut packed = vec![0.0; n * (n + 1) / 2];
    let mut first_column_mean = vec![0.0; n];
    for (j, (col, extra)) in columns.into_iter().enumerate() {
        for (offset, v) in col.into_iter().enumerate() {
            let i = j + offset;
            packed[i * (i + 1) / 2 + j] = v / dt;
        }
        if j == 0 {
            first_column_mean = extra;
        }
    }
    DiscreteKernel {
        hurst: h,
        grid: grid.clone(),
        packed,
        first_column_mean,
    }
}

/// Cell integrals `∫_{cell j} K(t_r, s) ds` for `r = j+1..=n` in row order
/// (the RMS value times dt for column 0), plus the plain means of column 0.
fn build_column(a: f64, ch: f64, grid: &TimeGrid, j: usize) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_steps();
    let dt = grid.dt();
    let s0 = grid.time(j);
    let s1 = grid.time(j + 1);
    let mut col = Vec::with_capacity(n - j);

    if j == 0 {
        let mut means = Vec::with_capacity(n);
        for r in 1..=n {
            let t = grid.time(r);
            let mean = cell_integral_direct(a, ch, t, s0, s1);
            let second = cell_square_integral(a, ch, t, s1);
            means.push(mean / dt);
            // stored value is divided by dt by the caller
            col.push((second / dt).sqrt() * dt);
        }
        return (col, means);
    }

    // diagonal and first sub-diagonal directly, the rest by accumulating ∂_t K
    let mut acc = 0.0;
    for r in (j + 1)..=n {
        let t = grid.time(r);
        if r <= j + 2 {
            acc = cell_integral_direct(a, ch, t, s0, s1);
        } else {
            let t_prev = grid.time(r - 1);
            let rule = if r - j <= 8 { gl8() } else { quad_small() };
            acc += increment(a, ch, rule, s0, s1, t_prev, t);
        }
        col.push(acc);
    }
    (col, Vec::new())
}

fn quad_small() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(4))
}

/// `∫_{s0}^{s1} ∫_{t0}^{t1} c_H s^{-a} τ^a (τ - s)^{a-1} dτ ds` for separated cells.
fn increment(a: f64, ch: f64, rule: &GaussLegendre, s0: f64, s1: f64, t0: f64, t1: f64) -> f64 {
    rule.integrate(s0, s1, |s| {
        let inner = rule.integrate(t0, t1, |tau| tau.powf(a) * (tau - s).powf(a - 1.0));
        s.powf(-a) * inner
    }) * ch
}

/// `∫_{s0}^{s1} K(t, s) ds` by graded quadrature on the pointwise kernel.
fn cell_integral_direct(a: f64, ch: f64, t: f64, s0: f64, s1: f64) -> f64 {
    let k = |s: f64| kernel_unchecked(a, ch, t, s);
    let rule = gl16();
    let touches_diag = (t - s1).abs() < 1e-15;
    match (s0 == 0.0, touches_diag) {
        (true, true) => {
            let mid = 0.5 * (s0 + s1);
            gl32().integrate_left_singular(s0, mid, -a, k) + gl32().integrate_right_singular(mid, s1, a, k)
        }
        (true, false) => gl32().integrate_left_singular(s0, s1, -a, k),
        (false, true) => rule.integrate_right_singular(s0, s1, a, k),
        (false, false) => rule.integrate(s0, s1, k),
    }
}

/// `∫_0^{s1} K(t, s)^2 ds`.
fn cell_square_integral(a: f64, ch: f64, t: f64, s1: f64) -> f64 {
    let k2 = |s: f64| kernel_unchecked(a, ch, t, s).powi(2);
    if (t - s1).abs() < 1e-15 {
        let mid = 0.5 * s1;
        gl32().integrate_left_singular(0.0, mid, -2.0 * a, k2) + gl32().integrate_right_singular(mid, s1, 2.0 * a, k2)
    } else {
        gl32().integrate_left_singular(0.0, s1, -2.0 * a, k2)
    }
}

/// Bound constants shared by the integration-by-parts and log-Sobolev code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub c_h: f64,
    pub c1: f64,
    pub c2: f64,
}

impl KernelConstants {
    pub fn compute(h: HurstParam, c1_density: usize) -> Result<Self> {
        Ok(Self {
            c_h: c_h(h),
            c1: fit_c1(h, c1_density),
            c2: compute_c2(h)?,
        })
    }
}

/// Empirical `C1`: max of `K(t, s) s^{H-1/2}` over the lattice
/// `{(l/d, k/d) : 1 <= k < l <= d}`.
pub fn fit_c1(h: HurstParam, density: usize) -> f64 {
    let density = density.max(2);
    let a = h.excess();
    let ch = c_h(h);
    (2..=density)
        .into_par_iter()
        .map(|l| {
            let t = l as f64 / density as f64;
            (1..l)
                .map(|k| {
                    let s = k as f64 / density as f64;
                    ch * inner_integral(a, t, s)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `(1/s^{1-2H}) ∫_0^s (s^{1/2-H} - u^{1/2-H}) / (s - u)^{1/2+H} du` at one `s`.
pub fn c2_ratio_at(h: HurstParam, s: f64) -> f64 {
    let a = h.excess();
    let f = |u: f64| {
        // s^{-a} - u^{-a} = s^{-a} (1 - (u/s)^{-a}), cancellation-free near u = s
        let diff = -s.powf(-a) * (-a * (u / s).ln()).exp_m1();
        diff / (s - u).powf(1.0 + a)
    };
    let mid = 0.5 * s;
    let rule = gl32();
    let value = rule.integrate_left_geometric(0.0, mid, -a, 10, f) + rule.integrate_right_geometric(mid, s, -a, 10, f);
    value / s.powf(1.0 - 2.0 * h.value())
}

/// `C2` from the self-similar identity, checked at `s ∈ {1/4, 1/2, 1}`.
pub fn compute_c2(h: HurstParam) -> Result<f64> {
    let base = c2_ratio_at(h, 1.0);
    for s in [0.25, 0.5] {
        let other = c2_ratio_at(h, s);
        if ((other / base) - 1.0).abs() > 5e-3 {
            return Err(FouError::InternalConsistency(format!(
                "C2 self-similarity violated: ratio at s={s} is {other}, at s=1 is {base}"
            )));
        }
    }
    Ok(base)
}
