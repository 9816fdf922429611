//! The Volterra operator `(Kh)_t = ∫_0^t K(t, s) h_s ds`, its inverse and the
//! adjoints used by the representation formulas.
//!
//! Layout conventions: integrands live on cells (`n_steps × dim`, row-major),
//! paths live on grid points (`(n_steps + 1) × dim`, row-major, first row
//! zero). Cell pairings carry a factor `dt`, point pairings are plain sums,
//! so the adjoint of `K` is the transposed kernel matrix.

use crate::error::{FouError, Result};
use crate::grid::TimeGrid;
use crate::kernel::{inverse_normalization, DiscreteKernel, HurstParam};
use crate::special::gamma;

/// An integrand `h` on the cells of a grid, optionally with `Kh` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CMElement {
    grid: TimeGrid,
    dim: usize,
    h_values: Vec<f64>,
    kh_values: Option<Vec<f64>>,
}

impl CMElement {
    pub fn new(grid: &TimeGrid, dim: usize, h_values: Vec<f64>) -> Result<Self> {
        check_len(h_values.len(), grid.n_steps() * dim)?;
        if h_values.iter().any(|v| !v.is_finite()) {
            return Err(FouError::Domain("integrand has non-finite entries".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            dim,
            h_values,
            kh_values: None,
        })
    }

    pub fn zeros(grid: &TimeGrid, dim: usize) -> Self {
        Self {
            grid: grid.clone(),
            dim,
            h_values: vec![0.0; grid.n_steps() * dim],
            kh_values: None,
        }
    }

    /// Computes and stores `Kh`.
    pub fn with_kh(mut self, kernel: &DiscreteKernel) -> Result<Self> {
        self.kh_values = Some(apply_k(kernel, &self.h_values, self.dim)?);
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.h_values
    }

    pub fn kh(&self) -> Option<&[f64]> {
        self.kh_values.as_deref()
    }

    /// `Kh`, from the cache when present.
    pub fn kh_or_compute(&self, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
        match &self.kh_values {
            Some(v) => Ok(v.clone()),
            None => apply_k(kernel, &self.h_values, self.dim),
        }
    }
}

/// Value of a Cameron-Martin inner product `⟨Kh, Kg⟩ = ⟨h, g⟩`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CMInner {
    pub value: f64,
}

impl CMInner {
    /// Computed through the integrands only.
    pub fn of(h: &CMElement, g: &CMElement) -> Result<Self> {
        if h.dim != g.dim || h.grid != g.grid {
            return Err(FouError::Dimension {
                expected: h.h_values.len(),
                got: g.h_values.len(),
            });
        }
        Ok(Self {
            value: inner_product(&h.h_values, &g.h_values, h.grid.dt())?,
        })
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(FouError::Dimension { expected, got })
    }
}

/// Dot product with four independent accumulators (lets the compiler
/// vectorize; the summation order is fixed, so results are reproducible).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Splits a row-major `rows × dim` array into one contiguous vector per coordinate.
pub(crate) fn split_coords(x: &[f64], dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|c| x.iter().skip(c).step_by(dim).copied().collect()).collect()
}

/// `y_{i+1} = scale · Σ_{j<=i} M[i][j] x_j`, `y_0 = 0`, on points.
pub fn lower_apply(kernel: &DiscreteKernel, x: &[f64], dim: usize, scale: f64) -> Vec<f64> {
    let n = kernel.n();
    let mut out = vec![0.0; (n + 1) * dim];
    if dim == 1 {
        for i in 0..n {
            out[i + 1] = scale * dot(kernel.row(i), &x[..=i]);
        }
        return out;
    }
    for (c, xc) in split_coords(x, dim).iter().enumerate() {
        for i in 0..n {
            out[(i + 1) * dim + c] = scale * dot(kernel.row(i), &xc[..=i]);
        }
    }
    out
}

/// `(Kh)_{t_{i+1}} = Σ_{j<=i} M[i][j] h_j dt`, `(Kh)_0 = 0`.
pub fn apply_k(kernel: &DiscreteKernel, h: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = kernel.n();
    check_len(h.len(), n * dim)?;
    Ok(lower_apply(kernel, h, dim, kernel.grid().dt()))
}

/// Solves `apply_k(h) = g` by forward substitution.
pub fn apply_k_inverse_matrix(kernel: &DiscreteKernel, g: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = kernel.n();
    check_len(g.len(), (n + 1) * dim)?;
    if g[..dim].iter().any(|v| *v != 0.0) {
        return Err(FouError::Domain("K^{-1} needs g_0 = 0".into()));
    }
    let dt = kernel.grid().dt();
    let mut h = vec![0.0; n * dim];
    let mut hc = vec![0.0; n];
    for c in 0..dim {
        for i in 0..n {
            let row = kernel.row(i);
            let diag = row[i];
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(FouError::SingularKernel { cell: i, value: diag });
            }
            hc[i] = (g[(i + 1) * dim + c] / dt - dot(&row[..i], &hc[..i])) / diag;
            h[i * dim + c] = hc[i];
        }
    }
    Ok(h)
}

/// Adjoint of `K` for the (points, cells) pairings: `(K* y)_j = Σ_{i>=j} M[i][j] y_{i+1}`.
pub fn apply_k_adjoint(kernel: &DiscreteKernel, y: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = kernel.n();
    check_len(y.len(), (n + 1) * dim)?;
    let mut out = vec![0.0; n * dim];
    for i in 0..n {
        let row = kernel.row(i);
        let yi = &y[(i + 1) * dim..(i + 2) * dim];
        for (j, m) in row.iter().enumerate() {
            for (o, v) in out[j * dim..(j + 1) * dim].iter_mut().zip(yi) {
                *o += m * v;
            }
        }
    }
    Ok(out)
}

/// Adjoint of `K^{-1}`: the point vector `v` (with `v_0 = 0`) solving `Mᵀ v = z`.
pub fn apply_k_inverse_adjoint(kernel: &DiscreteKernel, z: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = kernel.n();
    check_len(z.len(), n * dim)?;
    let mut v = vec![0.0; (n + 1) * dim];
    // backward substitution, accumulating column updates row by row
    let mut rhs = z.to_vec();
    for i in (0..n).rev() {
        let row = kernel.row(i);
        let diag = row[i];
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(FouError::SingularKernel { cell: i, value: diag });
        }
        for c in 0..dim {
            let vi = rhs[i * dim + c] / diag;
            v[(i + 1) * dim + c] = vi;
            for (j, m) in row[..i].iter().enumerate() {
                rhs[j * dim + c] -= m * vi;
            }
        }
    }
    Ok(v)
}

/// `Σ_k ⟨h_k, g_k⟩ dt`.
pub fn inner_product(h: &[f64], g: &[f64], dt: f64) -> Result<f64> {
    check_len(g.len(), h.len())?;
    Ok(h.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * dt)
}

/// `∫_{x_0}^{x_k} (ψ(x_k) - ψ(u)) (x_k - u)^{-1-a} du` for `ψ` piecewise linear
/// through `values` on nodes spaced `spacing` apart, `x_k` the last node.
/// Exact for the interpolant.
pub(crate) fn left_difference_integral(values: &[f64], spacing: f64, a: f64) -> f64 {
    let k = values.len() - 1;
    let end = values[k];
    let mut acc = 0.0;
    for l in 0..k {
        // ψ(x_k) - ψ(u) = c0 + c1 v on segment l, with v = x_k - u
        let slope = (values[l + 1] - values[l]) / spacing;
        let v_hi = (k - l) as f64 * spacing;
        let v_lo = (k - l - 1) as f64 * spacing;
        let c0 = end - values[l] - slope * v_hi;
        let c1 = slope;
        let lin = (v_hi.powf(1.0 - a) - v_lo.powf(1.0 - a)) / (1.0 - a);
        let con = if v_lo > 0.0 {
            (v_lo.powf(-a) - v_hi.powf(-a)) / a
        } else {
            0.0
        };
        acc += c0 * con + c1 * lin;
    }
    acc
}

/// Evaluates `K^{-1} g` from the fractional-derivative formula at the cell
/// midpoints, using the difference-quotient (Marchaud) form of the derivative.
///
/// The derivative `g'` at a midpoint is the centered difference of the two
/// surrounding grid values; `ψ(u) = u^{1/2-H} g'_u` is then interpolated
/// linearly between midpoints (constant on `[0, m_0]`) and the singular
/// integral is done exactly for that interpolant.
pub fn apply_k_inverse_marchaud(h: HurstParam, grid: &TimeGrid, g: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = grid.n_steps();
    check_len(g.len(), (n + 1) * dim)?;
    let dt = grid.dt();
    let a = h.excess();
    let scale = inverse_normalization(h) / gamma(1.0 - a);
    let mids: Vec<f64> = (0..n).map(|j| grid.midpoint(j)).collect();
    let mut out = vec![0.0; n * dim];
    let mut psi = vec![0.0; n];
    for c in 0..dim {
        for j in 0..n {
            let d = (g[(j + 1) * dim + c] - g[j * dim + c]) / dt;
            psi[j] = mids[j].powf(-a) * d;
            if !psi[j].is_finite() {
                return Err(FouError::DerivativeEstimation(format!(
                    "non-finite difference quotient at cell {j}"
                )));
            }
        }
        for j in 0..n {
            let t = mids[j];
            let pt = psi[j];
            // ∫_0^{m_0} (ψ(t) - ψ_0) (t-u)^{-1-a} du, ψ held constant there
            let head = if j > 0 {
                (pt - psi[0]) * ((t - mids[0]).powf(-a) - t.powf(-a)) / a
            } else {
                0.0
            };
            let integral = head + left_difference_integral(&psi[..=j], dt, a);
            out[j * dim + c] = scale * (pt + a * t.powf(a) * integral);
        }
    }
    if let Some(k) = out.iter().position(|v| !v.is_finite()) {
        return Err(FouError::DerivativeEstimation(format!(
            "non-finite Marchaud value at cell {}",
            k / dim
        )));
    }
    Ok(out)
}
