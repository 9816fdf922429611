//! Smooth cylindrical functionals `F(ω) = f(ω_{t_1}, …, ω_{t_m})`, their
//! directional derivatives along `Kh`, and the integrand `K^{-1}DF`.

use std::f64::consts::PI;

use crate::error::{FouError, Result};
use crate::fracops::{apply_k, CMElement};
use crate::grid::{TimeGrid, VecPath};
use crate::kernel::DiscreteKernel;

/// The function `f` and its analytic gradient.
///
/// Arguments are the `m` path values stacked as an `m × dim` row-major slice.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalKind {
    Constant(f64),
    /// `⟨a, x_1⟩` (one observation time).
    Linear(Vec<f64>),
    /// `Σ_i |x_i|²`.
    SumOfSquares,
    /// `exp(-|x_1|²)` (one observation time).
    GaussBump,
    /// `x_1[0] · x_2[0]` (two observation times).
    Product,
    /// `f²` for an inner `f`.
    Squared(Box<FunctionalKind>),
}

impl FunctionalKind {
    pub fn eval(&self, x: &[f64], dim: usize) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Linear(a) => a.iter().zip(&x[..dim]).map(|(a, v)| a * v).sum(),
            Self::SumOfSquares => x.iter().map(|v| v * v).sum(),
            Self::GaussBump => (-x[..dim].iter().map(|v| v * v).sum::<f64>()).exp(),
            Self::Product => x[0] * x[dim],
            Self::Squared(inner) => inner.eval(x, dim).powi(2),
        }
    }

    pub fn grad(&self, x: &[f64], dim: usize) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        match self {
            Self::Constant(_) => {}
            Self::Linear(a) => g[..dim].copy_from_slice(a),
            Self::SumOfSquares => {
                for (gi, v) in g.iter_mut().zip(x) {
                    *gi = 2.0 * v;
                }
            }
            Self::GaussBump => {
                let e = self.eval(x, dim);
                for c in 0..dim {
                    g[c] = -2.0 * x[c] * e;
                }
            }
            Self::Product => {
                g[0] = x[dim];
                g[dim] = x[0];
            }
            Self::Squared(inner) => {
                let f = inner.eval(x, dim);
                g = inner.grad(x, dim);
                for gi in &mut g {
                    *gi *= 2.0 * f;
                }
            }
        }
        g
    }

    /// True when the gradient does not depend on the point.
    pub fn has_constant_gradient(&self) -> bool {
        matches!(self, Self::Constant(_) | Self::Linear(_))
    }
}

/// A cylindrical functional observed at grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalFunctional {
    pub label: String,
    pub times: Vec<f64>,
    pub dim: usize,
    pub kind: FunctionalKind,
}

pub const FUNCTIONAL_LABELS: [&str; 5] = ["constant", "linear", "quadratic", "gauss", "product"];

impl CylindricalFunctional {
    pub fn new(label: &str, times: Vec<f64>, dim: usize, kind: FunctionalKind) -> Result<Self> {
        if times.is_empty() || times.windows(2).any(|w| w[0] > w[1]) {
            return Err(FouError::Domain("observation times must be non-empty and sorted".into()));
        }
        if times.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(FouError::Domain("observation times must lie in (0, 1]".into()));
        }
        if let FunctionalKind::Linear(a) = &kind {
            if a.len() != dim {
                return Err(FouError::Dimension { expected: dim, got: a.len() });
            }
        }
        Ok(Self {
            label: label.to_string(),
            times,
            dim,
            kind,
        })
    }

    /// One of the shipped functionals by label.
    pub fn shipped(label: &str, dim: usize) -> Result<Self> {
        match label {
            "constant" => Self::new(label, vec![1.0], dim, FunctionalKind::Constant(1.0)),
            "linear" => Self::new(label, vec![1.0], dim, FunctionalKind::Linear(vec![1.0; dim])),
            "quadratic" => Self::new(label, vec![0.25, 0.5, 0.75, 1.0], dim, FunctionalKind::SumOfSquares),
            "gauss" => Self::new(label, vec![1.0], dim, FunctionalKind::GaussBump),
            "product" => Self::new(label, vec![0.5, 1.0], dim, FunctionalKind::Product),
            other => Err(FouError::UnknownLabel {
                label: other.to_string(),
                expected: FUNCTIONAL_LABELS.join(", "),
            }),
        }
    }

    /// `F²`.
    pub fn squared(&self) -> Self {
        Self {
            label: format!("{}^2", self.label),
            times: self.times.clone(),
            dim: self.dim,
            kind: FunctionalKind::Squared(Box::new(self.kind.clone())),
        }
    }

    /// Grid indices of the observation times.
    pub fn indices(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        self.times.iter().map(|t| grid.index_of(*t)).collect()
    }

    fn check_path(&self, path: &VecPath) -> Result<()> {
        if path.dim() != self.dim {
            return Err(FouError::Dimension { expected: self.dim, got: path.dim() });
        }
        Ok(())
    }

    /// Stacked path values at the observation times.
    pub fn gather(&self, path: &VecPath) -> Result<Vec<f64>> {
        self.check_path(path)?;
        let idx = self.indices(path.grid())?;
        Ok(gather_at(path.values(), self.dim, &idx))
    }

    pub fn eval_at(&self, x: &[f64]) -> f64 {
        self.kind.eval(x, self.dim)
    }

    pub fn grad_at(&self, x: &[f64]) -> Vec<f64> {
        self.kind.grad(x, self.dim)
    }
}

/// Values of a point-indexed array at `indices`, stacked.
pub fn gather_at(values: &[f64], dim: usize, indices: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(indices.len() * dim);
    for &k in indices {
        out.extend_from_slice(&values[k * dim..(k + 1) * dim]);
    }
    out
}

pub fn eval_functional(f: &CylindricalFunctional, path: &VecPath) -> Result<f64> {
    Ok(f.eval_at(&f.gather(path)?))
}

/// `D_hF = Σ_i ⟨∇^i f, (Kh)_{t_i}⟩`.
pub fn directional_derivative(
    f: &CylindricalFunctional,
    path: &VecPath,
    h: &CMElement,
    kernel: &DiscreteKernel,
) -> Result<f64> {
    check_grids(path.grid(), kernel)?;
    if h.grid() != path.grid() || h.dim() != f.dim {
        return Err(FouError::Configuration("direction and path live on different grids".into()));
    }
    let x = f.gather(path)?;
    let grad = f.grad_at(&x);
    let kh = h.kh_or_compute(kernel)?;
    let idx = f.indices(path.grid())?;
    Ok(pair_gradient(&grad, &kh, f.dim, &idx))
}

/// `Σ_i ⟨grad_i, y_{t_i}⟩` for a point-indexed `y`.
pub fn pair_gradient(grad: &[f64], y: &[f64], dim: usize, indices: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (i, &k) in indices.iter().enumerate() {
        for c in 0..dim {
            acc += grad[i * dim + c] * y[k * dim + c];
        }
    }
    acc
}

/// `(F(ω + δ Kh) - F(ω)) / δ`.
pub fn finite_difference_derivative(
    f: &CylindricalFunctional,
    path: &VecPath,
    h: &CMElement,
    kernel: &DiscreteKernel,
    delta: f64,
) -> Result<f64> {
    let kh = h.kh_or_compute(kernel)?;
    let shifted: Vec<f64> = path.values().iter().zip(&kh).map(|(w, k)| w + delta * k).collect();
    let shifted = VecPath::from_values(path.grid(), path.dim(), shifted)?;
    Ok((eval_functional(f, &shifted)? - eval_functional(f, path)?) / delta)
}

/// `(K^{-1}DF)_j = Σ_{i: t_i > s_j} M[row(t_i)][j] ∇^i f`, on cells.
pub fn k_inv_gradient(f: &CylindricalFunctional, path: &VecPath, kernel: &DiscreteKernel) -> Result<Vec<f64>> {
    check_grids(path.grid(), kernel)?;
    let x = f.gather(path)?;
    let grad = f.grad_at(&x);
    let idx = f.indices(path.grid())?;
    Ok(spread_gradient(kernel, &grad, f.dim, &idx))
}

/// `Mᵀ` applied to a gradient concentrated on the observation indices.
pub fn spread_gradient(kernel: &DiscreteKernel, grad: &[f64], dim: usize, indices: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; kernel.n() * dim];
    for (i, &k) in indices.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let row = kernel.row(k - 1);
        let gi = &grad[i * dim..(i + 1) * dim];
        for (j, m) in row.iter().enumerate() {
            for (o, g) in out[j * dim..(j + 1) * dim].iter_mut().zip(gi) {
                *o += m * g;
            }
        }
    }
    out
}

fn check_grids(grid: &TimeGrid, kernel: &DiscreteKernel) -> Result<()> {
    if grid != kernel.grid() {
        return Err(FouError::Configuration("path and kernel grids differ".into()));
    }
    Ok(())
}

/// Shipped perturbation directions `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `h ≡ 1`.
    Const1,
    /// `h_t = t`.
    Ramp,
    /// `h_t = cos(2πt)`.
    Cosine,
    /// `h_t = tanh(X_t)` at the left point of each cell (adapted, bounded).
    AdaptedTanh,
}

pub const DIRECTION_LABELS: [&str; 4] = ["const1", "ramp", "cosine", "adapted-tanh"];

impl Direction {
    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "const1" => Ok(Self::Const1),
            "ramp" => Ok(Self::Ramp),
            "cosine" => Ok(Self::Cosine),
            "adapted-tanh" => Ok(Self::AdaptedTanh),
            other => Err(FouError::UnknownLabel {
                label: other.to_string(),
                expected: DIRECTION_LABELS.join(", "),
            }),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Const1 => "const1",
            Self::Ramp => "ramp",
            Self::Cosine => "cosine",
            Self::AdaptedTanh => "adapted-tanh",
        }
    }

    pub fn is_deterministic(self) -> bool {
        !matches!(self, Self::AdaptedTanh)
    }

    /// Cell values; `state` (the fOU path values on points) is needed for
    /// the adapted direction and ignored otherwise.
    pub fn values(self, grid: &TimeGrid, dim: usize, state: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = grid.n_steps();
        let mut out = vec![0.0; n * dim];
        for k in 0..n {
            let t = grid.midpoint(k);
            for c in 0..dim {
                out[k * dim + c] = match self {
                    Self::Const1 => 1.0,
                    Self::Ramp => t,
                    Self::Cosine => (2.0 * PI * t).cos(),
                    Self::AdaptedTanh => {
                        let x = state.ok_or_else(|| {
                            FouError::Configuration("adapted direction needs the state path".into())
                        })?;
                        x[k * dim + c].tanh()
                    }
                };
            }
        }
        Ok(out)
    }

    pub fn realize(self, grid: &TimeGrid, dim: usize, path: Option<&VecPath>) -> Result<CMElement> {
        CMElement::new(grid, dim, self.values(grid, dim, path.map(|p| p.values()))?)
    }
}

/// `Kh` for a direction realized on a path (or deterministically).
pub fn direction_kh(
    dir: Direction,
    kernel: &DiscreteKernel,
    dim: usize,
    state: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = dir.values(kernel.grid(), dim, state)?;
    let kh = apply_k(kernel, &h, dim)?;
    Ok((h, kh))
}
