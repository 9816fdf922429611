//! Uniform time grids on [0, 1], sampled vector paths and seeded noise streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FouError, Result};

/// Uniform partition `t_k = k / n_steps` of [0, 1].
///
/// Cell `k` is `[t_k, t_{k+1}]`; integrands live on cells, paths on points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(FouError::InvalidGrid(format!(
                "n_steps must be at least 2, got {n_steps}"
            )));
        }
        Ok(Self {
            n_steps,
            dt: 1.0 / n_steps as f64,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            1.0
        } else {
            k as f64 * self.dt
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) * self.dt
    }

    /// Index of the grid point equal to `t`, if any.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t * self.n_steps as f64).round();
        if !(0.0..=self.n_steps as f64).contains(&k) || (k * self.dt - t).abs() > 1e-9 {
            return Err(FouError::Alignment { time: t });
        }
        Ok(k as usize)
    }
}

pub fn make_grid(n_steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(n_steps)
}

/// A path sampled on the points of a grid, `(n_steps + 1) x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VecPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl VecPath {
    pub fn zeros(grid: &TimeGrid, dim: usize) -> Self {
        Self {
            grid: grid.clone(),
            dim,
            values: vec![0.0; (grid.n_steps() + 1) * dim],
        }
    }

    pub fn from_values(grid: &TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        let expected = (grid.n_steps() + 1) * dim;
        if dim == 0 || values.len() != expected {
            return Err(FouError::Dimension {
                expected,
                got: values.len(),
            });
        }
        if values[..dim].iter().any(|v| *v != 0.0) {
            return Err(FouError::Domain("path must start at the origin".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FouError::Domain("path has non-finite entries".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            dim,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// Seed contract for every Monte Carlo consumer: `(master_seed, stream_id)`
/// fully determines the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Stream `offset` positions after this one.
    pub fn offset(&self, offset: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: self.stream_id.wrapping_add(offset),
        }
    }

    /// ChaCha8 keyed by the master seed, positioned on this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Brownian increments `ΔB_k ~ N(0, dt I_dim)`, `n_steps x dim` row-major.
pub fn sample_bm_increments(grid: &TimeGrid, dim: usize, rng: RngSpec) -> Vec<f64> {
    let mut gen = rng.generator();
    let sd = grid.dt().sqrt();
    (0..grid.n_steps() * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut gen);
            z * sd
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points() {
        let g = make_grid(4).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_grid(512).unwrap();
        assert_eq!(g.dt(), 1.0 / 512.0);
        assert_eq!(g.points().len(), 513);
    }

    #[test]
    fn grid_too_small() {
        assert!(matches!(make_grid(1), Err(FouError::InvalidGrid(_))));
        assert!(make_grid(0).is_err());
    }

    #[test]
    fn index_lookup() {
        let g = make_grid(8).unwrap();
        assert_eq!(g.index_of(0.25).unwrap(), 2);
        assert_eq!(g.index_of(1.0).unwrap(), 8);
        assert!(matches!(g.index_of(0.3), Err(FouError::Alignment { .. })));
    }

    #[test]
    fn increments_are_reproducible() {
        let g = make_grid(64).unwrap();
        let a = sample_bm_increments(&g, 2, RngSpec::new(7, 3));
        let b = sample_bm_increments(&g, 2, RngSpec::new(7, 3));
        let c = sample_bm_increments(&g, 2, RngSpec::new(7, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn increment_moments_within_four_se() {
        let g = make_grid(256).unwrap();
        let mut all = Vec::new();
        for s in 0..400 {
            all.extend(sample_bm_increments(&g, 1, RngSpec::new(11, s)));
        }
        let n = all.len() as f64;
        let dt = g.dt();
        let mean = all.iter().sum::<f64>() / n;
        assert!(mean.abs() <= 4.0 * (dt / n).sqrt(), "mean {mean}");
        let var = all.iter().map(|x| x * x).sum::<f64>() / n - mean * mean;
        // Var of the squared normal is 2 dt^2
        let se = (2.0 * dt * dt / n).sqrt();
        assert!((var - dt).abs() <= 4.0 * se, "var {var} vs {dt}");
    }

    #[test]
    fn path_must_start_at_zero() {
        let g = make_grid(2).unwrap();
        assert!(VecPath::from_values(&g, 1, vec![0.1, 0.0, 0.0]).is_err());
        assert!(VecPath::from_values(&g, 1, vec![0.0, 0.2, 0.1]).is_ok());
    }
}
