//! Deterministic Monte Carlo plumbing: ordered parallel maps and
//! sample statistics with standard errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FouError, Result};

/// Runs `f(i)` for `i in 0..n` in parallel and returns the results in index
/// order, so any later reduction is independent of thread scheduling.
pub fn par_map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Applies `f` to consecutive index ranges of length `chunk` (the last may
/// be shorter) in parallel and returns the per-chunk results in order.
/// Merging them sequentially gives results independent of the thread count.
pub fn par_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| f(c * chunk..((c + 1) * chunk).min(n)))
        .collect()
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    MeanSe {
        mean: mean(xs),
        se: (variance(xs) / xs.len() as f64).sqrt(),
    }
}

pub fn require_samples(got: usize, min: usize) -> Result<()> {
    if got < min {
        Err(FouError::InsufficientSamples { min, got })
    } else {
        Ok(())
    }
}

/// z-score of `value` against `target` given its standard error; an exact
/// match with zero spread gives 0.
pub fn z_score(value: f64, target: f64, se: f64) -> f64 {
    let diff = value - target;
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY.copysign(diff)
    }
}
