//! Gauss-Legendre rules and power-graded variants for integrands with
//! algebraic endpoint singularities.
//!
//! An integrand behaving like `(x - lo)^p` near `lo` (with `p > -1`) becomes
//! polynomial-like after `x = lo + (hi - lo) w^q` with `q = 2 / (1 + p)`,
//! so a fixed-order rule converges quickly on the transformed problem.

use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on [-1, 1] by Newton iteration on P_n.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Integral over [lo, hi] of an integrand with a `(x - lo)^p` endpoint singularity.
    pub fn integrate_left_singular<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, p: f64, mut f: F) -> f64 {
        let q = grading_exponent(p);
        let len = hi - lo;
        self.integrate(0.0, 1.0, |w| {
            if w <= 0.0 {
                return 0.0;
            }
            let x = lo + len * w.powf(q);
            f(x) * len * q * w.powf(q - 1.0)
        })
    }

    /// Integral over [lo, hi] of an integrand with a `(hi - x)^p` endpoint singularity.
    pub fn integrate_right_singular<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, p: f64, mut f: F) -> f64 {
        let q = grading_exponent(p);
        let len = hi - lo;
        self.integrate(0.0, 1.0, |w| {
            if w <= 0.0 {
                return 0.0;
            }
            let x = hi - len * w.powf(q);
            f(x) * len * q * w.powf(q - 1.0)
        })
    }

    /// Geometric composite rule: panels shrink by half towards `lo`, the
    /// innermost one graded for a `(x - lo)^p` singularity. Suited to
    /// integrands that vary on the scale of the distance to `lo`.
    pub fn integrate_left_geometric<F: FnMut(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        p: f64,
        levels: usize,
        mut f: F,
    ) -> f64 {
        let len = hi - lo;
        let mut total = 0.0;
        let mut right = hi;
        for _ in 0..levels {
            let left = lo + 0.5 * (right - lo);
            total += self.integrate(left, right, &mut f);
            right = left;
        }
        if right - lo > 0.0 && len > 0.0 {
            total += self.integrate_left_singular(lo, right, p, &mut f);
        }
        total
    }

    /// Mirror of [`Self::integrate_left_geometric`] for a singularity at `hi`.
    pub fn integrate_right_geometric<F: FnMut(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        p: f64,
        levels: usize,
        mut f: F,
    ) -> f64 {
        let mut total = 0.0;
        let mut left = lo;
        for _ in 0..levels {
            let right = hi - 0.5 * (hi - left);
            total += self.integrate(left, right, &mut f);
            left = right;
        }
        if hi - left > 0.0 {
            total += self.integrate_right_singular(left, hi, p, &mut f);
        }
        total
    }
}

fn grading_exponent(p: f64) -> f64 {
    (2.0 / (1.0 + p)).max(1.0)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Hermite rule for the standard normal: `E[f(Z)] ≈ Σ w_i f(x_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on orthonormal Hermite polynomials, then rescaled
    /// from the `e^{-x²}` weight to the normal density.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Hermite order must be positive");
        let n = order;
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut z = 0.0;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let norm = std::f64::consts::PI.sqrt();
        Self {
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / norm).collect(),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

pub fn gh12() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(12))
}

pub fn gl4() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(4))
}

pub fn gl8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 8, 16, 32, 64] {
            let r = GaussLegendre::new(n);
            assert_relative_eq!(r.weights().iter().sum::<f64>(), 2.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let r = GaussLegendre::new(8);
        // degree 15 is the highest exactly integrated
        let v = r.integrate(0.0, 2.0, |x| x.powi(15));
        assert_relative_eq!(v, 2f64.powi(16) / 16.0, max_relative = 1e-13);
    }

    #[test]
    fn graded_handles_endpoint_singularity() {
        // ∫_0^1 x^{-0.8} dx = 5
        let v = gl32().integrate_left_singular(0.0, 1.0, -0.8, |x| x.powf(-0.8));
        assert_relative_eq!(v, 5.0, max_relative = 1e-12);
        // ∫_0^1 (1-x)^{-0.3} cos x dx, reference from mpmath
        let v = gl32().integrate_right_singular(0.0, 1.0, -0.3, |x| (1.0 - x).powf(-0.3) * x.cos());
        assert_relative_eq!(v, 1.134_771_500_827_72, max_relative = 1e-10);
    }

    #[test]
    fn hermite_moments() {
        for n in [1, 2, 5, 12, 20] {
            let r = GaussHermite::new(n);
            assert_relative_eq!(r.weights().iter().sum::<f64>(), 1.0, max_relative = 1e-13);
        }
        let r = gh12();
        assert_relative_eq!(r.expect(|z| z * z), 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.expect(|z| z.powi(4)), 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.expect(|z| z.powi(10)), 945.0, max_relative = 1e-11);
        // E[cos Z] = e^{-1/2}
        assert_relative_eq!(r.expect(f64::cos), (-0.5f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn geometric_panels_follow_log_scale() {
        // ∫_0^1 1/(x + 1e-6) dx = ln(1 + 1e6)
        let v = gl16().integrate_left_geometric(0.0, 1.0, 0.0, 30, |x| 1.0 / (x + 1e-6));
        assert_relative_eq!(v, (1.0f64 + 1e6).ln(), max_relative = 1e-9);
    }
}
