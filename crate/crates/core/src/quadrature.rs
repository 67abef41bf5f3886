//! Quadrature rules for expectations over Gaussian and exponential
//! measures: Gauss-Hermite and Gauss-Laguerre nodes via the
//! Golub-Welsch eigenvalue method, plus an adaptive Gauss-Legendre
//! fallback for sharp integrands and test oracles.

use crate::{Error, Result};
use num_complex::Complex64;

/// Eigenvalues of a symmetric tridiagonal matrix together with the
/// first components of the normalized eigenvectors, by implicit-shift
/// QL iterations. `off[i]` couples rows `i` and `i+1`.
fn tridiag_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let mut first = vec![0.0; n];
    first[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find a negligible off-diagonal element.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Quadrature(
                    "tridiagonal QL failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // Accumulate the rotation on the tracked first row.
                f = first[i + 1];
                first[i + 1] = s * first[i] + c * f;
                first[i] = c * first[i] - s * f;
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    // Sort ascending by eigenvalue.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let nodes = idx.iter().map(|&i| d[i]).collect();
    let firsts = idx.iter().map(|&i| first[i]).collect();
    Ok((nodes, firsts))
}

/// Nodes and weights of the physicists' Gauss-Hermite rule:
/// `int exp(-x^2) f(x) dx ~= sum_i w_i f(x_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Quadrature("order must be at least 1".into()));
        }
        let diag = vec![0.0; order];
        let off: Vec<f64> = (0..order).map(|i| ((i + 1) as f64 / 2.0).sqrt()).collect();
        let (nodes, firsts) = tridiag_eigen(&diag, &off)?;
        let mu0 = std::f64::consts::PI.sqrt();
        let weights = firsts.iter().map(|&v| mu0 * v * v).collect();
        Ok(GaussHermite { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `int exp(-x^2) f(x) dx`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Expectation of `f` under a real standard normal.
    pub fn expect_std_normal(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = std::f64::consts::PI.sqrt();
        self.integrate(|x| f(std::f64::consts::SQRT_2 * x)) / scale
    }

    /// Expectation of `f` under a circularly symmetric unit-variance
    /// complex normal (tensor rule over the real and imaginary parts).
    pub fn expect_std_complex_normal(&self, mut f: impl FnMut(Complex64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&xr, &wr) in self.nodes.iter().zip(&self.weights) {
            for (&xi, &wi) in self.nodes.iter().zip(&self.weights) {
                acc += wr * wi * f(Complex64::new(xr, xi));
            }
        }
        acc / std::f64::consts::PI
    }

    /// Expectation of `f(z)` for `z ~ CN(mean, var)`.
    pub fn expect_complex_normal(
        &self,
        mean: Complex64,
        var: f64,
        mut f: impl FnMut(Complex64) -> f64,
    ) -> f64 {
        let sd = var.sqrt();
        self.expect_std_complex_normal(|z| f(mean + sd * z))
    }
}

/// Nodes and weights of the Gauss-Laguerre rule:
/// `int_0^inf exp(-x) f(x) dx ~= sum_i w_i f(x_i)`.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLaguerre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Quadrature("order must be at least 1".into()));
        }
        let diag: Vec<f64> = (0..order).map(|i| 2.0 * i as f64 + 1.0).collect();
        let off: Vec<f64> = (0..order).map(|i| (i + 1) as f64).collect();
        let (nodes, firsts) = tridiag_eigen(&diag, &off)?;
        let weights = firsts.iter().map(|&v| v * v).collect();
        Ok(GaussLaguerre { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `int_0^inf exp(-x) f(x) dx`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Expectation of `f(u)` for `u ~ Exponential(mean)`, i.e. the
    /// squared modulus of a `CN(0, mean)` variable.
    pub fn expect_exponential(&self, mean: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.integrate(|x| f(mean * x))
    }

    /// `int_lo^inf f(u) exp(-u/scale) / scale du` by shifting the rule:
    /// substituting `u = lo + scale x` gives
    /// `exp(-lo/scale) int_0^inf f(lo + scale x) exp(-x) dx`.
    pub fn integrate_shifted_exponential(
        &self,
        lo: f64,
        scale: f64,
        mut f: impl FnMut(f64) -> f64,
    ) -> f64 {
        let damp = (-lo / scale).exp();
        if damp == 0.0 {
            return 0.0;
        }
        damp * self.integrate(|x| f(lo + scale * x))
    }
}

// ---------------------------------------------------------------------------
// Fixed-panel and adaptive Gauss-Legendre
// ---------------------------------------------------------------------------

const GL10_NODES: [f64; 5] = [
    0.148874338981631,
    0.433395394129247,
    0.679409568299024,
    0.865063366688985,
    0.973906528517172,
];
const GL10_WEIGHTS: [f64; 5] = [
    0.295524224714753,
    0.269266719309996,
    0.219086362515982,
    0.149451349150581,
    0.066671344308688,
];

fn gl10(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for i in 0..5 {
        acc += GL10_WEIGHTS[i] * (f(mid + half * GL10_NODES[i]) + f(mid - half * GL10_NODES[i]));
    }
    acc * half
}

/// Composite 10-point Gauss-Legendre over `panels` equal subintervals.
pub fn integrate_panels(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * width;
            gl10(&mut f, lo, lo + width)
        })
        .sum()
}

fn adaptive_rec(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gl10(f, a, mid);
    let right = gl10(f, mid, b);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= tol {
        return refined;
    }
    adaptive_rec(f, a, mid, left, 0.5 * tol, depth - 1)
        + adaptive_rec(f, mid, b, right, 0.5 * tol, depth - 1)
}

/// Adaptive composite Gauss-Legendre integration on `[a, b]` to an
/// absolute tolerance. Robust against sharp but bounded integrands.
pub fn integrate_adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // Seed with a fixed split so antisymmetric integrands do not fool
    // the error estimate.
    let thirds = [a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b];
    let mut acc = 0.0;
    for w in thirds.windows(2) {
        let whole = gl10(&mut f, w[0], w[1]);
        acc += adaptive_rec(&mut f, w[0], w[1], whole, tol / 3.0, 48);
    }
    acc
}

/// Expectation of `f` under a real normal via adaptive quadrature over
/// nine standard deviations.
pub fn expect_normal_adaptive(mean: f64, var: f64, mut f: impl FnMut(f64) -> f64, tol: f64) -> f64 {
    if var <= 0.0 {
        return f(mean);
    }
    let sd = var.sqrt();
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    integrate_adaptive(
        |x| norm * (-(x - mean) * (x - mean) / (2.0 * var)).exp() * f(x),
        mean - 9.0 * sd,
        mean + 9.0 * sd,
        tol,
    )
}

/// Expectation of `f(z)` for `z ~ CN(mean, var)` via nested adaptive
/// quadrature (real and imaginary parts are independent normals of
/// variance `var / 2`).
pub fn expect_complex_normal_adaptive(
    mean: Complex64,
    var: f64,
    mut f: impl FnMut(Complex64) -> f64,
    tol: f64,
) -> f64 {
    let half = var / 2.0;
    expect_normal_adaptive(
        mean.re,
        half,
        |re| expect_normal_adaptive(mean.im, half, |im| f(Complex64::new(re, im)), tol * 0.1),
        tol,
    )
}
