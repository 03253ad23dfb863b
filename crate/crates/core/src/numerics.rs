//! Shared numerical kernels: overflow-safe logistic primitives, Gauss-Hermite
//! quadrature, Monte Carlo summary statistics, minimum-norm least squares, and
//! the log-log slope fit used by the rate checks.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Risks at or below this threshold are treated as exact zeros by
/// [`fit_slope`]. Exact enumeration of a risk that is mathematically zero
/// leaves rounding dust around 1e-30; taking its log would wreck the fit,
/// so the exclusion rule for zero risks uses this cutoff rather than `== 0`.
pub const ZERO_RISK: f64 = 1e-18;

// ---------------------------------------------------------------------------
// seeding

/// SplitMix64 finalizer; the standard 64-bit avalanche.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives an independent stream seed from a base seed and a tag path, e.g.
/// `derive_seed(seed, &[REPLICATE_TAG, rep as u64])`. Every sampler in the
/// crate draws through seeds produced here, so parallel replication is
/// deterministic regardless of scheduling.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base ^ 0x6a09e667f3bcc909);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

// ---------------------------------------------------------------------------
// logistic primitives

/// ln(1 + e^t) without overflow: max(t,0) + ln(1 + e^{-|t|}).
pub fn log1pexp(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// 1 / (1 + e^{-t}), stable on both tails.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Softplus ln(1 + e^t); alias of [`log1pexp`] under its optimizer name.
pub fn softplus(t: f64) -> f64 {
    log1pexp(t)
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// log N(x; mean, var).
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature

/// Gauss-Hermite rule in the physicists' convention:
/// integral of f(t) e^{-t^2} dt ~= sum_i w_i f(t_i).
#[derive(Debug, Clone)]
pub struct GhRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GhRule {
    /// Nodes start as eigenvalues of the Golub-Welsch Jacobi matrix (zero
    /// diagonal, off-diagonal sqrt(i/2)) and are polished by Newton steps on
    /// the orthonormal Hermite recurrence. Weights come from the Christoffel
    /// function, w = 1 / sum_{k<n} h_k(t)^2: the eigenvector-squared route
    /// cannot represent the extreme weights (true size ~1e-75 at n = 96,
    /// below the eigensolver floor), and integrands that grow against the
    /// Gaussian weight then explode by dozens of orders of magnitude.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut j = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            let b = (i as f64 / 2.0).sqrt();
            j[(i - 1, i)] = b;
            j[(i, i - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(j);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);
        let weights: Vec<f64> = nodes
            .iter_mut()
            .map(|t| {
                for _ in 0..2 {
                    let (hn, hn_prev) = hermite_orthonormal_pair(n, *t);
                    // h_n'(x) = sqrt(2n) h_{n-1}(x)
                    *t -= hn / ((2.0 * n as f64).sqrt() * hn_prev);
                }
                let mut sum = 0.0;
                let mut prev = 0.0;
                let mut cur = std::f64::consts::PI.powf(-0.25);
                for k in 0..n {
                    sum += cur * cur;
                    let next = *t * (2.0 / (k as f64 + 1.0)).sqrt() * cur
                        - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
                    prev = cur;
                    cur = next;
                }
                1.0 / sum
            })
            .collect();
        GhRule { nodes, weights }
    }

    /// Number of nodes in the rule.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// E[f(W)] for W ~ N(mean, var).
    pub fn expect(&self, mean: f64, var: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let s = (2.0 * var).sqrt();
        let inv = 1.0 / std::f64::consts::PI.sqrt();
        let mut acc = 0.0;
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mean + s * t);
        }
        acc * inv
    }

    /// The points (w_i/sqrt(pi), mean + sqrt(2 var) t_i) realizing
    /// [`GhRule::expect`] as a weighted sum; handy for tensorized 2-D use.
    pub fn scaled(&self, mean: f64, var: f64) -> Vec<(f64, f64)> {
        let s = (2.0 * var).sqrt();
        let inv = 1.0 / std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| (w * inv, mean + s * t))
            .collect()
    }
}

/// (h_n(x), h_{n-1}(x)) for the Hermite family orthonormal w.r.t. exp(-x^2).
fn hermite_orthonormal_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let next = x * (2.0 / (k as f64 + 1.0)).sqrt() * cur
            - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Process-wide cache of quadrature rules; building a 128-node rule costs a
/// dense symmetric eigendecomposition, so share them.
pub fn gh_rule(n: usize) -> Arc<GhRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GhRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("gh rule cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(GhRule::new(n))).clone()
}

// ---------------------------------------------------------------------------
// summary statistics

/// Sample mean and its standard error (sample sd / sqrt(n)).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1, "mean of empty slice");
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Unbiased sample variance together with its jackknife standard error.
/// Leave-one-out variances are computed from running sums in O(n); data is
/// centered first so the sums do not cancel catastrophically.
pub fn variance_jackknife(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 3, "jackknife variance needs n >= 3");
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let c: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let s1: f64 = c.iter().sum();
    let s2: f64 = c.iter().map(|x| x * x).sum();
    let var = s2 / (nf - 1.0);

    let m = nf - 1.0;
    let mut loo = Vec::with_capacity(n);
    for &x in &c {
        let s1p = s1 - x;
        let s2p = s2 - x * x;
        loo.push((s2p - s1p * s1p / m) / (m - 1.0));
    }
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let ss: f64 = loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).sum();
    (var, ((nf - 1.0) / nf * ss).sqrt())
}

/// Median; averages the middle pair on even counts.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// slope fit

/// Result of the log-log rate fit.
#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Rows dropped by the zero-risk exclusion rule.
    pub excluded: usize,
    /// The (m, median risk) points that entered the regression.
    pub points: Vec<(f64, f64)>,
}

/// Least squares of ln(median risk) on ln(m) over `(m, risk)` rows.
///
/// Rows with risk <= [`ZERO_RISK`] are excluded (and counted); medians are
/// taken per distinct m over the surviving rows. Fewer than 3 distinct m
/// values after exclusion is an error.
pub fn fit_slope(rows: &[(usize, f64)]) -> Result<SlopeFit> {
    let mut excluded = 0usize;
    let mut by_m: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for &(m, risk) in rows {
        if !(risk > ZERO_RISK) {
            excluded += 1;
            continue;
        }
        by_m.entry(m).or_default().push(risk);
    }
    let points: Vec<(f64, f64)> = by_m
        .into_iter()
        .map(|(m, risks)| (m as f64, median(&risks)))
        .collect();
    if points.len() < 3 {
        return Err(Error::SlopePoints {
            available: points.len(),
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
        excluded,
        points,
    })
}

// ---------------------------------------------------------------------------
// least squares

/// Minimum-norm least squares: argmin ||phi w - rhs|| with the smallest
/// ||w|| among minimizers when `ridge == 0` (SVD pseudo-inverse, relative
/// cutoff 1e-12), or the ridge solution for `ridge > 0`.
pub fn min_norm_lstsq(phi: &DMatrix<f64>, rhs: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let (n, m) = phi.shape();
    assert_eq!(n, rhs.len(), "row count mismatch");
    if ridge > 0.0 {
        // Solve in whichever space is smaller; both are SPD for ridge > 0.
        if m <= n {
            let g = phi.transpose() * phi + DMatrix::identity(m, m) * ridge;
            let b = phi.transpose() * rhs;
            g.cholesky()
                .map(|ch| ch.solve(&b))
                .unwrap_or_else(|| pinv_solve(phi, rhs))
        } else {
            let k = phi * phi.transpose() + DMatrix::identity(n, n) * ridge;
            let alpha = k.clone().cholesky().map(|ch| ch.solve(rhs)).unwrap_or_else(|| {
                nalgebra::SVD::new(k, true, true)
                    .solve(rhs, 1e-12)
                    .expect("svd solve")
            });
            phi.transpose() * alpha
        }
    } else {
        pinv_solve(phi, rhs)
    }
}

fn pinv_solve(phi: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let svd = nalgebra::SVD::new(phi.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * 1e-12;
    svd.solve(rhs, tol).expect("svd least squares")
}
