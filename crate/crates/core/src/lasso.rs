//! Adaptive LASSO path by cyclic coordinate descent.
//!
//! Minimizes `0.5 * ||y - X b||^2 + lambda * sum_j w_j |b_j|` over a
//! decreasing grid of `lambda` with warm starts. An optional unpenalized
//! column `u` is handled by partialling it out of `y` and `X` first, which
//! is exactly equivalent to leaving its coefficient free.

use nalgebra::{DMatrix, DVector};

use crate::data::ModelSupport;
use crate::error::{ReproError, Result};

/// Offset in the adaptive weights `w_j = 1 / (|b_j| + offset)`.
pub const WEIGHT_OFFSET: f64 = 1e-4;
/// Ridge pilot penalty as a fraction of `tr(X^T X) / p`.
pub const RIDGE_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaGrid {
    /// `len` log-spaced values from `lambda_max` down to `min_ratio * lambda_max`.
    Auto { len: usize, min_ratio: f64 },
    /// User grid; must be positive and strictly decreasing.
    Fixed(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto { len: 100, min_ratio: 1e-3 }
    }
}

impl LambdaGrid {
    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaGrid::Auto { len, min_ratio } => {
                if *len == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(ReproError::InvalidConfig("auto grid needs len >= 1 and ratio in (0,1)".into()));
                }
            }
            LambdaGrid::Fixed(g) => {
                if g.is_empty() || g.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    return Err(ReproError::InvalidConfig("lambda grid must be positive and finite".into()));
                }
                if g.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(ReproError::InvalidConfig("lambda grid must be strictly decreasing".into()));
                }
            }
        }
        Ok(())
    }

    fn values(&self, lambda_max: f64) -> Vec<f64> {
        match self {
            LambdaGrid::Fixed(g) => g.clone(),
            LambdaGrid::Auto { len, min_ratio } => {
                if *len == 1 {
                    return vec![lambda_max];
                }
                let step = min_ratio.ln() / (*len as f64 - 1.0);
                (0..*len).map(|k| lambda_max * (step * k as f64).exp()).collect()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoOptions {
    /// Convergence threshold on `||x_j||^2 * (change in b_j)^2`, relative to `||y||^2`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Stop the path at the first lambda whose support exceeds this size.
    pub max_support: Option<usize>,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { tol: 1e-18, max_sweeps: 100_000, max_support: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub support: ModelSupport,
    /// Coefficients aligned with `support`.
    pub coef: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LassoPath {
    pub points: Vec<PathPoint>,
    pub weights: Vec<f64>,
    pub lambda_max: f64,
    /// True when the path stopped early on `max_support`.
    pub truncated: bool,
}

/// Ridge regression used as the pilot estimate for adaptive weights.
///
/// Solves in the dual (`n x n`) form when `p > n`.
pub struct RidgePilot {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    dual: bool,
}

impl RidgePilot {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let dual = p > n;
        let mut gram = if dual { x * x.transpose() } else { x.tr_mul(x) };
        let penalty = RIDGE_FRACTION * gram.trace() / p as f64;
        let penalty = if penalty > 0.0 { penalty } else { RIDGE_FRACTION };
        for i in 0..gram.nrows() {
            gram[(i, i)] += penalty;
        }
        let chol = gram.cholesky().expect("ridge gram is positive definite");
        RidgePilot { chol, dual }
    }

    pub fn coefficients(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        if self.dual {
            x.tr_mul(&self.chol.solve(y))
        } else {
            self.chol.solve(&x.tr_mul(y))
        }
    }

    pub fn weights(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
        self.coefficients(x, y).iter().map(|b| 1.0 / (b.abs() + WEIGHT_OFFSET)).collect()
    }
}

/// Adaptive weights from a ridge pilot fit of `y` on `x`.
pub fn ridge_pilot_weights(y: &DVector<f64>, x: &DMatrix<f64>) -> Vec<f64> {
    RidgePilot::new(x).weights(x, y)
}

/// Removes the component along `u` from `y` and from every column of `x`.
pub fn partial_out(u: &DVector<f64>, y: &DVector<f64>, x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let uu = u.norm_squared();
    if uu == 0.0 {
        return Err(ReproError::ZeroVector);
    }
    let unit = u / uu.sqrt();
    let y_t = y - &unit * unit.dot(y);
    let proj = x.tr_mul(&unit);
    let mut x_t = x.clone();
    x_t.ger(-1.0, &unit, &proj, 1.0);
    Ok((y_t, x_t))
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted LASSO path with fixed penalty weights.
pub fn weighted_lasso_path(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
    grid: &LambdaGrid,
    opts: &LassoOptions,
) -> Result<LassoPath> {
    let (n, p) = x.shape();
    if y.len() != n || weights.len() != p {
        return Err(ReproError::DimensionMismatch(format!(
            "y has {} entries, X is {}x{}, {} weights",
            y.len(),
            n,
            p,
            weights.len()
        )));
    }
    grid.validate()?;
    let xs = x.as_slice();
    let col = |j: usize| &xs[j * n..(j + 1) * n];
    let col_sq: Vec<f64> = (0..p).map(|j| dot(col(j), col(j))).collect();
    let ys = y.as_slice();

    let lambda_max = (0..p)
        .filter(|&j| col_sq[j] > 0.0)
        .map(|j| dot(col(j), ys).abs() / weights[j])
        .fold(0.0, f64::max);
    let grid_values = grid.values(lambda_max);

    let mut path = LassoPath { points: Vec::new(), weights: weights.to_vec(), lambda_max, truncated: false };
    if lambda_max <= 0.0 {
        for &lambda in &grid_values {
            path.points.push(PathPoint { lambda, support: ModelSupport::empty(), coef: Vec::new() });
        }
        return Ok(path);
    }

    let tol_abs = opts.tol * y.norm_squared();
    let mut beta = vec![0.0; p];
    let mut r: Vec<f64> = ys.to_vec();
    let mut active: Vec<usize> = Vec::new();

    let update = |j: usize, lambda: f64, beta: &mut [f64], r: &mut [f64]| -> f64 {
        let cs = col_sq[j];
        if cs == 0.0 {
            return 0.0;
        }
        let cj = col(j);
        let old = beta[j];
        let z = dot(cj, r) + cs * old;
        let new = soft_threshold(z, lambda * weights[j]) / cs;
        if new != old {
            let delta = new - old;
            for (ri, xi) in r.iter_mut().zip(cj) {
                *ri -= delta * xi;
            }
            beta[j] = new;
            cs * delta * delta
        } else {
            0.0
        }
    };

    for &lambda in &grid_values {
        let mut sweeps = 0usize;
        let mut last = f64::INFINITY;
        loop {
            let mut max_d = 0.0f64;
            for j in 0..p {
                max_d = max_d.max(update(j, lambda, &mut beta, &mut r));
            }
            sweeps += 1;
            last = last.min(max_d);
            if max_d <= tol_abs {
                break;
            }
            active.clear();
            active.extend((0..p).filter(|&j| beta[j] != 0.0));
            loop {
                let mut max_a = 0.0f64;
                for &j in &active {
                    max_a = max_a.max(update(j, lambda, &mut beta, &mut r));
                }
                sweeps += 1;
                if max_a <= tol_abs {
                    break;
                }
                if sweeps > opts.max_sweeps {
                    return Err(ReproError::NonConvergence { lambda, gap: max_a });
                }
            }
            if sweeps > opts.max_sweeps {
                return Err(ReproError::NonConvergence { lambda, gap: last });
            }
        }
        let idx: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        if let Some(cap) = opts.max_support {
            if idx.len() > cap {
                path.truncated = true;
                break;
            }
        }
        let coef = idx.iter().map(|&j| beta[j]).collect();
        path.points.push(PathPoint { lambda, support: ModelSupport::new(idx), coef });
    }
    Ok(path)
}

/// Adaptive LASSO path of `y` on `x`, with `unpenalized` (when given) as a
/// free column whose coefficient is not penalized and not part of the support.
pub fn adaptive_lasso_path(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    unpenalized: Option<&DVector<f64>>,
    grid: &LambdaGrid,
    opts: &LassoOptions,
) -> Result<LassoPath> {
    if y.len() != x.nrows() {
        return Err(ReproError::DimensionMismatch(format!("y has {} entries, X has {} rows", y.len(), x.nrows())));
    }
    match unpenalized {
        None => {
            let w = ridge_pilot_weights(y, x);
            weighted_lasso_path(y, x, &w, grid, opts)
        }
        Some(u) => {
            if u.len() != y.len() {
                return Err(ReproError::DimensionMismatch("unpenalized column length".into()));
            }
            let (y_t, x_t) = partial_out(u, y, x)?;
            let w = ridge_pilot_weights(&y_t, &x_t);
            weighted_lasso_path(&y_t, &x_t, &w, grid, opts)
        }
    }
}

/// Largest violation of the LASSO optimality conditions at `point`.
///
/// With `unpenalized`, the free coefficient is profiled out first.
pub fn kkt_violation(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    unpenalized: Option<&DVector<f64>>,
    weights: &[f64],
    point: &PathPoint,
) -> f64 {
    let mut r = y.clone();
    for (&j, &b) in point.support.indices().iter().zip(&point.coef) {
        r.axpy(-b, &x.column(j), 1.0);
    }
    if let Some(u) = unpenalized {
        let sigma = u.dot(&r) / u.norm_squared();
        r.axpy(-sigma, u, 1.0);
    }
    let mut worst = 0.0f64;
    for j in 0..x.ncols() {
        let g = x.column(j).dot(&r);
        let t = point.lambda * weights[j];
        let v = match point.support.indices().binary_search(&j) {
            Ok(k) => (g - t * point.coef[k].signum()).abs(),
            Err(_) => (g.abs() - t).max(0.0),
        };
        worst = worst.max(v);
    }
    worst
}
