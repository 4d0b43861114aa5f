//! Brute-force diagnostics for small designs: model separation and the
//! exact penalized argmin with a known error realization.

use nalgebra::{DMatrix, DVector};

use crate::data::{for_each_combination, ModelSupport};
use crate::distributions::ln_choose;
use crate::error::{ReproError, Result};
use crate::linalg::ortho_basis;
use crate::search::refit_rss;

/// Largest number of subsets any enumeration here will visit.
pub const ENUMERATION_LIMIT: f64 = 1e6;

fn true_mean(x: &DMatrix<f64>, tau0: &ModelSupport, beta0: &[f64]) -> Result<DVector<f64>> {
    if beta0.len() != tau0.len() {
        return Err(ReproError::DimensionMismatch(format!(
            "{} coefficients for a support of size {}",
            beta0.len(),
            tau0.len()
        )));
    }
    tau0.validate(x.nrows(), x.ncols())?;
    let mut mu = DVector::zeros(x.nrows());
    for (&j, &b) in tau0.indices().iter().zip(beta0) {
        mu.axpy(b, &x.column(j), 1.0);
    }
    Ok(mu)
}

/// Separation between the true mean and its best approximation by any other
/// model of equal or smaller size, per missed covariate and per observation.
pub fn c_min(x: &DMatrix<f64>, tau0: &ModelSupport, beta0: &[f64]) -> Result<f64> {
    let (n, p) = x.shape();
    let k0 = tau0.len();
    let size = ln_choose(p, k0).exp();
    if size > ENUMERATION_LIMIT {
        return Err(ReproError::TooLarge(size));
    }
    let mu = true_mean(x, tau0, beta0)?;
    let mut best = f64::INFINITY;
    for k in 0..=k0 {
        for_each_combination(p, k, |c| {
            let tau = ModelSupport::new(c.to_vec());
            if tau == *tau0 {
                return;
            }
            let resid = ortho_basis(x, &tau).expect("indices in range").residual(&mu).norm_squared();
            let missed = tau0.difference(tau.indices()).len().max(1);
            best = best.min(resid / (n as f64 * missed as f64));
        });
    }
    Ok(if best.is_finite() { best } else { 0.0 })
}

/// Upper end `n (1 - gamma^2) C_min` of the tuning range over which the
/// penalized objective with the realized error recovers the true model.
pub fn recovery_lambda_upper(x: &DMatrix<f64>, tau0: &ModelSupport, beta0: &[f64], u_rel: &DVector<f64>) -> Result<f64> {
    let (n, p) = x.shape();
    let mu = true_mean(x, tau0, beta0)?;
    let cmin = c_min(x, tau0, beta0)?;
    let mut min_ratio = 1.0f64;
    for k in 0..tau0.len() {
        for_each_combination(p, k, |c| {
            let mut m = crate::data::select_columns(x, c);
            let last = m.ncols();
            m = m.insert_column(last, 0.0);
            m.column_mut(last).copy_from(u_rel);
            let with_u = crate::linalg::OrthoBasis::from_matrix(&m).residual(&mu).norm_squared();
            let without = ortho_basis(x, &ModelSupport::new(c.to_vec())).expect("in range").residual(&mu).norm_squared();
            if without > 0.0 {
                min_ratio = min_ratio.min(with_u / without);
            }
        });
    }
    Ok(n as f64 * min_ratio * cmin)
}

/// Exact minimizer over all supports of size at most `max_size` of
/// `lambda |tau| + min_{beta, sigma} ||y - X_tau beta - sigma u||^2`.
///
/// Ties go to the smaller support, then to the lexicographically first.
pub fn penalized_argmin(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    lambda: f64,
    max_size: usize,
) -> Result<ModelSupport> {
    let p = x.ncols();
    let total: f64 = (0..=max_size.min(p)).map(|k| ln_choose(p, k).exp()).sum();
    if total > ENUMERATION_LIMIT {
        return Err(ReproError::TooLarge(total));
    }
    let mut best = (f64::INFINITY, ModelSupport::empty());
    for k in 0..=max_size.min(p) {
        let mut err = None;
        for_each_combination(p, k, |c| {
            let tau = ModelSupport::new(c.to_vec());
            match refit_rss(y, x, &tau, Some(u)) {
                Ok(rss) => {
                    let obj = lambda * k as f64 + rss;
                    if obj < best.0 {
                        best = (obj, tau);
                    }
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(best.1)
}
