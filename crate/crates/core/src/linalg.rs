//! Projections and least squares through thin orthonormal factors.
//!
//! Projection matrices are never formed as `n x n` arrays; `H v` is applied
//! as `Q (Q^T v)` with `Q` an orthonormal basis of the column span.

use nalgebra::{DMatrix, DVector, SVD};

use crate::data::{select_columns, ModelSupport};
use crate::error::{ReproError, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the span of a set of design columns.
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    q: DMatrix<f64>,
    requested: usize,
}

impl OrthoBasis {
    /// Basis of the column span of `m`, dropping directions below [`RANK_TOL`].
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let requested = m.ncols();
        if requested == 0 || n == 0 {
            return OrthoBasis { q: DMatrix::zeros(n, 0), requested };
        }
        let svd = SVD::new(m.clone(), true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| smax > 0.0 && s > RANK_TOL * smax)
            .map(|(k, _)| k)
            .collect();
        let q = select_columns(&u, &keep);
        OrthoBasis { q, requested }
    }

    pub fn empty(n: usize) -> Self {
        OrthoBasis { q: DMatrix::zeros(n, 0), requested: 0 }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// True when fewer independent directions were found than columns supplied.
    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.requested
    }

    /// Fails with [`ReproError::RankDeficient`] unless the basis has full column rank.
    pub fn require_full_rank(&self) -> Result<()> {
        if self.is_rank_deficient() {
            Err(ReproError::RankDeficient { expected: self.requested, rank: self.rank() })
        } else {
            Ok(())
        }
    }

    /// Coordinates `Q^T v`.
    pub fn coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.q.tr_mul(v)
    }

    /// `H v`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.rank() == 0 {
            return DVector::zeros(v.len());
        }
        &self.q * self.q.tr_mul(v)
    }

    /// `(I - H) v`.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.project(v)
    }

    /// `v^T H v`.
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        self.coords(v).norm_squared()
    }

    /// `(I - H) M`, column by column.
    pub fn residual_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank() == 0 {
            return m.clone();
        }
        m - &self.q * self.q.tr_mul(m)
    }
}

/// Orthonormal basis of `span(X_support)`.
pub fn ortho_basis(x: &DMatrix<f64>, support: &ModelSupport) -> Result<OrthoBasis> {
    if let Some(&j) = support.indices().last() {
        if j >= x.ncols() {
            return Err(ReproError::InvalidSupport(format!("index {} exceeds p = {}", j + 1, x.ncols())));
        }
    }
    if support.is_empty() {
        return Ok(OrthoBasis::empty(x.nrows()));
    }
    Ok(OrthoBasis::from_matrix(&select_columns(x, support.indices())))
}

/// Like [`ortho_basis`] but rejects the empty support.
pub fn ortho_basis_nonempty(x: &DMatrix<f64>, support: &ModelSupport) -> Result<OrthoBasis> {
    if support.is_empty() {
        return Err(ReproError::EmptySupport);
    }
    ortho_basis(x, support)
}

pub fn project(basis: &OrthoBasis, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != basis.n() {
        return Err(ReproError::DimensionMismatch(format!(
            "vector length {} vs basis dimension {}",
            v.len(),
            basis.n()
        )));
    }
    Ok(basis.project(v))
}

#[derive(Clone, Debug)]
pub struct LsFit {
    pub coef: DVector<f64>,
    pub fitted: DVector<f64>,
    pub rss: f64,
    pub rank: usize,
}

/// Least squares fit; the minimum-norm solution when `x` is rank deficient.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LsFit> {
    if x.nrows() != y.len() {
        return Err(ReproError::DimensionMismatch(format!(
            "design has {} rows, response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    let k = x.ncols();
    if k == 0 {
        return Ok(LsFit {
            coef: DVector::zeros(0),
            fitted: DVector::zeros(y.len()),
            rss: y.norm_squared(),
            rank: 0,
        });
    }
    let svd = SVD::new(x.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut coef = DVector::zeros(k);
    let mut rank = 0;
    for (idx, &s) in svd.singular_values.iter().enumerate() {
        if smax > 0.0 && s > RANK_TOL * smax {
            rank += 1;
            let c = u.column(idx).dot(y) / s;
            coef.axpy(c, &v_t.row(idx).transpose(), 1.0);
        }
    }
    let fitted = x * &coef;
    let rss = (y - &fitted).norm_squared();
    Ok(LsFit { coef, fitted, rss, rank })
}

/// Squared cosine of the angle between two vectors.
pub fn cosine_sim_sq(v1: &DVector<f64>, v2: &DVector<f64>) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(ReproError::DimensionMismatch(format!("{} vs {}", v1.len(), v2.len())));
    }
    let (a, b) = (v1.norm_squared(), v2.norm_squared());
    if a == 0.0 || b == 0.0 {
        return Err(ReproError::ZeroVector);
    }
    let c = v1.dot(v2);
    Ok((c * c / (a * b)).clamp(0.0, 1.0))
}
