//! Coefficient confidence sets that account for model uncertainty.
//!
//! Each candidate model contributes an F-pivot ellipsoid for the coefficients
//! of interest (coordinates outside the model are pinned to zero); the
//! confidence set is the union over candidates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{select_columns, Dataset, ModelSupport};
use crate::distributions::f_quantile;
use crate::error::{check_level, ReproError, Result};
use crate::linalg::ortho_basis;
use crate::model_cs::{model_confidence_set, ModelConfidenceSet};
use crate::rng::{sample_gaussian, Stream, TAG_FUNCTIONAL};
use crate::search::{search_candidates, CandidateSet, SearchConfig};

/// Condition number at which a transform is rejected.
pub const MAX_TRANSFORM_COND: f64 = 1e8;

/// Default Monte-Carlo draws per region for nonlinear functionals.
pub const DEFAULT_FUNCTIONAL_SAMPLES: usize = 10_000;

const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// `{b : (b_A - center)' shape (b_A - center) <= radius2, b_pinned = 0}` over
/// the coordinates of a fixed index set; `A` are the active coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "RegionJson", try_from = "RegionJson")]
pub struct EllipsoidRegion {
    pub support: ModelSupport,
    pub active: ModelSupport,
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub radius2: f64,
    pub pinned: ModelSupport,
}

#[derive(Serialize, Deserialize)]
struct RegionJson {
    support: ModelSupport,
    active: ModelSupport,
    center: Vec<f64>,
    shape: Vec<f64>,
    radius2: f64,
    pinned: ModelSupport,
}

impl From<EllipsoidRegion> for RegionJson {
    fn from(r: EllipsoidRegion) -> Self {
        RegionJson {
            support: r.support,
            active: r.active,
            center: r.center.as_slice().to_vec(),
            shape: r.shape.transpose().as_slice().to_vec(),
            radius2: r.radius2,
            pinned: r.pinned,
        }
    }
}

impl TryFrom<RegionJson> for EllipsoidRegion {
    type Error = String;

    fn try_from(r: RegionJson) -> std::result::Result<Self, String> {
        let k = r.active.len();
        if r.center.len() != k || r.shape.len() != k * k {
            return Err(format!("region with {k} active coordinates has malformed center or shape"));
        }
        Ok(EllipsoidRegion {
            support: r.support,
            active: r.active,
            center: DVector::from_vec(r.center),
            shape: DMatrix::from_row_slice(k, k, &r.shape),
            radius2: r.radius2,
            pinned: r.pinned,
        })
    }
}

impl EllipsoidRegion {
    /// Quadratic form `(b_A - center)' shape (b_A - center)`, or infinity when
    /// a pinned coordinate is nonzero. `beta` is indexed like `lambda_set`.
    pub fn distance2(&self, lambda_set: &ModelSupport, beta: &DVector<f64>) -> f64 {
        let mut d = DVector::zeros(self.active.len());
        let mut a = 0;
        for (pos, &j) in lambda_set.indices().iter().enumerate() {
            if self.active.contains(j) {
                d[a] = beta[pos] - self.center[a];
                a += 1;
            } else if beta[pos] != 0.0 {
                return f64::INFINITY;
            }
        }
        d.dot(&(&self.shape * &d))
    }

    pub fn contains(&self, lambda_set: &ModelSupport, beta: &DVector<f64>) -> bool {
        self.distance2(lambda_set, beta) <= self.radius2
    }

    /// Half-width of the projection onto the direction `c` over the active coordinates.
    fn support_halfwidth(&self, c: &DVector<f64>) -> Result<f64> {
        let k = self.active.len();
        if k == 0 || self.radius2 == 0.0 {
            return Ok(0.0);
        }
        let chol = self.shape.clone().cholesky().ok_or(ReproError::RankDeficient { expected: k, rank: k - 1 })?;
        Ok((self.radius2 * c.dot(&chol.solve(c))).max(0.0).sqrt())
    }

    /// Expands an active-coordinate vector to the full `lambda_set` layout.
    fn embed(&self, lambda_set: &ModelSupport, active_values: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(lambda_set.len());
        let mut a = 0;
        for (pos, &j) in lambda_set.indices().iter().enumerate() {
            if self.active.contains(j) {
                out[pos] = active_values[a];
                a += 1;
            }
        }
        out
    }

    /// Restricts a `lambda_set`-indexed vector to the active coordinates.
    fn restrict(&self, lambda_set: &ModelSupport, full: &DVector<f64>) -> DVector<f64> {
        let vals: Vec<f64> = lambda_set
            .indices()
            .iter()
            .enumerate()
            .filter(|(_, j)| self.active.contains(**j))
            .map(|(pos, _)| full[pos])
            .collect();
        DVector::from_vec(vals)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionUnion {
    pub regions: Vec<EllipsoidRegion>,
    pub alpha: f64,
    pub lambda_set: ModelSupport,
    /// Some candidate excludes every coordinate of the index set, so `0` is a member.
    pub includes_zero_atom: bool,
    /// Candidates whose region could not be formed (rank deficiency).
    #[serde(default)]
    pub dropped: usize,
    /// Share of coordinates pinned to zero in every region (joint sets only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrunk_proportion: Option<f64>,
}

impl RegionUnion {
    pub fn contains(&self, beta: &DVector<f64>) -> bool {
        self.regions.iter().any(|r| r.contains(&self.lambda_set, beta))
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Union of closed intervals, plus an optional atom at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    pub intervals: Vec<[f64; 2]>,
    pub zero_atom: bool,
}

impl IntervalUnion {
    /// Sorts and merges overlapping intervals.
    pub fn new(mut raw: Vec<[f64; 2]>, zero_atom: bool) -> Self {
        raw.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut intervals: Vec<[f64; 2]> = Vec::with_capacity(raw.len());
        for iv in raw {
            match intervals.last_mut() {
                Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
                _ => intervals.push(iv),
            }
        }
        IntervalUnion { intervals, zero_atom }
    }

    /// Total length of the merged intervals; atoms have length zero.
    pub fn width(&self) -> f64 {
        self.intervals.iter().map(|iv| iv[1] - iv[0]).sum()
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.zero_atom && v == 0.0) || self.intervals.iter().any(|iv| iv[0] <= v && v <= iv[1])
    }
}

fn check_lambda(lambda_set: &ModelSupport, p: usize) -> Result<()> {
    if lambda_set.is_empty() {
        return Err(ReproError::InvalidSupport("index set of interest is empty".into()));
    }
    match lambda_set.indices().last() {
        Some(&j) if j >= p => Err(ReproError::InvalidSupport(format!("index {} exceeds p = {p}", j + 1))),
        _ => Ok(()),
    }
}

/// F-pivot statistic for `beta_lambda` under model `tau`.
///
/// Infinite when a coordinate outside `tau` is nonzero, zero when the index
/// set misses `tau` entirely (and `beta_lambda = 0`).
pub fn nuclear_subset(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda_set: &ModelSupport,
    beta_lambda: &DVector<f64>,
    tau: &ModelSupport,
) -> Result<f64> {
    let (n, p) = x.shape();
    check_lambda(lambda_set, p)?;
    tau.validate(n, p)?;
    if beta_lambda.len() != lambda_set.len() || y.len() != n {
        return Err(ReproError::DimensionMismatch(format!(
            "beta has {} entries for {} indices, y has {} for {n} rows",
            beta_lambda.len(),
            lambda_set.len(),
            y.len()
        )));
    }
    for (pos, &j) in lambda_set.indices().iter().enumerate() {
        if !tau.contains(j) && beta_lambda[pos] != 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    let active = tau.intersection(lambda_set.indices());
    if active.is_empty() {
        return Ok(0.0);
    }
    let nuisance = tau.difference(lambda_set.indices());
    let mut r = y.clone();
    for (pos, &j) in lambda_set.indices().iter().enumerate() {
        if beta_lambda[pos] != 0.0 {
            r.axpy(-beta_lambda[pos], &x.column(j), 1.0);
        }
    }
    let h_tau = ortho_basis(x, tau)?;
    let h_nuis = ortho_basis(x, &nuisance)?;
    let denom = h_tau.residual(&r).norm_squared();
    if denom < DEGENERATE_DENOMINATOR {
        return Err(ReproError::DegenerateDenominator(denom));
    }
    let num = (h_tau.quad(&r) - h_nuis.quad(&r)).max(0.0);
    Ok((num / active.len() as f64) / (denom / (n - tau.len()) as f64))
}

/// Joint statistic over all `p` coefficients under model `tau`.
pub fn nuclear_joint(y: &DVector<f64>, x: &DMatrix<f64>, beta: &DVector<f64>, tau: &ModelSupport) -> Result<f64> {
    let all = ModelSupport::new((0..x.ncols()).collect());
    nuclear_subset(y, x, &all, beta, tau)
}

/// Level-`alpha` region for the coefficients on `lambda_set` under model `tau`.
pub fn subset_region(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda_set: &ModelSupport,
    tau: &ModelSupport,
    alpha: f64,
) -> Result<EllipsoidRegion> {
    check_level(alpha)?;
    let (n, p) = x.shape();
    check_lambda(lambda_set, p)?;
    tau.validate(n, p)?;
    let active = tau.intersection(lambda_set.indices());
    let pinned = lambda_set.difference(tau.indices());
    if active.is_empty() {
        return Ok(EllipsoidRegion {
            support: tau.clone(),
            active,
            center: DVector::zeros(0),
            shape: DMatrix::zeros(0, 0),
            radius2: 0.0,
            pinned,
        });
    }
    let h_tau = ortho_basis(x, tau)?;
    h_tau.require_full_rank()?;
    let nuisance = tau.difference(lambda_set.indices());
    let z = ortho_basis(x, &nuisance)?.residual_matrix(&select_columns(x, active.indices()));
    let shape = z.tr_mul(&z);
    let k = active.len();
    let chol = shape.clone().cholesky().ok_or(ReproError::RankDeficient { expected: k, rank: k - 1 })?;
    let center = chol.solve(&z.tr_mul(y));
    let df = n - tau.len();
    let sigma2 = h_tau.residual(y).norm_squared() / df as f64;
    let radius2 = k as f64 * sigma2 * f_quantile(k, df, alpha)?;
    let shape = (&shape + shape.transpose()) * 0.5;
    Ok(EllipsoidRegion { support: tau.clone(), active, center, shape, radius2, pinned })
}

/// Union over the candidate models of [`subset_region`].
pub fn subset_conf_region(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda_set: &ModelSupport,
    candidates: &CandidateSet,
    alpha: f64,
) -> Result<RegionUnion> {
    check_level(alpha)?;
    check_lambda(lambda_set, x.ncols())?;
    if candidates.is_empty() {
        return Err(ReproError::InvalidConfig("candidate set is empty".into()));
    }
    let built: Vec<Result<EllipsoidRegion>> = candidates
        .models
        .par_iter()
        .map(|tau| subset_region(y, x, lambda_set, tau, alpha))
        .collect();
    let mut regions = Vec::with_capacity(built.len());
    let mut dropped = 0;
    for r in built {
        match r {
            Ok(r) => regions.push(r),
            Err(e) if e.is_usage() => return Err(e),
            Err(_) => dropped += 1,
        }
    }
    let includes_zero_atom = regions.iter().any(|r| r.active.is_empty());
    Ok(RegionUnion { regions, alpha, lambda_set: lambda_set.clone(), includes_zero_atom, dropped, shrunk_proportion: None })
}

/// Confidence set for a single coefficient (0-based index `i`).
///
/// Each candidate containing `i` contributes its t-interval; a candidate
/// without `i` contributes the atom `{0}`.
pub fn single_coef_ci(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    i: usize,
    candidates: &CandidateSet,
    alpha: f64,
) -> Result<IntervalUnion> {
    check_level(alpha)?;
    let (n, p) = x.shape();
    if i >= p {
        return Err(ReproError::InvalidSupport(format!("index {} exceeds p = {p}", i + 1)));
    }
    let mut raw = Vec::new();
    let mut zero_atom = false;
    for tau in &candidates.models {
        if !tau.contains(i) {
            zero_atom = true;
            continue;
        }
        if tau.len() >= n {
            continue;
        }
        let xt = select_columns(x, tau.indices());
        let Some(chol) = xt.tr_mul(&xt).cholesky() else { continue };
        let coef = chol.solve(&xt.tr_mul(y));
        let df = n - tau.len();
        let sigma2 = (y - &xt * &coef).norm_squared() / df as f64;
        let pos = tau.indices().binary_search(&i).unwrap_or_default();
        let mut e = DVector::zeros(tau.len());
        e[pos] = 1.0;
        let se = (sigma2 * chol.solve(&e)[pos]).sqrt();
        let t = f_quantile(1, df, alpha)?.sqrt();
        raw.push([coef[pos] - t * se, coef[pos] + t * se]);
    }
    Ok(IntervalUnion::new(raw, zero_atom))
}

/// Joint region for the full coefficient vector, with the shrunk proportion.
pub fn joint_conf_set(y: &DVector<f64>, x: &DMatrix<f64>, candidates: &CandidateSet, alpha: f64) -> Result<RegionUnion> {
    let p = x.ncols();
    let all = ModelSupport::new((0..p).collect());
    let mut union = subset_conf_region(y, x, &all, candidates, alpha)?;
    let mut ever_active = vec![false; p];
    for r in &union.regions {
        for &j in r.active.indices() {
            ever_active[j] = true;
        }
    }
    let shrunk = ever_active.iter().filter(|&&a| !a).count();
    union.shrunk_proportion = Some(shrunk as f64 / p as f64);
    Ok(union)
}

/// Real-valued function of the coefficients on a union's index set.
pub enum Functional {
    /// `h(b) = c' b`.
    Linear(DVector<f64>),
    General(Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSet {
    pub intervals: IntervalUnion,
    /// Monte-Carlo draws per region, absent for exact (linear) sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_region: Option<usize>,
}

/// Image of a region union under `h`, as the union of per-region hulls.
pub fn functional_conf_set(
    h: &Functional,
    union: &RegionUnion,
    samples_per_region: usize,
    stream: Stream,
) -> Result<FunctionalSet> {
    let lambda = &union.lambda_set;
    match h {
        Functional::Linear(c) => {
            if c.len() != lambda.len() {
                return Err(ReproError::DimensionMismatch(format!(
                    "functional has {} weights for {} coefficients",
                    c.len(),
                    lambda.len()
                )));
            }
            let mut raw = Vec::with_capacity(union.len());
            for r in &union.regions {
                let ca = r.restrict(lambda, c);
                let mid = ca.dot(&r.center);
                let half = r.support_halfwidth(&ca)?;
                raw.push([mid - half, mid + half]);
            }
            Ok(FunctionalSet { intervals: IntervalUnion::new(raw, false), samples_per_region: None })
        }
        Functional::General(f) => {
            if samples_per_region == 0 {
                return Err(ReproError::InvalidConfig("samples per region must be at least 1".into()));
            }
            let base = stream.child(TAG_FUNCTIONAL);
            let hulls: Vec<Result<[f64; 2]>> = union
                .regions
                .par_iter()
                .enumerate()
                .map(|(idx, r)| {
                    let at_center = f(&r.embed(lambda, &r.center));
                    let mut hull = [at_center, at_center];
                    let k = r.active.len();
                    if k == 0 || r.radius2 == 0.0 {
                        return Ok(hull);
                    }
                    let chol = r
                        .shape
                        .clone()
                        .cholesky()
                        .ok_or(ReproError::RankDeficient { expected: k, rank: k - 1 })?;
                    let lt = chol.l().transpose();
                    let rad = r.radius2.sqrt();
                    for s in 0..samples_per_region {
                        let z = uniform_in_ball(k, base.child(idx as u64).child(s as u64));
                        let off = lt.solve_upper_triangular(&z).expect("cholesky factor is nonsingular");
                        let v = f(&r.embed(lambda, &(&r.center + off * rad)));
                        hull[0] = hull[0].min(v);
                        hull[1] = hull[1].max(v);
                    }
                    Ok(hull)
                })
                .collect();
            let raw = hulls.into_iter().collect::<Result<Vec<_>>>()?;
            Ok(FunctionalSet { intervals: IntervalUnion::new(raw, false), samples_per_region: Some(samples_per_region) })
        }
    }
}

fn uniform_in_ball(k: usize, stream: Stream) -> DVector<f64> {
    let g = sample_gaussian(k, stream);
    let u: f64 = stream.child(0).rng().random();
    let norm = g.norm();
    if norm == 0.0 {
        return g;
    }
    g * (u.powf(1.0 / k as f64) / norm)
}

/// Completes the `l x p` matrix `l_rows` to the invertible `p x p` transform
/// `[L; 0 I]` and returns `X` times its inverse.
pub fn transform_design(l_rows: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (l, p) = l_rows.shape();
    if p != x.ncols() || l == 0 || l > p {
        return Err(ReproError::DimensionMismatch(format!("transform is {l}x{p}, design has {} columns", x.ncols())));
    }
    let mut full = DMatrix::zeros(p, p);
    full.rows_mut(0, l).copy_from(l_rows);
    for j in l..p {
        full[(j, j)] = 1.0;
    }
    let sv = full.clone().svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond < MAX_TRANSFORM_COND) {
        return Err(ReproError::SingularTransform(cond));
    }
    let inv = full.try_inverse().ok_or(ReproError::SingularTransform(f64::INFINITY))?;
    Ok(x * inv)
}

/// Confidence set for `L beta`: candidate search and subset inference on the
/// transformed design, where `L beta` is the leading block of coefficients.
pub fn linear_transform_inference(
    l_rows: &DMatrix<f64>,
    data: &Dataset,
    search: &SearchConfig,
    alpha: f64,
) -> Result<(RegionUnion, CandidateSet)> {
    check_level(alpha)?;
    let xt = transform_design(l_rows, &data.x)?;
    let transformed = Dataset::new(data.y.clone(), xt)?;
    let candidates = search_candidates(&transformed, search)?;
    let lambda = ModelSupport::new((0..l_rows.nrows()).collect());
    let union = subset_conf_region(&transformed.y, &transformed.x, &lambda, &candidates, alpha)?;
    Ok((union, candidates))
}

/// Regions at level `alpha2` over the models kept by the level-`alpha1` model
/// confidence set; the reported level is `alpha1 + alpha2 - 1`.
#[allow(clippy::too_many_arguments)]
pub fn modified_conf_set(
    data: &Dataset,
    candidates: &CandidateSet,
    alpha1: f64,
    alpha2: f64,
    draws: usize,
    seed: u64,
    lambda_set: &ModelSupport,
) -> Result<(RegionUnion, ModelConfidenceSet)> {
    for a in [alpha1, alpha2] {
        if !(a > 0.5 && a < 1.0) {
            return Err(ReproError::InvalidLevel(a));
        }
    }
    let mcs = model_confidence_set(data, candidates, alpha1, draws, seed)?;
    let kept = CandidateSet::from_models(mcs.included().cloned().collect());
    let mut union = if kept.is_empty() {
        RegionUnion {
            regions: Vec::new(),
            alpha: alpha2,
            lambda_set: lambda_set.clone(),
            includes_zero_atom: false,
            dropped: 0,
            shrunk_proportion: None,
        }
    } else {
        subset_conf_region(&data.y, &data.x, lambda_set, &kept, alpha2)?
    };
    union.alpha = alpha1 + alpha2 - 1.0;
    Ok((union, mcs))
}
