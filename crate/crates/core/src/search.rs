//! Candidate model search with repro copies of the error vector.
//!
//! For each copy `u*_b ~ N(0, I_n)` the response is regressed on the design
//! plus `u*_b` as a free column, an adaptive LASSO path stands in for the
//! `lambda |tau|` penalty, and an extended-BIC window selects the tuning
//! values whose supports enter the candidate set.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{select_columns, Dataset, ModelSupport};
use crate::distributions::ln_choose;
use crate::error::{ReproError, Result};
use crate::lasso::{adaptive_lasso_path, LambdaGrid, LassoOptions, PathPoint};
use crate::linalg::least_squares;
use crate::rng::{sample_gaussian, Stream, TAG_SEARCH};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surrogate {
    #[default]
    AdaptiveLasso,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SearchMode {
    /// `lambda |tau|` objective tuned by the extended-BIC window.
    #[default]
    Penalized,
    /// `|tau| <= k` objective for every `k` up to `k_max`.
    Constrained { k_max: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub d: usize,
    pub lambda_grid: LambdaGrid,
    /// Extended-BIC window endpoints; `None` means [`consistent_zeta`] to 1.
    pub zeta: Option<(f64, f64)>,
    pub surrogate: Surrogate,
    pub mode: SearchMode,
    /// Supports larger than this are discarded; `None` means `min(n - 5, n / 2)`.
    pub max_support: Option<usize>,
    pub seed: u64,
}

impl SearchConfig {
    pub fn new(d: usize, seed: u64) -> Self {
        SearchConfig {
            d,
            lambda_grid: LambdaGrid::default(),
            zeta: None,
            surrogate: Surrogate::AdaptiveLasso,
            mode: SearchMode::Penalized,
            max_support: None,
            seed,
        }
    }

    pub fn max_support_for(&self, n: usize) -> usize {
        self.max_support.unwrap_or_else(|| n.saturating_sub(5).min(n / 2))
    }

    pub fn zeta_for(&self, n: usize, p: usize) -> (f64, f64) {
        self.zeta.unwrap_or((consistent_zeta(n, p), 1.0))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.d == 0 {
            return Err(ReproError::InvalidConfig("d must be at least 1".into()));
        }
        self.lambda_grid.validate()?;
        if self.max_support_for(n) >= n {
            return Err(ReproError::InvalidConfig(format!("max_support must be below n = {n}")));
        }
        let (z0, z1) = self.zeta.unwrap_or((0.0, 1.0));
        if !(0.0..=1.0).contains(&z0) || !(0.0..=1.0).contains(&z1) {
            return Err(ReproError::InvalidConfig("zeta endpoints must lie in [0, 1]".into()));
        }
        if let SearchMode::Constrained { k_max } = self.mode {
            if k_max == 0 || k_max >= n {
                return Err(ReproError::InvalidConfig("k_max must be in [1, n)".into()));
            }
        }
        Ok(())
    }
}

/// Deduplicated candidate models with hit counts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub models: Vec<ModelSupport>,
    pub hits: Vec<usize>,
    /// Index of the repro copy that first produced each model.
    #[serde(default)]
    pub first_hit: Vec<usize>,
    pub d: usize,
    #[serde(default)]
    pub failed: usize,
}

impl CandidateSet {
    /// A candidate set given directly as a list of models.
    pub fn from_models(models: Vec<ModelSupport>) -> Self {
        let mut set = CandidateSet::default();
        for m in models {
            set.add(m, 0);
        }
        set.d = 0;
        set
    }

    fn add(&mut self, model: ModelSupport, copy: usize) {
        if let Some(k) = self.models.iter().position(|m| *m == model) {
            self.hits[k] += 1;
        } else {
            self.models.push(model);
            self.hits.push(1);
            self.first_hit.push(copy);
        }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn contains(&self, model: &ModelSupport) -> bool {
        self.models.contains(model)
    }
}

/// Smallest `zeta` for which the extended BIC is selection consistent when
/// `p` grows like `n^kappa`: `1 - 1 / (2 kappa)`, clamped to `[0, 1]`.
pub fn consistent_zeta(n: usize, p: usize) -> f64 {
    if n < 2 || p < 2 {
        return 0.0;
    }
    let kappa = (p as f64).ln() / (n as f64).ln();
    (1.0 - 0.5 / kappa).clamp(0.0, 1.0)
}

/// Extended BIC of a refit with residual sum of squares `rss` on `k` covariates.
pub fn ebic(rss: f64, n: usize, p: usize, k: usize, zeta: f64) -> f64 {
    if rss <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    nf * (rss / nf).ln() + k as f64 * nf.ln() + 2.0 * zeta * ln_choose(p, k)
}

/// Least-squares RSS of `y` on `X_support`, plus `extra` as a free column.
pub fn refit_rss(y: &DVector<f64>, x: &DMatrix<f64>, support: &ModelSupport, extra: Option<&DVector<f64>>) -> Result<f64> {
    let mut m = select_columns(x, support.indices());
    if let Some(u) = extra {
        let k = m.ncols();
        m = m.insert_column(k, 0.0);
        m.column_mut(k).copy_from(u);
    }
    let rss = least_squares(&m, y)?.rss;
    // Exact fits come back at round-off level; treat them as zero.
    Ok(if rss <= 1e-20 * y.norm_squared() { 0.0 } else { rss })
}

/// Supports of every path point between the extended-BIC minimizers at the two `zeta` endpoints.
pub fn ebic_window(
    path: &[PathPoint],
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    unpenalized: Option<&DVector<f64>>,
    zeta: (f64, f64),
) -> Result<Vec<ModelSupport>> {
    if path.is_empty() {
        return Ok(Vec::new());
    }
    let (n, p) = x.shape();
    let mut cache: HashMap<&ModelSupport, f64> = HashMap::new();
    let mut rss = Vec::with_capacity(path.len());
    for pt in path {
        let v = match cache.get(&pt.support) {
            Some(&v) => v,
            None => {
                let v = refit_rss(y, x, &pt.support, unpenalized)?;
                cache.insert(&pt.support, v);
                v
            }
        };
        rss.push(v);
    }
    let argmin = |z: f64| -> usize {
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for (i, pt) in path.iter().enumerate() {
            let v = ebic(rss[i], n, p, pt.support.len(), z);
            if v < best_v {
                best_v = v;
                best = i;
            }
        }
        best
    };
    let (a, b) = (argmin(zeta.0), argmin(zeta.1));
    let (lo, hi) = (a.min(b), a.max(b));
    let mut out: Vec<ModelSupport> = Vec::new();
    for pt in &path[lo..=hi] {
        if !out.contains(&pt.support) {
            out.push(pt.support.clone());
        }
    }
    Ok(out)
}

/// For each `k` in `1..=k_max`, the largest path support of size at most `k`
/// (ties go to the smaller lambda).
pub fn constrained_from_path(path: &[PathPoint], k_max: usize) -> Vec<ModelSupport> {
    let mut out: Vec<ModelSupport> = Vec::new();
    for k in 1..=k_max {
        let mut best: Option<&PathPoint> = None;
        for pt in path {
            if pt.support.len() <= k && best.is_none_or(|b| pt.support.len() >= b.support.len()) {
                best = Some(pt);
            }
        }
        if let Some(b) = best {
            if !out.contains(&b.support) {
                out.push(b.support.clone());
            }
        }
    }
    out
}

fn search_copy(data: &Dataset, config: &SearchConfig, copy: usize) -> Result<Vec<ModelSupport>> {
    let n = data.n();
    let stream = Stream::new(config.seed).child(TAG_SEARCH).child(copy as u64);
    let u = sample_gaussian(n, stream);
    let opts = LassoOptions { max_support: Some(config.max_support_for(n)), ..Default::default() };
    let path = adaptive_lasso_path(&data.y, &data.x, Some(&u), &config.lambda_grid, &opts)?;
    match config.mode {
        SearchMode::Penalized => ebic_window(&path.points, &data.y, &data.x, None, config.zeta_for(n, data.p())),
        SearchMode::Constrained { k_max } => Ok(constrained_from_path(&path.points, k_max)),
    }
}

/// Builds the candidate set from `config.d` repro copies.
///
/// Copies are independent substreams of `config.seed`, so running with a
/// larger `d` only adds models. Copies whose solver fails are skipped and
/// counted in `failed`.
pub fn search_candidates(data: &Dataset, config: &SearchConfig) -> Result<CandidateSet> {
    config.validate(data.n())?;
    let per_copy: Vec<Result<Vec<ModelSupport>>> =
        (0..config.d).into_par_iter().map(|b| search_copy(data, config, b)).collect();
    let mut set = CandidateSet { d: config.d, ..Default::default() };
    for (b, res) in per_copy.into_iter().enumerate() {
        match res {
            Ok(models) => {
                for m in models {
                    set.add(m, b);
                }
            }
            Err(_) => set.failed += 1,
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lambda: f64, idx: Vec<usize>) -> PathPoint {
        let support = ModelSupport::new(idx);
        let coef = vec![1.0; support.len()];
        PathPoint { lambda, support, coef }
    }

    fn random_data(n: usize, p: usize, beta: &[f64], seed: u64) -> Dataset {
        let x = DMatrix::from_column_slice(n, p, sample_gaussian(n * p, Stream::new(seed)).as_slice());
        let mut b = DVector::zeros(p);
        for (j, &v) in beta.iter().enumerate() {
            b[j] = v;
        }
        let y = &x * b + sample_gaussian(n, Stream::new(seed + 1));
        Dataset::new(y, x).unwrap()
    }

    #[test]
    fn ebic_full_support_has_no_combinatorial_term() {
        assert_eq!(ebic(2.0, 10, 4, 4, 0.0), ebic(2.0, 10, 4, 4, 1.0));
        assert_eq!(ebic(0.0, 10, 4, 2, 0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn single_point_window() {
        let data = random_data(20, 5, &[2.0], 1);
        let path = vec![pt(1.0, vec![0, 2])];
        let w = ebic_window(&path, &data.y, &data.x, None, (0.0, 1.0)).unwrap();
        assert_eq!(w, vec![ModelSupport::new(vec![0, 2])]);
    }

    #[test]
    fn consistent_zeta_values() {
        let kappa = 1000f64.ln() / 50f64.ln();
        assert!((consistent_zeta(50, 1000) - (1.0 - 1.0 / (2.0 * kappa))).abs() < 1e-15);
        assert_eq!(consistent_zeta(100, 10), 0.0);
        assert!((consistent_zeta(100, 100) - 0.5).abs() < 1e-15);
        let cfg = SearchConfig::new(1, 0);
        assert_eq!(cfg.zeta_for(100, 100), (0.5, 1.0));
        assert_eq!(SearchConfig { zeta: Some((0.0, 1.0)), ..cfg }.zeta_for(100, 100), (0.0, 1.0));
    }

    #[test]
    fn zeta_zero_ranks_like_bic() {
        let data = random_data(30, 6, &[2.0, -1.0, 0.5], 2);
        let supports = [vec![], vec![0], vec![0, 1], vec![0, 1, 2], vec![0, 1, 2, 4]];
        let path: Vec<PathPoint> = supports.iter().enumerate().map(|(i, s)| pt(5.0 - i as f64, s.clone())).collect();
        let n = 30.0f64;
        // Direct BIC via normal equations.
        let bic: Vec<f64> = supports
            .iter()
            .map(|s| {
                let xs = select_columns(&data.x, s);
                let rss = if s.is_empty() {
                    data.y.norm_squared()
                } else {
                    let coef = xs.tr_mul(&xs).try_inverse().unwrap() * xs.tr_mul(&data.y);
                    (&data.y - &xs * coef).norm_squared()
                };
                n * (rss / n).ln() + s.len() as f64 * n.ln()
            })
            .collect();
        let best = (0..5).min_by(|&a, &b| bic[a].total_cmp(&bic[b])).unwrap();
        let w = ebic_window(&path, &data.y, &data.x, None, (0.0, 0.0)).unwrap();
        assert_eq!(w, vec![ModelSupport::new(supports[best].clone())]);
        for (i, s) in supports.iter().enumerate() {
            let rss = refit_rss(&data.y, &data.x, &ModelSupport::new(s.clone()), None).unwrap();
            assert!((ebic(rss, 30, 6, s.len(), 0.0) - bic[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn window_spans_both_minimizers() {
        let data = random_data(40, 30, &[3.0, 2.0], 3);
        let supports = [vec![], vec![0], vec![0, 1], vec![0, 1, 7], vec![0, 1, 7, 9], vec![0, 1, 7, 9, 11]];
        let path: Vec<PathPoint> = supports.iter().enumerate().map(|(i, s)| pt(6.0 - i as f64, s.clone())).collect();
        let w = ebic_window(&path, &data.y, &data.x, None, (0.0, 1.0)).unwrap();
        assert!(w.contains(&ModelSupport::new(vec![0, 1])));
        // contiguous run of the path
        let first = supports.iter().position(|s| ModelSupport::new(s.clone()) == w[0]).unwrap();
        for (k, m) in w.iter().enumerate() {
            assert_eq!(*m, ModelSupport::new(supports[first + k].clone()));
        }
    }

    #[test]
    fn constrained_picks_largest_not_exceeding() {
        let path = vec![pt(5.0, vec![]), pt(4.0, vec![1]), pt(3.0, vec![1, 3]), pt(2.0, vec![1, 2]), pt(1.0, vec![0, 1, 2, 3])];
        let got = constrained_from_path(&path, 3);
        assert_eq!(got, vec![ModelSupport::new(vec![1]), ModelSupport::new(vec![1, 2])]);
    }

    #[test]
    fn search_is_deterministic_and_nested() {
        let data = random_data(40, 20, &[3.0, 2.0, 1.5], 4);
        let c10 = search_candidates(&data, &SearchConfig::new(10, 9)).unwrap();
        let again = search_candidates(&data, &SearchConfig::new(10, 9)).unwrap();
        assert_eq!(c10, again);
        let c30 = search_candidates(&data, &SearchConfig::new(30, 9)).unwrap();
        for m in &c10.models {
            assert!(c30.contains(m));
        }
        assert!(c10.hits.iter().sum::<usize>() >= 10 - c10.failed);
        assert!(c30.contains(&ModelSupport::new(vec![0, 1, 2])));
    }

    #[test]
    fn single_column_design() {
        let data = random_data(30, 1, &[1.0], 5);
        let c = search_candidates(&data, &SearchConfig::new(20, 1)).unwrap();
        for m in &c.models {
            assert!(m.is_empty() || m.indices() == [0]);
        }
    }

    #[test]
    fn constrained_mode_sizes() {
        let data = random_data(40, 15, &[3.0, 2.0], 6);
        let cfg = SearchConfig { mode: SearchMode::Constrained { k_max: 3 }, ..SearchConfig::new(10, 2) };
        let c = search_candidates(&data, &cfg).unwrap();
        assert!(c.models.iter().all(|m| m.len() <= 3 && !m.is_empty()));
        assert!(c.contains(&ModelSupport::new(vec![0, 1])));
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::new(0, 1).validate(50).is_err());
        let cfg = SearchConfig { max_support: Some(50), ..SearchConfig::new(1, 1) };
        assert!(cfg.validate(50).is_err());
        assert_eq!(SearchConfig::new(1, 1).max_support_for(50), 25);
        assert_eq!(SearchConfig::new(1, 1).max_support_for(8), 3);
    }

    #[test]
    fn candidate_json_shape() {
        let set = CandidateSet::from_models(vec![ModelSupport::new(vec![0, 2]), ModelSupport::new(vec![1])]);
        let v: serde_json::Value = serde_json::to_value(&set).unwrap();
        assert_eq!(v["models"], serde_json::json!([[1, 3], [2]]));
        assert_eq!(v["hits"], serde_json::json!([1, 1]));
        let back: CandidateSet = serde_json::from_value(serde_json::json!({"models": [[1,2]], "hits": [4], "d": 9})).unwrap();
        assert_eq!(back.models[0], ModelSupport::new(vec![0, 1]));
        assert_eq!(back.d, 9);
    }
}
