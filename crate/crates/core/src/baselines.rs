//! Residual-bootstrap model sets, the comparison method for model confidence sets.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{select_columns, Dataset, ModelSupport};
use crate::error::{ReproError, Result};
use crate::lasso::{weighted_lasso_path, LambdaGrid, LassoOptions, LassoPath, RidgePilot};
use crate::linalg::least_squares;
use crate::rng::{Stream, TAG_BOOTSTRAP};
use crate::search::refit_rss;

/// Share of bootstrap replicates that trimming may discard.
pub const TRIM_FRACTION: f64 = 0.05;

pub const CV_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionCriterion {
    Aic,
    Bic,
    Cv,
}

impl SelectionCriterion {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionCriterion::Aic => "aic",
            SelectionCriterion::Bic => "bic",
            SelectionCriterion::Cv => "cv",
        }
    }
}

impl std::str::FromStr for SelectionCriterion {
    type Err = ReproError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(SelectionCriterion::Aic),
            "bic" => Ok(SelectionCriterion::Bic),
            "cv" => Ok(SelectionCriterion::Cv),
            other => Err(ReproError::InvalidConfig(format!("unknown criterion '{other}' (expected aic, bic or cv)"))),
        }
    }
}

fn path_options(n: usize) -> LassoOptions {
    LassoOptions { max_support: Some((n / 2).min(n.saturating_sub(5)).max(1)), ..Default::default() }
}

/// Adaptive LASSO model selection with the tuning parameter picked by `criterion`.
///
/// `stream` only drives the fold assignment for cross-validation.
pub fn select_model(y: &DVector<f64>, x: &DMatrix<f64>, criterion: SelectionCriterion, stream: Stream) -> Result<ModelSupport> {
    select_with(&RidgePilot::new(x), y, x, criterion, stream)
}

fn select_with(
    pilot: &RidgePilot,
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    criterion: SelectionCriterion,
    stream: Stream,
) -> Result<ModelSupport> {
    let n = x.nrows();
    let opts = path_options(n);
    let path = weighted_lasso_path(y, x, &pilot.weights(x, y), &LambdaGrid::default(), &opts)?;
    match criterion {
        SelectionCriterion::Aic | SelectionCriterion::Bic => {
            let per_df = if criterion == SelectionCriterion::Aic { 2.0 } else { (n as f64).ln() };
            let mut best: Option<(f64, &ModelSupport)> = None;
            let mut last: Option<&ModelSupport> = None;
            for pt in &path.points {
                if last == Some(&pt.support) {
                    continue;
                }
                last = Some(&pt.support);
                let rss = refit_rss(y, x, &pt.support, None)?;
                let score = if rss <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    n as f64 * (rss / n as f64).ln() + per_df * pt.support.len() as f64
                };
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, &pt.support));
                }
            }
            Ok(best.map(|(_, m)| m.clone()).unwrap_or_default())
        }
        SelectionCriterion::Cv => cv_select(y, x, &path, &opts, stream),
    }
}

fn cv_select(y: &DVector<f64>, x: &DMatrix<f64>, path: &LassoPath, opts: &LassoOptions, stream: Stream) -> Result<ModelSupport> {
    let n = x.nrows();
    if path.points.is_empty() {
        return Ok(ModelSupport::empty());
    }
    if path.lambda_max <= 0.0 || n < 2 * CV_FOLDS {
        return Ok(path.points[0].support.clone());
    }
    let grid: Vec<f64> = path.points.iter().map(|pt| pt.lambda).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream.rng());
    let mut err = vec![0.0; grid.len()];
    for fold in 0..CV_FOLDS {
        let test: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % CV_FOLDS == fold).map(|(_, &i)| i).collect();
        let train: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % CV_FOLDS != fold).map(|(_, &i)| i).collect();
        let xt = x.select_rows(&train);
        let yt = y.select_rows(&train);
        let w = RidgePilot::new(&xt).weights(&xt, &yt);
        let fold_opts = LassoOptions { max_support: None, ..opts.clone() };
        let fold_path = weighted_lasso_path(&yt, &xt, &w, &LambdaGrid::Fixed(grid.clone()), &fold_opts)?;
        for (g, pt) in fold_path.points.iter().enumerate() {
            let mut e = 0.0;
            for &i in &test {
                let pred: f64 = pt.support.indices().iter().zip(&pt.coef).map(|(&j, &b)| x[(i, j)] * b).sum();
                e += (y[i] - pred).powi(2);
            }
            err[g] += e;
        }
    }
    let best = err.iter().enumerate().fold(0, |b, (g, &e)| if e < err[b] { g } else { b });
    Ok(path.points[best].support.clone())
}

/// Bootstrap frequency table of selected models, trimmed to its most
/// frequent part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapModelSet {
    pub criterion: SelectionCriterion,
    /// Model selected on the observed data.
    pub selected: ModelSupport,
    #[serde(rename = "B")]
    pub replicates: usize,
    /// Replicates whose selection failed; excluded from the table.
    pub failed: usize,
    #[serde(with = "frequency_table")]
    pub counts: BTreeMap<ModelSupport, usize>,
    /// Models kept after trimming, most frequent first.
    pub retained: Vec<ModelSupport>,
}

mod frequency_table {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row {
        model: ModelSupport,
        count: usize,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<ModelSupport, usize>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.iter().map(|(k, &v)| Row { model: k.clone(), count: v }).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<ModelSupport, usize>, D::Error> {
        Ok(Vec::<Row>::deserialize(d)?.into_iter().map(|r| (r.model, r.count)).collect())
    }
}

impl BootstrapModelSet {
    pub fn contains(&self, model: &ModelSupport) -> bool {
        self.retained.contains(model)
    }

    pub fn retained_frequency(&self) -> usize {
        self.retained.iter().map(|m| self.counts[m]).sum()
    }
}

/// Drops the least frequent models while the dropped total stays within
/// `TRIM_FRACTION` of `total`; equal counts are dropped in support order.
/// Returns the kept models, most frequent first.
pub fn trim_frequency_table(counts: &BTreeMap<ModelSupport, usize>, total: usize) -> Vec<ModelSupport> {
    let mut atoms: Vec<(&ModelSupport, usize)> = counts.iter().map(|(m, &c)| (m, c)).collect();
    atoms.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let budget = TRIM_FRACTION * total as f64;
    let mut removed = 0usize;
    let mut first_kept = atoms.len();
    for (k, &(_, c)) in atoms.iter().enumerate() {
        if (removed + c) as f64 <= budget {
            removed += c;
        } else {
            first_kept = k;
            break;
        }
    }
    atoms[first_kept..].iter().rev().map(|(m, _)| (*m).clone()).collect()
}

/// Residual bootstrap of the adaptive LASSO model selector.
pub fn residual_bootstrap_models(
    data: &Dataset,
    replicates: usize,
    criterion: SelectionCriterion,
    seed: u64,
) -> Result<BootstrapModelSet> {
    if replicates == 0 {
        return Err(ReproError::InvalidConfig("B must be at least 1".into()));
    }
    let n = data.n();
    let root = Stream::new(seed).child(TAG_BOOTSTRAP);
    let pilot = RidgePilot::new(&data.x);
    let selected = select_with(&pilot, &data.y, &data.x, criterion, root.child(u64::MAX))?;
    let fitted = if selected.is_empty() {
        DVector::zeros(n)
    } else {
        least_squares(&select_columns(&data.x, selected.indices()), &data.y)?.fitted
    };
    let mut resid = &data.y - &fitted;
    let mean = resid.mean();
    resid.add_scalar_mut(-mean);

    let picks: Vec<Result<ModelSupport>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let s = root.child(b as u64);
            let mut rng = s.rng();
            let y_star = DVector::from_fn(n, |i, _| fitted[i] + resid[rng.random_range(0..n)]);
            select_with(&pilot, &y_star, &data.x, criterion, s.child(0))
        })
        .collect();
    let mut counts = BTreeMap::new();
    let mut failed = 0;
    for m in picks {
        match m {
            Ok(m) => *counts.entry(m).or_insert(0) += 1,
            Err(_) => failed += 1,
        }
    }
    let retained = trim_frequency_table(&counts, replicates - failed);
    Ok(BootstrapModelSet { criterion, selected, replicates, failed, counts, retained })
}
