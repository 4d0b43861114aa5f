//! Model confidence sets by conditional repro sampling.
//!
//! Given a candidate `tau_b`, the response is resampled on the sphere fixed by
//! the sufficient statistics `(H y, ||(I - H) y||)`. The distribution of the
//! size-constrained model estimator under that resampling does not depend on
//! the nuisance coefficients or the noise level, so its Monte-Carlo pmf
//! decides whether `tau_b` stays in the set.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{for_each_combination, Dataset, ModelSupport};
use crate::distributions::ln_choose;
use crate::error::{check_level, ReproError, Result};
use crate::lasso::{weighted_lasso_path, LambdaGrid, LassoOptions, RidgePilot};
use crate::linalg::{ortho_basis, OrthoBasis};
use crate::rng::{sample_gaussian, Stream, TAG_MODEL_CS};
use crate::search::{refit_rss, CandidateSet};

/// Subset count at or below which the constrained estimator is solved exactly.
pub const EXHAUSTIVE_LIMIT: f64 = 2e4;

/// Residual norms below this are treated as zero.
const DEGENERATE_NORM: f64 = 1e-12;

/// Sufficient statistics of the observed response under a fixed model.
#[derive(Clone, Debug)]
pub struct ConditionalStats {
    pub a_obs: DVector<f64>,
    pub b_obs: f64,
    pub support: ModelSupport,
    basis: OrthoBasis,
}

impl ConditionalStats {
    pub fn basis(&self) -> &OrthoBasis {
        &self.basis
    }
}

pub fn observed_stats(data: &Dataset, tau: &ModelSupport) -> Result<ConditionalStats> {
    tau.validate(data.n(), data.p())?;
    let basis = ortho_basis(&data.x, tau)?;
    let a_obs = basis.project(&data.y);
    let b_obs = (&data.y - &a_obs).norm();
    if b_obs < DEGENERATE_NORM {
        return Err(ReproError::DegenerateResidual(b_obs));
    }
    Ok(ConditionalStats { a_obs, b_obs, support: tau.clone(), basis })
}

/// Draws `y* = a_obs + b_obs (I - H) u / ||(I - H) u||` with `u ~ N(0, I)`.
pub fn conditional_resample(stats: &ConditionalStats, stream: Stream) -> DVector<f64> {
    let n = stats.a_obs.len();
    if stats.b_obs == 0.0 {
        return stats.a_obs.clone();
    }
    let mut attempt = 0u64;
    loop {
        let s = if attempt == 0 { stream } else { stream.child(attempt) };
        let u = sample_gaussian(n, s);
        let r = stats.basis.residual(&u);
        let norm = r.norm();
        if norm >= DEGENERATE_NORM {
            return &stats.a_obs + r * (stats.b_obs / norm);
        }
        attempt += 1;
    }
}

/// Size-constrained least-squares model estimator for a fixed design.
///
/// Solved exactly when at most [`EXHAUSTIVE_LIMIT`] subsets of the target size
/// exist; otherwise realized on the adaptive LASSO path.
pub struct ConstrainedSelector<'a> {
    x: &'a DMatrix<f64>,
    pilot: OnceLock<RidgePilot>,
    gram: OnceLock<DMatrix<f64>>,
}

impl<'a> ConstrainedSelector<'a> {
    pub fn new(x: &'a DMatrix<f64>) -> Self {
        ConstrainedSelector { x, pilot: OnceLock::new(), gram: OnceLock::new() }
    }

    pub fn select(&self, y: &DVector<f64>, k: usize) -> Result<ModelSupport> {
        let (n, p) = self.x.shape();
        if y.len() != n {
            return Err(ReproError::DimensionMismatch(format!("y has {} entries, X has {} rows", y.len(), n)));
        }
        if k >= n {
            return Err(ReproError::InvalidConfig(format!("size bound {k} must be below n = {n}")));
        }
        if k == 0 || y.iter().all(|&v| v == 0.0) {
            return Ok(ModelSupport::empty());
        }
        let kk = k.min(p);
        if ln_choose(p, kk).exp() <= EXHAUSTIVE_LIMIT {
            Ok(self.exhaustive(y, kk))
        } else {
            self.along_path(y, k)
        }
    }

    fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| self.x.tr_mul(self.x))
    }

    /// RSS of `y` on the columns `c`, given `xty = X^T y` and `yy = ||y||^2`.
    fn subset_rss(&self, c: &[usize], y: &DVector<f64>, xty: &DVector<f64>, yy: f64) -> f64 {
        let g = self.gram();
        let k = c.len();
        if k == 0 {
            return yy;
        }
        let sub = DMatrix::from_fn(k, k, |a, b| g[(c[a], c[b])]);
        let rhs = DVector::from_fn(k, |a, _| xty[c[a]]);
        match sub.cholesky() {
            Some(ch) => (yy - rhs.dot(&ch.solve(&rhs))).max(0.0),
            None => refit_rss(y, self.x, &ModelSupport::new(c.to_vec()), None).unwrap_or(yy),
        }
    }

    fn exhaustive(&self, y: &DVector<f64>, k: usize) -> ModelSupport {
        let p = self.x.ncols();
        let xty = self.x.tr_mul(y);
        let yy = y.norm_squared();
        let mut best = (f64::INFINITY, Vec::new());
        for_each_combination(p, k, |c| {
            let rss = self.subset_rss(c, y, &xty, yy);
            if rss < best.0 {
                best = (rss, c.to_vec());
            }
        });
        // Drop covariates that do not reduce the RSS, so ties go to smaller models.
        let tol = 1e-10 * yy;
        let (mut rss, mut cur) = best;
        'shrink: while !cur.is_empty() {
            for drop in 0..cur.len() {
                let mut cand = cur.clone();
                cand.remove(drop);
                let r = self.subset_rss(&cand, y, &xty, yy);
                if r <= rss + tol {
                    rss = r;
                    cur = cand;
                    continue 'shrink;
                }
            }
            break;
        }
        ModelSupport::new(cur)
    }

    fn along_path(&self, y: &DVector<f64>, k: usize) -> Result<ModelSupport> {
        let n = self.x.nrows();
        let pilot = self.pilot.get_or_init(|| RidgePilot::new(self.x));
        let w = pilot.weights(self.x, y);
        // Past this size the path is not expected to come back below `k`.
        let stop = (2 * k).max(k + 5).min(n - 1);
        let opts = LassoOptions { max_support: Some(stop), ..Default::default() };
        let path = weighted_lasso_path(y, self.x, &w, &LambdaGrid::default(), &opts)?;
        let size = path.points.iter().map(|pt| pt.support.len()).filter(|&s| s <= k).max().unwrap_or(0);
        let mut best: Option<(f64, &ModelSupport)> = None;
        for pt in path.points.iter().filter(|pt| pt.support.len() == size) {
            if best.is_some_and(|(_, s)| *s == pt.support) {
                continue;
            }
            let rss = refit_rss(y, self.x, &pt.support, None)?;
            if best.is_none_or(|(r, _)| rss < r) {
                best = Some((rss, &pt.support));
            }
        }
        Ok(best.map(|(_, s)| s.clone()).unwrap_or_default())
    }
}

/// Best model of size at most `k` for `y` on `x`.
pub fn tau_hat_constrained(y: &DVector<f64>, x: &DMatrix<f64>, k: usize) -> Result<ModelSupport> {
    ConstrainedSelector::new(x).select(y, k)
}

/// Monte-Carlo estimate of the conditional pmf of the constrained estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPmf {
    pub support: ModelSupport,
    /// Counts per realized model; probabilities are `count / draws`.
    #[serde(with = "pmf_table")]
    pub counts: BTreeMap<ModelSupport, usize>,
    pub draws: usize,
}

mod pmf_table {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Atom {
        model: ModelSupport,
        count: usize,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<ModelSupport, usize>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let atoms: Vec<Atom> = m.iter().map(|(k, &v)| Atom { model: k.clone(), count: v }).collect();
        atoms.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<ModelSupport, usize>, D::Error> {
        let atoms = Vec::<Atom>::deserialize(d)?;
        Ok(atoms.into_iter().map(|a| (a.model, a.count)).collect())
    }
}

impl ConditionalPmf {
    pub fn probability(&self, model: &ModelSupport) -> f64 {
        self.counts.get(model).map_or(0.0, |&c| c as f64 / self.draws as f64)
    }
}

pub fn estimate_pmf(data: &Dataset, tau_b: &ModelSupport, draws: usize, stream: Stream) -> Result<ConditionalPmf> {
    let selector = ConstrainedSelector::new(&data.x);
    let stats = observed_stats(data, tau_b)?;
    estimate_pmf_with(&selector, &stats, draws, stream)
}

fn estimate_pmf_with(
    selector: &ConstrainedSelector<'_>,
    stats: &ConditionalStats,
    draws: usize,
    stream: Stream,
) -> Result<ConditionalPmf> {
    if draws == 0 {
        return Err(ReproError::InvalidConfig("J must be at least 1".into()));
    }
    let k = stats.support.len();
    let models: Vec<Result<ModelSupport>> = (0..draws)
        .into_par_iter()
        .map(|j| selector.select(&conditional_resample(stats, stream.child(j as u64)), k))
        .collect();
    let mut counts = BTreeMap::new();
    for m in models {
        *counts.entry(m?).or_insert(0) += 1;
    }
    Ok(ConditionalPmf { support: stats.support.clone(), counts, draws })
}

/// Total probability of all atoms no more likely than `observed`.
///
/// Atoms tied with `observed` are included; an unseen `observed` gives 0.
pub fn tail_probability(pmf: &ConditionalPmf, observed: &ModelSupport) -> f64 {
    let Some(&c_obs) = pmf.counts.get(observed) else {
        return 0.0;
    };
    let total: usize = pmf.counts.values().filter(|&&c| c <= c_obs).sum();
    total as f64 / pmf.draws as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCsEntry {
    pub indices: ModelSupport,
    pub tail_prob: f64,
    pub included: bool,
    /// Constrained estimate on the observed response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<ModelSupport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfidenceSet {
    pub entries: Vec<ModelCsEntry>,
    pub alpha: f64,
    #[serde(rename = "J")]
    pub draws: usize,
    pub seed: u64,
}

impl ModelConfidenceSet {
    pub fn included(&self) -> impl Iterator<Item = &ModelSupport> {
        self.entries.iter().filter(|e| e.included).map(|e| &e.indices)
    }

    pub fn cardinality(&self) -> usize {
        self.entries.iter().filter(|e| e.included).count()
    }

    pub fn contains(&self, model: &ModelSupport) -> bool {
        self.included().any(|m| m == model)
    }

    /// The same tail probabilities thresholded at another level.
    pub fn at_level(&self, alpha: f64) -> Result<ModelConfidenceSet> {
        check_level(alpha)?;
        let mut out = self.clone();
        out.alpha = alpha;
        for e in &mut out.entries {
            e.included = e.error.is_none() && e.tail_prob >= 1.0 - alpha;
        }
        Ok(out)
    }
}

/// Level-`alpha` confidence set for the true model within `candidates`.
///
/// Candidate `b` uses substream `b` of the seed, so appending candidates
/// leaves earlier tail probabilities unchanged. Candidates whose statistics
/// are degenerate are reported excluded with the error attached.
pub fn model_confidence_set(
    data: &Dataset,
    candidates: &CandidateSet,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<ModelConfidenceSet> {
    check_level(alpha)?;
    if candidates.is_empty() {
        return Err(ReproError::InvalidConfig("candidate set is empty".into()));
    }
    if draws == 0 {
        return Err(ReproError::InvalidConfig("J must be at least 1".into()));
    }
    let selector = ConstrainedSelector::new(&data.x);
    let root = Stream::new(seed).child(TAG_MODEL_CS);
    let mut observed_by_size: BTreeMap<usize, ModelSupport> = BTreeMap::new();
    let mut entries = Vec::with_capacity(candidates.len());
    for (b, tau_b) in candidates.models.iter().enumerate() {
        let outcome = (|| -> Result<(f64, ModelSupport)> {
            let stats = observed_stats(data, tau_b)?;
            let pmf = estimate_pmf_with(&selector, &stats, draws, root.child(b as u64))?;
            let observed = match observed_by_size.get(&tau_b.len()) {
                Some(m) => m.clone(),
                None => {
                    let m = selector.select(&data.y, tau_b.len())?;
                    observed_by_size.insert(tau_b.len(), m.clone());
                    m
                }
            };
            Ok((tail_probability(&pmf, &observed), observed))
        })();
        entries.push(match outcome {
            Ok((tail_prob, observed)) => ModelCsEntry {
                indices: tau_b.clone(),
                tail_prob,
                included: tail_prob >= 1.0 - alpha,
                observed: Some(observed),
                error: None,
            },
            Err(e) => ModelCsEntry {
                indices: tau_b.clone(),
                tail_prob: 0.0,
                included: false,
                observed: None,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(ModelConfidenceSet { entries, alpha, draws, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::select_columns;

    fn random_data(n: usize, p: usize, beta: &[f64], sigma: f64, seed: u64) -> Dataset {
        let x = DMatrix::from_column_slice(n, p, sample_gaussian(n * p, Stream::new(seed)).as_slice());
        let mut b = DVector::zeros(p);
        for (j, &v) in beta.iter().enumerate() {
            b[j] = v;
        }
        let y = &x * b + sample_gaussian(n, Stream::new(seed + 1)) * sigma;
        Dataset::new(y, x).unwrap()
    }

    fn pmf_of(pairs: &[(Vec<usize>, usize)]) -> ConditionalPmf {
        let counts: BTreeMap<ModelSupport, usize> =
            pairs.iter().map(|(m, c)| (ModelSupport::new(m.clone()), *c)).collect();
        let draws = counts.values().sum();
        ConditionalPmf { support: ModelSupport::empty(), counts, draws }
    }

    #[test]
    fn observed_stats_cases() {
        let data = random_data(20, 5, &[1.0, 2.0], 1.0, 1);
        let s = observed_stats(&data, &ModelSupport::empty()).unwrap();
        assert_eq!(s.a_obs.norm(), 0.0);
        assert!((s.b_obs - data.y.norm()).abs() < 1e-12);

        let tau = ModelSupport::new(vec![0, 3]);
        let s = observed_stats(&data, &tau).unwrap();
        let rss = crate::linalg::least_squares(&select_columns(&data.x, tau.indices()), &data.y).unwrap().rss;
        assert!((s.b_obs * s.b_obs - rss).abs() < 1e-9 * rss);
        assert!((s.b_obs.powi(2) + s.a_obs.norm_squared() - data.y.norm_squared()).abs() < 1e-8 * data.y.norm_squared());

        let exact = random_data(20, 5, &[1.0, 2.0], 0.0, 2);
        let err = observed_stats(&exact, &ModelSupport::new(vec![0, 1])).unwrap_err();
        assert!(matches!(err, ReproError::DegenerateResidual(_)));
    }

    #[test]
    fn resample_preserves_sufficient_statistics() {
        let data = random_data(30, 6, &[1.0, -1.0, 0.5], 1.0, 3);
        let stats = observed_stats(&data, &ModelSupport::new(vec![0, 1, 2])).unwrap();
        for j in 0..1000u64 {
            let y = conditional_resample(&stats, Stream::new(4).child(j));
            let a = stats.basis().project(&y);
            assert!((&a - &stats.a_obs).norm() <= 1e-8 * stats.a_obs.norm());
            assert!(((&y - a).norm() - stats.b_obs).abs() <= 1e-10 * stats.b_obs);
        }
    }

    #[test]
    fn resample_with_zero_radius_returns_center() {
        let data = random_data(10, 3, &[1.0], 1.0, 5);
        let mut stats = observed_stats(&data, &ModelSupport::new(vec![0])).unwrap();
        stats.b_obs = 0.0;
        assert_eq!(conditional_resample(&stats, Stream::new(1)), stats.a_obs);
    }

    #[test]
    fn empty_model_resample_is_uniform_on_sphere() {
        let data = random_data(10, 2, &[1.0], 1.0, 6);
        let stats = observed_stats(&data, &ModelSupport::empty()).unwrap();
        let m = 10_000;
        let mean: f64 = (0..m)
            .map(|j| conditional_resample(&stats, Stream::new(7).child(j as u64))[0] / stats.b_obs)
            .sum::<f64>()
            / m as f64;
        // First coordinate of a uniform point on S^{n-1} has variance 1/n.
        let se = (1.0 / 10.0 / m as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn tail_probability_examples() {
        let pmf = pmf_of(&[(vec![0], 7), (vec![1], 3)]);
        assert_eq!(tail_probability(&pmf, &ModelSupport::new(vec![0])), 1.0);
        assert_eq!(tail_probability(&pmf, &ModelSupport::new(vec![5])), 0.0);
        let pmf = pmf_of(&[(vec![0], 5), (vec![1], 3), (vec![2], 2)]);
        assert!((tail_probability(&pmf, &ModelSupport::new(vec![1])) - 0.5).abs() < 1e-15);
        // ties are included
        let pmf = pmf_of(&[(vec![0], 4), (vec![1], 4), (vec![2], 2)]);
        assert!((tail_probability(&pmf, &ModelSupport::new(vec![1])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constrained_estimator_edge_cases() {
        let data = random_data(20, 6, &[1.0], 1.0, 8);
        assert!(tau_hat_constrained(&DVector::zeros(20), &data.x, 2).unwrap().is_empty());
        assert!(tau_hat_constrained(&data.y, &data.x, 20).is_err());

        let q = DMatrix::from_column_slice(20, 6, sample_gaussian(120, Stream::new(9)).as_slice()).qr().q();
        let x = q.columns(0, 6).clone_owned();
        let mut y = &x.column(0) * 2.0 - &x.column(3) * 1.0 + &x.column(4) * 0.5;
        // Orthogonal component that no column explains.
        let extra = crate::linalg::OrthoBasis::from_matrix(&x).residual(&sample_gaussian(20, Stream::new(10)));
        y += extra;
        let got = tau_hat_constrained(&y, &x, 8).unwrap();
        assert_eq!(got, ModelSupport::new(vec![0, 3, 4]));
    }

    #[test]
    fn path_estimator_matches_best_subset_on_strong_signals() {
        let mut agree = 0;
        for t in 0..100u64 {
            let data = random_data(40, 10, &[3.0, -2.5], 1.0, 100 + 2 * t);
            let sel = ConstrainedSelector::new(&data.x);
            let exact = sel.exhaustive(&data.y, 2);
            let path = sel.along_path(&data.y, 2).unwrap();
            agree += (exact == path) as usize;
        }
        assert!(agree >= 95, "agreement {agree}/100");
    }

    #[test]
    fn pmf_sums_to_one_and_is_deterministic() {
        let data = random_data(30, 8, &[2.0, 1.5], 1.0, 11);
        let tau = ModelSupport::new(vec![0, 1]);
        let a = estimate_pmf(&data, &tau, 50, Stream::new(3)).unwrap();
        let b = estimate_pmf(&data, &tau, 50, Stream::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts.values().sum::<usize>(), 50);
        let one = estimate_pmf(&data, &tau, 1, Stream::new(3)).unwrap();
        assert_eq!(one.counts.len(), 1);
        assert_eq!(one.counts.values().next(), Some(&1));
    }

    #[test]
    fn strong_signal_pmf_concentrates_on_truth() {
        let data = random_data(50, 200, &[3.0, 2.0, 1.5], 1.0, 12);
        let tau0 = ModelSupport::new(vec![0, 1, 2]);
        let pmf = estimate_pmf(&data, &tau0, 200, Stream::new(13)).unwrap();
        assert!(pmf.probability(&tau0) > 0.5, "{}", pmf.probability(&tau0));
    }

    #[test]
    fn confidence_set_levels_are_nested() {
        let data = random_data(40, 8, &[2.0, 1.0], 1.0, 14);
        let cands = CandidateSet::from_models(vec![
            ModelSupport::new(vec![0, 1]),
            ModelSupport::new(vec![0]),
            ModelSupport::new(vec![0, 1, 5]),
            ModelSupport::new(vec![1, 3]),
        ]);
        let cs95 = model_confidence_set(&data, &cands, 0.95, 200, 1).unwrap();
        let cs90 = model_confidence_set(&data, &cands, 0.90, 200, 1).unwrap();
        for m in cs90.included() {
            assert!(cs95.contains(m));
        }
        assert_eq!(cs95.at_level(0.90).unwrap(), cs90);
        let loose = cs95.at_level(1.0 - 1e-12).unwrap();
        for e in &loose.entries {
            assert_eq!(e.included, e.tail_prob > 0.0);
        }
        assert!(model_confidence_set(&data, &cands, 1.0, 10, 1).is_err());
    }

    #[test]
    fn singleton_candidate_passthrough() {
        let data = random_data(40, 8, &[2.0, 1.0], 1.0, 15);
        let tau0 = ModelSupport::new(vec![0, 1]);
        let cs = model_confidence_set(&data, &CandidateSet::from_models(vec![tau0.clone()]), 0.95, 100, 2).unwrap();
        assert_eq!(cs.entries.len(), 1);
        assert_eq!(cs.entries[0].included, cs.entries[0].tail_prob >= 0.05);
    }

    #[test]
    fn degenerate_candidate_is_flagged() {
        let data = random_data(20, 5, &[1.0], 0.0, 16);
        let cands = CandidateSet::from_models(vec![ModelSupport::new(vec![0]), ModelSupport::new(vec![1])]);
        let cs = model_confidence_set(&data, &cands, 0.95, 20, 1).unwrap();
        assert!(cs.entries[0].error.is_some());
        assert!(!cs.entries[0].included);
        assert!(cs.entries[1].error.is_none());
    }
}
