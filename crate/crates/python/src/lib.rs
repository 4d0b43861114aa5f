//! Python module `repro`. Coefficient and model indices are 1-based here,
//! matching the CLI and JSON outputs.

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use repro_core::coef_cs::{self, Functional};
use repro_core::model_cs;
use repro_core::sim::{self, Scale, ScenarioConfig};
use repro_core::{ReproError, SearchConfig, SearchMode, Stream};

fn to_py(e: ReproError) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn support(indices: &[usize], p: usize) -> PyResult<repro_core::ModelSupport> {
    let s = repro_core::ModelSupport::from_one_based(indices).map_err(to_py)?;
    s.validate(usize::MAX, p).map_err(to_py)?;
    Ok(s)
}

/// Design matrix `x` (rows) and response `y`.
#[pyclass(frozen)]
struct Dataset {
    inner: repro_core::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        Ok(Dataset { inner: repro_core::Dataset::from_rows(y, &x).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }
}

#[pyclass(frozen)]
struct CandidateSet {
    inner: repro_core::CandidateSet,
}

#[pymethods]
impl CandidateSet {
    /// Candidate set given directly as a list of 1-based supports.
    #[staticmethod]
    fn from_models(models: Vec<Vec<usize>>) -> PyResult<Self> {
        let models = models
            .iter()
            .map(|m| repro_core::ModelSupport::from_one_based(m).map_err(to_py))
            .collect::<PyResult<_>>()?;
        Ok(CandidateSet { inner: repro_core::CandidateSet::from_models(models) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        if let Some(inner) = v.get_mut("candidates") {
            v = inner.take();
        }
        let inner = serde_json::from_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(CandidateSet { inner })
    }

    #[getter]
    fn models(&self) -> Vec<Vec<usize>> {
        self.inner.models.iter().map(|m| m.one_based()).collect()
    }

    #[getter]
    fn hits(&self) -> Vec<usize> {
        self.inner.hits.clone()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, model: Vec<usize>) -> PyResult<bool> {
        Ok(self.inner.contains(&repro_core::ModelSupport::from_one_based(&model).map_err(to_py)?))
    }

    fn to_json(&self) -> String {
        to_json(&self.inner)
    }
}

#[pyclass(frozen)]
struct ModelConfidenceSet {
    inner: model_cs::ModelConfidenceSet,
}

#[pymethods]
impl ModelConfidenceSet {
    #[getter]
    fn included(&self) -> Vec<Vec<usize>> {
        self.inner.included().map(|m| m.one_based()).collect()
    }

    /// `(model, tail probability, included)` for every candidate.
    #[getter]
    fn entries(&self) -> Vec<(Vec<usize>, f64, bool)> {
        self.inner.entries.iter().map(|e| (e.indices.one_based(), e.tail_prob, e.included)).collect()
    }

    fn at_level(&self, alpha: f64) -> PyResult<ModelConfidenceSet> {
        Ok(ModelConfidenceSet { inner: self.inner.at_level(alpha).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.cardinality()
    }

    fn __contains__(&self, model: Vec<usize>) -> PyResult<bool> {
        Ok(self.inner.contains(&repro_core::ModelSupport::from_one_based(&model).map_err(to_py)?))
    }

    fn to_json(&self) -> String {
        to_json(&self.inner)
    }
}

#[pyclass(frozen)]
struct IntervalUnion {
    inner: coef_cs::IntervalUnion,
}

#[pymethods]
impl IntervalUnion {
    #[getter]
    fn intervals(&self) -> Vec<(f64, f64)> {
        self.inner.intervals.iter().map(|iv| (iv[0], iv[1])).collect()
    }

    #[getter]
    fn zero_atom(&self) -> bool {
        self.inner.zero_atom
    }

    #[getter]
    fn width(&self) -> f64 {
        self.inner.width()
    }

    fn __contains__(&self, v: f64) -> bool {
        self.inner.contains(v)
    }

    fn __repr__(&self) -> String {
        format!("IntervalUnion(intervals={:?}, zero_atom={})", self.intervals(), self.inner.zero_atom)
    }
}

/// Union over candidate models of coefficient ellipsoids.
#[pyclass(frozen)]
struct RegionUnion {
    inner: coef_cs::RegionUnion,
}

#[pymethods]
impl RegionUnion {
    /// 1-based coefficient indices the region is over.
    #[getter]
    fn indices(&self) -> Vec<usize> {
        self.inner.lambda_set.one_based()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn includes_zero_atom(&self) -> bool {
        self.inner.includes_zero_atom
    }

    #[getter]
    fn shrunk_proportion(&self) -> Option<f64> {
        self.inner.shrunk_proportion
    }

    /// Whether `beta` (one value per index) lies in the union.
    fn __contains__(&self, beta: Vec<f64>) -> PyResult<bool> {
        if beta.len() != self.inner.lambda_set.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} values, got {}",
                self.inner.lambda_set.len(),
                beta.len()
            )));
        }
        Ok(self.inner.contains(&DVector::from_vec(beta)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_json(&self) -> String {
        to_json(&self.inner)
    }
}

/// Collects candidate models from `d` repro copies.
#[pyfunction]
#[pyo3(signature = (data, d=1000, seed=0, k_max=None, zeta=None, max_support=None))]
fn search(
    py: Python<'_>,
    data: &Dataset,
    d: usize,
    seed: u64,
    k_max: Option<usize>,
    zeta: Option<(f64, f64)>,
    max_support: Option<usize>,
) -> PyResult<CandidateSet> {
    let mut config = SearchConfig::new(d, seed);
    config.zeta = zeta;
    config.max_support = max_support;
    if let Some(k) = k_max {
        config.mode = SearchMode::Constrained { k_max: k };
    }
    let inner = py.detach(|| repro_core::search_candidates(&data.inner, &config)).map_err(to_py)?;
    Ok(CandidateSet { inner })
}

#[pyfunction]
#[pyo3(signature = (data, candidates, alpha=0.95, draws=200, seed=0))]
fn model_confidence_set(
    py: Python<'_>,
    data: &Dataset,
    candidates: &CandidateSet,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> PyResult<ModelConfidenceSet> {
    let inner = py
        .detach(|| model_cs::model_confidence_set(&data.inner, &candidates.inner, alpha, draws, seed))
        .map_err(to_py)?;
    Ok(ModelConfidenceSet { inner })
}

/// Confidence set for coefficient `index` (1-based).
#[pyfunction]
#[pyo3(signature = (data, candidates, index, alpha=0.95))]
fn coef_interval(data: &Dataset, candidates: &CandidateSet, index: usize, alpha: f64) -> PyResult<IntervalUnion> {
    let i = support(&[index], data.inner.p())?.indices()[0];
    let inner = coef_cs::single_coef_ci(&data.inner.y, &data.inner.x, i, &candidates.inner, alpha).map_err(to_py)?;
    Ok(IntervalUnion { inner })
}

#[pyfunction]
#[pyo3(signature = (data, candidates, indices, alpha=0.95))]
fn subset_region(data: &Dataset, candidates: &CandidateSet, indices: Vec<usize>, alpha: f64) -> PyResult<RegionUnion> {
    let lambda = support(&indices, data.inner.p())?;
    let inner =
        coef_cs::subset_conf_region(&data.inner.y, &data.inner.x, &lambda, &candidates.inner, alpha).map_err(to_py)?;
    Ok(RegionUnion { inner })
}

#[pyfunction]
#[pyo3(signature = (data, candidates, alpha=0.95))]
fn joint_region(data: &Dataset, candidates: &CandidateSet, alpha: f64) -> PyResult<RegionUnion> {
    let inner = coef_cs::joint_conf_set(&data.inner.y, &data.inner.x, &candidates.inner, alpha).map_err(to_py)?;
    Ok(RegionUnion { inner })
}

/// Image of `region` under `h`: a list of weights (exact) or a callable
/// taking a list of coefficients (sampled).
#[pyfunction]
#[pyo3(signature = (region, h, samples=10_000, seed=0))]
fn functional_set(
    py: Python<'_>,
    region: &RegionUnion,
    h: Bound<'_, PyAny>,
    samples: usize,
    seed: u64,
) -> PyResult<IntervalUnion> {
    let f = if let Ok(w) = h.extract::<Vec<f64>>() {
        Functional::Linear(DVector::from_vec(w))
    } else if h.is_callable() {
        let h: Py<PyAny> = h.unbind();
        Functional::General(Box::new(move |b: &DVector<f64>| {
            Python::attach(|py| {
                h.call1(py, (b.as_slice().to_vec(),))
                    .and_then(|v| v.extract::<f64>(py))
                    .unwrap_or(f64::NAN)
            })
        }))
    } else {
        return Err(PyValueError::new_err("h must be a list of weights or a callable"));
    };
    let set = py
        .detach(|| coef_cs::functional_conf_set(&f, &region.inner, samples, Stream::new(seed)))
        .map_err(to_py)?;
    Ok(IntervalUnion { inner: set.intervals })
}

/// Regions at level `alpha2` over the level-`alpha1` model confidence set.
#[pyfunction]
#[pyo3(signature = (data, candidates, alpha1, alpha2, indices=None, draws=200, seed=0))]
#[allow(clippy::too_many_arguments)]
fn modified_region(
    py: Python<'_>,
    data: &Dataset,
    candidates: &CandidateSet,
    alpha1: f64,
    alpha2: f64,
    indices: Option<Vec<usize>>,
    draws: usize,
    seed: u64,
) -> PyResult<(RegionUnion, ModelConfidenceSet)> {
    let p = data.inner.p();
    let lambda = match indices {
        Some(ix) => support(&ix, p)?,
        None => repro_core::ModelSupport::new((0..p).collect()),
    };
    let (region, mcs) = py
        .detach(|| coef_cs::modified_conf_set(&data.inner, &candidates.inner, alpha1, alpha2, draws, seed, &lambda))
        .map_err(to_py)?;
    Ok((RegionUnion { inner: region }, ModelConfidenceSet { inner: mcs }))
}

/// Runs a named scenario (M1, M2, M3) and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (scenario, scale="desk", reps=None, seed=None, d=None))]
fn simulate(
    py: Python<'_>,
    scenario: &str,
    scale: &str,
    reps: Option<usize>,
    seed: Option<u64>,
    d: Option<usize>,
) -> PyResult<String> {
    let scale: Scale = scale.parse().map_err(to_py)?;
    let mut cfg = ScenarioConfig::preset(scenario, scale).map_err(to_py)?;
    if let Some(r) = reps {
        cfg.reps = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = d {
        cfg.d = d;
    }
    let report = py.detach(|| sim::run_replications(&cfg)).map_err(to_py)?;
    Ok(to_json(&report))
}

#[pymodule]
fn repro(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<CandidateSet>()?;
    m.add_class::<ModelConfidenceSet>()?;
    m.add_class::<IntervalUnion>()?;
    m.add_class::<RegionUnion>()?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(model_confidence_set, m)?)?;
    m.add_function(wrap_pyfunction!(coef_interval, m)?)?;
    m.add_function(wrap_pyfunction!(subset_region, m)?)?;
    m.add_function(wrap_pyfunction!(joint_region, m)?)?;
    m.add_function(wrap_pyfunction!(functional_set, m)?)?;
    m.add_function(wrap_pyfunction!(modified_region, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
