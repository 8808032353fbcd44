//! Python bindings: histograms, the release mechanism, distances, estimators
//! and the experiment harness.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use privhist::estimators::{builtin_coefficients, estimate_release, BUILTIN_NAMES};
use privhist::format::{parse_json, parse_tsv, to_json, to_tsv};
use privhist::harness::{
    generate_histogram, run_privacy_audit, run_utility_experiment, write_json, AuditConfig, AuditMechanism,
    ExperimentConfig, Generator,
};
use privhist::isotonic::{isotonic_nonincreasing as pava, WeightedSequence};
use privhist::mechanism::{privhist_with, BudgetSplit, ReleaseOptions};
use privhist::noise::{GeometricMechanism, LaplaceMechanism, RandomSource, DEFAULT_SEED};
use privhist::{AnonymizedHistogram, Error, MechanismOutput, PrivacyBudget};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn source(seed: Option<u64>) -> RandomSource {
    match seed {
        Some(s) => RandomSource::new(s),
        None => RandomSource::from_entropy(),
    }
}

/// Anonymized histogram: a multiset of positive counts stored as
/// `(count, prevalence)` pairs.
#[pyclass(name = "Histogram", module = "privhist", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyHistogram(AnonymizedHistogram);

#[pymethods]
impl PyHistogram {
    #[new]
    #[pyo3(signature = (entries = Vec::new()))]
    fn new(entries: Vec<(u64, u64)>) -> PyResult<Self> {
        AnonymizedHistogram::new(entries).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_counts(counts: Vec<u64>) -> Self {
        Self(AnonymizedHistogram::from_counts(counts.into_iter().filter(|&c| c > 0)))
    }

    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        parse_tsv(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_json(text).map(Self).map_err(py_err)
    }

    fn entries(&self) -> Vec<(u64, u64)> {
        self.0.entries().to_vec()
    }

    /// Counts in descending order, one per item.
    fn counts(&self) -> Vec<u64> {
        self.0.counts_desc().collect()
    }

    #[getter]
    fn total_items(&self) -> u64 {
        self.0.total_items()
    }

    #[getter]
    fn support_size(&self) -> u64 {
        self.0.support_size()
    }

    fn to_tsv(&self) -> String {
        to_tsv(&self.0)
    }

    fn to_json(&self) -> String {
        to_json(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.support_size() as usize
    }

    fn __repr__(&self) -> String {
        format!("Histogram({:?})", self.0.entries())
    }
}

/// A release `(H, N)`.
#[pyclass(name = "Release", module = "privhist", frozen)]
struct PyRelease(MechanismOutput);

#[pymethods]
impl PyRelease {
    #[getter]
    fn histogram(&self) -> PyHistogram {
        PyHistogram(self.0.histogram.clone())
    }

    #[getter]
    fn n_estimate(&self) -> u64 {
        self.0.n_estimate
    }

    /// `"low"` or `"high"`.
    #[getter]
    fn path(&self) -> &'static str {
        self.0.path.as_str()
    }

    /// Every intermediate as JSON, when requested at release time.
    #[getter]
    fn trace_json(&self) -> Option<String> {
        self.0.trace.as_ref().map(|t| t.to_json())
    }

    fn __repr__(&self) -> String {
        format!(
            "Release(n_estimate={}, path={:?}, support={})",
            self.0.n_estimate,
            self.0.path.as_str(),
            self.0.histogram.support_size()
        )
    }
}

/// Releases `h` under `epsilon`-DP. `seed=None` draws from OS entropy.
#[pyfunction]
#[pyo3(signature = (h, epsilon, seed = Some(DEFAULT_SEED), budget_split = None, trace = false))]
fn release(
    h: PyRef<'_, PyHistogram>,
    epsilon: f64,
    seed: Option<u64>,
    budget_split: Option<&str>,
    trace: bool,
) -> PyResult<PyRelease> {
    let split = match budget_split {
        Some(s) => s.parse::<BudgetSplit>().map_err(py_err)?,
        None => BudgetSplit::default(),
    };
    let budget = PrivacyBudget::with_split(epsilon, split).map_err(py_err)?;
    let (out, _) = privhist_with(&h.0, &budget, &mut source(seed), ReleaseOptions { trace }).map_err(py_err)?;
    Ok(PyRelease(out))
}

#[pyfunction]
fn sorted_l1(a: PyRef<'_, PyHistogram>, b: PyRef<'_, PyHistogram>) -> u64 {
    privhist::sorted_l1(&a.0, &b.0)
}

/// `(Σ|Δφ_{r+}|, Σ r|Δφ_r|)`, both upper bounds on `sorted_l1`.
#[pyfunction]
fn l1_upper_bounds(a: PyRef<'_, PyHistogram>, b: PyRef<'_, PyHistogram>) -> (u64, u64) {
    privhist::l1_upper_bounds(&a.0, &b.0)
}

/// Plug-in estimate `Σ f(r, n) φ_r` with a built-in coefficient set.
#[pyfunction]
fn estimate(h: PyRef<'_, PyHistogram>, n: u64, prop: &str) -> PyResult<f64> {
    let coeffs = builtin_coefficients(prop).map_err(py_err)?;
    privhist::estimators::estimate(&h.0, n, &coeffs).map_err(py_err)
}

/// Estimate from a release; returns `(value, empty_release)`.
#[pyfunction]
fn estimate_from_release(r: PyRef<'_, PyRelease>, prop: &str) -> PyResult<(f64, bool)> {
    let coeffs = builtin_coefficients(prop).map_err(py_err)?;
    let est = estimate_release(&r.0, &coeffs).map_err(py_err)?;
    Ok((est.value, est.empty_release))
}

#[pyfunction]
fn properties() -> Vec<&'static str> {
    BUILTIN_NAMES.to_vec()
}

/// Weighted least-squares non-increasing fit.
#[pyfunction]
#[pyo3(signature = (values, weights = None))]
fn isotonic_nonincreasing(values: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let seq = match weights {
        Some(w) => WeightedSequence::new(values, w),
        None => WeightedSequence::unit(values),
    }
    .map_err(py_err)?;
    pava(&seq).map_err(py_err)
}

/// Draws `size` samples of two-sided geometric noise `G(e^{-epsilon})`.
#[pyfunction]
#[pyo3(signature = (epsilon, size, seed = Some(DEFAULT_SEED)))]
fn sample_geometric(epsilon: f64, size: usize, seed: Option<u64>) -> PyResult<Vec<i64>> {
    let g = GeometricMechanism::from_epsilon(epsilon).map_err(py_err)?;
    let mut rng = source(seed);
    Ok((0..size).map(|_| g.sample(&mut rng)).collect())
}

#[pyfunction]
#[pyo3(signature = (scale, size, seed = Some(DEFAULT_SEED)))]
fn sample_laplace(scale: f64, size: usize, seed: Option<u64>) -> PyResult<Vec<f64>> {
    let l = LaplaceMechanism::new(scale).map_err(py_err)?;
    let mut rng = source(seed);
    Ok((0..size).map(|_| l.sample(&mut rng)).collect())
}

/// Synthetic input. `kind` is one of uniform-k, zipf, single-heavy, two-scale.
#[pyfunction]
#[pyo3(signature = (kind, n, k = None, s = 1.0, seed = Some(DEFAULT_SEED)))]
fn generate(kind: &str, n: u64, k: Option<u64>, s: f64, seed: Option<u64>) -> PyResult<PyHistogram> {
    let gen = match kind {
        "uniform-k" => Generator::UniformK {
            k: k.ok_or_else(|| PyValueError::new_err("uniform-k needs k"))?,
        },
        "zipf" => Generator::Zipf { s, k },
        "single-heavy" => Generator::SingleHeavy,
        "two-scale" => Generator::TwoScale { bits: None },
        other => return Err(PyValueError::new_err(format!("unknown generator '{other}'"))),
    };
    generate_histogram(&gen, n, &mut source(seed)).map(PyHistogram).map_err(py_err)
}

/// Runs a utility sweep from a JSON config and returns the rows as JSON.
#[pyfunction]
#[pyo3(name = "bench")]
fn run_bench(config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(format!("config: {e}")))?;
    cfg.validate().map_err(py_err)?;
    let rows = run_utility_experiment(&cfg).map_err(py_err)?;
    let mut buf = Vec::new();
    write_json(&rows, &mut buf).map_err(py_err)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

/// Audits every neighbor pair with at most `max_items` items. Returns rows
/// `(pair, lower_bound, upper_bound, flagged)`.
#[pyfunction]
#[pyo3(signature = (epsilon, max_items = 3, runs_per_input = 10_000, confidence = 0.99, seed = DEFAULT_SEED, broken = false))]
fn audit(
    py: Python<'_>,
    epsilon: f64,
    max_items: u64,
    runs_per_input: u64,
    confidence: f64,
    seed: u64,
    broken: bool,
) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let cfg = AuditConfig {
        max_items,
        epsilon,
        runs_per_input,
        confidence,
        seed,
        mechanism: if broken {
            AuditMechanism::IncorrectPrevalenceNoise
        } else {
            AuditMechanism::Privhist
        },
    };
    let report = py.detach(|| run_privacy_audit(&cfg)).map_err(py_err)?;
    Ok(report
        .rows
        .into_iter()
        .map(|r| (r.pair_id, r.lower_bound, r.upper_bound, r.flagged))
        .collect())
}

#[pymodule]
#[pyo3(name = "privhist")]
fn privhist_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHistogram>()?;
    m.add_class::<PyRelease>()?;
    m.add_function(wrap_pyfunction!(release, m)?)?;
    m.add_function(wrap_pyfunction!(sorted_l1, m)?)?;
    m.add_function(wrap_pyfunction!(l1_upper_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_from_release, m)?)?;
    m.add_function(wrap_pyfunction!(properties, m)?)?;
    m.add_function(wrap_pyfunction!(isotonic_nonincreasing, m)?)?;
    m.add_function(wrap_pyfunction!(sample_geometric, m)?)?;
    m.add_function(wrap_pyfunction!(sample_laplace, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
