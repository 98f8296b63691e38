//! Python bindings: hash families, the probe table, exact solvers and the
//! experiment runner. Exact values come back as `fractions.Fraction`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use kindep::adv_lp::{solve_3indep_mix as solve_mix, t1, t2, t_star, SplitStrategy};
use kindep::adv_minwise::pmin_exact as pmin;
use kindep::harness::{self, ExperimentConfig, ExperimentId};
use kindep::indep_verify::exact_moments as moments;
use kindep::ms_attack::{find_mu as mu_scan, hit_prob_enumerate as hit_prob};
use kindep::rational::{to_parts, Rational};
use kindep::rng::stream_rng;

fn err(e: kindep::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn fraction<'py>(py: Python<'py>, r: &Rational) -> PyResult<Bound<'py, PyAny>> {
    let (num, den) = to_parts(r);
    py.import("fractions")?.getattr("Fraction")?.call1((format!("{num}/{den}"),))
}

fn json_loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.getattr("loads")?.call1((text,))
}

/// Degree k-1 polynomial over the Mersenne prime 2^61 - 1, reduced mod t.
#[pyclass(name = "PolyFamily", frozen)]
struct PyPolyFamily(kindep::families::PolyFamily);

#[pymethods]
impl PyPolyFamily {
    #[new]
    #[pyo3(signature = (k, t, seed=1))]
    fn new(k: usize, t: u64, seed: u64) -> PyResult<Self> {
        kindep::families::PolyFamily::sample(k, t, &mut stream_rng(seed, 0)).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_coeffs(coeffs: Vec<u64>, t: u64) -> PyResult<Self> {
        kindep::families::PolyFamily::from_coeffs(coeffs, t).map(Self).map_err(err)
    }

    fn __call__(&self, x: u64) -> u64 {
        self.0.eval(x)
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn t(&self) -> u64 {
        self.0.t()
    }

    #[getter]
    fn coeffs(&self) -> Vec<u64> {
        self.0.coeffs().to_vec()
    }
}

/// Linear-probing table that counts probes.
#[pyclass(name = "ProbeTable")]
struct PyProbeTable(kindep::probing::ProbeTable);

#[pymethods]
impl PyProbeTable {
    #[new]
    fn new(t: u64) -> PyResult<Self> {
        kindep::probing::ProbeTable::new(t).map(Self).map_err(err)
    }

    /// Inserts `key` with home slot `slot`; returns its displacement.
    fn insert(&mut self, key: u64, slot: u64) -> PyResult<u64> {
        self.0.insert(key, slot).map_err(err)
    }

    fn search_cost(&self, slot: u64) -> u64 {
        self.0.search_cost(slot)
    }

    fn mean_search_cost(&self) -> f64 {
        self.0.mean_search_cost()
    }

    fn total_insert_probes(&self) -> u64 {
        self.0.total_insert_probes()
    }

    fn run_decomposition(&self) -> Vec<u64> {
        self.0.run_decomposition()
    }

    #[getter]
    fn load(&self) -> f64 {
        self.0.load()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Collect probability of the balanced 3-independent mix at node load `two_m`.
#[pyfunction]
fn solve_3indep_mix(py: Python<'_>, two_m: u64) -> PyResult<Bound<'_, PyAny>> {
    fraction(py, &solve_mix(two_m).map_err(err)?)
}

/// Exact F2, F4, p2, p3, p4 of a split law: "random", "t1", "t2" or "tstar".
#[pyfunction]
fn exact_moments<'py>(py: Python<'py>, strategy: &str, two_m: u64) -> PyResult<Bound<'py, PyDict>> {
    let report = match strategy {
        "random" => moments(&SplitStrategy::Random, two_m),
        "t1" => t1(two_m).and_then(|d| moments(&d, two_m)),
        "t2" => t2(two_m).and_then(|d| moments(&d, two_m)),
        "tstar" => t_star(two_m).and_then(|d| moments(&d, two_m)),
        other => return Err(PyValueError::new_err(format!("unknown split law {other:?}"))),
    }
    .map_err(err)?;
    let out = PyDict::new(py);
    for (name, v) in [("f2", &report.f2), ("f4", &report.f4), ("p2", &report.p2), ("p3", &report.p3), ("p4", &report.p4)] {
        out.set_item(name, fraction(py, v)?)?;
    }
    Ok(out)
}

/// Probability that the query key is the minimum under the adversarial
/// k-independent minwise construction, within its interval.
#[pyfunction]
fn pmin_exact(py: Python<'_>, k: u64) -> PyResult<Bound<'_, PyAny>> {
    fraction(py, &pmin(k).map_err(err)?)
}

/// Exact fraction of odd multipliers sending odd `x` within `eps` of zero.
/// `eps` is a fraction or a string such as "1/64".
#[pyfunction]
fn hit_prob_enumerate<'py>(py: Python<'py>, x: u64, ell: u32, eps: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let text = eps.str()?.to_string();
    let eps: Rational = text.parse().map_err(|_| PyValueError::new_err(format!("bad fraction {text:?}")))?;
    fraction(py, &hit_prob(x, ell, &eps).map_err(err)?)
}

/// Smallest positive x < limit with a x near zero at resolution 1/(2m);
/// returns (mu, found).
#[pyfunction]
fn find_mu(a: u64, ell: u32, m: u64, limit: u64) -> PyResult<(u64, bool)> {
    let r = mu_scan(a, ell, m, limit).map_err(err)?;
    Ok((r.mu, r.found))
}

/// Runs one experiment; returns (summary dict, csv text).
#[pyfunction]
#[pyo3(signature = (experiment, ladder=None, trials=None, seed=1, k=None, load=None, cache_dir=None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    ladder: Option<Vec<u64>>,
    trials: Option<usize>,
    seed: u64,
    k: Option<u64>,
    load: Option<f64>,
    cache_dir: Option<std::path::PathBuf>,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let id: ExperimentId = experiment.parse().map_err(err)?;
    let mut config = ExperimentConfig::new(id).with_seed(seed);
    if let Some(l) = ladder {
        config.ladder = l;
    }
    if let Some(t) = trials {
        config.trials = t;
    }
    config.k = k;
    if load.is_some() {
        config.load = load;
    }
    if cache_dir.is_some() {
        config.cache_dir = cache_dir;
    }
    let out = py.detach(|| harness::run(&config)).map_err(err)?;
    let summary = serde_json::to_string(&out.report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let csv = String::from_utf8(out.csv).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((json_loads(py, &summary)?, csv))
}

/// Runs the exact checks and negative controls; returns a list of dicts.
#[pyfunction]
#[pyo3(signature = (seed=1))]
fn verify_suite(py: Python<'_>, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let config = ExperimentConfig::new(ExperimentId::Verify).with_seed(seed);
    let report = py.detach(|| harness::verify_suite(&config));
    let text = serde_json::to_string(&report.checks).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_loads(py, &text)
}

/// Growth class of per-size trial values; returns (verdict, confidence).
#[pyfunction]
#[pyo3(signature = (sizes, values, bootstrap=200, seed=1))]
fn classify(sizes: Vec<f64>, values: Vec<Vec<f64>>, bootstrap: usize, seed: u64) -> PyResult<(String, f64)> {
    let c = harness::classify_series(&sizes, &values, bootstrap, seed).map_err(err)?;
    Ok((c.verdict.name(), c.confidence))
}

#[pymodule]
#[pyo3(name = "kindep")]
fn kindep_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolyFamily>()?;
    m.add_class::<PyProbeTable>()?;
    m.add_function(wrap_pyfunction!(solve_3indep_mix, m)?)?;
    m.add_function(wrap_pyfunction!(exact_moments, m)?)?;
    m.add_function(wrap_pyfunction!(pmin_exact, m)?)?;
    m.add_function(wrap_pyfunction!(hit_prob_enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(find_mu, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    Ok(())
}
