//! Python module `dynprice`.

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dynprice::cli::Mechanism;
use dynprice::equilibrium::{ObliviousStrategy, SolveReport};
use dynprice::finite_game::{self, DeviationConfig};
use dynprice::scenario::{self, Scenario};
use dynprice::{ancillary, twostage, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotFound(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::NonConvergence { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mechanism(name: &str) -> PyResult<Mechanism> {
    match name {
        "proposed" => Ok(Mechanism::Proposed),
        "mcp" => Ok(Mechanism::Mcp),
        "flat" => Ok(Mechanism::Flat),
        other => Err(PyValueError::new_err(format!("unknown mechanism {other}"))),
    }
}

#[pyclass(name = "Scenario", module = "dynprice", frozen)]
pub struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Scenario::from_toml_str(text).map(|inner| PyScenario { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Scenario::load(path).map(|inner| PyScenario { inner }).map_err(to_py)
    }

    /// Single-consumer two-stage instance.
    #[staticmethod]
    #[pyo3(signature = (e, b0))]
    fn two_stage(e: f64, b0: f64) -> Self {
        PyScenario {
            inner: twostage::build(&twostage::TwoStageParams::new(e, b0)),
        }
    }

    /// Two consumer types with substitutability `e_first`, `e_second`.
    #[staticmethod]
    #[pyo3(signature = (e_first=0.0, e_second=0.08, share=0.5, b0=1.2))]
    fn two_type(e_first: f64, e_second: f64, share: f64, b0: f64) -> Self {
        PyScenario {
            inner: twostage::build_mixed(e_first, e_second, share, b0),
        }
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(to_py)
    }

    /// Violated invariants as `(invariant, detail)` pairs.
    fn validate(&self) -> Vec<(String, String)> {
        scenario::validate(&self.inner)
            .violations
            .iter()
            .map(|v| (v.invariant.to_string(), v.detail.clone()))
            .collect()
    }

    #[getter]
    fn num_types(&self) -> usize {
        self.inner.num_types()
    }

    #[getter]
    fn num_nodes(&self) -> PyResult<usize> {
        Ok(self.inner.tree().map_err(to_py)?.len())
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?})", self.inner.name.clone().unwrap_or_default())
    }
}

#[pyclass(name = "SolveReport", module = "dynprice", frozen)]
pub struct PyReport {
    inner: SolveReport,
    scenario: Scenario,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn mechanism(&self) -> &'static str {
        self.inner.mechanism.name()
    }

    /// Actions by type, each a list over history nodes.
    #[getter]
    fn actions(&self) -> Vec<Vec<f64>> {
        (0..self.inner.strategy.types)
            .map(|x| self.inner.strategy.of_type(x).to_vec())
            .collect()
    }

    #[getter]
    fn demand(&self) -> Vec<f64> {
        self.inner.demand.values.clone()
    }

    /// `(p, w, q)` at every history node.
    #[getter]
    fn prices(&self) -> Vec<(f64, f64, f64)> {
        self.inner.prices.nodes.iter().map(|n| (n.p, n.w, n.q)).collect()
    }

    #[getter]
    fn welfare(&self) -> f64 {
        self.inner.welfare.total
    }

    #[getter]
    fn kkt_residual(&self) -> f64 {
        self.inner.max_kkt_residual()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[pyo3(signature = (include_q=false))]
    fn average_price(&self, include_q: bool) -> PyResult<f64> {
        let tree = self.scenario.tree().map_err(to_py)?;
        self.inner.average_price(&tree, include_q).map_err(to_py)
    }

    fn to_csv(&self) -> PyResult<String> {
        let tree = self.scenario.tree().map_err(to_py)?;
        self.inner.to_csv(&self.scenario, &tree, None, None).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveReport(mechanism={}, welfare={:.6})",
            self.inner.mechanism.name(),
            self.inner.welfare.total
        )
    }
}

/// Solve `mechanism` ("proposed", "mcp" or "flat") on a scenario.
#[pyfunction]
#[pyo3(signature = (scenario, mechanism="proposed", tol=None))]
fn solve(py: Python<'_>, scenario: &PyScenario, mechanism: &str, tol: Option<f64>) -> PyResult<PyReport> {
    let m = self::mechanism(mechanism)?;
    let sc = scenario.inner.clone();
    let inner = py.detach(|| dynprice::cli::solve(&sc, m, tol)).map_err(to_py)?;
    Ok(PyReport { inner, scenario: sc })
}

/// Rows of the three mechanisms at `(e, b0)` as dicts.
#[pyfunction]
fn run_tables(py: Python<'_>, e: f64, b0: f64) -> PyResult<Vec<std::collections::HashMap<&'static str, f64>>> {
    let t = py.detach(|| twostage::run_tables(e, b0)).map_err(to_py)?;
    Ok(t.rows()
        .iter()
        .map(|r| {
            [
                ("a0", r.a0),
                ("a1", r.a1),
                ("welfare", r.welfare),
                ("p0w0", r.p0w0),
                ("p1w1", r.p1w1),
                ("q1", r.q1),
                ("avg_price_exq", r.avg_price_exq),
                ("avg_price_incq", r.avg_price_incq),
                ("peak_reduction_pct", r.peak_reduction_pct),
            ]
            .into_iter()
            .collect()
        })
        .collect())
}

fn strategy_of(report: &PyReport) -> ObliviousStrategy {
    report.inner.strategy.clone()
}

/// Mean and standard error of realized welfare per consumer.
#[pyfunction]
#[pyo3(signature = (scenario, report, n, draws=200, seed=finite_game::DEFAULT_SEED))]
fn simulate_symmetric(
    py: Python<'_>,
    scenario: &PyScenario,
    report: &PyReport,
    n: usize,
    draws: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let s = strategy_of(report);
    let r = py
        .detach(|| finite_game::simulate_symmetric(&scenario.inner, &s, n, draws, seed))
        .map_err(to_py)?;
    Ok((r.mean, r.stderr))
}

/// Mean and standard error of the tagged consumer's deviation gain.
#[pyfunction]
#[pyo3(signature = (scenario, report, n, draws=200, seed=finite_game::DEFAULT_SEED, tagged_type=0))]
fn deviation_gain(
    py: Python<'_>,
    scenario: &PyScenario,
    report: &PyReport,
    n: usize,
    draws: usize,
    seed: u64,
    tagged_type: usize,
) -> PyResult<(f64, f64)> {
    if tagged_type >= scenario.inner.num_types() {
        return Err(PyValueError::new_err("tagged type out of range"));
    }
    let s = strategy_of(report);
    let cfg = DeviationConfig {
        draws,
        tagged_type,
        ..DeviationConfig::default()
    };
    let r = py
        .detach(|| finite_game::deviation_gain(&scenario.inner, &s, n, seed, &cfg))
        .map_err(to_py)?;
    Ok((r.gain.mean, r.gain.stderr))
}

/// `(n, mean gap, stderr)` for every population size.
#[pyfunction]
#[pyo3(signature = (scenario, report, n_list, draws=200, seed=finite_game::DEFAULT_SEED))]
fn welfare_gap(
    py: Python<'_>,
    scenario: &PyScenario,
    report: &PyReport,
    n_list: Vec<usize>,
    draws: usize,
    seed: u64,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let s = strategy_of(report);
    let rows = py
        .detach(|| finite_game::welfare_gap(&scenario.inner, &s, &n_list, draws, seed))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|g| (g.n, g.gap.mean, g.gap.stderr)).collect())
}

#[pyfunction]
fn true_cost(r_b: f64, r_d: f64, w: Vec<f64>) -> f64 {
    ancillary::true_cost(&ancillary::DispatchParams::new(r_b, r_d, 1.0), &w)
}

#[pyfunction]
fn surrogate_cost(r_b: f64, r_d: f64, w: Vec<f64>) -> f64 {
    ancillary::surrogate_cost(&ancillary::DispatchParams::new(r_b, r_d, 1.0), &w)
}

/// CSV of the surrogate cost error curve for one `(r_b, r_d)` pair.
#[pyfunction]
#[pyo3(signature = (r_b, r_d, ratios, trials=100_000, seed=finite_game::DEFAULT_SEED))]
fn ancillary_error(py: Python<'_>, r_b: f64, r_d: f64, ratios: Vec<f64>, trials: usize, seed: u64) -> PyResult<String> {
    py.detach(|| ancillary::error_experiment(r_b, r_d, &ratios, trials, seed).and_then(|p| ancillary::to_csv(&p)))
        .map_err(to_py)
}

#[pymodule(name = "dynprice")]
fn dynprice_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_tables, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_symmetric, m)?)?;
    m.add_function(wrap_pyfunction!(deviation_gain, m)?)?;
    m.add_function(wrap_pyfunction!(welfare_gap, m)?)?;
    m.add_function(wrap_pyfunction!(true_cost, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_cost, m)?)?;
    m.add_function(wrap_pyfunction!(ancillary_error, m)?)?;
    Ok(())
}
