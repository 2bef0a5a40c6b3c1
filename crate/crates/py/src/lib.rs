//! Python bindings: stationary distributions, revenue, thresholds and the
//! block-tree simulator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ethsm::markov::{stationary_closed_form, stationary_numeric, NumericOptions, StationaryDistribution};
use ethsm::model::{MiningConfig, RewardSchedule};
use ethsm::revenue::{absolute_revenue, profitability_threshold, relative_share, Scenario, ThresholdOptions};
use ethsm::rewards::{aggregate_revenue, RevenueBreakdown};
use ethsm::sim::{run_simulation, SimOptions, SimResult};

fn value_error<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_schedule(tag: &str) -> PyResult<RewardSchedule> {
    tag.parse().map_err(value_error)
}

fn parse_scenario(n: u8) -> PyResult<Scenario> {
    n.to_string().parse().map_err(value_error)
}

#[pyclass(name = "StationaryDistribution", frozen)]
struct PyStationary {
    inner: StationaryDistribution,
}

#[pymethods]
impl PyStationary {
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.config.alpha
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.config.gamma
    }

    #[getter]
    fn truncation(&self) -> u32 {
        self.inner.truncation()
    }

    #[getter]
    fn tail_mass_bound(&self) -> f64 {
        self.inner.tail_mass_bound
    }

    /// Probability of state `(i, j)`; zero outside the truncation.
    fn get(&self, i: u32, j: u32) -> f64 {
        self.inner.at(i, j)
    }

    fn items(&self) -> Vec<((u32, u32), f64)> {
        self.inner.iter().map(|(s, p)| ((s.l_s, s.l_h), p)).collect()
    }

    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    fn max_abs_diff(&self, other: &PyStationary) -> f64 {
        self.inner.max_abs_diff(&other.inner).0
    }

    fn __len__(&self) -> usize {
        self.inner.as_slice().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "StationaryDistribution(alpha={}, gamma={}, truncation={})",
            self.alpha(),
            self.gamma(),
            self.truncation()
        )
    }
}

/// Stationary distribution by the closed form (`method="closed"`) or an
/// iterative solve (`method="numeric"`).
#[pyfunction]
#[pyo3(signature = (alpha, gamma, truncation = 200, method = "closed"))]
fn stationary(py: Python<'_>, alpha: f64, gamma: f64, truncation: u32, method: &str) -> PyResult<PyStationary> {
    let c = MiningConfig::new(alpha, gamma);
    let inner = match method {
        "closed" => py.detach(|| stationary_closed_form(&c, truncation)),
        "numeric" => py.detach(|| stationary_numeric(&c, truncation, NumericOptions::default())),
        _ => return Err(PyValueError::new_err(format!("unknown method `{method}`"))),
    }
    .map_err(value_error)?;
    Ok(PyStationary { inner })
}

#[pyclass(name = "RevenueBreakdown", frozen)]
struct PyRevenue {
    inner: RevenueBreakdown,
}

#[pymethods]
impl PyRevenue {
    #[getter]
    fn schedule(&self) -> String {
        self.inner.schedule.clone()
    }

    #[getter]
    fn r_b_s(&self) -> f64 {
        self.inner.r_b_s
    }

    #[getter]
    fn r_b_h(&self) -> f64 {
        self.inner.r_b_h
    }

    #[getter]
    fn r_u_s(&self) -> f64 {
        self.inner.r_u_s
    }

    #[getter]
    fn r_u_h(&self) -> f64 {
        self.inner.r_u_h
    }

    #[getter]
    fn r_n_s(&self) -> f64 {
        self.inner.r_n_s
    }

    #[getter]
    fn r_n_h(&self) -> f64 {
        self.inner.r_n_h
    }

    #[getter]
    fn uncle_count_rate(&self) -> f64 {
        self.inner.uncle_count_rate
    }

    #[getter]
    fn r_total(&self) -> f64 {
        self.inner.r_total
    }

    #[getter]
    fn error_bar(&self) -> f64 {
        self.inner.error_bar
    }

    /// `(U_s, U_h)` after the difficulty adjustment of `scenario` (1 or 2).
    #[pyo3(signature = (scenario = 1))]
    fn absolute(&self, scenario: u8) -> PyResult<(f64, f64)> {
        Ok(absolute_revenue(&self.inner, parse_scenario(scenario)?))
    }

    fn relative_share(&self) -> f64 {
        relative_share(&self.inner)
    }

    #[pyo3(signature = (max_distance = 6))]
    fn honest_uncle_distribution(&self, max_distance: u32) -> Vec<f64> {
        self.inner.honest_uncle_distribution(max_distance)
    }

    fn __repr__(&self) -> String {
        format!(
            "RevenueBreakdown(alpha={}, gamma={}, schedule={:?}, r_total={})",
            self.inner.config.alpha, self.inner.config.gamma, self.inner.schedule, self.inner.r_total
        )
    }
}

/// Revenue rates, with the per-transition and closed-form paths cross-checked.
#[pyfunction]
#[pyo3(signature = (alpha, gamma, schedule = "ethereum", truncation = 200))]
fn revenue(py: Python<'_>, alpha: f64, gamma: f64, schedule: &str, truncation: u32) -> PyResult<PyRevenue> {
    let s = parse_schedule(schedule)?;
    let c = MiningConfig::new(alpha, gamma);
    let inner = py
        .detach(|| {
            let dist = stationary_closed_form(&c, truncation)?;
            aggregate_revenue(&dist, &s)
        })
        .map_err(value_error)?;
    Ok(PyRevenue { inner })
}

/// Smallest profitable pool size; `0.0` if profitable everywhere, `None` if never.
#[pyfunction]
#[pyo3(signature = (gamma, schedule = "ethereum", scenario = 1, tolerance = 1e-6, truncation = 200))]
fn threshold(
    py: Python<'_>,
    gamma: f64,
    schedule: &str,
    scenario: u8,
    tolerance: f64,
    truncation: u32,
) -> PyResult<Option<f64>> {
    let s = parse_schedule(schedule)?;
    let sc = parse_scenario(scenario)?;
    let opts = ThresholdOptions { tolerance, truncation, ..Default::default() };
    let r = py.detach(|| profitability_threshold(gamma, &s, sc, opts)).map_err(value_error)?;
    Ok(r.alpha_star())
}

#[pyclass(name = "SimResult", frozen)]
struct PySimResult {
    inner: SimResult,
}

#[pymethods]
impl PySimResult {
    #[getter]
    fn runs(&self) -> u32 {
        self.inner.runs
    }

    #[getter]
    fn blocks_per_run(&self) -> u64 {
        self.inner.blocks_per_run
    }

    #[getter]
    fn lemma1_holds(&self) -> bool {
        self.inner.lemma1_holds()
    }

    /// Component means keyed by name, each as `(mean, std_error)`.
    fn rates(&self) -> Vec<(&'static str, (f64, f64))> {
        let r = &self.inner;
        [
            ("r_b_s", r.r_b_s),
            ("r_b_h", r.r_b_h),
            ("r_u_s", r.r_u_s),
            ("r_u_h", r.r_u_h),
            ("r_n_s", r.r_n_s),
            ("r_n_h", r.r_n_h),
            ("uncle_rate", r.uncle_rate),
        ]
        .into_iter()
        .map(|(k, e)| (k, (e.mean, e.std_error)))
        .collect()
    }

    /// `((U_s, se), (U_h, se))` for `scenario`.
    #[pyo3(signature = (scenario = 1))]
    fn absolute(&self, scenario: u8) -> PyResult<((f64, f64), (f64, f64))> {
        let e = self.inner.scenario(parse_scenario(scenario)?);
        Ok(((e.u_s.mean, e.u_s.std_error), (e.u_h.mean, e.u_h.std_error)))
    }

    #[pyo3(signature = (max_distance = 6))]
    fn honest_uncle_distribution(&self, max_distance: u32) -> Vec<f64> {
        self.inner.honest_uncle_distribution(max_distance)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_error)
    }
}

/// Independent seeded runs of the block-tree simulator.
#[pyfunction]
#[pyo3(signature = (alpha, gamma, schedule = "ethereum", blocks = 100_000, runs = 10, seed = 2019))]
fn simulate(
    py: Python<'_>,
    alpha: f64,
    gamma: f64,
    schedule: &str,
    blocks: u64,
    runs: u32,
    seed: u64,
) -> PyResult<PySimResult> {
    let s = parse_schedule(schedule)?;
    let c = MiningConfig::new(alpha, gamma);
    let opts = SimOptions { blocks, runs, seed, ..Default::default() };
    let inner = py.detach(|| run_simulation(&c, &s, &opts)).map_err(value_error)?;
    Ok(PySimResult { inner })
}

#[pymodule]
fn ethsm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStationary>()?;
    m.add_class::<PyRevenue>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(stationary, m)?)?;
    m.add_function(wrap_pyfunction!(revenue, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
