//! Python bindings for the PPSO valuation laboratory.
//!
//! Exposes the contract parameters, the closed-form model quantities, the
//! lattice pricers, boundary extraction and the Monte Carlo cross-checks.
//! Build with `cargo build -p ppso-py --release`; the resulting
//! `libppso_py.so` imports as the module `ppso_py` (see
//! `python/smoke_test.py` for a loader).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ppso::boundary;
use ppso::engine;
use ppso::model;
use ppso::montecarlo;

fn err(e: ppso::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Contract and market constants; construct with keyword overrides of the
/// baseline parameter set.
#[pyclass(name = "PolicyParams")]
#[derive(Clone)]
struct PyPolicyParams {
    inner: model::PolicyParams,
}

#[pymethods]
impl PyPolicyParams {
    #[new]
    #[pyo3(signature = (
        maturity_t = 10.0, risk_free_r = 0.015, sigma = 0.18, guaranteed_rg = 0.01,
        delta = 0.1, beta = 3.0, gamma = 0.4, alpha = 0.1, a0 = 1000.0,
        fee_p = 0.0, fee_q = 0.0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        maturity_t: f64,
        risk_free_r: f64,
        sigma: f64,
        guaranteed_rg: f64,
        delta: f64,
        beta: f64,
        gamma: f64,
        alpha: f64,
        a0: f64,
        fee_p: f64,
        fee_q: f64,
    ) -> PyResult<Self> {
        let inner = model::PolicyParams {
            maturity_t,
            risk_free_r,
            sigma,
            guaranteed_rg,
            delta,
            beta,
            gamma,
            alpha,
            a0,
            fee_p,
            fee_q,
        };
        inner.validate().map_err(err)?;
        Ok(PyPolicyParams { inner })
    }

    #[getter]
    fn x_alpha(&self) -> f64 {
        self.inner.x_alpha()
    }

    #[getter]
    fn x_bar0(&self) -> f64 {
        self.inner.x_bar0()
    }

    #[getter]
    fn maturity_t(&self) -> f64 {
        self.inner.maturity_t
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyfunction]
fn payoff_h(x: f64, params: &PyPolicyParams) -> PyResult<f64> {
    model::payoff_h(x, &params.inner).map_err(err)
}

#[pyfunction]
fn drift_pi(x: f64, params: &PyPolicyParams) -> f64 {
    model::drift_pi(x, &params.inner)
}

#[pyfunction]
fn generator_h(x: f64, params: &PyPolicyParams) -> PyResult<f64> {
    model::generator_h(x, &params.inner).map_err(err)
}

#[pyfunction]
fn running_cost(x: f64, params: &PyPolicyParams) -> f64 {
    model::running_cost(x, &params.inner)
}

#[pyfunction]
fn crediting_rate(a: f64, reserve: f64, params: &PyPolicyParams) -> PyResult<f64> {
    model::crediting_rate(a, reserve, &params.inner).map_err(err)
}

#[pyfunction]
fn intrinsic_value(a: f64, reserve: f64, params: &PyPolicyParams) -> PyResult<f64> {
    model::intrinsic_value(a, reserve, &params.inner).map_err(err)
}

fn thresholds_dict<'py>(
    py: Python<'py>,
    th: &model::DerivedThresholds,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x_alpha", th.x_alpha)?;
    d.set_item("x_bar0", th.x_bar0)?;
    d.set_item("x_g", th.x_g)?;
    d.set_item("x_bar_q", th.x_bar_q)?;
    d.set_item("x_bar_q_gamma", th.x_bar_q_gamma)?;
    d.set_item("fee_case", format!("{:?}", th.fee_case))?;
    d.set_item("hat_x1", th.hat_x1)?;
    d.set_item("hat_x2", th.hat_x2)?;
    Ok(d)
}

#[pyfunction]
fn derive_thresholds<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
) -> PyResult<Bound<'py, PyDict>> {
    let th = model::derive_thresholds(&params.inner).map_err(err)?;
    thresholds_dict(py, &th)
}

#[pyfunction]
fn classify_fee_case<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
) -> PyResult<Bound<'py, PyDict>> {
    let report = model::classify_fee_case(&params.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("case", format!("{:?}", report.case))?;
    d.set_item("discriminant", report.discriminant)?;
    d.set_item("roots", report.roots)?;
    d.set_item("root_residuals", report.root_residuals)?;
    d.set_item("near_degenerate", report.near_degenerate)?;
    Ok(d)
}

/// Cone-tree valuation; returns the normalized and currency prices.
#[pyfunction]
#[pyo3(signature = (params, n_steps = 2000))]
fn price<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
    n_steps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let res = engine::price_cone(&params.inner, n_steps).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("v0", res.v0)?;
    d.set_item("v0_european", res.v0_european)?;
    d.set_item("premium", res.premium)?;
    d.set_item("price_v0", res.price_v0)?;
    d.set_item("price_v0e", res.price_v0e)?;
    d.set_item("price_vopt", res.price_vopt)?;
    d.set_item("n_steps", res.n_steps)?;
    Ok(d)
}

/// Grid solve plus boundary extraction; returns curves, landmarks and the
/// geometry report.
#[pyfunction]
#[pyo3(signature = (params, n_steps = 2000, x_max = None))]
fn solve_boundary<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
    n_steps: usize,
    x_max: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = match x_max {
        Some(xm) => engine::LatticeSpec::grid(&params.inner, n_steps, xm),
        None => engine::LatticeSpec::grid_auto(&params.inner, n_steps),
    }
    .map_err(err)?;
    let solution = engine::solve_grid(&params.inner, &spec).map_err(err)?;
    let thresholds = model::derive_thresholds(&params.inner).map_err(err)?;
    let curves = boundary::extract(&solution).map_err(err)?;
    let report = boundary::validate_shape(&curves, &thresholds);

    let d = PyDict::new(py);
    d.set_item("regime", format!("{:?}", curves.regime))?;
    d.set_item("c", curves.c_samples.clone())?;
    d.set_item("b1", curves.b1.clone())?;
    d.set_item("b2", curves.b2.clone())?;
    d.set_item("b3", curves.b3.clone())?;
    d.set_item("t0", curves.t0)?;
    d.set_item("hat_c", curves.hat_c)?;
    d.set_item("x1", curves.x1)?;
    d.set_item("x2", curves.x2)?;
    d.set_item("x3", curves.x3)?;
    d.set_item("hat_x3", curves.hat_x3)?;
    let checks = PyDict::new(py);
    for check in &report.checks {
        checks.set_item(check.name.clone(), check.passed)?;
    }
    d.set_item("shape_checks", checks)?;
    d.set_item("shape_all_pass", report.all_pass)?;
    Ok(d)
}

fn estimate_dict<'py>(
    py: Python<'py>,
    est: &montecarlo::McEstimate,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", est.mean)?;
    d.set_item("std_error", est.std_error)?;
    d.set_item("n_paths", est.n_paths)?;
    d.set_item("seed", est.seed)?;
    d.set_item("measure", format!("{:?}", est.measure))?;
    d.set_item("units", est.units.clone())?;
    Ok(d)
}

fn mc_spec(n_paths: u64, steps_per_year: u32, seed: u64, bridge: bool) -> montecarlo::McSpec {
    montecarlo::McSpec {
        n_paths,
        steps_per_year,
        seed,
        bridge_correction: bridge,
    }
}

/// European Monte Carlo value in reduced coordinates (units of a0).
#[pyfunction]
#[pyo3(signature = (params, n_paths = 100_000, steps_per_year = 250, seed = 42, bridge_correction = true))]
fn mc_european_reduced<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
    n_paths: u64,
    steps_per_year: u32,
    seed: u64,
    bridge_correction: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = mc_spec(n_paths, steps_per_year, seed, bridge_correction);
    let est = montecarlo::mc_european_reduced(&params.inner, &spec).map_err(err)?;
    estimate_dict(py, &est)
}

/// European Monte Carlo value in full (A, R) coordinates (currency).
#[pyfunction]
#[pyo3(signature = (params, n_paths = 100_000, steps_per_year = 250, seed = 42, bridge_correction = true))]
fn mc_european_full<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
    n_paths: u64,
    steps_per_year: u32,
    seed: u64,
    bridge_correction: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = mc_spec(n_paths, steps_per_year, seed, bridge_correction);
    let est = montecarlo::mc_european_full(&params.inner, &spec).map_err(err)?;
    estimate_dict(py, &est)
}

/// Extracts the boundary at `n_steps` and evaluates the induced surrender
/// strategy by simulation (units of a0).
#[pyfunction]
#[pyo3(signature = (params, n_steps = 1000, n_paths = 100_000, steps_per_year = 250, seed = 42))]
fn mc_strategy_value<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
    n_steps: usize,
    n_paths: u64,
    steps_per_year: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = engine::LatticeSpec::grid_auto(&params.inner, n_steps).map_err(err)?;
    let solution = engine::solve_grid(&params.inner, &spec).map_err(err)?;
    let curves = boundary::extract(&solution).map_err(err)?;
    let mc = mc_spec(n_paths, steps_per_year, seed, true);
    let est = montecarlo::mc_strategy_value(&params.inner, &curves, &mc).map_err(err)?;
    estimate_dict(py, &est)
}

/// Pathwise flow-inequality check for a coupled pair of starts.
#[pyfunction]
#[pyo3(signature = (params, x, y, n_paths = 10_000, steps_per_year = 100, seed = 42))]
fn flow_check<'py>(
    py: Python<'py>,
    params: &PyPolicyParams,
    x: f64,
    y: f64,
    n_paths: u64,
    steps_per_year: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = mc_spec(n_paths, steps_per_year, seed, true);
    let report = montecarlo::coupled_flow_check(&params.inner, x, y, &spec).map_err(err)?;
    let slack = montecarlo::flow_slack(&params.inner, x, y, &spec);
    let d = PyDict::new(py);
    d.set_item("n_paths", report.n_paths)?;
    d.set_item("max_lip_violation", report.max_lip_violation)?;
    d.set_item("max_lower_violation", report.max_lower_violation)?;
    d.set_item("slack", slack)?;
    d.set_item(
        "passed",
        report.max_lip_violation <= slack && report.max_lower_violation <= slack,
    )?;
    Ok(d)
}

#[pymodule]
fn ppso_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicyParams>()?;
    m.add_function(wrap_pyfunction!(payoff_h, m)?)?;
    m.add_function(wrap_pyfunction!(drift_pi, m)?)?;
    m.add_function(wrap_pyfunction!(generator_h, m)?)?;
    m.add_function(wrap_pyfunction!(running_cost, m)?)?;
    m.add_function(wrap_pyfunction!(crediting_rate, m)?)?;
    m.add_function(wrap_pyfunction!(intrinsic_value, m)?)?;
    m.add_function(wrap_pyfunction!(derive_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(classify_fee_case, m)?)?;
    m.add_function(wrap_pyfunction!(price, m)?)?;
    m.add_function(wrap_pyfunction!(solve_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(mc_european_reduced, m)?)?;
    m.add_function(wrap_pyfunction!(mc_european_full, m)?)?;
    m.add_function(wrap_pyfunction!(mc_strategy_value, m)?)?;
    m.add_function(wrap_pyfunction!(flow_check, m)?)?;
    Ok(())
}
