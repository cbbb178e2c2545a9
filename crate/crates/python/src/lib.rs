//! Python bindings for `lqswitch`.
//!
//! Matrices cross the boundary as lists of rows (`list[list[float]]`);
//! vectors as flat lists. Costs of unstable loops come back as `inf`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lqswitch::adaptive::{self, AdaptiveConfig, AdaptiveRecord};
use lqswitch::certificates::{self as cert, FallbackCertificate};
use lqswitch::control::{self, LQWeights, LinearPlant, Matrix, Vector};
use lqswitch::experiments::{self, AnyController};
use lqswitch::montecarlo::{self, MonteCarloConfig, TrajectoryRecord};
use lqswitch::switching::{self as sw, SwitchState};

type Rows = Vec<Vec<f64>>;

fn err(e: lqswitch::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_matrix(rows: &Rows) -> PyResult<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn from_matrix(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_vector(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn mc_config(horizon: usize, n_traj: usize, seed: u64, threads: Option<usize>) -> MonteCarloConfig {
    let mc = MonteCarloConfig::new(horizon, n_traj, seed);
    match threads {
        Some(t) => mc.with_threads(t),
        None => mc,
    }
}

/// Stochastic linear plant x⁺ = A x + B u + w, w ~ N(0, W).
#[pyclass(name = "Plant", module = "lqswitch", frozen)]
struct PyPlant {
    inner: LinearPlant,
}

#[pymethods]
impl PyPlant {
    #[new]
    fn new(a: Rows, b: Rows, w: Rows) -> PyResult<Self> {
        let inner = LinearPlant::new(to_matrix(&a)?, to_matrix(&b)?, to_matrix(&w)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn example1() -> Self {
        Self {
            inner: experiments::example1_plant(),
        }
    }

    #[staticmethod]
    fn standin() -> Self {
        Self {
            inner: experiments::standin_plant(),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: lqswitch::matio::load_plant(path).map_err(err)?,
        })
    }

    #[getter]
    fn a(&self) -> Rows {
        from_matrix(self.inner.a())
    }

    #[getter]
    fn b(&self) -> Rows {
        from_matrix(self.inner.b())
    }

    #[getter]
    fn w(&self) -> Rows {
        from_matrix(self.inner.w())
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn closed_loop(&self, k: Rows) -> PyResult<Rows> {
        Ok(from_matrix(&self.inner.closed_loop(&to_matrix(&k)?).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!("Plant(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Quadratic stage cost xᵀQx + uᵀRu.
#[pyclass(name = "Weights", module = "lqswitch", frozen)]
struct PyWeights {
    inner: LQWeights,
}

#[pymethods]
impl PyWeights {
    #[new]
    fn new(q: Rows, r: Rows) -> PyResult<Self> {
        let inner = LQWeights::new(to_matrix(&q)?, to_matrix(&r)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn example1() -> Self {
        Self {
            inner: experiments::example1_weights(),
        }
    }

    #[staticmethod]
    fn standin() -> Self {
        Self {
            inner: experiments::standin_weights(),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: lqswitch::matio::load_weights(path).map_err(err)?,
        })
    }

    #[getter]
    fn q(&self) -> Rows {
        from_matrix(self.inner.q())
    }

    #[getter]
    fn r(&self) -> Rows {
        from_matrix(self.inner.r())
    }

    fn __repr__(&self) -> String {
        format!("Weights(n={}, m={})", self.inner.q().nrows(), self.inner.r().nrows())
    }
}

/// Switched controller parameters (K0, K1, M, t).
#[pyclass(name = "SwitchConfig", module = "lqswitch", frozen)]
struct PySwitchConfig {
    inner: sw::SwitchConfig,
}

#[pymethods]
impl PySwitchConfig {
    #[new]
    fn new(k0: Rows, k1: Rows, threshold: f64, dwell: usize) -> PyResult<Self> {
        let inner = sw::SwitchConfig::new(to_matrix(&k0)?, to_matrix(&k1)?, threshold, dwell).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }

    #[getter]
    fn dwell(&self) -> usize {
        self.inner.dwell()
    }

    /// One step of the switching law from counter `xi`.
    /// Returns `(u, mode, triggered, next_xi)`.
    #[pyo3(signature = (x, xi = 0))]
    fn step(&self, x: Vec<f64>, xi: usize) -> PyResult<(Vec<f64>, String, bool, usize)> {
        let d = sw::switch_step(&Vector::from_vec(x), SwitchState { xi }, &self.inner).map_err(err)?;
        Ok((from_vector(&d.u), d.mode.to_string(), d.triggered, d.next_state.xi))
    }
}

/// Solves the Riccati equation. Keys: p_star, k_star, j_star, residual.
#[pyfunction]
fn dare<'py>(py: Python<'py>, plant: &PyPlant, weights: &PyWeights) -> PyResult<Bound<'py, PyDict>> {
    let sol = control::dare_solve(&plant.inner, &weights.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("p_star", from_matrix(&sol.p_star))?;
    d.set_item("k_star", from_matrix(&sol.k_star))?;
    d.set_item("j_star", sol.j_star)?;
    d.set_item("residual", sol.residual)?;
    Ok(d)
}

/// Exact average cost of u = K x (`inf` when A + B K is unstable).
#[pyfunction]
fn linear_feedback_cost(plant: &PyPlant, weights: &PyWeights, k: Rows) -> PyResult<f64> {
    let cost = control::linear_feedback_cost(&plant.inner, &weights.inner, &to_matrix(&k)?).map_err(err)?;
    Ok(cost.to_f64())
}

#[pyfunction]
fn spectral_radius(a: Rows) -> PyResult<f64> {
    control::spectral_radius(&to_matrix(&a)?).map_err(err)
}

/// Certificate (P0, rho0) for the fallback loop, with its checked margin.
#[pyfunction]
#[pyo3(signature = (plant, k0, rho0 = None))]
fn fallback_certificate<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    k0: Rows,
    rho0: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let k0 = to_matrix(&k0)?;
    let c = cert::build_fallback_certificate(&plant.inner, &k0, rho0).map_err(err)?;
    let check = cert::check_fallback_certificate(&plant.inner, &k0, &c).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("p0", from_matrix(&c.p0))?;
    d.set_item("rho0", c.rho0)?;
    d.set_item("margin", check.margin)?;
    d.set_item("passed", check.passed)?;
    Ok(d)
}

/// Common Lyapunov certificate (P, rho, t_min) for K1 and K0 held t_min steps.
#[pyfunction]
#[pyo3(signature = (plant, k0, k1, rho = None))]
fn common_certificate<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    k0: Rows,
    k1: Rows,
    rho: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let (k0, k1) = (to_matrix(&k0)?, to_matrix(&k1)?);
    let c = cert::build_common_certificate(&plant.inner, &k0, &k1, rho).map_err(err)?;
    let check = cert::check_common_certificate(&plant.inner, &k0, &k1, &c).map_err(err)?;
    let w_tilde = cert::process_gramian(&plant.inner, &k0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("p", from_matrix(&c.p))?;
    d.set_item("rho", c.rho)?;
    d.set_item("t_min", c.t_min)?;
    d.set_item("primary_margin", check.primary_margin)?;
    d.set_item("dwell_margin", check.dwell_margin)?;
    d.set_item("passed", check.passed)?;
    d.set_item("minimal", check.minimal)?;
    d.set_item("m0", cert::threshold_floor(&w_tilde, &c.p, c.rho).map_err(err)?)?;
    d.set_item("decay_constant", cert::decay_constant(c.rho, &c.p, &w_tilde).map_err(err)?)?;
    Ok(d)
}

fn fallback(plant: &LinearPlant, k0: &Matrix) -> PyResult<FallbackCertificate> {
    cert::build_fallback_certificate(plant, k0, None).map_err(err)
}

/// Upper bound on the switched cost, valid for any (even destabilizing) K1.
#[pyfunction]
fn bounded_cost_bound(plant: &PyPlant, weights: &PyWeights, k0: Rows, k1: Rows, threshold: f64) -> PyResult<f64> {
    let k0 = to_matrix(&k0)?;
    let c0 = fallback(&plant.inner, &k0)?;
    cert::bounded_cost_bound(&plant.inner, &weights.inner, &k0, &to_matrix(&k1)?, threshold, &c0).map_err(err)
}

/// Bound on J(K1, M, t) - J(K1) with its constants. Raises when M < M0 or
/// the dwell inequality fails at `dwell`.
#[pyfunction]
fn gap_bound<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    weights: &PyWeights,
    k0: Rows,
    k1: Rows,
    threshold: f64,
    dwell: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let (k0, k1) = (to_matrix(&k0)?, to_matrix(&k1)?);
    let c0 = fallback(&plant.inner, &k0)?;
    let c = cert::build_common_certificate(&plant.inner, &k0, &k1, None).map_err(err)?;
    let g = cert::gap_bound(&plant.inner, &weights.inner, &k0, &k1, threshold, dwell, &c0, &c).map_err(err)?;
    let a = &g.analysis;
    let d = PyDict::new(py);
    d.set_item("bound", g.bound)?;
    d.set_item("m0", a.m0)?;
    d.set_item("script_a", a.script_a)?;
    d.set_item("script_q", a.script_q)?;
    d.set_item("fourth_moment", a.fourth_moment)?;
    d.set_item("c1", a.c1)?;
    d.set_item("c2", a.c2)?;
    d.set_item("c3", a.c3)?;
    d.set_item("c4", a.c4)?;
    d.set_item("tail_factor", a.tail_factor)?;
    d.set_item("script_g", a.g)?;
    d.set_item("decay_constant", a.decay_c)?;
    Ok(d)
}

/// Full certification report as ordered `(key, value)` string pairs.
#[pyfunction]
#[pyo3(signature = (plant, weights, k0, k1, threshold = None, dwell = None))]
fn certify(
    plant: &PyPlant,
    weights: &PyWeights,
    k0: Rows,
    k1: Rows,
    threshold: Option<f64>,
    dwell: Option<usize>,
) -> PyResult<Vec<(String, String)>> {
    let hyper = match (threshold, dwell) {
        (Some(m), Some(t)) => Some((m, t)),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("give both threshold and dwell, or neither")),
    };
    let report = experiments::certify_report(&plant.inner, &weights.inner, &to_matrix(&k0)?, &to_matrix(&k1)?, hyper)
        .map_err(err)?;
    Ok(report.entries)
}

fn trajectory_dict<'py>(py: Python<'py>, rec: &TrajectoryRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("states", rec.states.iter().map(from_vector).collect::<Vec<_>>())?;
    d.set_item("inputs", rec.inputs.iter().map(from_vector).collect::<Vec<_>>())?;
    d.set_item("modes", rec.modes.iter().map(|m| m.to_string()).collect::<Vec<_>>())?;
    d.set_item("stage_costs", rec.stage_costs.clone())?;
    d.set_item("trigger_count", rec.trigger_count)?;
    d.set_item("diverged", rec.diverged)?;
    Ok(d)
}

/// Monte Carlo cost of the switched controller (or of u = K1 x with
/// `switching=False`). Trajectory 0 is returned in full.
#[pyfunction]
#[pyo3(signature = (plant, weights, k0, k1, threshold, dwell, horizon = 100, n_traj = 1000, seed = 0, switching = true, threads = None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    plant: &PyPlant,
    weights: &PyWeights,
    k0: Rows,
    k1: Rows,
    threshold: f64,
    dwell: usize,
    horizon: usize,
    n_traj: usize,
    seed: u64,
    switching: bool,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let ctrl = AnyController::new(&to_matrix(&k0)?, &to_matrix(&k1)?, threshold, dwell, switching).map_err(err)?;
    let (p, w) = (&plant.inner, &weights.inner);
    let sim = py
        .detach(|| experiments::simulate(p, w, &ctrl, mc_config(horizon, n_traj, seed, threads)))
        .map_err(err)?;
    let e = &sim.estimate;
    let d = PyDict::new(py);
    d.set_item("mean", e.mean.to_f64())?;
    d.set_item("stderr", e.stderr)?;
    d.set_item("fallback_fraction", e.fallback_fraction)?;
    d.set_item("mean_triggers", e.mean_triggers)?;
    d.set_item("diverged", e.diverged)?;
    d.set_item("trajectory", trajectory_dict(py, &sim.trajectory)?)?;
    Ok(d)
}

/// Paired Monte Carlo estimate of J(K1, M, t) - J(K1) on shared noise.
/// Returns `(mean_difference, stderr)`.
#[pyfunction]
#[pyo3(signature = (plant, weights, k0, k1, threshold, dwell, horizon = 100, n_traj = 1000, seed = 0, threads = None))]
#[allow(clippy::too_many_arguments)]
fn paired_gap(
    py: Python<'_>,
    plant: &PyPlant,
    weights: &PyWeights,
    k0: Rows,
    k1: Rows,
    threshold: f64,
    dwell: usize,
    horizon: usize,
    n_traj: usize,
    seed: u64,
    threads: Option<usize>,
) -> PyResult<(f64, f64)> {
    let (k0, k1) = (to_matrix(&k0)?, to_matrix(&k1)?);
    let switched = AnyController::new(&k0, &k1, threshold, dwell, true).map_err(err)?;
    let linear = AnyController::new(&k0, &k1, threshold, dwell, false).map_err(err)?;
    let (p, w) = (&plant.inner, &weights.inner);
    let cmp = py
        .detach(|| montecarlo::paired_compare(p, w, &switched, &linear, mc_config(horizon, n_traj, seed, threads)))
        .map_err(err)?;
    Ok((cmp.mean_difference, cmp.stderr_difference))
}

/// Record of one certainty-equivalent learning run.
#[pyclass(name = "AdaptiveRun", module = "lqswitch", frozen)]
struct PyAdaptiveRun {
    plant: LinearPlant,
    weights: LQWeights,
    record: AdaptiveRecord,
}

#[pymethods]
impl PyAdaptiveRun {
    #[getter]
    fn diverged(&self) -> bool {
        self.record.diverged
    }

    #[getter]
    fn trigger_count(&self) -> usize {
        self.record.trigger_count
    }

    #[getter]
    fn max_state_norm(&self) -> f64 {
        self.record.max_state_norm
    }

    #[getter]
    fn average_cost(&self) -> f64 {
        self.record.average_cost()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        self.record.steps.iter().map(|s| from_vector(&s.x)).collect()
    }

    #[getter]
    fn modes(&self) -> Vec<String> {
        self.record.steps.iter().map(|s| s.mode.to_string()).collect()
    }

    /// One dict per gain update: k, gain, updated, stabilizing, error.
    fn updates<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.record
            .updates
            .iter()
            .map(|u| {
                let d = PyDict::new(py);
                d.set_item("k", u.k)?;
                d.set_item("gain", from_matrix(&u.gain))?;
                d.set_item("a_hat", u.a_hat.as_ref().map(from_matrix))?;
                d.set_item("b_hat", u.b_hat.as_ref().map(from_matrix))?;
                d.set_item("updated", u.updated)?;
                d.set_item("stabilizing", u.stabilizing)?;
                d.set_item("error", u.error.clone())?;
                Ok(d)
            })
            .collect()
    }

    /// Switched and linear cost of every learned gain, with the paired gap.
    #[pyo3(signature = (horizon = 100, n_traj = 1000, seed = 1, threads = None))]
    fn gap_curve<'py>(
        &self,
        py: Python<'py>,
        horizon: usize,
        n_traj: usize,
        seed: u64,
        threads: Option<usize>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mc = mc_config(horizon, n_traj, seed, threads);
        let points = py
            .detach(|| adaptive::gap_curve(&self.plant, &self.weights, &self.record, mc))
            .map_err(err)?;
        points
            .iter()
            .map(|p| {
                let d = PyDict::new(py);
                d.set_item("k", p.k)?;
                d.set_item("threshold", p.threshold)?;
                d.set_item("dwell", p.dwell)?;
                d.set_item("j_switched", p.j_switched.to_f64())?;
                d.set_item("j_switched_stderr", p.j_switched_stderr)?;
                d.set_item("j_linear", p.j_linear.to_f64())?;
                d.set_item("gap", p.gap)?;
                d.set_item("gap_stderr", p.gap_stderr)?;
                d.set_item("fallback_fraction", p.fallback_fraction)?;
                d.set_item("stabilizing", p.stabilizing)?;
                Ok(d)
            })
            .collect()
    }
}

/// Learning run from x0 = 0. `threshold` and `dwell` default to the
/// logarithmic schedules; `switching=False` removes the safety switch.
#[pyfunction]
#[pyo3(signature = (plant, weights, k0, horizon, seed = 0, threshold = None, dwell = None, switching = true))]
#[allow(clippy::too_many_arguments)]
fn adaptive_run(
    py: Python<'_>,
    plant: &PyPlant,
    weights: &PyWeights,
    k0: Rows,
    horizon: usize,
    seed: u64,
    threshold: Option<f64>,
    dwell: Option<usize>,
    switching: bool,
) -> PyResult<PyAdaptiveRun> {
    let mut config = AdaptiveConfig::new(to_matrix(&k0)?);
    if let Some(m) = threshold {
        config.threshold = adaptive::ThresholdSchedule::Fixed(m);
    }
    if let Some(t) = dwell {
        config.dwell = adaptive::DwellSchedule::Fixed(t);
    }
    if !switching {
        config = config.without_switching();
    }
    let (p, w) = (plant.inner.clone(), weights.inner.clone());
    let record = py.detach(|| adaptive::adaptive_run(&p, &w, &config, horizon, seed)).map_err(err)?;
    Ok(PyAdaptiveRun {
        plant: p,
        weights: w,
        record,
    })
}

#[pymodule]
#[pyo3(name = "lqswitch")]
pub fn lqswitch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlant>()?;
    m.add_class::<PyWeights>()?;
    m.add_class::<PySwitchConfig>()?;
    m.add_class::<PyAdaptiveRun>()?;
    m.add_function(wrap_pyfunction!(dare, m)?)?;
    m.add_function(wrap_pyfunction!(linear_feedback_cost, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(fallback_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(common_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(bounded_cost_bound, m)?)?;
    m.add_function(wrap_pyfunction!(gap_bound, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(paired_gap, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_run, m)?)?;
    Ok(())
}
