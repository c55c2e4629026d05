//! Python bindings for `novelty-core`. Matrices cross the boundary as lists of rows.

use nalgebra::{DMatrix, DVector};
use novelty_core::ltv::{controllability_gramian_with_cap, DEFAULT_CONDITION_CAP};
use novelty_core::metrics::{run_fig3_experiment, run_fig4_experiment, Fig3Config, Fig4Config};
use novelty_core::networks::{sample_adjacency, GraphEnsembleConfig};
use novelty_core::novelty_dt::{
    min_novelty_control_dt, qp_oracle_dt, DtControlSequence, DtSolution, DtTransferSpec,
};
use novelty_core::{ControlSignal, Error, FeasibilityReport, Grid, TransferSpec};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(novelty, NoSolutionError, PyValueError, "No minimally novel input exists.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_)
        | Error::Degenerate { .. }
        | Error::IllConditioned { .. }
        | Error::NotPositiveSemidefinite { .. } => NoSolutionError::new_err(e.to_string()),
        Error::Integration { .. } | Error::Convergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let m = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(format!("{what} must be a nonempty rectangular list of rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn report_dict<'py>(py: Python<'py>, r: &FeasibilityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("e_prior", r.e_prior)?;
    d.set_item("e_next", r.e_next)?;
    d.set_item("margin_prior", r.margin_prior)?;
    d.set_item("margin_next", r.margin_next)?;
    d.set_item("feasible", r.feasible)?;
    Ok(d)
}

/// Continuous-time system `dx/dt = A x + B u`.
#[pyclass(name = "LtvSystem", frozen)]
struct PyLtvSystem {
    inner: novelty_core::LtvSystem,
}

#[pymethods]
impl PyLtvSystem {
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = novelty_core::LtvSystem::lti(matrix(&a, "a")?, matrix(&b, "b")?).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Time-varying system from `A`, `B` sampled on `intervals + 1` uniform nodes.
    #[staticmethod]
    fn tabulated(horizon: f64, intervals: usize, a: Vec<Vec<Vec<f64>>>, b: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let a = a.iter().map(|m| matrix(m, "a")).collect::<PyResult<Vec<_>>>()?;
        let b = b.iter().map(|m| matrix(m, "b")).collect::<PyResult<Vec<_>>>()?;
        let grid = Grid::new(horizon, intervals).map_err(to_py)?;
        let inner = novelty_core::LtvSystem::tabulated(grid, a, b).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn __repr__(&self) -> String {
        format!("LtvSystem(n={}, m={})", self.inner.state_dim(), self.inner.input_dim())
    }
}

/// Discrete-time system `x[k+1] = A[k] x[k] + B[k] u[k]`.
#[pyclass(name = "DtSystem", frozen)]
struct PyDtSystem {
    inner: novelty_core::DtSystem,
}

#[pymethods]
impl PyDtSystem {
    #[new]
    fn new(a: Vec<Vec<Vec<f64>>>, b: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let a = a.iter().map(|m| matrix(m, "a")).collect::<PyResult<Vec<_>>>()?;
        let b = b.iter().map(|m| matrix(m, "b")).collect::<PyResult<Vec<_>>>()?;
        let inner = novelty_core::DtSystem::new(a, b).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn lti(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, steps: usize) -> PyResult<Self> {
        let inner = novelty_core::DtSystem::lti(matrix(&a, "a")?, matrix(&b, "b")?, steps).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn __repr__(&self) -> String {
        format!(
            "DtSystem(n={}, m={}, p={})",
            self.inner.state_dim(),
            self.inner.input_dim(),
            self.inner.steps()
        )
    }
}

#[pyclass(name = "NoveltySolution", frozen, get_all)]
struct PyNoveltySolution {
    mu: f64,
    j: f64,
    /// Grid nodes.
    times: Vec<f64>,
    /// One row per input channel, one column per node.
    u: Vec<Vec<f64>>,
    energy: f64,
    e_prior: f64,
    e_next: f64,
    margin_prior: f64,
    margin_next: f64,
}

#[pymethods]
impl PyNoveltySolution {
    fn __repr__(&self) -> String {
        format!("NoveltySolution(mu={}, j={})", self.mu, self.j)
    }
}

#[pyclass(name = "DtSolution", frozen, get_all)]
struct PyDtSolution {
    j: f64,
    /// One row per input channel, one column per step.
    u: Vec<Vec<f64>>,
    energy: f64,
    /// `None` for the forced case.
    gamma: Option<f64>,
    delta: Option<Vec<f64>>,
    relaxation_tight: bool,
    iterations: usize,
}

impl From<DtSolution> for PyDtSolution {
    fn from(s: DtSolution) -> Self {
        Self {
            j: s.j,
            u: rows(s.u.samples()),
            energy: s.u.energy(),
            gamma: s.multipliers.as_ref().map(|m| m.gamma),
            delta: s.multipliers.map(|m| m.delta),
            relaxation_tight: s.relaxation_tight,
            iterations: s.iterations,
        }
    }
}

#[pymethods]
impl PyDtSolution {
    fn __repr__(&self) -> String {
        format!("DtSolution(j={}, iterations={})", self.j, self.iterations)
    }
}

/// Controllability gramian over `[0, horizon]`; returns `(W, condition_estimate)`.
#[pyfunction]
#[pyo3(signature = (system, horizon, intervals = Grid::DEFAULT_INTERVALS, condition_cap = DEFAULT_CONDITION_CAP))]
fn gramian(
    py: Python<'_>,
    system: &PyLtvSystem,
    horizon: f64,
    intervals: usize,
    condition_cap: f64,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let grid = Grid::new(horizon, intervals).map_err(to_py)?;
    let g = py
        .detach(|| controllability_gramian_with_cap(&system.inner, &grid, condition_cap))
        .map_err(to_py)?;
    Ok((rows(g.matrix()), g.condition_estimate()))
}

/// Minimally novel input steering `x_0` to `x_f` given prior input samples
/// `prior` (one row per channel, `intervals + 1` columns).
#[pyfunction]
#[pyo3(signature = (system, x_0, x_f, horizon, gamma_v, gamma_u, prior, rescale_prior = false))]
#[allow(clippy::too_many_arguments)]
fn min_novelty_control(
    py: Python<'_>,
    system: &PyLtvSystem,
    x_0: Vec<f64>,
    x_f: Vec<f64>,
    horizon: f64,
    gamma_v: f64,
    gamma_u: f64,
    prior: Vec<Vec<f64>>,
    rescale_prior: bool,
) -> PyResult<PyNoveltySolution> {
    let samples = matrix(&prior, "prior")?;
    if samples.ncols() < 3 {
        return Err(PyValueError::new_err("prior needs at least 3 samples per channel"));
    }
    let grid = Grid::new(horizon, samples.ncols() - 1).map_err(to_py)?;
    let mut v = ControlSignal::new(grid, samples).map_err(to_py)?;
    if rescale_prior {
        let e = v.energy();
        if e.is_nan() || e <= 0.0 {
            return Err(PyValueError::new_err("cannot rescale a zero prior"));
        }
        v = v.scaled((gamma_v / e).sqrt());
    }
    let spec = TransferSpec::new(vector(x_0), vector(x_f), horizon, gamma_v, gamma_u).map_err(to_py)?;
    let sol = py
        .detach(|| novelty_core::min_novelty_control(&system.inner, &spec, &v, &grid))
        .map_err(to_py)?;
    Ok(PyNoveltySolution {
        mu: sol.mu,
        j: sol.j,
        times: grid.times().collect(),
        u: rows(sol.u.samples()),
        energy: sol.u.energy(),
        e_prior: sol.feasibility.e_prior,
        e_next: sol.feasibility.e_next,
        margin_prior: sol.feasibility.margin_prior,
        margin_next: sol.feasibility.margin_next,
    })
}

/// Minimum-energy input and its average energy.
#[pyfunction]
#[pyo3(signature = (system, x_0, x_f, horizon, intervals = Grid::DEFAULT_INTERVALS))]
fn min_energy_control(
    py: Python<'_>,
    system: &PyLtvSystem,
    x_0: Vec<f64>,
    x_f: Vec<f64>,
    horizon: f64,
    intervals: usize,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let grid = Grid::new(horizon, intervals).map_err(to_py)?;
    // budgets are irrelevant to the minimum-energy input
    let spec = TransferSpec::new(vector(x_0), vector(x_f), horizon, 1.0, 1.0).map_err(to_py)?;
    let (u, e) = py
        .detach(|| novelty_core::min_energy_control(&system.inner, &spec, &grid))
        .map_err(to_py)?;
    Ok((rows(u.samples()), e))
}

/// Endpoint margins of a transfer whose prior leg starts at `x_r`.
#[pyfunction]
#[pyo3(signature = (system, x_r, x_0, x_f, horizon, gamma_v, gamma_u, intervals = Grid::DEFAULT_INTERVALS))]
#[allow(clippy::too_many_arguments)]
fn feasibility<'py>(
    py: Python<'py>,
    system: &PyLtvSystem,
    x_r: Vec<f64>,
    x_0: Vec<f64>,
    x_f: Vec<f64>,
    horizon: f64,
    gamma_v: f64,
    gamma_u: f64,
    intervals: usize,
) -> PyResult<Bound<'py, PyDict>> {
    use novelty_core::novelty_ct::{check_existence, TransferContext};
    let grid = Grid::new(horizon, intervals).map_err(to_py)?;
    let spec = TransferSpec::new(vector(x_0), vector(x_f), horizon, gamma_v, gamma_u)
        .and_then(|s| s.with_prior_state(vector(x_r)))
        .map_err(to_py)?;
    let report = py
        .detach(|| {
            let ctx = TransferContext::new(&system.inner, &grid, &[])?;
            let s = ctx.prior_leg_vector(&spec)?;
            let r = ctx.next_leg_vector(&spec);
            check_existence(&spec, &s, &r, ctx.gramian())
        })
        .map_err(to_py)?;
    report_dict(py, &report)
}

fn dt_problem(
    x_0: Vec<f64>,
    x_f: Vec<f64>,
    gamma_v: f64,
    gamma_u: f64,
    v: &[Vec<f64>],
    rescale_prior: bool,
) -> PyResult<(DtTransferSpec, DtControlSequence)> {
    let spec = DtTransferSpec::new(vector(x_0), vector(x_f), gamma_v, gamma_u).map_err(to_py)?;
    let seq = DtControlSequence::new(matrix(v, "v")?.transpose()).map_err(to_py)?;
    let seq = if rescale_prior { seq.with_energy(gamma_v).map_err(to_py)? } else { seq };
    Ok((spec, seq))
}

/// Closed-form discrete solve; `v` holds one input vector per step.
#[pyfunction]
#[pyo3(signature = (system, x_0, x_f, gamma_v, gamma_u, v, rescale_prior = false))]
#[allow(clippy::too_many_arguments)]
fn min_novelty_control_discrete(
    py: Python<'_>,
    system: &PyDtSystem,
    x_0: Vec<f64>,
    x_f: Vec<f64>,
    gamma_v: f64,
    gamma_u: f64,
    v: Vec<Vec<f64>>,
    rescale_prior: bool,
) -> PyResult<PyDtSolution> {
    let (spec, seq) = dt_problem(x_0, x_f, gamma_v, gamma_u, &v, rescale_prior)?;
    let sol = py
        .detach(|| min_novelty_control_dt(&system.inner, &spec, &seq))
        .map_err(to_py)?;
    Ok(sol.into())
}

/// Iterative solve of the same discrete problem.
#[pyfunction]
#[pyo3(signature = (system, x_0, x_f, gamma_v, gamma_u, v, rescale_prior = false))]
#[allow(clippy::too_many_arguments)]
fn qp_oracle_discrete(
    py: Python<'_>,
    system: &PyDtSystem,
    x_0: Vec<f64>,
    x_f: Vec<f64>,
    gamma_v: f64,
    gamma_u: f64,
    v: Vec<Vec<f64>>,
    rescale_prior: bool,
) -> PyResult<PyDtSolution> {
    let (spec, seq) = dt_problem(x_0, x_f, gamma_v, gamma_u, &v, rescale_prior)?;
    let sol = py.detach(|| qp_oracle_dt(&system.inner, &spec, &seq)).map_err(to_py)?;
    Ok(sol.into())
}

/// Edge list of realization `index` of a graph ensemble given as JSON.
#[pyfunction]
#[pyo3(signature = (ensemble_json, index = 0))]
fn sample_graph(ensemble_json: &str, index: u64) -> PyResult<Vec<(usize, usize)>> {
    let config: GraphEnsembleConfig =
        serde_json::from_str(ensemble_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    config.validate().map_err(to_py)?;
    let adj = sample_adjacency(&config, index).map_err(to_py)?;
    Ok(adj.edges().collect())
}

/// Rate-network ensemble run; returns `(csv, verdict_line)`.
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn run_fig3(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let config: Fig3Config =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.detach(|| run_fig3_experiment(&config)).map_err(to_py)?;
    Ok((report.to_csv(), report.verdict_line()))
}

/// Graph-metric sweep; returns `(csv, verdict_line)`.
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn run_fig4(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let config: Fig4Config =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.detach(|| run_fig4_experiment(&config)).map_err(to_py)?;
    Ok((report.to_csv(), report.verdict_line()))
}

#[pymodule]
fn novelty(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NoSolutionError", m.py().get_type::<NoSolutionError>())?;
    m.add_class::<PyLtvSystem>()?;
    m.add_class::<PyDtSystem>()?;
    m.add_class::<PyNoveltySolution>()?;
    m.add_class::<PyDtSolution>()?;
    m.add_function(wrap_pyfunction!(gramian, m)?)?;
    m.add_function(wrap_pyfunction!(min_novelty_control, m)?)?;
    m.add_function(wrap_pyfunction!(min_energy_control, m)?)?;
    m.add_function(wrap_pyfunction!(feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(min_novelty_control_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(qp_oracle_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(sample_graph, m)?)?;
    m.add_function(wrap_pyfunction!(run_fig3, m)?)?;
    m.add_function(wrap_pyfunction!(run_fig4, m)?)?;
    Ok(())
}
