//! Python bindings. Structured values (observations, actions, step results,
//! decisions) cross the boundary as plain dicts with the same field names
//! as the JSON forms used by the CLI and the service.

use powrl_core::controller::{Controller, ControllerConfig, Exhaustive};
use powrl_core::environment::{Action, EnvConfig, Environment};
use powrl_core::evaluation::{check_policy, evaluate as eval_all, run_agent as run_one, AgentKind, EvalConfig};
use powrl_core::fixtures;
use powrl_core::grid::Grid;
use powrl_core::ppo::{PolicyParams, PolicyProposer};
use powrl_core::scenario::{self, Chronic};
use powrl_core::topology::{self, ActionSet, ReductionConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use std::sync::Arc;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn action_arg(obj: Option<&Bound<'_, PyAny>>) -> PyResult<Action> {
    match obj {
        None => Ok(Action::DoNothing),
        Some(o) if o.is_none() => Ok(Action::DoNothing),
        Some(o) => from_py(o),
    }
}

fn fixture(name: &str) -> PyResult<fixtures::Fixture> {
    match name {
        "fig1" => Ok(fixtures::fig1()),
        "training" => Ok(fixtures::training()),
        "evaluation" => Ok(fixtures::evaluation()),
        other => Err(value_err(format!("unknown fixture `{other}` (fig1, training, evaluation)"))),
    }
}

fn agent_arg(name: &str) -> PyResult<AgentKind> {
    AgentKind::parse(name).ok_or_else(|| value_err(format!("unknown agent `{name}`")))
}

fn load_params(path: Option<&str>) -> PyResult<Option<PolicyParams>> {
    path.map(|p| scenario::load_checkpoint(p).map(|ck| ck.params).map_err(value_err)).transpose()
}

#[pyclass(name = "Grid", module = "powrl", frozen)]
struct PyGrid {
    inner: Arc<Grid>,
}

#[pymethods]
impl PyGrid {
    /// One of the bundled grids: `fig1`, `training` or `evaluation`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        Ok(PyGrid { inner: Arc::new(fixture(name)?.grid) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyGrid { inner: Arc::new(scenario::load_grid(path).map_err(value_err)?) })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyGrid { inner: Arc::new(scenario::parse_grid(text).map_err(value_err)?) })
    }

    fn to_text(&self) -> String {
        scenario::write_grid(&self.inner)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n_substations(&self) -> usize {
        self.inner.n_substations()
    }

    #[getter]
    fn n_lines(&self) -> usize {
        self.inner.n_lines()
    }

    fn __repr__(&self) -> String {
        format!("Grid({:?}, substations={}, lines={})", self.inner.name, self.inner.n_substations(), self.inner.n_lines())
    }
}

#[pyclass(name = "Chronic", module = "powrl", frozen)]
struct PyChronic {
    inner: Arc<Chronic>,
}

#[pymethods]
impl PyChronic {
    /// Loads a chronic and checks it against `grid`.
    #[staticmethod]
    fn load(path: &str, grid: PyRef<'_, PyGrid>) -> PyResult<Self> {
        Ok(PyChronic { inner: Arc::new(scenario::load_chronic_for(path, &grid.inner).map_err(value_err)?) })
    }

    /// The generated adversarial suite of a bundled fixture.
    #[staticmethod]
    fn adversarial_suite(fixture_name: &str, n: usize, steps: usize, seed: u64) -> PyResult<Vec<Self>> {
        let fx = fixture(fixture_name)?;
        Ok(fixtures::adversarial_suite(&fx, n, steps, seed)
            .into_iter()
            .map(|c| PyChronic { inner: Arc::new(c) })
            .collect())
    }

    #[staticmethod]
    fn easy(fixture_name: &str, steps: usize) -> PyResult<Self> {
        Ok(PyChronic { inner: Arc::new(fixtures::easy_chronic(&fixture(fixture_name)?, steps)) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        scenario::save_chronic(&self.inner, path).map_err(runtime_err)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }
}

#[pyclass(name = "ActionSet", module = "powrl", frozen)]
struct PyActionSet {
    inner: Arc<ActionSet>,
}

#[pymethods]
impl PyActionSet {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyActionSet { inner: Arc::new(scenario::load_action_set(path).map_err(value_err)?) })
    }

    /// The `budget` most relieving substation actions over stressed states
    /// of `chronics`.
    #[staticmethod]
    #[pyo3(signature = (grid, chronics, budget, seed = 0))]
    fn reduce(grid: PyRef<'_, PyGrid>, chronics: Vec<PyRef<'_, PyChronic>>, budget: usize, seed: u64) -> PyResult<Self> {
        let cs: Vec<Arc<Chronic>> = chronics.iter().map(|c| c.inner.clone()).collect();
        let cfg = ReductionConfig { seed, ..ReductionConfig::default() };
        let set = topology::reduce_action_space(&grid.inner, &cs, budget, &cfg).map_err(value_err)?;
        Ok(PyActionSet { inner: Arc::new(set) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        scenario::save_action_set(&self.inner, path).map_err(runtime_err)
    }

    fn action<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyAny>> {
        if index >= self.inner.len() {
            return Err(value_err(format!("index {index} out of range ({} actions)", self.inner.len())));
        }
        to_py(py, self.inner.action(index))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Environment", module = "powrl")]
struct PyEnvironment {
    inner: Environment,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    #[pyo3(signature = (grid, chronic, seed = 0))]
    fn new(grid: PyRef<'_, PyGrid>, chronic: PyRef<'_, PyChronic>, seed: u64) -> PyResult<Self> {
        let env = Environment::new(grid.inner.clone(), chronic.inner.clone(), EnvConfig::default(), seed)
            .map_err(value_err)?;
        Ok(PyEnvironment { inner: env })
    }

    fn observation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.observation())
    }

    /// Applies `action` (a dict; `None` means do nothing) and returns the
    /// step result.
    #[pyo3(signature = (action = None))]
    fn step<'py>(&mut self, py: Python<'py>, action: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
        let a = action_arg(action)?;
        let result = self.inner.step(&a).map_err(value_err)?;
        to_py(py, &result)
    }

    #[pyo3(signature = (action = None))]
    fn simulate<'py>(&self, py: Python<'py>, action: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
        let a = action_arg(action)?;
        to_py(py, &self.inner.simulate(&a).map_err(value_err)?)
    }

    /// `None` if legal, else the reason the environment would refuse it.
    fn check_action<'py>(&self, py: Python<'py>, action: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let a: Action = from_py(action)?;
        to_py(py, &self.inner.check_action(&a).map_err(value_err)?)
    }

    fn state_hash(&self) -> u64 {
        self.inner.state_hash()
    }

    #[getter]
    fn time_step(&self) -> usize {
        self.inner.time_step()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn total_reward(&self) -> f64 {
        self.inner.total_reward()
    }

    fn copy(&self) -> Self {
        PyEnvironment { inner: self.inner.clone() }
    }
}

/// The gated controller. With a checkpoint the overflow branch asks the
/// policy for candidates; without one it simulates every allowed action.
#[pyclass(name = "Controller", module = "powrl")]
struct PyController {
    inner: Controller,
    params: Option<PolicyParams>,
}

#[pymethods]
impl PyController {
    #[new]
    #[pyo3(signature = (rho_threshold = 0.95, top_k = 5, checkpoint = None))]
    fn new(rho_threshold: f64, top_k: usize, checkpoint: Option<&str>) -> PyResult<Self> {
        let cfg = ControllerConfig { rho_threshold, rl_top_k: top_k, ..ControllerConfig::default() };
        Ok(PyController { inner: Controller::new(cfg).map_err(value_err)?, params: load_params(checkpoint)? })
    }

    fn decide<'py>(
        &mut self,
        py: Python<'py>,
        env: PyRef<'py, PyEnvironment>,
        actions: PyRef<'py, PyActionSet>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let decision = match &self.params {
            Some(p) => {
                check_policy(env.inner.grid(), &actions.inner, p).map_err(value_err)?;
                self.inner.decide(&env.inner, &mut PolicyProposer::greedy(p), &actions.inner)
            }
            None => self.inner.decide(&env.inner, &mut Exhaustive, &actions.inner),
        }
        .map_err(value_err)?;
        to_py(py, &decision)
    }

    fn reset(&mut self) {
        self.inner.reset();
    }
}

/// Number of valid bus assignments of a substation, up to bus symmetry.
#[pyfunction]
fn count_valid_topologies(n_line: usize, n_gen: usize, n_load: usize) -> PyResult<u64> {
    topology::count_valid_topologies(n_line, n_gen, n_load).map_err(value_err)
}

#[pyfunction]
fn reward(rho_max: f64) -> f64 {
    powrl_core::environment::reward(rho_max)
}

/// `(advantages, returns)`.
#[pyfunction]
fn gae(rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, gamma: f64, lam: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if values.len() != rewards.len() || dones.len() != rewards.len() {
        return Err(value_err("rewards, values and dones must have equal length"));
    }
    Ok(powrl_core::ppo::gae(&rewards, &values, &dones, gamma, lam))
}

/// Runs one episode and returns its log text.
#[pyfunction]
#[pyo3(signature = (grid, chronic, actions, agent = "expert_heuristic", checkpoint = None, seed = 0))]
fn run_agent(
    grid: PyRef<'_, PyGrid>,
    chronic: PyRef<'_, PyChronic>,
    actions: PyRef<'_, PyActionSet>,
    agent: &str,
    checkpoint: Option<&str>,
    seed: u64,
) -> PyResult<String> {
    let params = load_params(checkpoint)?;
    let run = run_one(&grid.inner, &chronic.inner, &actions.inner, agent_arg(agent)?, params.as_ref(), &EvalConfig::default(), seed)
        .map_err(value_err)?;
    Ok(run.log.to_text())
}

/// Evaluation rows (agent-major) as dicts.
#[pyfunction]
#[pyo3(signature = (grid, chronics, actions, agents, checkpoint = None, seed = 0))]
fn evaluate<'py>(
    py: Python<'py>,
    grid: PyRef<'py, PyGrid>,
    chronics: Vec<PyRef<'py, PyChronic>>,
    actions: PyRef<'py, PyActionSet>,
    agents: Vec<String>,
    checkpoint: Option<&str>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let kinds = agents.iter().map(|a| agent_arg(a)).collect::<PyResult<Vec<_>>>()?;
    let params = load_params(checkpoint)?;
    let cs: Vec<Arc<Chronic>> = chronics.iter().map(|c| c.inner.clone()).collect();
    let cfg = EvalConfig { seed, ..EvalConfig::default() };
    let (g, set) = (grid.inner.clone(), actions.inner.clone());
    let report = py
        .detach(|| eval_all(&g, &cs, &set, &kinds, params.as_ref(), &cfg))
        .map_err(value_err)?;
    to_py(py, &report.rows)
}

#[pymodule]
fn powrl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyChronic>()?;
    m.add_class::<PyActionSet>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyController>()?;
    m.add_function(wrap_pyfunction!(count_valid_topologies, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(run_agent, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
