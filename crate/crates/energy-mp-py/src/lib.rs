//! Python bindings. Reports cross the boundary as plain dicts built from the same JSON the CLI prints.

use energy_mp::benchgen::{gen_lowerbound, gen_random, RandomSpec};
use energy_mp::decision::{decide_energy_mp, DecideConfig};
use energy_mp::rational::parse_rational;
use energy_mp::simulator::{simulate, SimConfig};
use energy_mp::synthesis::{search_min_bound, synth_for_decision, theoretical_bounds, verify_strategy};
use energy_mp::{Error, FiniteMemoryStrategy};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Internal(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn state_of(m: &energy_mp::Mdp, id: &str) -> PyResult<usize> {
    m.state_index(id).ok_or_else(|| PyValueError::new_err(format!("unknown state {id:?}")))
}

/// A finite MDP with integer reward vectors and rational probabilities.
#[pyclass(name = "Mdp", frozen)]
#[derive(Clone)]
struct PyMdp {
    inner: energy_mp::Mdp,
}

#[pymethods]
impl PyMdp {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        energy_mp::Mdp::parse(text).map(|inner| PyMdp { inner }).map_err(err)
    }

    /// The lower-bound family for a rational `delta` in (0, 1/2], e.g. `"1/6"`.
    #[staticmethod]
    fn lower_bound(delta: &str) -> PyResult<Self> {
        let delta = parse_rational(delta).map_err(PyValueError::new_err)?;
        gen_lowerbound(&delta).map(|inner| PyMdp { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (seed, states=4, d=2, r=1, density=0.5, max_den=16))]
    fn random(seed: u64, states: usize, d: usize, r: i64, density: f64, max_den: u32) -> PyResult<Self> {
        let spec = RandomSpec { max_denominator: max_den, ..RandomSpec::new(states, d, r, density) };
        gen_random(&spec, seed).map(|inner| PyMdp { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn state_ids(&self) -> Vec<String> {
        self.inner.ids()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Mdp(states={}, edges={}, d={})", self.inner.n(), self.inner.edges.len(), self.inner.d)
    }
}

/// Minimal initial energies for the almost-sure objective.
#[pyclass(name = "Decision", frozen)]
struct PyDecision {
    mdp: energy_mp::Mdp,
    inner: energy_mp::decision::Decision,
}

#[pymethods]
impl PyDecision {
    /// Least winning initial energy from `state`, or `None` when no energy suffices.
    fn energy(&self, state: &str) -> PyResult<Option<i64>> {
        Ok(self.inner.report.energy(state_of(&self.mdp, state)?))
    }

    fn winnable(&self, state: &str, energy: i64) -> PyResult<bool> {
        Ok(self.inner.report.winnable(state_of(&self.mdp, state)?, energy))
    }

    fn report(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.report)
    }

    /// Builds a witness by searching for the least passing memory bound up to `b_max`.
    #[pyo3(signature = (state, energy, b_max=4096))]
    fn synthesize(&self, state: &str, energy: i64, b_max: i64) -> PyResult<Option<PyStrategy>> {
        let s = state_of(&self.mdp, state)?;
        let (_, sigma) = synth_for_decision(&self.mdp, &self.inner, s, energy, b_max).map_err(err)?;
        Ok(sigma.map(|inner| PyStrategy { mdp: self.mdp.clone(), inner }))
    }
}

/// A finite-memory strategy bound to the MDP it was built for.
#[pyclass(name = "Strategy", frozen)]
struct PyStrategy {
    mdp: energy_mp::Mdp,
    inner: FiniteMemoryStrategy,
}

#[pymethods]
impl PyStrategy {
    #[staticmethod]
    fn from_json(mdp: &PyMdp, text: &str) -> PyResult<Self> {
        let inner = FiniteMemoryStrategy::parse(&mdp.inner, text).map_err(err)?;
        Ok(PyStrategy { mdp: mdp.inner.clone(), inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json(&self.mdp)
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes
    }

    /// Exact check of energy safety and positive mean payoff in every bottom component.
    fn verify(&self, py: Python<'_>, state: &str, energy: i64) -> PyResult<PyObject> {
        let s = state_of(&self.mdp, state)?;
        to_py(py, &verify_strategy(&self.mdp, &self.inner, s, energy).map_err(err)?)
    }

    #[pyo3(signature = (state, energy, seed, trials=100, horizon=100_000))]
    fn simulate(&self, py: Python<'_>, state: &str, energy: i64, seed: u64, trials: usize, horizon: u64) -> PyResult<PyObject> {
        let s = state_of(&self.mdp, state)?;
        let cfg = SimConfig::new(seed, trials, horizon);
        let stats = py.allow_threads(|| simulate(&self.mdp, &self.inner, s, energy, &cfg)).map_err(err)?;
        to_py(py, &stats)
    }
}

#[pyfunction]
#[pyo3(signature = (mdp, corner_cap=None, bailout_cap=None))]
fn decide(py: Python<'_>, mdp: &PyMdp, corner_cap: Option<i64>, bailout_cap: Option<i64>) -> PyResult<PyDecision> {
    let cfg = DecideConfig { corner_cap, bailout_cap, ..DecideConfig::default() };
    let inner = py.allow_threads(|| decide_energy_mp(&mdp.inner, &cfg)).map_err(err)?;
    Ok(PyDecision { mdp: mdp.inner.clone(), inner })
}

/// Least memory bound for which the alternating strategy verifies, with the search trace.
#[pyfunction]
#[pyo3(signature = (mdp, state, energy, b_max=4096))]
fn min_bound(py: Python<'_>, mdp: &PyMdp, state: &str, energy: i64, b_max: i64) -> PyResult<PyObject> {
    let s = state_of(&mdp.inner, state)?;
    let search = py.allow_threads(|| search_min_bound(&mdp.inner, s, energy, b_max)).map_err(err)?;
    to_py(py, &search)
}

#[pyfunction]
fn bounds(py: Python<'_>, mdp: &PyMdp) -> PyResult<PyObject> {
    to_py(py, &theoretical_bounds(&mdp.inner).map_err(err)?)
}

#[pymodule]
fn energy_mp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<PyDecision>()?;
    m.add_class::<PyStrategy>()?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(min_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
