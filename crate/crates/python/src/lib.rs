//! Python bindings. The module is importable as `eventalloc`.

use std::path::PathBuf;

use eventalloc::dynamics;
use eventalloc::scenario::{self, RunResult};
use eventalloc::trigger::zeno_bounds;
use eventalloc::{Error, Graph, QuadraticPotential};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(eventalloc, NumericalError, PyRuntimeError);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Numerical(_) => NumericalError::new_err(err.to_string()),
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Graph", module = "eventalloc", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (n, edges=Vec::new()))]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(PyGraph {
            inner: Graph::new(n, edges).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn ring(n: usize) -> PyResult<Self> {
        Ok(PyGraph { inner: Graph::ring(n).map_err(to_py)? })
    }

    #[staticmethod]
    fn complete(n: usize) -> PyResult<Self> {
        Ok(PyGraph { inner: Graph::complete(n).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        Ok(self.inner.neighbors(i).map_err(to_py)?.to_vec())
    }

    fn degree(&self, i: usize) -> usize {
        self.inner.degree(i)
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn connected_components(&self) -> Vec<Vec<usize>> {
        self.inner.connected_components()
    }

    /// Dense `L(p)` as a list of rows.
    fn laplacian(&self, p: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let l = self.inner.laplacian(&p).map_err(to_py)?;
        Ok((0..l.n()).map(|i| (0..l.n()).map(|j| l.get(i, j)).collect()).collect())
    }

    fn laplacian_eigenvalues(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.laplacian(&p).map_err(to_py)?.eigenvalues())
    }

    fn fiedler_value(&self, p: Vec<f64>) -> PyResult<f64> {
        self.inner.laplacian(&p).map_err(to_py)?.fiedler_value().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={:?})", self.inner.n(), self.inner.edges())
    }
}

#[pyclass(name = "QuadraticPotential", module = "eventalloc", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPotential {
    inner: QuadraticPotential,
}

#[pymethods]
impl PyPotential {
    /// `S(p) = -1/2 p' Pi p + b' p + c` on `sum p = total`.
    #[new]
    #[pyo3(signature = (pi, b, total, c=0.0))]
    fn new(pi: Vec<Vec<f64>>, b: Vec<f64>, total: f64, c: f64) -> PyResult<Self> {
        let n = pi.len();
        if pi.iter().any(|row| row.len() != n) {
            return Err(PyValueError::new_err("Pi must be square"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| pi[i][j]);
        Ok(PyPotential {
            inner: QuadraticPotential::new(m, b, c, total).map_err(to_py)?,
        })
    }

    /// Potential of generators with costs `alpha P^2 + beta P + gamma`.
    #[staticmethod]
    fn from_dispatch(alpha: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>, demand: f64) -> PyResult<Self> {
        let costs = eventalloc::DispatchCosts::new(alpha, beta, gamma, demand).map_err(to_py)?;
        Ok(PyPotential {
            inner: costs.to_potential().map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn total(&self) -> f64 {
        self.inner.total()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b().to_vec()
    }

    fn pi_norm(&self) -> f64 {
        self.inner.pi_norm()
    }

    fn fitness(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.fitness(&p).map_err(to_py)
    }

    fn value(&self, p: Vec<f64>) -> PyResult<f64> {
        self.inner.potential_value(&p).map_err(to_py)
    }

    fn lyapunov(&self, f: Vec<f64>) -> PyResult<f64> {
        eventalloc::trigger::lyapunov(&self.inner, &f).map_err(to_py)
    }
}

/// Returns `(allocation, multiplier, negative_agents)`.
#[pyfunction]
fn kkt_allocate(pot: &PyPotential) -> (Vec<f64>, f64, Vec<usize>) {
    let s = eventalloc::kkt_allocate(&pot.inner);
    (s.allocation, s.multiplier, s.negative_agents)
}

#[pyfunction]
fn classic_replicator_field(pot: &PyPotential, p: Vec<f64>) -> PyResult<Vec<f64>> {
    dynamics::classic_replicator_field(&pot.inner, &p).map_err(to_py)
}

#[pyfunction]
fn distributed_replicator_field(graph: &PyGraph, pot: &PyPotential, p: Vec<f64>) -> PyResult<Vec<f64>> {
    dynamics::distributed_replicator_field(&graph.inner, &pot.inner, &p).map_err(to_py)
}

#[pyfunction]
fn fitness_field(graph: &PyGraph, pot: &PyPotential, p: Vec<f64>) -> PyResult<Vec<f64>> {
    dynamics::fitness_field(&graph.inner, &pot.inner, &p).map_err(to_py)
}

#[pyclass(name = "Scenario", module = "eventalloc", frozen)]
struct PyScenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Parses a JSON scenario document, applying `key=value` overrides.
    #[staticmethod]
    #[pyo3(signature = (text, overrides=Vec::new()))]
    fn from_json(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::load_config_with_overrides(text, &overrides).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides=Vec::new()))]
    fn from_file(path: PathBuf, overrides: Vec<String>) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::load_config_file(&path, &overrides).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn initial(&self) -> Vec<f64> {
        self.inner.initial.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn graph(&self) -> PyGraph {
        PyGraph {
            inner: self.inner.graph.clone(),
        }
    }

    #[getter]
    fn potential(&self) -> PyPotential {
        PyPotential {
            inner: self.inner.potential.clone(),
        }
    }

    /// Inter-event lower bounds as a dict.
    fn bounds<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = &self.inner;
        let l2 = s.initial_lambda2().map_err(to_py)?;
        let z = zeno_bounds(
            &s.graph,
            &s.potential,
            &l2,
            s.distributed.as_ref(),
            s.centralized.as_ref(),
            s.q.as_deref(),
        )
        .map_err(to_py)?;
        json_to_py(py, &serde_json::to_string(&z).expect("serialisable"))
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyRun> {
        let s = &self.inner;
        let result = py.detach(|| scenario::run(s));
        match result {
            Ok(result) => Ok(PyRun {
                result,
                n: s.n(),
            }),
            Err(failure) => Err(to_py(failure.error)),
        }
    }
}

#[pyclass(name = "RunResult", module = "eventalloc", frozen)]
struct PyRun {
    result: RunResult,
    n: usize,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.result.trajectory.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn populations(&self) -> Vec<Vec<f64>> {
        self.result.trajectory.iter().map(|s| s.p.clone()).collect()
    }

    #[getter]
    fn fitness(&self) -> Vec<Vec<f64>> {
        self.result.trajectory.iter().map(|s| s.f.clone()).collect()
    }

    #[getter]
    fn lyapunov(&self) -> Vec<f64> {
        self.result.trajectory.iter().map(|s| s.v).collect()
    }

    /// `(t, agent, f_hat, p_hat)` per broadcast.
    #[getter]
    fn events(&self) -> Vec<(f64, usize, f64, f64)> {
        self.result
            .events
            .iter()
            .map(|e| (e.t, e.agent, e.f_hat, e.p_hat))
            .collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.result.warnings.clone()
    }

    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &scenario::summary_json(&self.result.summary))
    }

    /// Writes trajectory.csv, events.csv and summary.json; returns the paths.
    fn write(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        scenario::write_outputs(&self.result, self.n, &dir).map_err(to_py)
    }
}

#[pymodule(name = "eventalloc")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(kkt_allocate, m)?)?;
    m.add_function(wrap_pyfunction!(classic_replicator_field, m)?)?;
    m.add_function(wrap_pyfunction!(distributed_replicator_field, m)?)?;
    m.add_function(wrap_pyfunction!(fitness_field, m)?)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
