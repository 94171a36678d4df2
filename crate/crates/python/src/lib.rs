//! Python bindings for `delayfw`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use delayfw::experiment::{default_output_dir, run_experiment as run_experiment_core};
use delayfw::network::k0_of;
use delayfw::{
    de2mfw_run, delmfw_run, AgentSchedules, AlgoParams, De2mfwParams, DelaySchedule, Error, ExperimentConfig,
    GossipMatrix, LossFunction, LossStream, OnlineLinearOracle, RunOptions, Topology, TopologyKind,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "ConstraintSet", module = "pydelayfw", from_py_object)]
#[derive(Clone)]
struct PyConstraintSet {
    inner: delayfw::ConstraintSet,
}

#[pymethods]
impl PyConstraintSet {
    #[new]
    fn new(kind: &str, radius: f64, dim: usize) -> PyResult<Self> {
        let kind = kind.parse().map_err(py_err)?;
        Ok(Self { inner: delayfw::ConstraintSet::new(kind, radius, dim).map_err(py_err)? })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    fn lmo(&self, g: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.lmo(&g).map_err(py_err)
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project(&x).map_err(py_err)
    }

    #[pyo3(signature = (x, tol = 1e-9))]
    fn contains(&self, x: Vec<f64>, tol: f64) -> bool {
        self.inner.contains(&x, tol)
    }

    fn __repr__(&self) -> String {
        format!("ConstraintSet('{}', {}, {})", self.kind(), self.radius(), self.dim())
    }
}

#[pyclass(name = "FtplOracle", module = "pydelayfw")]
struct PyFtplOracle {
    inner: delayfw::FtplOracle,
}

#[pymethods]
impl PyFtplOracle {
    #[new]
    fn new(set: PyConstraintSet, zeta: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: delayfw::FtplOracle::new(set.inner, zeta, seed).map_err(py_err)? })
    }

    fn query(&self) -> Vec<f64> {
        self.inner.query()
    }

    fn feedback(&mut self, g: Vec<f64>) -> PyResult<()> {
        self.inner.feedback(&g).map_err(py_err)
    }

    #[getter]
    fn noise(&self) -> Vec<f64> {
        self.inner.noise().to_vec()
    }

    #[getter]
    fn accum(&self) -> Vec<f64> {
        self.inner.accum().to_vec()
    }
}

#[pyfunction]
fn uniform_delays(horizon: usize, dmax: usize, seed: u64) -> PyResult<Vec<usize>> {
    Ok(DelaySchedule::uniform(horizon, dmax, seed).map_err(py_err)?.delays().to_vec())
}

fn gossip_for(kind: &str, n: usize, p: f64, seed: u64) -> PyResult<GossipMatrix> {
    let kind: TopologyKind = kind.parse().map_err(py_err)?;
    let topo = Topology::build(kind, n, p, seed).map_err(py_err)?;
    GossipMatrix::metropolis(&topo).map_err(py_err)
}

/// Metropolis weights of a named topology as a row-major nested list.
#[pyfunction]
#[pyo3(signature = (kind, n, p = 0.3, seed = 0))]
fn metropolis(kind: &str, n: usize, p: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let w = gossip_for(kind, n, p, seed)?;
    Ok((0..n).map(|i| (0..n).map(|j| w.weight(i, j)).collect()).collect())
}

/// Second-largest eigenvalue modulus and the matching `k0`.
#[pyfunction]
#[pyo3(signature = (kind, n, p = 0.3, seed = 0))]
fn spectral(kind: &str, n: usize, p: f64, seed: u64) -> PyResult<(f64, f64, usize)> {
    let w = gossip_for(kind, n, p, seed)?;
    Ok((w.lambda2(), w.lambda_eff(), w.k0()))
}

#[pyfunction]
fn k0(lambda_: f64) -> PyResult<usize> {
    k0_of(lambda_).map_err(py_err)
}

fn quadratic_stream(targets: Vec<Vec<f64>>) -> PyResult<LossStream> {
    LossStream::new(targets.into_iter().map(|target| LossFunction::Quadratic { target }).collect()).map_err(py_err)
}

/// Centralized delayed run on quadratic losses; returns per-round losses.
#[pyfunction]
#[pyo3(signature = (set, targets, delays, k, a, zeta, seed = 0))]
fn delmfw_quadratic(
    set: PyConstraintSet,
    targets: Vec<Vec<f64>>,
    delays: Vec<usize>,
    k: usize,
    a: f64,
    zeta: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let horizon = targets.len();
    let stream = quadratic_stream(targets)?;
    let schedule = DelaySchedule::from_delays(delays).map_err(py_err)?;
    let params = AlgoParams { horizon, k, a, zeta };
    let trace = delmfw_run(&set.inner, &stream, &schedule, params, seed, RunOptions::default()).map_err(py_err)?;
    Ok(trace.inst_loss())
}

/// Distributed delayed run on quadratic losses; returns `losses[t][agent]`.
#[pyfunction]
#[pyo3(signature = (set, topology, targets, delays, k, a, zeta, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn de2mfw_quadratic(
    set: PyConstraintSet,
    topology: &str,
    targets: Vec<Vec<Vec<f64>>>,
    delays: Vec<Vec<usize>>,
    k: usize,
    a: f64,
    zeta: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let n = targets.len();
    let horizon = targets.first().map_or(0, Vec::len);
    let gossip = gossip_for(topology, n, 0.3, seed)?;
    let streams = targets.into_iter().map(quadratic_stream).collect::<PyResult<Vec<_>>>()?;
    let schedules = AgentSchedules {
        schedules: delays.into_iter().map(DelaySchedule::from_delays).collect::<Result<_, _>>().map_err(py_err)?,
    };
    let params = De2mfwParams::from(AlgoParams { horizon, k, a, zeta });
    let trace =
        de2mfw_run(&set.inner, &streams, &schedules, &gossip, params, seed, RunOptions::default()).map_err(py_err)?;
    Ok(trace.agent_losses)
}

/// Run a JSON experiment config and write its outputs; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config_json, out = None))]
fn run_experiment<'py>(py: Python<'py>, config_json: &str, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_json_str(config_json).map_err(py_err)?;
    let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(default_output_dir);
    let report = run_experiment_core(&cfg, &out).map_err(py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("output", report.output.display().to_string())?;
    dict.set_item("seeds", report.outcomes.iter().map(|o| o.seed).collect::<Vec<_>>())?;
    dict.set_item("total_loss", report.outcomes.iter().map(|o| o.total_loss).collect::<Vec<_>>())?;
    dict.set_item("final_regret", report.outcomes.iter().map(|o| o.final_regret).collect::<Vec<_>>())?;
    dict.set_item("mean_total_loss", report.mean_total_loss())?;
    Ok(dict)
}

#[pymodule]
fn pydelayfw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstraintSet>()?;
    m.add_class::<PyFtplOracle>()?;
    m.add_function(wrap_pyfunction!(uniform_delays, m)?)?;
    m.add_function(wrap_pyfunction!(metropolis, m)?)?;
    m.add_function(wrap_pyfunction!(spectral, m)?)?;
    m.add_function(wrap_pyfunction!(k0, m)?)?;
    m.add_function(wrap_pyfunction!(delmfw_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(de2mfw_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
