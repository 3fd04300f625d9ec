//! Python bindings for the swarm optimization core.

#![allow(clippy::too_many_arguments)]

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use swarmflow_core::analysis::{estimate_chi, ChiBudget};
use swarmflow_core::generators::{linearized_generator, representation_residual};
use swarmflow_core::metropolis::metropolis_suite;
use swarmflow_core::model::{build_landscape, minimizer_set, spectral_gap};
use swarmflow_core::particles::{simulate_swarm, HybridWeight, SwarmConfig, SwarmKind};
use swarmflow_core::stationary::MINIMIZER_TOL;
use swarmflow_core::{integrate_annealed, integrate_homogeneous, kappa, ring20, solve_eta, Controls, Density, EnergyLandscape, EntropyFamily, Schedule};

create_exception!(swarmflow, SwarmflowError, PyException);

fn err(e: swarmflow_core::Error) -> PyErr {
    SwarmflowError::new_err(e.to_string())
}

fn family(m: f64) -> PyResult<EntropyFamily> {
    EntropyFamily::penalized(m).map_err(err)
}

fn schedule(beta: Option<f64>, power: Option<(f64, f64)>) -> PyResult<Schedule> {
    match (beta, power) {
        (Some(b), None) => Ok(Schedule::Constant(b)),
        (None, Some((t0, alpha))) => Ok(Schedule::power(t0, alpha)),
        _ => Err(SwarmflowError::new_err("give exactly one of beta or schedule=(t0, alpha)")),
    }
}

/// Reversible generator with reference probability and objective.
#[pyclass(name = "Landscape", frozen)]
struct PyLandscape {
    inner: EnergyLandscape,
}

#[pymethods]
impl PyLandscape {
    /// Builds from `(x, y, rate)` triples.
    #[staticmethod]
    fn from_edges(edges: Vec<(usize, usize, f64)>, ell: Vec<f64>, objective: Vec<f64>) -> PyResult<Self> {
        Ok(PyLandscape { inner: build_landscape(&edges, ell, objective).map_err(err)? })
    }

    /// Builds from a dense rate matrix; the diagonal is recomputed.
    #[staticmethod]
    fn from_matrix(rows: Vec<Vec<f64>>, ell: Vec<f64>, objective: Vec<f64>) -> PyResult<Self> {
        let n = rows.len();
        let mut edges = Vec::new();
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SwarmflowError::new_err("matrix must be square"));
            }
            edges.extend(row.iter().enumerate().filter(|&(y, r)| y != x && *r != 0.0).map(|(y, r)| (x, y, *r)));
        }
        Self::from_edges(edges, ell, objective)
    }

    #[staticmethod]
    fn ring20() -> Self {
        PyLandscape { inner: ring20() }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn ell(&self) -> Vec<f64> {
        self.inner.ell().to_vec()
    }

    #[getter]
    fn objective(&self) -> Vec<f64> {
        self.inner.objective().to_vec()
    }

    fn generator(&self) -> Vec<Vec<f64>> {
        let g = self.inner.generator();
        (0..g.nrows()).map(|x| g.row(x).iter().copied().collect()).collect()
    }

    fn minimizers(&self) -> Vec<usize> {
        minimizer_set(&self.inner, MINIMIZER_TOL)
    }

    /// Spectral gap of the base chain.
    fn spectral_gap(&self) -> PyResult<f64> {
        spectral_gap(self.inner.generator(), self.inner.ell()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Landscape(n={})", self.inner.n())
    }
}

/// Penalized power entropy with exponent `m < 0`.
#[pyclass(name = "Entropy", frozen)]
struct PyEntropy {
    inner: EntropyFamily,
}

#[pymethods]
impl PyEntropy {
    #[new]
    fn new(m: f64) -> PyResult<Self> {
        Ok(PyEntropy { inner: family(m)? })
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    fn phi(&self, r: f64) -> f64 {
        self.inner.phi(r)
    }

    fn phi_prime(&self, r: f64) -> f64 {
        self.inner.phi_prime(r)
    }

    fn phi_second(&self, r: f64) -> f64 {
        self.inner.phi_second(r)
    }

    fn theta(&self, s: f64, t: f64) -> f64 {
        self.inner.theta(s, t)
    }

    /// Largest schedule exponent with a convergence guarantee.
    fn kappa(&self) -> PyResult<f64> {
        kappa(self.inner.m).map_err(err)
    }
}

/// Minimizer of the penalized cost: dict with `c`, `eta`, `zeta`.
#[pyfunction]
#[pyo3(signature = (land, beta, m = -1.0))]
fn stationary<'py>(py: Python<'py>, land: &PyLandscape, beta: f64, m: f64) -> PyResult<Bound<'py, PyDict>> {
    let prof = solve_eta(&land.inner, &family(m)?, beta).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("c", prof.c)?;
    d.set_item("eta", prof.eta.as_slice().to_vec())?;
    d.set_item("zeta", prof.zeta)?;
    Ok(d)
}

/// Deterministic flow from the uniform density; columns of the diagnostics table.
#[pyfunction]
#[pyo3(signature = (land, horizon, beta = None, schedule = None, m = -1.0, rtol = 1e-10))]
fn flow<'py>(
    py: Python<'py>,
    land: &PyLandscape,
    horizon: f64,
    beta: Option<f64>,
    schedule: Option<(f64, f64)>,
    m: f64,
    rtol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = family(m)?;
    let sched = self::schedule(beta, schedule)?;
    let land = &land.inner;
    let rho0 = Density::uniform(land.n());
    let ctl = Controls { rtol, ..Controls::default() };
    let traj = py
        .detach(|| match sched {
            Schedule::Constant(b) => integrate_homogeneous(land, &fam, b, &rho0, horizon, &ctl),
            s => integrate_annealed(land, &fam, &s, &rho0, horizon, &ctl),
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    let col = |f: fn(&swarmflow_core::flow::Diagnostics) -> f64| traj.diagnostics.iter().map(f).collect::<Vec<f64>>();
    d.set_item("t", col(|x| x.t))?;
    d.set_item("beta", col(|x| x.beta))?;
    d.set_item("cost", col(|x| x.cost))?;
    d.set_item("gap_i", col(|x| x.gap_i))?;
    d.set_item("gap_g", col(|x| x.gap_g))?;
    d.set_item("mass_on_minimizers", col(|x| x.mass_on_minimizers))?;
    d.set_item("densities", traj.densities.iter().map(|r| r.as_slice().to_vec()).collect::<Vec<_>>())?;
    Ok(d)
}

/// Interacting particle swarm; `kind` is `first`, `second` or `hybrid`.
#[pyfunction]
#[pyo3(signature = (land, particles, horizon, seed, beta = None, schedule = None, kind = "first", hybrid = 0.5, m = -1.0))]
fn simulate<'py>(
    py: Python<'py>,
    land: &PyLandscape,
    particles: usize,
    horizon: f64,
    seed: u64,
    beta: Option<f64>,
    schedule: Option<(f64, f64)>,
    kind: &str,
    hybrid: f64,
    m: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = family(m)?;
    let kind = match kind {
        "first" => SwarmKind::First,
        "second" => SwarmKind::Second,
        "hybrid" => SwarmKind::Hybrid(HybridWeight::Constant(hybrid)),
        other => return Err(SwarmflowError::new_err(format!("unknown generator kind `{other}`"))),
    };
    let cfg = SwarmConfig::new(particles, kind, self::schedule(beta, schedule)?, horizon, seed);
    let land = &land.inner;
    let run = py.detach(|| simulate_swarm(land, &fam, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("times", run.snapshots.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item("empirical", run.snapshots.iter().map(|s| s.empirical.clone()).collect::<Vec<_>>())?;
    d.set_item("events", run.events.iter().map(|e| (e.index, e.t, e.particle, e.from, e.to)).collect::<Vec<_>>())?;
    d.set_item("event_count", run.event_count)?;
    Ok(d)
}

/// Largest residual of the jump-process representation over the generator kinds.
#[pyfunction]
#[pyo3(signature = (land, beta, rho, m = -1.0))]
fn representation_error(land: &PyLandscape, beta: f64, rho: Vec<f64>, m: f64) -> PyResult<f64> {
    let rho = Density::new(rho, land.inner.ell()).map_err(err)?;
    Ok(representation_residual(&land.inner, &family(m)?, beta, &rho).max())
}

/// Spectral gap of the flow linearized at the minimizer.
#[pyfunction]
#[pyo3(signature = (land, beta, m = -1.0))]
fn linearized_gap(land: &PyLandscape, beta: f64, m: f64) -> PyResult<f64> {
    let (q, w) = linearized_generator(&land.inner, &family(m)?, beta).map_err(err)?;
    spectral_gap(&q, &w).map_err(err)
}

/// Multistart estimate of the best constant in `G >= chi I`.
#[pyfunction]
#[pyo3(signature = (land, beta, m = -1.0, starts = 32, max_evals = 4000, seed = 0))]
fn chi_estimate<'py>(
    py: Python<'py>,
    land: &PyLandscape,
    beta: f64,
    m: f64,
    starts: usize,
    max_evals: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = family(m)?;
    let budget = ChiBudget { starts, max_evals, seed };
    let land = &land.inner;
    let rep = py.detach(|| estimate_chi(land, &fam, beta, &budget)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("chi", rep.chi_estimate)?;
    d.set_item("lambda_linearized", rep.lambda_linearized)?;
    d.set_item("witness", rep.witness)?;
    Ok(d)
}

/// Randomized check that entropy descent reproduces the Metropolis flow.
#[pyfunction]
#[pyo3(signature = (draws, path_draws = 0, seed = 0))]
fn metropolis_check<'py>(py: Python<'py>, draws: usize, path_draws: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let rep = py.detach(|| metropolis_suite(draws, path_draws, seed)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("max_residual", rep.max_residual)?;
    d.set_item("max_path_distance", rep.max_path_distance)?;
    d.set_item("pass", rep.pass)?;
    Ok(d)
}

#[pymodule]
fn swarmflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SwarmflowError", m.py().get_type::<SwarmflowError>())?;
    m.add_class::<PyLandscape>()?;
    m.add_class::<PyEntropy>()?;
    m.add_function(wrap_pyfunction!(stationary, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(representation_error, m)?)?;
    m.add_function(wrap_pyfunction!(linearized_gap, m)?)?;
    m.add_function(wrap_pyfunction!(chi_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(metropolis_check, m)?)?;
    Ok(())
}
