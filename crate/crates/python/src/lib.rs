//! Python bindings for the core types: factor chains and cycles, real pair
//! evolution, Markov decompositions, energetics and the validation suites.

use cyclic_inference::cavityq::bp_sweep;
use cyclic_inference::cyclegraph::{bernstein_decompose, clamp_cycle, cycle_probability_matrix};
use cyclic_inference::densitydual::{evolve_pair_with, join_real, DynamicalMatrix, HermitianState, Integrator};
use cyclic_inference::energetics::{hsp_estimate, EnergyRange, PhotonSpec};
use cyclic_inference::experiments::{run_suite as run_core_suite, RunOptions};
use cyclic_inference::linalg::{max_abs_diff_c, RMat, RVec};
use cyclic_inference::oracle::{enumerate_joint, evolve_density_exact, marginal, pairwise_marginal};
use cyclic_inference::{caliber, Error};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_mat(rows: &Rows) -> PyResult<RMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("expected a non-empty rectangular matrix"));
    }
    Ok(RMat::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_mat(m: &RMat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_vec(v: &RVec) -> Vec<f64> {
    v.iter().copied().collect()
}

#[pyclass(name = "FactorChain", frozen)]
struct PyFactorChain {
    inner: cyclic_inference::FactorChain,
}

#[pymethods]
impl PyFactorChain {
    #[new]
    #[pyo3(signature = (factors, left=None, right=None))]
    fn new(factors: Vec<Rows>, left: Option<Vec<f64>>, right: Option<Vec<f64>>) -> PyResult<Self> {
        let f = factors.iter().map(to_mat).collect::<PyResult<Vec<_>>>()?;
        let inner = cyclic_inference::FactorChain::new(f)
            .and_then(|c| c.with_boundaries(left.map(RVec::from_vec), right.map(RVec::from_vec)))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    /// Single-site marginals from the cavity-message sweep.
    fn marginals(&self) -> PyResult<Vec<Vec<f64>>> {
        let msg = bp_sweep(&self.inner).map_err(err)?;
        Ok((0..self.inner.n_sites()).map(|l| from_vec(&msg.single(l))).collect())
    }

    fn pairwise(&self, site: usize) -> PyResult<Rows> {
        self.check_edge(site)?;
        let msg = bp_sweep(&self.inner).map_err(err)?;
        Ok(from_mat(&msg.pairwise(&self.inner, site)))
    }

    fn log_partition(&self) -> PyResult<f64> {
        Ok(bp_sweep(&self.inner).map_err(err)?.log_partition)
    }

    /// Marginals by brute-force enumeration.
    fn enumerate_marginals(&self) -> PyResult<Vec<Vec<f64>>> {
        let joint = enumerate_joint(&self.inner).map_err(err)?;
        (0..self.inner.n_sites())
            .map(|l| marginal(&joint, l).map(|v| from_vec(&v)).map_err(err))
            .collect()
    }

    fn enumerate_pairwise(&self, site: usize) -> PyResult<Rows> {
        self.check_edge(site)?;
        let joint = enumerate_joint(&self.inner).map_err(err)?;
        Ok(from_mat(&pairwise_marginal(&joint, site).map_err(err)?))
    }
}

impl PyFactorChain {
    fn check_edge(&self, site: usize) -> PyResult<()> {
        if site + 1 >= self.inner.n_sites() {
            return Err(PyValueError::new_err(format!("edge {site} out of range")));
        }
        Ok(())
    }
}

#[pyclass(name = "FactorCycle", frozen)]
struct PyFactorCycle {
    inner: cyclic_inference::FactorCycle,
}

#[pymethods]
impl PyFactorCycle {
    #[new]
    fn new(factors: Vec<Rows>) -> PyResult<Self> {
        let f = factors.iter().map(to_mat).collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: cyclic_inference::FactorCycle::new(f).map_err(err)?,
        })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    /// Normalized cyclic product starting at `site`.
    fn probability_matrix(&self, site: usize) -> PyResult<Rows> {
        if site >= self.inner.n_sites() {
            return Err(PyValueError::new_err(format!("site {site} out of range")));
        }
        Ok(from_mat(&cycle_probability_matrix(&self.inner, site).map_err(err)?.p))
    }

    fn enumerate_marginals(&self) -> PyResult<Vec<Vec<f64>>> {
        let joint = enumerate_joint(&self.inner).map_err(err)?;
        (0..self.inner.n_sites())
            .map(|l| marginal(&joint, l).map(|v| from_vec(&v)).map_err(err))
            .collect()
    }

    /// Chain marginals with the first and last sites clamped.
    fn clamped_marginals(&self, x1: usize, xn: usize) -> PyResult<Vec<Vec<f64>>> {
        let chain = clamp_cycle(&self.inner, x1, xn).map_err(err)?;
        let msg = bp_sweep(&chain).map_err(err)?;
        Ok((0..chain.n_sites()).map(|l| from_vec(&msg.single(l))).collect())
    }

    fn bernstein_error(&self) -> PyResult<f64> {
        let joint = enumerate_joint(&self.inner).map_err(err)?;
        Ok(bernstein_decompose(&self.inner).map_err(err)?.reconstruction_error(&joint))
    }
}

/// Evolves the real pair from a diagonal start; returns the final `P_A` and
/// its max deviation from the matrix-exponential reference.
#[pyfunction]
#[pyo3(signature = (p0, j, t, steps, integrator="rk4"))]
fn evolve_pair(p0: Vec<f64>, j: Rows, t: f64, steps: usize, integrator: &str) -> PyResult<(Rows, f64)> {
    let integrator = match integrator {
        "rk4" => Integrator::Rk4,
        "euler" => Integrator::Euler,
        other => return Err(PyValueError::new_err(format!("unknown integrator '{other}'"))),
    };
    let j = DynamicalMatrix::new(to_mat(&j)?).map_err(err)?;
    let p0 = RMat::from_diagonal(&RVec::from_vec(p0));
    let traj = evolve_pair_with(&p0, &j, t, steps, integrator).map_err(err)?;
    let rho0 = HermitianState::new(join_real(&p0)).map_err(err)?;
    let exact = evolve_density_exact(&j.hamiltonian(1.0), &rho0, t, 1.0).map_err(err)?.rho_t;
    let pa = &traj.last().pa;
    Ok((from_mat(pa), max_abs_diff_c(&join_real(pa), &exact)))
}

/// `(P+, P-, K)` for one edge; `P+[x][x']` and `P-[x][x']` as documented in
/// the core crate.
#[pyfunction]
fn markov_decompose(pairwise: Rows, p_l: Vec<f64>, p_next: Vec<f64>) -> PyResult<(Rows, Rows, Rows)> {
    let d = caliber::markov_decompose(&to_mat(&pairwise)?, &RVec::from_vec(p_l), &RVec::from_vec(p_next)).map_err(err)?;
    Ok((from_mat(&d.transitions.forward), from_mat(&d.transitions.backward), from_mat(&d.k)))
}

#[pyfunction]
#[pyo3(signature = (low=2.1e-17, high=5.7e-17, nu=5.88e14))]
fn hsp<'py>(py: Python<'py>, low: f64, high: f64, nu: f64) -> PyResult<Bound<'py, PyDict>> {
    let range = EnergyRange::new(low, high).map_err(err)?;
    let r = hsp_estimate(&range, &PhotonSpec::new(nu).map_err(err)?);
    let d = PyDict::new(py);
    d.set_item("E_photon", r.e_photon)?;
    d.set_item("E_HSP_mean", r.mean)?;
    d.set_item("gap", r.gap)?;
    d.set_item("ratio", r.ratio)?;
    Ok(d)
}

/// Runs one validation suite; returns its JSON report as a string.
#[pyfunction]
#[pyo3(signature = (name, params=None, seed=0))]
fn run_suite(py: Python<'_>, name: &str, params: Option<&str>, seed: u64) -> PyResult<String> {
    let params: Option<serde_json::Value> = params
        .map(serde_json::from_str)
        .transpose()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let opts = RunOptions {
        seed,
        ..Default::default()
    };
    let report = py
        .detach(|| run_core_suite(name, params.as_ref(), &opts))
        .map_err(err)?;
    Ok(report.to_json().to_string())
}

#[pymodule]
fn cyclic_inference_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFactorChain>()?;
    m.add_class::<PyFactorCycle>()?;
    m.add_function(wrap_pyfunction!(evolve_pair, m)?)?;
    m.add_function(wrap_pyfunction!(markov_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(hsp, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
