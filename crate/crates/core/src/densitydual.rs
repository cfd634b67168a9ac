//! Density matrices as pairs of real matrices evolving under a real
//! dynamical matrix `J = H / hbar`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    antisymmetric_part, commutator, ensure_hermitian, ensure_same_shape, ensure_square, imag_part,
    max_abs, real_part, shape_err, symmetric_part, symmetry_deviation, CMat, RMat,
};

/// Complex Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianState {
    rho: CMat,
}

impl HermitianState {
    pub const TRACE_TOL: f64 = 1e-12;
    pub const EIGEN_TOL: f64 = 1e-10;

    pub fn new(rho: CMat) -> Result<Self> {
        Self::with_tolerance(rho, Self::TRACE_TOL, Self::EIGEN_TOL)
    }

    /// Validation with explicit trace and eigenvalue tolerances, e.g. for
    /// states produced by an integrator.
    pub fn with_tolerance(rho: CMat, trace_tol: f64, eigen_tol: f64) -> Result<Self> {
        ensure_hermitian(&rho, 1e-10)?;
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::InvalidDistribution(format!(
                "trace {} + {}i is not 1",
                tr.re, tr.im
            )));
        }
        let state = Self { rho };
        let lo = state.min_eigenvalue();
        if lo < -eigen_tol {
            return Err(Error::InvalidDistribution(format!(
                "negative eigenvalue {lo:e}"
            )));
        }
        Ok(state)
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let d = nalgebra::DVector::from_iterator(p.len(), p.iter().map(|x| Complex64::new(*x, 0.0)));
        Self::new(CMat::from_diagonal(&d))
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// `(P_s, P_a)` with `rho = P_s + i P_a`.
    pub fn split(&self) -> (RMat, RMat) {
        (real_part(&self.rho), imag_part(&self.rho))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().min()
    }
}

/// Real dynamical matrix with its symmetric (reversible) and antisymmetric
/// (irreversible) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalMatrix {
    j: RMat,
    js: RMat,
    ja: RMat,
}

impl DynamicalMatrix {
    pub fn new(j: RMat) -> Result<Self> {
        ensure_square(&j)?;
        let js = symmetric_part(&j);
        let ja = antisymmetric_part(&j);
        Ok(Self { j, js, ja })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            j: RMat::zeros(n, n),
            js: RMat::zeros(n, n),
            ja: RMat::zeros(n, n),
        }
    }

    /// `J = (Re H + i Im H) / hbar` read back as `J_s + J_a`.
    pub fn from_hamiltonian(h: &CMat, hbar: f64) -> Result<Self> {
        let (hs, ha) = split_hermitian(h)?;
        Self::new((hs + ha) / hbar)
    }

    pub fn j(&self) -> &RMat {
        &self.j
    }

    pub fn js(&self) -> &RMat {
        &self.js
    }

    pub fn ja(&self) -> &RMat {
        &self.ja
    }

    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    /// `H = hbar J_s + i hbar J_a`.
    pub fn hamiltonian(&self, hbar: f64) -> CMat {
        CMat::from_fn(self.dim(), self.dim(), |r, c| {
            Complex64::new(hbar * self.js[(r, c)], hbar * self.ja[(r, c)])
        })
    }
}

/// The two observers' real probability matrices at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPair {
    pub pa: RMat,
    pub pb: RMat,
    pub time: f64,
}

impl DualPair {
    pub fn new(pa: RMat, pb: RMat, time: f64) -> Result<Self> {
        ensure_square(&pa)?;
        ensure_same_shape(&pa, &pb)?;
        Ok(Self { pa, pb, time })
    }

    /// Both observers start from the same diagonal stochastic matrix.
    pub fn from_diagonal(p0: &RMat) -> Result<Self> {
        check_diagonal_start(p0)?;
        Self::new(p0.clone(), p0.clone(), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.pa.nrows()
    }

    /// `max |P_B - P_A^T|`.
    pub fn transpose_gap(&self) -> f64 {
        crate::linalg::max_abs_diff(&self.pb, &self.pa.transpose())
    }

    pub fn density(&self) -> CMat {
        join_real(&self.pa)
    }
}

pub(crate) fn check_diagonal_start(p0: &RMat) -> Result<()> {
    ensure_square(p0)?;
    let n = p0.nrows();
    let mut off = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                off = off.max(p0[(r, c)].abs());
            }
        }
    }
    if off > 0.0 {
        return Err(Error::NotDiagonal { offdiag: off });
    }
    let d = p0.diagonal();
    if d.iter().any(|x| !x.is_finite() || *x < 0.0) || (d.sum() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDistribution(format!(
            "diagonal {:?} is not a probability vector",
            d.as_slice()
        )));
    }
    Ok(())
}

/// Real and imaginary parts of a Hermitian matrix.
pub fn split_hermitian(m: &CMat) -> Result<(RMat, RMat)> {
    ensure_hermitian(m, 1e-10)?;
    Ok((real_part(m), imag_part(m)))
}

/// `(P + P^T)/2 + i (P - P^T)/2`.
pub fn join_real(p: &RMat) -> CMat {
    let s = symmetric_part(p);
    let a = antisymmetric_part(p);
    CMat::from_fn(p.nrows(), p.ncols(), |r, c| Complex64::new(s[(r, c)], a[(r, c)]))
}

/// `dP_A/dt = [J_a, P_A] - [J_s, P_B]`, `dP_B/dt = [J_a, P_B] + [J_s, P_A]`.
pub fn pair_rhs(pair: &DualPair, j: &DynamicalMatrix) -> Result<(RMat, RMat)> {
    if j.dim() != pair.dim() {
        return Err(shape_err(
            format!("{0}x{0} dynamical matrix", pair.dim()),
            format!("{0}x{0}", j.dim()),
        ));
    }
    Ok(rhs(&pair.pa, &pair.pb, j))
}

fn rhs(pa: &RMat, pb: &RMat, j: &DynamicalMatrix) -> (RMat, RMat) {
    let da = commutator(&j.ja, pa) - commutator(&j.js, pb);
    let db = commutator(&j.ja, pb) + commutator(&j.js, pa);
    (da, db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone)]
pub struct PairTrajectory {
    pub pairs: Vec<DualPair>,
}

impl PairTrajectory {
    pub fn last(&self) -> &DualPair {
        self.pairs.last().expect("trajectory holds the initial pair")
    }

    pub fn max_transpose_gap(&self) -> f64 {
        self.pairs.iter().map(DualPair::transpose_gap).fold(0.0, f64::max)
    }
}

/// RK4 integration from `P_A(0) = P_B(0) = P0` to time `t`.
pub fn evolve_pair(p0: &RMat, j: &DynamicalMatrix, t: f64, steps: usize) -> Result<PairTrajectory> {
    evolve_pair_with(p0, j, t, steps, Integrator::Rk4)
}

pub fn evolve_pair_with(
    p0: &RMat,
    j: &DynamicalMatrix,
    t: f64,
    steps: usize,
    integrator: Integrator,
) -> Result<PairTrajectory> {
    if steps == 0 {
        return Err(Error::InvalidInput("steps must be at least 1".into()));
    }
    let start = DualPair::from_diagonal(p0)?;
    pair_rhs(&start, j)?;
    let dt = t / steps as f64;
    let mut pairs = Vec::with_capacity(steps + 1);
    let (mut a, mut b) = (start.pa.clone(), start.pb.clone());
    pairs.push(start);
    for k in 1..=steps {
        match integrator {
            Integrator::Euler => {
                let (da, db) = rhs(&a, &b, j);
                a += da * dt;
                b += db * dt;
            }
            Integrator::Rk4 => {
                let (k1a, k1b) = rhs(&a, &b, j);
                let (k2a, k2b) = rhs(&(&a + &k1a * (dt / 2.0)), &(&b + &k1b * (dt / 2.0)), j);
                let (k3a, k3b) = rhs(&(&a + &k2a * (dt / 2.0)), &(&b + &k2b * (dt / 2.0)), j);
                let (k4a, k4b) = rhs(&(&a + &k3a * dt), &(&b + &k3b * dt), j);
                a += (k1a + k2a * 2.0 + k3a * 2.0 + k4a) * (dt / 6.0);
                b += (k1b + k2b * 2.0 + k3b * 2.0 + k4b) * (dt / 6.0);
            }
        }
        pairs.push(DualPair {
            pa: a.clone(),
            pb: b.clone(),
            time: k as f64 * dt,
        });
    }
    Ok(PairTrajectory { pairs })
}

/// Second time derivative of `P` (as `P_A`, with `P_B = P^T`) obtained by
/// applying `pair_rhs` twice, plus `[J_s, [J_s, P]]`.
pub fn second_order_residual(p: &RMat, js: &RMat) -> Result<RMat> {
    ensure_square(js)?;
    let dev = symmetry_deviation(js);
    if dev > 1e-12 * max_abs(js).max(1.0) {
        return Err(Error::NotSymmetric { deviation: dev });
    }
    let j = DynamicalMatrix::new(js.clone())?;
    let pair = DualPair::new(p.clone(), p.transpose(), 0.0)?;
    let (da, db) = pair_rhs(&pair, &j)?;
    let (dda, _) = rhs(&da, &db, &j);
    Ok(dda + commutator(js, &commutator(js, p)))
}
