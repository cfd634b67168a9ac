//! Two sub-observers, Alice and Bob, each updating their own probability
//! matrix from the other's, and the complex von Neumann equation recovered
//! from the pair.

use crate::densitydual::{check_diagonal_start, join_real, DualPair, DynamicalMatrix, HermitianState, PairTrajectory};
use crate::error::{Error, Result};
use crate::linalg::{commutator, ensure_same_shape, ensure_square, max_abs, max_abs_diff, max_abs_diff_c, symmetry_deviation, RMat};
use crate::oracle::evolve_density_exact;

/// `dt [J, P]`.
pub fn third_person_delta(p: &RMat, j: &RMat, dt: f64) -> Result<RMat> {
    ensure_square(j)?;
    ensure_same_shape(p, j)?;
    Ok(commutator(j, p) * dt)
}

/// Additive pieces of one observer's change over `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDeltas {
    /// `dt [J_a, P_O]`, identical in first and third person.
    pub irreversible: RMat,
    /// `dt [J_s, P_O]`.
    pub third_reversible: RMat,
    /// `-dt [J_s, P_B]` for Alice, `dt [J_s, P_A]` for Bob.
    pub first_reversible: RMat,
}

impl ObserverDeltas {
    pub fn first_person(&self) -> RMat {
        &self.irreversible + &self.first_reversible
    }

    pub fn third_person(&self) -> RMat {
        &self.irreversible + &self.third_reversible
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDeltas {
    pub alice: ObserverDeltas,
    pub bob: ObserverDeltas,
}

pub fn observer_deltas(pair: &DualPair, j: &DynamicalMatrix, dt: f64) -> Result<PairDeltas> {
    let (pa, pb) = (&pair.pa, &pair.pb);
    Ok(PairDeltas {
        alice: ObserverDeltas {
            irreversible: third_person_delta(pa, j.ja(), dt)?,
            third_reversible: third_person_delta(pa, j.js(), dt)?,
            first_reversible: -third_person_delta(pb, j.js(), dt)?,
        },
        bob: ObserverDeltas {
            irreversible: third_person_delta(pb, j.ja(), dt)?,
            third_reversible: third_person_delta(pb, j.js(), dt)?,
            first_reversible: third_person_delta(pa, j.js(), dt)?,
        },
    })
}

/// One step with a symmetric dynamical matrix.
pub fn symmetric_first_person_step(pair: &DualPair, js: &RMat, dt: f64) -> Result<DualPair> {
    ensure_square(js)?;
    let dev = symmetry_deviation(js);
    if dev > 1e-12 * max_abs(js).max(1.0) {
        return Err(Error::NotSymmetric { deviation: dev });
    }
    let da = -third_person_delta(&pair.pb, js, dt)?;
    let db = third_person_delta(&pair.pa, js, dt)?;
    DualPair::new(&pair.pa + da, &pair.pb + db, pair.time + dt)
}

pub fn first_person_step(pair: &DualPair, j: &DynamicalMatrix, dt: f64) -> Result<DualPair> {
    let d = observer_deltas(pair, j, dt)?;
    DualPair::new(
        &pair.pa + d.alice.first_person(),
        &pair.pb + d.bob.first_person(),
        pair.time + dt,
    )
}

#[derive(Debug, Clone)]
pub struct DualObserver {
    pub pair: DualPair,
    pub j: DynamicalMatrix,
}

impl DualObserver {
    /// Both observers start from the same diagonal matrix.
    pub fn new(p0: &RMat, j: DynamicalMatrix) -> Result<Self> {
        check_diagonal_start(p0)?;
        let pair = DualPair::from_diagonal(p0)?;
        if j.dim() != pair.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0} dynamical matrix", pair.dim()),
                got: format!("{0}x{0}", j.dim()),
            });
        }
        Ok(Self { pair, j })
    }

    /// Repeated first-person steps up to time `t`.
    pub fn run(&self, t: f64, steps: usize) -> Result<PairTrajectory> {
        if steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        let dt = t / steps as f64;
        let mut pairs = Vec::with_capacity(steps + 1);
        pairs.push(self.pair.clone());
        for k in 0..steps {
            let mut next = first_person_step(&pairs[k], &self.j, dt)?;
            next.time = (k + 1) as f64 * dt;
            pairs.push(next);
        }
        Ok(PairTrajectory { pairs })
    }
}

/// Residual of `dP_s = [J_a, P_s] + [J_s, P_a]`, `dP_a = [J_a, P_a] - [J_s, P_s]`
/// against the pair equations at one state.
pub fn split_residual(pair: &DualPair, j: &DynamicalMatrix) -> Result<f64> {
    let d = observer_deltas(pair, j, 1.0)?;
    let (da, db) = (d.alice.first_person(), d.bob.first_person());
    let ps = (&pair.pa + &pair.pb) * 0.5;
    let pa = (&pair.pa - &pair.pb) * 0.5;
    let dps = commutator(j.ja(), &ps) + commutator(j.js(), &pa);
    let dpa = commutator(j.ja(), &pa) - commutator(j.js(), &ps);
    Ok(max_abs_diff(&((&da + &db) * 0.5), &dps).max(max_abs_diff(&((&da - &db) * 0.5), &dpa)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VonNeumannCheck {
    /// `max_t |join_real(P_A(t)) - rho_exact(t)|`.
    pub max_deviation: f64,
    pub max_split_residual: f64,
    pub max_transpose_gap: f64,
    /// `max_t |Tr rho(t) - 1|`.
    pub max_trace_drift: f64,
}

/// Compare the trajectory with exact evolution under `H = hbar J_s + i hbar J_a`.
pub fn reconstruct_von_neumann(traj: &PairTrajectory, j: &DynamicalMatrix, hbar: f64) -> Result<VonNeumannCheck> {
    let start = &traj.pairs[0];
    check_diagonal_start(&start.pa)?;
    if max_abs_diff(&start.pa, &start.pb) > 0.0 {
        return Err(Error::InvalidInput("observers must start from the same matrix".into()));
    }
    let rho0 = HermitianState::new(join_real(&start.pa))?;
    let h = j.hamiltonian(hbar);
    let mut check = VonNeumannCheck {
        max_deviation: 0.0,
        max_split_residual: 0.0,
        max_transpose_gap: 0.0,
        max_trace_drift: 0.0,
    };
    for pair in &traj.pairs {
        let rho = join_real(&pair.pa);
        let exact = evolve_density_exact(&h, &rho0, pair.time, hbar)?;
        check.max_deviation = check.max_deviation.max(max_abs_diff_c(&rho, &exact.rho_t));
        check.max_split_residual = check.max_split_residual.max(split_residual(pair, j)?);
        check.max_transpose_gap = check.max_transpose_gap.max(pair.transpose_gap());
        check.max_trace_drift = check.max_trace_drift.max((rho.trace().re - 1.0).abs());
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densitydual::{evolve_pair, evolve_pair_with, pair_rhs, Integrator};
    use crate::linalg::RVec;
    use crate::rng;

    fn diag(p: &[f64]) -> RMat {
        RMat::from_diagonal(&RVec::from_row_slice(p))
    }

    #[test]
    fn third_person_limits() {
        let p = diag(&[0.4, 0.6]);
        assert_eq!(max_abs(&third_person_delta(&p, &RMat::zeros(2, 2), 0.1).unwrap()), 0.0);
        assert_eq!(max_abs(&third_person_delta(&p, &diag(&[1.0, 3.0]), 0.1).unwrap()), 0.0);
        let mut r = rng::stream(1, 0);
        let j = rng::dynamical(&mut r, 3);
        let q = rng::uniform_matrix(&mut r, 3, 3, 1.0);
        let d = third_person_delta(&q, &j, 0.01).unwrap();
        assert!(max_abs_diff(&d, &((&j * &q - &q * &j) * 0.01)) < 1e-16);
    }

    #[test]
    fn symmetric_step_by_hand() {
        let js = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pair = DualPair::from_diagonal(&diag(&[1.0, 0.0])).unwrap();
        let next = symmetric_first_person_step(&pair, &js, 0.01).unwrap();
        let expect = RMat::from_row_slice(2, 2, &[1.0, 0.01, -0.01, 0.0]);
        assert!(max_abs_diff(&next.pa, &expect) < 1e-16);
        assert!(max_abs_diff(&next.pb, &expect.transpose()) < 1e-16);
        let (da, db) = pair_rhs(&pair, &DynamicalMatrix::new(js.clone()).unwrap()).unwrap();
        assert!(max_abs_diff(&(&pair.pa + da * 0.01), &next.pa) < 1e-16);
        assert!(max_abs_diff(&(&pair.pb + db * 0.01), &next.pb) < 1e-16);
        let still = symmetric_first_person_step(&pair, &RMat::zeros(2, 2), 0.01).unwrap();
        assert_eq!(still.pa, pair.pa);
        let d = symmetric_first_person_step(&pair, &diag(&[1.0, 2.0]), 0.01).unwrap();
        assert_eq!(d.pa, pair.pa);
        assert!(matches!(
            symmetric_first_person_step(&pair, &RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), 0.01),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn step_equals_pair_rhs() {
        let mut r = rng::stream(2, 0);
        let j = DynamicalMatrix::new(rng::dynamical(&mut r, 4)).unwrap();
        let pair = DualPair::new(rng::uniform_matrix(&mut r, 4, 4, 1.0), rng::uniform_matrix(&mut r, 4, 4, 1.0), 0.0).unwrap();
        let next = first_person_step(&pair, &j, 1e-3).unwrap();
        let (da, db) = pair_rhs(&pair, &j).unwrap();
        assert!(max_abs_diff(&next.pa, &(&pair.pa + da * 1e-3)) < 1e-15);
        assert!(max_abs_diff(&next.pb, &(&pair.pb + db * 1e-3)) < 1e-15);
    }

    #[test]
    fn irreversible_only_flow_is_shared() {
        let mut r = rng::stream(3, 0);
        let a = rng::uniform_matrix(&mut r, 3, 3, 1.0);
        let ja = (&a - a.transpose()) * 0.5;
        let j = DynamicalMatrix::new(ja.clone()).unwrap();
        let pair = DualPair::from_diagonal(&diag(&[0.2, 0.3, 0.5])).unwrap();
        let d = observer_deltas(&pair, &j, 0.1).unwrap();
        assert_eq!(d.alice.first_person(), d.alice.third_person());
        assert_eq!(d.alice.first_person(), d.bob.first_person());
    }

    #[test]
    fn zero_dynamics_is_identity() {
        let obs = DualObserver::new(&diag(&[0.5, 0.5]), DynamicalMatrix::zeros(2)).unwrap();
        let t = obs.run(1.0, 10).unwrap();
        assert_eq!(t.last().pa, obs.pair.pa);
        let c = reconstruct_von_neumann(&t, &obs.j, 1.0).unwrap();
        assert_eq!(c.max_deviation, 0.0);
    }

    #[test]
    fn non_diagonal_start_is_rejected() {
        let p = RMat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.5]);
        assert!(matches!(DualObserver::new(&p, DynamicalMatrix::zeros(2)), Err(Error::NotDiagonal { .. })));
    }

    #[test]
    fn euler_tracks_rk4() {
        let mut r = rng::stream(4, 0);
        let j = DynamicalMatrix::new(rng::dynamical(&mut r, 4)).unwrap();
        let p0 = diag(&[0.1, 0.2, 0.3, 0.4]);
        let euler = DualObserver::new(&p0, j.clone()).unwrap().run(1.0, 1000).unwrap();
        let rk4 = evolve_pair(&p0, &j, 1.0, 1000).unwrap();
        let gap = max_abs_diff(&euler.last().pa, &rk4.last().pa);
        assert!(gap < 5e-3, "{gap}");
        let lit = evolve_pair_with(&p0, &j, 1.0, 1000, Integrator::Euler).unwrap();
        assert!(max_abs_diff(&euler.last().pa, &lit.last().pa) < 1e-13);
    }

    #[test]
    fn von_neumann_recovered() {
        let mut r = rng::stream(5, 0);
        let j = DynamicalMatrix::new(rng::dynamical(&mut r, 4)).unwrap();
        let p0 = diag(&[0.4, 0.3, 0.2, 0.1]);
        let traj = evolve_pair(&p0, &j, 2.0, 2000).unwrap();
        let c = reconstruct_von_neumann(&traj, &j, 1.0).unwrap();
        assert!(c.max_deviation < 1e-5, "{}", c.max_deviation);
        assert!(c.max_split_residual < 1e-14);
        assert!(c.max_transpose_gap < 1e-12);
        assert!(c.max_trace_drift < 1e-9);
        let js = crate::linalg::symmetric_part(j.j());
        let sym = DynamicalMatrix::new(js).unwrap();
        let traj = evolve_pair(&p0, &sym, 2.0, 2000).unwrap();
        assert!(reconstruct_von_neumann(&traj, &sym, 0.5).unwrap().max_deviation < 1e-5);
    }
}
