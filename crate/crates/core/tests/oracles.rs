//! Independent reference computations with frozen values.

use cyclic_inference::caliber::{maxcal_chain, CaliberSpec};
use cyclic_inference::cavityq::bp_sweep;
use cyclic_inference::cyclegraph::{check_observer_reduction, cycle_probability_matrix, cycle_update, pure_state_factors, ExperimentRoles, Layout};
use cyclic_inference::densitydual::{evolve_pair_with, pair_rhs, DualPair, DynamicalMatrix, HermitianState, Integrator};
use cyclic_inference::energetics::{hsp_estimate, photon_energy, reference_estimate, sha_gap, EnergyRange, PhotonSpec};
use cyclic_inference::kernelprop::{convolve_step, gaussian_kernel, normalization_defect, Field, Grid1D, KernelSpec, WaveVector};
use cyclic_inference::linalg::{max_abs_diff, CMat, RMat, RVec};
use cyclic_inference::oracle::{enumerate_joint, evolve_density_exact, marginal};
use cyclic_inference::rng;
use cyclic_inference::{FactorChain, FactorCycle};

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a:e} vs {b:e} (tol {tol:e})");
}

#[test]
fn rabi_oscillation() {
    let g = 1.3;
    let h = CMat::from_row_slice(2, 2, &[0.0.into(), g.into(), g.into(), 0.0.into()]);
    let rho0 = HermitianState::diagonal(&[1.0, 0.0]).unwrap();
    let t = 0.7;
    let rho = evolve_density_exact(&h, &rho0, t, 1.0).unwrap().rho_t;
    close(rho[(0, 0)].re, (g * t).cos().powi(2), 1e-14);
    close(rho[(0, 0)].re, 0.37668384501558305, 1e-14);
    close(rho[(0, 1)].im, 0.5 * (2.0 * g * t).sin(), 1e-14);

    let j = DynamicalMatrix::from_hamiltonian(&h, 1.0).unwrap();
    let p0 = RMat::from_diagonal(&RVec::from_vec(vec![1.0, 0.0]));
    let traj = evolve_pair_with(&p0, &j, t, 700, Integrator::Rk4).unwrap();
    close(traj.last().pa[(0, 0)], 0.37668384501558305, 1e-12);
}

#[test]
fn pair_rhs_hand_values() {
    let p = RMat::from_diagonal(&RVec::from_vec(vec![1.0, 0.0]));
    let pair = DualPair::new(p.clone(), p.clone(), 0.0).unwrap();
    let js = DynamicalMatrix::new(RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
    let (da, db) = pair_rhs(&pair, &js).unwrap();
    assert_eq!(da, RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    assert_eq!(db, RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    let ja = DynamicalMatrix::new(RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
    let (da, db) = pair_rhs(&pair, &ja).unwrap();
    let expect = RMat::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
    assert_eq!(da, expect);
    assert_eq!(db, expect);
}

#[test]
fn nested_loop_enumeration() {
    let mut r = rng::stream(11, 0);
    let f: Vec<RMat> = (0..3).map(|_| rng::positive_matrix(&mut r, 2, 2, 0.0, 1.0)).collect();
    let chain = FactorChain::new(f.clone()).unwrap();
    let joint = enumerate_joint(&chain).unwrap();
    let mut z = 0.0;
    let mut p1 = [0.0; 2];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let w = f[0][(a, b)] * f[1][(b, c)] * f[2][(c, d)];
                    z += w;
                    p1[b] += w;
                }
            }
        }
    }
    close(joint.partition_function(), z, 1e-14 * z);
    let m = marginal(&joint, 1).unwrap();
    close(m[0], p1[0] / z, 1e-15);
    let msg = bp_sweep(&chain).unwrap();
    close(msg.single(1)[1], p1[1] / z, 1e-15);
    close(msg.partition_function(), z, 1e-13 * z);
}

#[test]
fn two_state_maxcal_factor() {
    let spec = CaliberSpec::new(4.0, 0.5, 4, 1.0).unwrap();
    let h = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let mc = maxcal_chain(&spec, &h).unwrap();
    let f = mc.chain.factor(0) * mc.normalization;
    close(f[(0, 1)], 0.36787944117144233, 1e-16);
    close(f[(1, 1)], 1.0, 0.0);
}

#[test]
fn plane_wave_kernel_step() {
    let grid = Grid1D::centered(0.02, 512).unwrap();
    let k = 2.0 * std::f64::consts::PI * 8.0 / grid.length();
    let eps = 4e-3;
    let spec = KernelSpec::new(1.0, eps, 1.0).unwrap();
    let kernel = gaussian_kernel(&spec, &grid).unwrap();
    let psi = WaveVector::plane_wave(&grid, k).unwrap();
    let out = convolve_step(&kernel, psi.psi(), &grid).unwrap();
    let factor = (-eps * k * k / 2.0).exp();
    let expect = psi.psi().map(|z| z * factor);
    let err = (out - expect).camax();
    assert!(err < 1e-10, "{err:e}");
    close(factor, 0.9529513482934975, 1e-15);
}

#[test]
fn harmonic_defect_matches_quadrature() {
    let grid = Grid1D::centered(0.01, 800).unwrap();
    let eps = 1e-3;
    let spec = KernelSpec::new(1.0, eps, 1.0).unwrap().with_potential(Field::Harmonic { k: 1.0, center: 0.0 });
    let kernel = gaussian_kernel(&spec, &grid).unwrap();
    let defect = normalization_defect(&kernel, &grid).unwrap();
    for i in (300..=500).step_by(20) {
        let x = grid.x(i);
        let leading = -eps * x * x / 2.0;
        assert!((defect[i] - leading).abs() <= 3.0 * eps * eps * (1.0 + x.powi(4)), "x = {x}");
    }
}

#[test]
fn update_with_hand_factor() {
    let mut r = rng::stream(5, 0);
    let f1 = RMat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let f2 = rng::positive_matrix(&mut r, 2, 2, 0.1, 1.0);
    let f3 = rng::positive_matrix(&mut r, 2, 2, 0.1, 1.0);
    let cycle = FactorCycle::new(vec![f1.clone(), f2.clone(), f3.clone()]).unwrap();
    let p = cycle_probability_matrix(&cycle, 0).unwrap();
    let next = cycle_update(&p, &f1).unwrap();
    let direct = &f2 * &f3 * &f1;
    let direct = &direct / direct.trace();
    assert!(max_abs_diff(&next.p, &direct) < 1e-14);
}

#[test]
fn pure_state_diagonal() {
    let p = RVec::from_vec(vec![0.5, 0.3, 0.2]);
    let phi = RVec::from_vec(vec![0.1, -0.4, 0.7]);
    let f = pure_state_factors(1, &p, &phi).unwrap();
    let last = f.last();
    for a in 0..3 {
        close(last[(a, a)], p[a], 1e-13);
        for b in 0..3 {
            close(last[(a, b)], (p[a] * p[b]).sqrt() * (phi[a] - phi[b]).exp(), 1e-13);
        }
    }
}

#[test]
fn observer_reduction_preserves_marginals() {
    let mut r = rng::stream(3, 0);
    for layout in [Layout::Simulation, Layout::Ideomotor] {
        let mut m = || rng::positive_matrix(&mut r, 3, 3, 0.1, 1.0);
        let roles = ExperimentRoles {
            prep: m(),
            ext: m(),
            meas: m(),
            closing: m(),
            layout,
        };
        let check = check_observer_reduction(&roles).unwrap();
        assert!(check.max_error < 1e-12);
    }
}

#[test]
fn energetics_reference_numbers() {
    close(photon_energy(&PhotonSpec::new(5.88e14).unwrap()), 3.8961292482e-19, 1e-29);
    close(sha_gap(1.0), 0.04, 0.0);
    close(sha_gap(3.9e-17), 1.56e-18, 1e-30);
    let r = reference_estimate();
    close(r.mean, 3.9e-17, 1e-30);
    close(r.ratio, 4.003973945989382, 1e-12);
    let custom = hsp_estimate(&EnergyRange::new(2.0e-17, 4.0e-17).unwrap(), &PhotonSpec::new(5.0e14).unwrap());
    close(custom.gap, 1.2e-18, 1e-30);
}
