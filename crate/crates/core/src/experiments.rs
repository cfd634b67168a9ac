//! Seeded validation suites. Each suite runs one family of checks against
//! its oracle and returns a [`SuiteReport`]; the CLI and the acceptance
//! target share them.

use rayon::prelude::*;
use serde::Deserialize;

use crate::caliber::{self, CaliberSpec, GaussianProcess, GaussianTheta};
use crate::cavityq::{self, bp_sweep, phase_decompose};
use crate::cyclegraph::{self, cycle_probability_matrix, cycle_update};
use crate::densitydual::{evolve_pair_with, join_real, DualPair, DynamicalMatrix, HermitianState, Integrator};
use crate::energetics::{self, EnergyRange, PhotonSpec};
use crate::error::{Error, Result};
use crate::factor::{FactorChain, FactorCycle};
use crate::firstperson::{self, DualObserver};
use crate::kernelprop::{self, Field, Grid1D, KernelSpec, PotentialConvention, WaveVector};
use crate::linalg::{condition_number, linear_fit, log_log_slope, max_abs, max_abs_c, max_abs_diff, max_abs_diff_c, to_complex, RMat, RVec};
use crate::oracle::{enumerate_joint, evolve_density_exact, marginal, pairwise_marginal};
use crate::report::{Bound, Cell, SuiteReport, Table, Tolerances};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    pub tol: Tolerances,
}

fn par_instances<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

fn fold_max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
}

fn fold_min(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

fn halvings(first: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| first / 2f64.powi(k as i32)).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VnParams {
    pub instances: usize,
    /// Fixed dimension; otherwise dimensions cycle through 2..=8.
    pub dim: Option<usize>,
    pub t: f64,
    pub dt: f64,
}

impl Default for VnParams {
    fn default() -> Self {
        Self {
            instances: 50,
            dim: None,
            t: 1.0,
            dt: 1e-3,
        }
    }
}

fn pair_deviation(p0: &RMat, j: &DynamicalMatrix, exact: &nalgebra::DMatrix<num_complex::Complex64>, t: f64, dt: f64, integrator: Integrator) -> Result<f64> {
    let steps = (t / dt).round() as usize;
    let traj = evolve_pair_with(p0, j, t, steps, integrator)?;
    Ok(max_abs_diff_c(&join_real(&traj.last().pa), exact))
}

/// Real-pair integration against the matrix-exponential oracle.
pub fn vn_equiv(p: &VnParams, o: &RunOptions) -> Result<SuiteReport> {
    if p.instances == 0 || !(p.dt > 0.0 && p.t > 0.0) {
        return Err(Error::InvalidInput("vn-equiv needs instances > 0, t > 0, dt > 0".into()));
    }
    let rows = par_instances(p.instances, |i| {
        let n = p.dim.unwrap_or(2 + i % 7);
        let mut r = rng::stream(o.seed, i as u64);
        let j = DynamicalMatrix::new(rng::dynamical(&mut r, n))?;
        let p0 = RMat::from_diagonal(&rng::distribution(&mut r, n));
        let rho0 = HermitianState::new(join_real(&p0))?;
        let h = j.hamiltonian(1.0);
        let exact = evolve_density_exact(&h, &rho0, p.t, 1.0)?.rho_t;
        let rk4 = pair_deviation(&p0, &j, &exact, p.t, p.dt, Integrator::Rk4)?;
        let euler = pair_deviation(&p0, &j, &exact, p.t, p.dt, Integrator::Euler)?;
        let traj = evolve_pair_with(&p0, &j, p.t, (p.t / p.dt).round() as usize, Integrator::Rk4)?;
        let gap = traj.max_transpose_gap();
        let at_one = evolve_density_exact(&h, &rho0, 1.0, 1.0)?.rho_t;
        let r1 = pair_deviation(&p0, &j, &at_one, 1.0, 0.1, Integrator::Rk4)?;
        let r2 = pair_deviation(&p0, &j, &at_one, 1.0, 0.05, Integrator::Rk4)?;
        let e1 = pair_deviation(&p0, &j, &at_one, 1.0, 1e-2, Integrator::Euler)?;
        let e2 = pair_deviation(&p0, &j, &at_one, 1.0, 5e-3, Integrator::Euler)?;
        Ok((n, rk4, euler, gap, r1 / r2, e1 / e2))
    })?;
    let mut rep = SuiteReport::new("vn-equiv");
    let mut table = Table::new("vn_equiv", &["instance", "dim", "rk4_deviation", "euler_deviation", "transpose_gap", "rk4_halving_ratio", "euler_halving_ratio"]);
    for (i, r) in rows.iter().enumerate() {
        table.push(vec![i.into(), r.0.into(), r.1.into(), r.2.into(), r.3.into(), r.4.into(), r.5.into()]);
    }
    let tol = &o.tol;
    rep.check(tol, "vn_rk4_deviation", fold_max(rows.iter().map(|r| r.1)), Bound::AtMost(1e-6));
    rep.check(tol, "vn_euler_deviation", fold_max(rows.iter().map(|r| r.2)), Bound::AtMost(5e-3));
    rep.check(tol, "vn_transpose_gap", fold_max(rows.iter().map(|r| r.3)), Bound::AtMost(1e-12));
    rep.check(tol, "vn_rk4_halving_ratio_min", fold_min(rows.iter().map(|r| r.4)), Bound::Within(12.0, 20.0));
    rep.check(tol, "vn_rk4_halving_ratio_max", fold_max(rows.iter().map(|r| r.4)), Bound::Within(12.0, 20.0));
    rep.check(tol, "vn_euler_halving_ratio_min", fold_min(rows.iter().map(|r| r.5)), Bound::Within(1.8, 2.2));
    rep.check(tol, "vn_euler_halving_ratio_max", fold_max(rows.iter().map(|r| r.5)), Bound::Within(1.8, 2.2));
    rep.note("instances", p.instances);
    rep.note("t", p.t);
    rep.note("dt", p.dt);
    rep.note("rk4_halving_steps", [0.1, 0.05]);
    rep.note("euler_halving_steps", [1e-2, 5e-3]);
    rep.tables.push(table);
    Ok(rep)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub n: usize,
    pub delta: f64,
    pub epsilon0: f64,
    pub halvings: usize,
    pub defect_n: usize,
    pub defect_delta: f64,
    pub potential: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            n: 512,
            delta: 0.0125,
            epsilon0: 1e-2,
            halvings: 4,
            defect_n: 256,
            defect_delta: 0.03,
            potential: 1.0,
        }
    }
}

fn packet(grid: &Grid1D) -> Result<WaveVector> {
    WaveVector::gaussian_packet(grid, 0.1, 0.3, 2.0)
}

/// `min sum (y - s x - c x^2)^2`, returning `(s, c)`.
pub fn fit_linear_quadratic(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        s11 += x * x;
        s12 += x * x * x;
        s22 += x * x * x * x;
        b1 += x * y;
        b2 += x * x * y;
    }
    let det = s11 * s22 - s12 * s12;
    ((b1 * s22 - b2 * s12) / det, (s11 * b2 - s12 * b1) / det)
}

/// Real-kernel normalization defect and Schrodinger limit.
pub fn kernel_converge(p: &KernelParams, o: &RunOptions) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("kernel-converge");
    let tol = &o.tol;
    let hbar = 1.0;
    let grid = Grid1D::centered(p.defect_delta, p.defect_n)?;
    let eps_defect: Vec<f64> = [0.04, 0.02, 0.01, 0.005].iter().map(|x| x * hbar / p.potential).collect();
    let mut defect_table = Table::new("kernel_defect", &["epsilon", "defect", "exact"]);
    let mut defects = Vec::new();
    for &e in &eps_defect {
        let spec = KernelSpec::new(1.0, e, hbar)?.with_potential(Field::Constant { value: p.potential });
        let k = kernelprop::gaussian_kernel(&spec, &grid)?;
        let d = kernelprop::normalization_defect(&k, &grid)?;
        let defect = -d.mean();
        defect_table.push(vec![e.into(), defect.into(), (1.0 - (-e * p.potential / hbar).exp()).into()]);
        defects.push(defect);
    }
    let (slope, curvature) = fit_linear_quadratic(&eps_defect, &defects);
    let (ols, _) = linear_fit(&eps_defect, &defects);
    let target = p.potential / hbar;
    rep.check(tol, "kernel_defect_slope_rel_error", (slope / target - 1.0).abs(), Bound::AtMost(0.02));
    rep.note("defect_slope", slope);
    rep.note("defect_curvature", curvature);
    rep.note("defect_plain_ols_slope", ols);

    let grid = Grid1D::centered(p.delta, p.n)?;
    let eps = halvings(p.epsilon0, p.halvings);
    let base = KernelSpec::new(1.0, eps[0], hbar)?.with_potential(Field::Harmonic { k: 1.0, center: 0.0 });
    let psi = packet(&grid)?;
    let h = to_complex(&kernelprop::discretize_hamiltonian(&grid, &base)?);
    let reference = kernelprop::hamiltonian_rhs(&h, psi.psi(), hbar);
    let mut table = Table::new("kernel_converge", &["epsilon", "residual"]);
    let mut errs = Vec::new();
    for &e in &eps {
        let rhs = kernelprop::schrodinger_rhs_via_kernel(&base.with_epsilon(e), psi.psi(), &grid)?;
        let err = (rhs - &reference).camax();
        table.push(vec![e.into(), err.into()]);
        errs.push(err);
    }
    let order = log_log_slope(&eps, &errs);
    rep.check(tol, "kernel_schrodinger_order", order, Bound::Within(0.9, 1.2));
    rep.tables.push(defect_table);
    rep.tables.push(table);
    Ok(rep)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmParams {
    pub n: usize,
    pub delta: f64,
    pub epsilon0: f64,
    pub halvings: usize,
    pub a0: f64,
    pub a1: f64,
    pub identity_points: usize,
}

impl Default for EmParams {
    fn default() -> Self {
        Self {
            n: 512,
            delta: 0.0125,
            epsilon0: 1e-2,
            halvings: 4,
            a0: 0.5,
            a1: 0.3,
            identity_points: 100,
        }
    }
}

/// Complex EM kernel: Hermiticity, zero-field reduction, phase identity and
/// Schrodinger limit.
pub fn em_kernel(p: &EmParams, o: &RunOptions) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("em-kernel");
    let tol = &o.tol;
    let grid = Grid1D::centered(p.delta, p.n)?;
    let l = grid.length();
    let a = Field::tabulate(&grid, |x| p.a0 + p.a1 * (2.0 * std::f64::consts::PI * x / l).sin());
    let v = Field::Harmonic { k: 1.0, center: 0.0 };
    let spec = KernelSpec::new(1.0, p.epsilon0, 1.0)?.with_potential(v.clone()).with_vector_potential(a, 1.0);
    let c = kernelprop::em_complex_kernel(&spec, &grid)?;
    rep.check(tol, "em_hermiticity", crate::linalg::hermitian_deviation(&c), Bound::AtMost(1e-14));

    let plain = KernelSpec::new(1.0, p.epsilon0, 1.0)?.with_potential(v);
    let c0 = kernelprop::em_complex_kernel(&plain, &grid)?;
    let k0 = kernelprop::gaussian_kernel_with(&plain, &grid, PotentialConvention::Midpoint)?;
    let reduction = max_abs_diff_c(&c0, &to_complex(&k0)) / max_abs(&k0);
    rep.check(tol, "em_zero_field_reduction", reduction, Bound::AtMost(1e-12));
    let real0 = kernelprop::em_real_kernel(&plain, &grid)?;
    let real_red = (max_abs_diff(&real0.k_em, &k0).max(max_abs_diff(&real0.k_s, &k0)) + max_abs(&real0.k_a)) / max_abs(&k0);
    rep.check(tol, "em_zero_field_real_reduction", real_red, Bound::AtMost(1e-12));

    let pts = p.identity_points.max(2);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..pts {
        let z = -0.1 + 0.2 * k as f64 / (pts - 1) as f64;
        let excess = kernelprop::z_identity_gap(z) - z.abs().powi(3);
        worst = worst.max(excess);
    }
    rep.check(tol, "em_phase_identity_excess", worst, Bound::AtMost(0.0));

    let psi = packet(&grid)?;
    let h = kernelprop::discretize_em_hamiltonian(&grid, &spec)?;
    let reference = kernelprop::hamiltonian_rhs(&h, psi.psi(), 1.0);
    let eps = halvings(p.epsilon0, p.halvings);
    let mut table = Table::new("em_kernel_converge", &["epsilon", "residual"]);
    let mut errs = Vec::new();
    for &e in &eps {
        let rhs = kernelprop::em_schrodinger_rhs(&spec.with_epsilon(e), psi.psi(), &grid)?;
        let err = (rhs - &reference).camax();
        table.push(vec![e.into(), err.into()]);
        errs.push(err);
    }
    rep.check(tol, "em_schrodinger_order", log_log_slope(&eps, &errs), Bound::Within(0.9, 1.2));
    rep.tables.push(table);
    Ok(rep)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxcalParams {
    pub instances: usize,
    pub n: usize,
    pub q: usize,
}

impl Default for MaxcalParams {
    fn default() -> Self {
        Self {
            instances: 20,
            n: 5,
            q: 3,
        }
    }
}

/// Max-caliber chains: kernel identity, path weights and the three
/// factorizations of their pairwise marginals.
pub fn maxcal(p: &MaxcalParams, o: &RunOptions) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("maxcal");
    let tol = &o.tol;
    let spec = CaliberSpec::from_hbar(0.7, 0.01, 5, 1.3)?;
    let grid = Grid1D::centered(0.02, 64)?;
    let v = Field::Harmonic { k: 2.0, center: 0.1 };
    let mc = caliber::maxcal_chain_on_grid(&spec, &grid, &v)?;
    let k = kernelprop::gaussian_kernel(&spec.kernel_spec(v)?, &grid)?;
    rep.check(tol, "maxcal_kernel_identity", max_abs_diff(mc.chain.factor(0), &k) / max_abs(&k), Bound::AtMost(1e-14));

    let two = CaliberSpec::new(3.0, 0.5, 3, 1.0)?;
    let h2 = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let f2 = caliber::maxcal_chain(&two, &h2)?;
    let e = (-1.0f64).exp();
    let expect = RMat::from_row_slice(2, 2, &[1.0, e, e, 1.0]);
    rep.check(tol, "maxcal_two_state", max_abs_diff(&(f2.chain.factor(0) * f2.normalization), &expect), Bound::AtMost(1e-15));

    let rows = par_instances(p.instances, |i| {
        let mut r = rng::stream(o.seed, i as u64);
        let lambda = r.random_range(0.5..3.0);
        let eps = r.random_range(0.05..0.5);
        let s = CaliberSpec::new(lambda, eps, p.n, 1.0)?;
        let h = rng::positive_matrix(&mut r, p.q, p.q, 0.0, 2.0);
        let chain = caliber::maxcal_chain(&s, &h)?.chain;
        let joint = enumerate_joint(&chain)?;
        let mut path_err = 0.0f64;
        let base: Vec<usize> = vec![0; p.n];
        let base_lw = caliber::path_log_weight(&s, &h, &base);
        let base_p = joint.probability(&base);
        for (cfg, prob) in joint.iter() {
            let lhs = (prob / base_p).ln();
            let rhs = caliber::path_log_weight(&s, &h, &cfg) - base_lw;
            path_err = path_err.max((lhs - rhs).abs());
        }
        let mut forms = 0.0f64;
        for l in 0..p.n - 1 {
            let pw = pairwise_marginal(&joint, l)?;
            let (a, b) = (marginal(&joint, l)?, marginal(&joint, l + 1)?);
            let d = caliber::markov_decompose(&pw, &a, &b)?;
            forms = forms
                .max(max_abs_diff(&d.from_forward(&a), &pw))
                .max(max_abs_diff(&d.from_backward(&b), &pw))
                .max(max_abs_diff(&d.from_symmetric(), &pw));
        }
        Ok((path_err, forms))
    })?;
    rep.check(tol, "maxcal_path_log_ratio", fold_max(rows.iter().map(|r| r.0)), Bound::AtMost(1e-12));
    rep.check(tol, "maxcal_three_factorizations", fold_max(rows.iter().map(|r| r.1)), Bound::AtMost(1e-12));
    rep.note("instances", p.instances);
    Ok(rep)
}

fn random_stochastic(r: &mut impl Rng, q: usize) -> RMat {
    let m = rng::positive_matrix(r, q, q, 0.05, 1.0);
    let sums = m.column_sum();
    RMat::from_fn(q, q, |i, j| m[(i, j)] / sums[i])
}

fn random_doubly_stochastic(r: &mut impl Rng, q: usize) -> RMat {
    let mut m = RMat::zeros(q, q);
    let mut perm: Vec<usize> = (0..q).collect();
    let weights: Vec<f64> = (0..q).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        perm.shuffle(r);
        for (i, &j) in perm.iter().enumerate() {
            m[(i, j)] += w / total;
        }
    }
    m
}

/// Drift and diffusion from transition densities and the time-symmetric
/// construction.
pub fn time_symmetric_markov(o: &RunOptions) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("appendix-markov");
    let tol = &o.tol;
    let (d, eps) = (0.8f64, 1e-4f64);
    let xs: Vec<f64> = (0..21).map(|k| -1.0 + 0.1 * k as f64).collect();
    let b = |x: f64| 1.0 + 0.5 * x;
    let norm = (2.0 * std::f64::consts::PI * d * eps).sqrt();
    let density = |y: f64, x: f64| (-(y - x - b(x) * eps).powi(2) / (2.0 * d * eps)).exp() / norm;
    let window = caliber::WINDOW_SIGMAS * (d * eps).sqrt() + 2.0 * eps;
    let est = caliber::estimate_drift_diffusion(density, &xs, eps, window)?;
    let mut rel = 0.0f64;
    for (k, &x) in xs.iter().enumerate() {
        rel = rel.max((est.b_plus[k] / b(x) - 1.0).abs()).max((est.d_plus[k] / d - 1.0).abs());
    }
    rep.check(tol, "markov_drift_diffusion_rel_error", rel, Bound::AtMost(1e-3));

    let mut r = rng::stream(o.seed, 0);
    let q = 5;
    let qp = random_stochastic(&mut r, q);
    let qm = random_stochastic(&mut r, q);
    let qv = rng::distribution(&mut r, q);
    let sym = caliber::symmetrize_process(&qp, &qm, &qv)?;
    rep.check(tol, "markov_symmetrized_asymmetry", max_abs_diff(&sym.forward, &sym.backward), Bound::AtMost(0.0));

    let mut stoch_violations = 0usize;
    for _ in 0..20 {
        let s = random_doubly_stochastic(&mut r, 4);
        let pw = (&s + s.transpose()) / 8.0;
        let u = RVec::from_element(4, 0.25);
        let dd = caliber::markov_decompose(&pw, &u, &u)?;
        let rows_ok = caliber::kernel_row_sums(&dd.k).iter().all(|x| (x - 1.0).abs() < 1e-12);
        if dd.transitions.asymmetry() > 1e-12 || !rows_ok {
            stoch_violations += 1;
        }
        let a = rng::distribution(&mut r, 4);
        let t = random_stochastic(&mut r, 4);
        let pw = RMat::from_fn(4, 4, |i, j| a[i] * t[(i, j)]);
        let next = pw.row_sum().transpose();
        let dd = caliber::markov_decompose(&pw, &a, &next)?;
        let rows_one = caliber::kernel_row_sums(&dd.k).iter().all(|x| (x - 1.0).abs() < 1e-12);
        if (dd.transitions.asymmetry() > 1e-12) == rows_one {
            stoch_violations += 1;
        }
    }
    rep.check(tol, "markov_kernel_stochastic_iff_symmetric", stoch_violations as f64, Bound::AtMost(0.0));

    let process = GaussianProcess::new(1.0, 0.5, 0.4)?;
    let pts = [-0.6, -0.2, 0.3, 0.8];
    let eps_list = [4e-3, 2e-3, 1e-3, 5e-4];
    let mut table = Table::new("markov_markov", &["epsilon", "drift_residual", "osmotic_residual", "finite_identity_residual", "defect_error"]);
    let (mut dr, mut osm, mut fin, mut defect) = (vec![], vec![], vec![], vec![]);
    let theta = GaussianTheta { s: 0.5 };
    for &e in &eps_list {
        let s = caliber::symmetrize_gaussian(&process, e, &pts)?;
        let k = caliber::kernel_integral_defect(&theta, 0.0, 1.0, |x| -x, e, &pts)?;
        table.push(vec![e.into(), s.drift_residual.into(), s.osmotic_residual.into(), s.finite_identity_residual.into(), k.max_error().into()]);
        dr.push(s.drift_residual);
        osm.push(s.osmotic_residual);
        fin.push(s.finite_identity_residual);
        defect.push(k.max_error());
    }
    rep.check(tol, "markov_finite_drift_identity", fold_max(fin), Bound::AtMost(1e-9));
    rep.check(tol, "markov_drift_identity_order", log_log_slope(&eps_list, &dr), Bound::AtLeast(0.9));
    rep.check(tol, "markov_osmotic_drift_order", log_log_slope(&eps_list, &osm), Bound::AtLeast(0.9));
    rep.check(tol, "markov_kernel_defect_order", log_log_slope(&eps_list, &defect), Bound::Within(0.9, 1.2));
    rep.tables.push(table);
    Ok(rep)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    pub instances: usize,
    pub n: Option<usize>,
    pub q: Option<usize>,
}

impl GraphParams {
    fn with_instances(instances: usize) -> Self {
        Self {
            instances,
            n: None,
            q: None,
        }
    }

    fn shape(&self, r: &mut impl Rng, min_n: usize) -> (usize, Vec<usize>) {
        let n = self.n.unwrap_or_else(|| r.random_range(min_n..=6));
        let q = (0..n).map(|_| self.q.unwrap_or_else(|| r.random_range(2..=4))).collect();
        (n, q)
    }

    fn validate(&self, min_n: usize) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::InvalidInput("instances must be positive".into()));
        }
        if self.n.is_some_and(|n| n < min_n) || self.q.is_some_and(|q| q < 1) {
            return Err(Error::InvalidInput(format!("need n >= {min_n} and q >= 1")));
        }
        Ok(())
    }
}

impl Default for GraphParams {
    fn default() -> Self {
        Self::with_instances(100)
    }
}

fn random_chain(r: &mut impl Rng, q: &[usize]) -> Result<FactorChain> {
    let f = q.windows(2).map(|w| rng::positive_matrix(r, w[0], w[1], 0.05, 1.0)).collect();
    let chain = FactorChain::new(f)?;
    let left = RVec::from_fn(q[0], |_, _| r.random_range(0.1..1.0));
    let right = RVec::from_fn(q[q.len() - 1], |_, _| r.random_range(0.1..1.0));
    chain.with_boundaries(Some(left), Some(right))
}

fn random_cycle(r: &mut impl Rng, q: &[usize]) -> Result<FactorCycle> {
    let n = q.len();
    FactorCycle::new((0..n).map(|l| rng::positive_matrix(r, q[l], q[(l + 1) % n], 0.05, 1.0)).collect())
}

fn message_table(name: &str, msg: &cavityq::CavityMessages) -> Result<Table> {
    let phase = phase_decompose(msg)?;
    let mut t = Table::new(name, &["site", "state", "mu_fwd", "mu_bwd", "p", "phi"]);
    for site in 0..msg.n_sites() {
        for state in 0..msg.mu_forward[site].len() {
            t.push(vec![
                (site + 1).into(),
                state.into(),
                msg.mu_forward[site][state].into(),
                msg.mu_backward[site][state].into(),
                phase.p[site][state].into(),
                phase.phi[site][state].map_or(Cell::Missing, Cell::Float),
            ]);
        }
    }
    Ok(t)
}

/// Belief propagation on random chains against enumeration.
pub fn bp_chain(p: &GraphParams, o: &RunOptions) -> Result<SuiteReport> {
    p.validate(2)?;
    let rows = par_instances(p.instances, |i| {
        let mut r = rng::stream(o.seed, i as u64);
        let (_, q) = p.shape(&mut r, 2);
        let chain = random_chain(&mut r, &q)?;
        let n = chain.n_sites();
        let joint = enumerate_joint(&chain)?;
        let msg = bp_sweep(&chain)?;
        let singles: Vec<RVec> = (0..n).map(|l| marginal(&joint, l)).collect::<Result<_>>()?;
        let pairs: Vec<RMat> = (0..n - 1).map(|l| pairwise_marginal(&joint, l)).collect::<Result<_>>()?;
        let mut e = [0.0f64; 8];
        for l in 0..n {
            e[0] = e[0].max((msg.single(l) - &singles[l]).amax());
            e[1] = e[1].max((msg.single_from_nu(l) - &singles[l]).amax());
            e[2] = e[2].max((msg.normalization(l) - 1.0).abs());
        }
        for l in 0..n - 1 {
            e[0] = e[0].max(max_abs_diff(&msg.pairwise(&chain, l), &pairs[l]));
            e[1] = e[1].max(max_abs_diff(&msg.pairwise_from_nu(&chain, l), &pairs[l]));
        }
        let (trans, sym) = caliber::decompose_chain(&pairs, &singles)?;
        for l in 0..n - 1 {
            e[3] = e[3].max(max_abs_diff(&sym.reconstruct(l), &pairs[l]));
        }
        let rebuilt = caliber::chain_joint_from_marginals(&pairs, &singles)?;
        e[4] = joint
            .probabilities()
            .iter()
            .zip(rebuilt.probabilities())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let from_msg = cavityq::transitions_from_messages(&msg, &chain)?;
        for l in 0..n - 1 {
            e[5] = e[5]
                .max(max_abs_diff(&from_msg[l].forward, &trans[l].forward))
                .max(max_abs_diff(&from_msg[l].backward, &trans[l].backward));
        }
        let free = cavityq::phase_free_chain(&msg, &chain)?;
        let msg2 = bp_sweep(&free)?;
        e[6] = phase_decompose(&msg2)?.max_abs_phase();
        for l in 0..n {
            e[7] = e[7].max((msg2.single(l) - &singles[l]).amax());
        }
        for l in 0..n - 1 {
            e[7] = e[7].max(max_abs_diff(&msg2.pairwise(&free, l), &pairs[l]));
        }
        let table = if i == 0 { Some(message_table("bp_messages", &msg)?) } else { None };
        Ok((e, table))
    })?;
    let mut rep = SuiteReport::new("bp-chain");
    let tol = &o.tol;
    let names = [
        "bp_marginals",
        "bp_nu_marginals",
        "bp_mu_normalization",
        "bp_theta_k_reconstruction",
        "bp_joint_from_marginals",
        "bp_transitions",
        "bp_phase_free_phi",
        "bp_phase_free_marginals",
    ];
    for (k, name) in names.iter().enumerate() {
        rep.check(tol, name, fold_max(rows.iter().map(|r| r.0[k])), Bound::AtMost(1e-12));
    }
    rep.note("instances", p.instances);
    rep.tables.extend(rows.into_iter().filter_map(|r| r.1));
    Ok(rep)
}

/// Diagonal of cyclic products against enumerated marginals.
pub fn cycle_born(p: &GraphParams, o: &RunOptions) -> Result<SuiteReport> {
    p.validate(2)?;
    let rows = par_instances(p.instances, |i| {
        let mut r = rng::stream(o.seed, i as u64);
        let (n, q) = p.shape(&mut r, 3);
        let cycle = random_cycle(&mut r, &q)?;
        let joint = enumerate_joint(&cycle)?;
        let mut err = 0.0f64;
        let mut table = (i == 0).then(|| Table::new("cycle_probability_matrices", &["site", "row", "col", "value"]));
        for site in 0..n {
            let pm = cycle_probability_matrix(&cycle, site)?;
            err = err.max((pm.diagonal() - marginal(&joint, site)?).amax());
            if let Some(t) = table.as_mut() {
                for a in 0..pm.p.nrows() {
                    for b in 0..pm.p.ncols() {
                        t.push(vec![pm.site_label().into(), a.into(), b.into(), pm.p[(a, b)].into()]);
                    }
                }
            }
        }
        Ok((err, table))
    })?;
    let mut rep = SuiteReport::new("cycle-born");
    rep.check(&o.tol, "cycle_born_marginals", fold_max(rows.iter().map(|r| r.0)), Bound::AtMost(1e-12));
    rep.note("instances", p.instances);
    rep.tables.extend(rows.into_iter().filter_map(|r| r.1));
    Ok(rep)
}

/// Similarity update between sites and its commutator limit.
pub fn cycle_update_suite(p: &GraphParams, o: &RunOptions) -> Result<SuiteReport> {
    p.validate(2)?;
    let rows = par_instances(p.instances, |i| {
        let mut r = rng::stream(o.seed, i as u64);
        let (n, q) = p.shape(&mut r, 3);
        let q0 = q[0];
        let cycle = random_cycle(&mut r, &vec![q0; n])?;
        let mut scaled = 0.0f64;
        let mut trace = 0.0f64;
        let mut skipped = 0usize;
        for site in 0..n {
            let pm = cycle_probability_matrix(&cycle, site)?;
            let f = cycle.factor(site);
            let cond = condition_number(f);
            match cycle_update(&pm, f) {
                Ok(next) => {
                    let direct = cycle_probability_matrix(&cycle, (site + 1) % n)?;
                    scaled = scaled.max(max_abs_diff(&next.p, &direct.p) / cond);
                    trace = trace.max((next.trace() / pm.trace() - 1.0).abs() / cond);
                }
                Err(Error::IllConditioned { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((scaled, trace, skipped))
    })?;
    let mut rep = SuiteReport::new("cycle-update");
    let tol = &o.tol;
    rep.check(tol, "cycle_update_error_over_cond", fold_max(rows.iter().map(|r| r.0)), Bound::AtMost(1e-10));
    rep.check(tol, "cycle_update_trace_change_over_cond", fold_max(rows.iter().map(|r| r.1)), Bound::AtMost(1e-10));
    rep.note("ill_conditioned_skipped", rows.iter().map(|r| r.2).sum::<usize>());

    let mut r = rng::stream(o.seed, p.instances as u64);
    let j = rng::dynamical(&mut r, 3);
    let p0 = RMat::from_diagonal(&RVec::from_vec(vec![0.5, 0.3, 0.2]));
    let dts = [0.02, 0.01, 0.005, 0.0025];
    let mut table = Table::new("cycle_commutator", &["dt", "max_residual"]);
    let mut res = Vec::new();
    for &dt in &dts {
        let c = cyclegraph::continuum_commutator_check(&j, dt, (1.0 / dt).round() as usize, &p0)?;
        table.push(vec![dt.into(), c.max_residual.into()]);
        res.push(c.max_residual);
    }
    rep.check(tol, "cycle_commutator_order", log_log_slope(&dts, &res), Bound::Within(0.9, 1.1));
    rep.note("instances", p.instances);
    rep.tables.push(table);
    Ok(rep)
}

/// Bernstein decomposition of random cycles.
pub fn bernstein(p: &GraphParams, o: &RunOptions) -> Result<SuiteReport> {
    p.validate(3)?;
    let rows = par_instances(p.instances, |i| {
        let mut r = rng::stream(o.seed, i as u64);
        let (_, q) = p.shape(&mut r, 3);
        let cycle = random_cycle(&mut r, &q)?;
        let joint = enumerate_joint(&cycle)?;
        let b = cyclegraph::bernstein_from_joint(&joint)?;
        let rows = fold_max(b.conditionals.iter().map(|c| c.row_deviation()));
        Ok((b.reconstruction_error(&joint), rows))
    })?;
    let mut rep = SuiteReport::new("bernstein");
    rep.check(&o.tol, "bernstein_reconstruction", fold_max(rows.iter().map(|r| r.0)), Bound::AtMost(1e-12));
    rep.check(&o.tol, "bernstein_row_stochastic", fold_max(rows.iter().map(|r| r.1)), Bound::AtMost(1e-12));
    rep.note("instances", p.instances);
    Ok(rep)
}

/// Clamped cycles against enumerated conditional marginals.
pub fn clamp(p: &GraphParams, o: &RunOptions) -> Result<SuiteReport> {
    p.validate(3)?;
    let rows = par_instances(p.instances, |i| {
        let mut r = rng::stream(o.seed, i as u64);
        let (n, q) = p.shape(&mut r, 3);
        let cycle = random_cycle(&mut r, &q)?;
        let joint = enumerate_joint(&cycle)?;
        let mut err = 0.0f64;
        for x1 in 0..q[0] {
            for xn in 0..q[n - 1] {
                let chain = cyclegraph::clamp_cycle(&cycle, x1, xn)?;
                let msg = bp_sweep(&chain)?;
                for site in 0..n {
                    let expect = cyclegraph::conditional_marginal(&joint, site, x1, xn)?;
                    err = err.max((msg.single(site) - expect).amax());
                }
            }
        }
        Ok(err)
    })?;
    let mut rep = SuiteReport::new("clamp");
    rep.check(&o.tol, "clamp_conditional_marginals", fold_max(rows), Bound::AtMost(1e-12));
    rep.note("instances", p.instances);
    Ok(rep)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirstPersonParams {
    pub dim: usize,
    pub t: f64,
    pub dt: f64,
}

impl Default for FirstPersonParams {
    fn default() -> Self {
        Self {
            dim: 4,
            t: 2.0,
            dt: 1e-3,
        }
    }
}

/// First-person stepping against the pair equations and exact evolution.
pub fn first_person(p: &FirstPersonParams, o: &RunOptions) -> Result<SuiteReport> {
    if p.dim < 2 || !(p.t > 0.0 && p.dt > 0.0) {
        return Err(Error::InvalidInput("first-person needs dim >= 2, t > 0, dt > 0".into()));
    }
    let mut rep = SuiteReport::new("first-person");
    let tol = &o.tol;
    let js = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let start = DualPair::from_diagonal(&RMat::from_diagonal(&RVec::from_vec(vec![1.0, 0.0])))?;
    let next = firstperson::symmetric_first_person_step(&start, &js, 0.01)?;
    let expect = RMat::from_row_slice(2, 2, &[1.0, 0.01, -0.01, 0.0]);
    rep.check(tol, "first_person_hand_step", max_abs_diff(&next.pa, &expect).max(max_abs_diff(&next.pb, &expect.transpose())), Bound::AtMost(1e-15));

    let mut r = rng::stream(o.seed, 0);
    let j = DynamicalMatrix::new(rng::dynamical(&mut r, p.dim))?;
    let pair = DualPair::new(rng::uniform_matrix(&mut r, p.dim, p.dim, 1.0), rng::uniform_matrix(&mut r, p.dim, p.dim, 1.0), 0.0)?;
    let stepped = firstperson::first_person_step(&pair, &j, p.dt)?;
    let (da, db) = crate::densitydual::pair_rhs(&pair, &j)?;
    let step_err = max_abs_diff(&stepped.pa, &(&pair.pa + da * p.dt)).max(max_abs_diff(&stepped.pb, &(&pair.pb + db * p.dt)));
    rep.check(tol, "first_person_step_identity", step_err, Bound::AtMost(1e-15));

    let p0 = RMat::from_diagonal(&rng::distribution(&mut r, p.dim));
    let obs = DualObserver::new(&p0, j.clone())?;
    let sym = DynamicalMatrix::new(crate::linalg::symmetric_part(j.j()))?;
    let s0 = firstperson::symmetric_first_person_step(&obs.pair, sym.js(), p.dt)?;
    let flip = max_abs(&(&s0.pa - &obs.pair.pa + (&s0.pb - &obs.pair.pb)));
    rep.check(tol, "first_person_symmetric_sign_flip", flip, Bound::AtMost(0.0));
    let sym_traj = evolve_pair_with(&p0, &sym, 1.0, 200, Integrator::Rk4)?;
    let mut transposed = 0.0f64;
    for q in sym_traj.pairs.iter().step_by(20) {
        let next = firstperson::symmetric_first_person_step(q, sym.js(), p.dt)?;
        let (da, db) = (&next.pa - &q.pa, &next.pb - &q.pb);
        transposed = transposed.max(max_abs_diff(&da, &db.transpose()));
    }
    rep.check(tol, "first_person_symmetric_step_transpose", transposed, Bound::AtMost(1e-15));

    let euler = obs.run(1.0, 1000)?;
    let rk4 = evolve_pair_with(&p0, &j, 1.0, 1000, Integrator::Rk4)?;
    rep.check(tol, "first_person_euler_vs_rk4", max_abs_diff(&euler.last().pa, &rk4.last().pa), Bound::AtMost(5e-3));

    let steps = (p.t / p.dt).round() as usize;
    let traj = evolve_pair_with(&p0, &j, p.t, steps, Integrator::Rk4)?;
    let vn = firstperson::reconstruct_von_neumann(&traj, &j, 1.0)?;
    rep.check(tol, "first_person_von_neumann", vn.max_deviation, Bound::AtMost(1e-5));
    rep.check(tol, "first_person_split_equations", vn.max_split_residual, Bound::AtMost(1e-13));
    rep.check(tol, "first_person_transpose_gap", vn.max_transpose_gap, Bound::AtMost(10.0 * vn.max_deviation.max(1e-14)));
    rep.check(tol, "first_person_trace_drift", vn.max_trace_drift, Bound::AtMost(1e-9));
    let hermitian = fold_max(traj.pairs.iter().map(|q| crate::linalg::hermitian_deviation(&join_real(&q.pa))));
    rep.check(tol, "first_person_hermiticity", hermitian, Bound::AtMost(0.0));

    let mut table = Table::new("first_person", &["t", "deviation", "transpose_gap"]);
    let h = j.hamiltonian(1.0);
    let rho0 = HermitianState::new(join_real(&p0))?;
    let stride = (steps / 20).max(1);
    for pair in traj.pairs.iter().step_by(stride) {
        let exact = evolve_density_exact(&h, &rho0, pair.time, 1.0)?.rho_t;
        let dev = max_abs_c(&(join_real(&pair.pa) - exact));
        table.push(vec![pair.time.into(), dev.into(), pair.transpose_gap().into()]);
    }
    rep.tables.push(table);
    Ok(rep)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergeticsParams {
    pub nu: f64,
    pub low: f64,
    pub high: f64,
    pub h: f64,
}

impl Default for EnergeticsParams {
    fn default() -> Self {
        Self {
            nu: energetics::REFERENCE_FREQUENCY,
            low: energetics::HSP_RANGE.0,
            high: energetics::HSP_RANGE.1,
            h: energetics::PLANCK,
        }
    }
}

pub fn energetics_suite(p: &EnergeticsParams, o: &RunOptions) -> Result<SuiteReport> {
    let photon = PhotonSpec::with_h(p.nu, p.h)?;
    let est = energetics::hsp_estimate(&EnergyRange::new(p.low, p.high)?, &photon);
    let mut rep = SuiteReport::new("energetics");
    let tol = &o.tol;
    rep.check(tol, "energetics_photon_energy", est.e_photon, Bound::Within(3.85e-19, 3.95e-19));
    rep.check(tol, "energetics_hsp_mean", est.mean, Bound::Within(3.8e-17, 4.0e-17));
    rep.check(tol, "energetics_gap", est.gap, Bound::Within(1.55e-18, 1.57e-18));
    rep.check(tol, "energetics_gap_vs_quoted", (est.gap / 1.6e-18 - 1.0).abs(), Bound::AtMost(0.05));
    rep.check(tol, "energetics_ratio", est.ratio, Bound::Within(3.8, 4.2));
    rep.note("E_photon", est.e_photon);
    rep.note("E_HSP_mean", est.mean);
    rep.note("gap", est.gap);
    rep.note("ratio", est.ratio);
    rep.note("tinsley_probability", energetics::TINSLEY_PROBABILITY.0);
    rep.note("tinsley_uncertainty", energetics::TINSLEY_PROBABILITY.1);
    Ok(rep)
}

/// Suite names in the order `all` runs them.
pub const SUITES: [&str; 12] = [
    "vn-equiv",
    "kernel-converge",
    "em-kernel",
    "maxcal",
    "appendix-markov",
    "bp-chain",
    "cycle-born",
    "cycle-update",
    "bernstein",
    "clamp",
    "first-person",
    "energetics",
];

fn parse<T: for<'de> Deserialize<'de> + Default>(v: Option<&serde_json::Value>) -> Result<T> {
    match v {
        None | Some(serde_json::Value::Null) => Ok(T::default()),
        Some(v) => Ok(serde_json::from_value(v.clone())?),
    }
}

/// Run a suite by name with JSON parameters (missing fields take defaults).
pub fn run_suite(name: &str, params: Option<&serde_json::Value>, o: &RunOptions) -> Result<SuiteReport> {
    match name {
        "vn-equiv" => vn_equiv(&parse(params)?, o),
        "kernel-converge" => kernel_converge(&parse(params)?, o),
        "em-kernel" => em_kernel(&parse(params)?, o),
        "maxcal" => maxcal(&parse(params)?, o),
        "appendix-markov" => {
            if params.is_some_and(|v| v.as_object().is_some_and(|m| !m.is_empty())) {
                return Err(Error::InvalidInput("appendix-markov takes no parameters".into()));
            }
            time_symmetric_markov(o)
        }
        "bp-chain" => {
            let mut v = params.cloned().unwrap_or(serde_json::Value::Null);
            if v.is_null() {
                v = serde_json::json!({});
            }
            if let Some(m) = v.as_object_mut() {
                m.entry("instances").or_insert(200.into());
            }
            bp_chain(&serde_json::from_value(v)?, o)
        }
        "cycle-born" => cycle_born(&parse(params)?, o),
        "cycle-update" => cycle_update_suite(&parse(params)?, o),
        "bernstein" => bernstein(&parse(params)?, o),
        "clamp" => clamp(&parse(params)?, o),
        "first-person" => first_person(&parse(params)?, o),
        "energetics" => energetics_suite(&parse(params)?, o),
        other => Err(Error::InvalidInput(format!("unknown suite '{other}'"))),
    }
}
