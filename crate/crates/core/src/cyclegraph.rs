//! Cyclic factor graphs: probability matrices from cyclic products, the
//! similarity update between sites, pure-state factors, the Bernstein
//! decomposition and clamping a cycle into a chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{FactorChain, FactorCycle, Role};
use crate::linalg::{commutator, condition_number, spectral_norm, RMat, RVec};
use crate::oracle::{enumerate_joint, JointTable};

/// Largest condition number accepted by [`cycle_update`].
pub const MAX_CONDITION: f64 = 1e8;
/// Largest `dt * |J|` accepted by [`continuum_commutator_check`].
pub const MAX_STEP_NORM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    pub p: RMat,
    /// Zero-based site.
    pub site: usize,
    pub normalized: bool,
}

impl ProbabilityMatrix {
    pub fn diagonal(&self) -> RVec {
        self.p.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.p.trace()
    }

    /// Site label as used in reports.
    pub fn site_label(&self) -> usize {
        self.site + 1
    }
}

/// `F_site F_{site+1} ... F_{site-1}` divided by its trace.
pub fn cycle_probability_matrix(cycle: &FactorCycle, site: usize) -> Result<ProbabilityMatrix> {
    let n = cycle.n_sites();
    if site >= n {
        return Err(Error::IndexOutOfRange { index: site, dim: n });
    }
    let prod = cycle.product_from(site);
    let trace = prod.trace();
    if !(trace > 0.0) {
        return Err(Error::ZeroTrace { trace });
    }
    Ok(ProbabilityMatrix {
        p: prod / trace,
        site,
        normalized: true,
    })
}

/// `F^-1 P F`.
pub fn cycle_update(p: &ProbabilityMatrix, f: &RMat) -> Result<ProbabilityMatrix> {
    crate::linalg::ensure_same_shape(&p.p, f)?;
    crate::linalg::ensure_square(f)?;
    let cond = condition_number(f);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned { cond });
    }
    let pf = &p.p * f;
    let next = f
        .clone()
        .lu()
        .solve(&pf)
        .ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    Ok(ProbabilityMatrix {
        p: next,
        site: p.site + 1,
        normalized: p.normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorCheck {
    pub dt: f64,
    pub steps: usize,
    pub max_residual: f64,
}

fn commutator_rk4(j: &RMat, p: &RMat, t: f64, steps: usize) -> RMat {
    let h = t / steps as f64;
    let mut p = p.clone();
    for _ in 0..steps {
        let k1 = commutator(j, &p);
        let k2 = commutator(j, &(&p + &k1 * (0.5 * h)));
        let k3 = commutator(j, &(&p + &k2 * (0.5 * h)));
        let k4 = commutator(j, &(&p + &k3 * h));
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    p
}

/// Iterate `P <- F^-1 P F` with `F = I - J dt` and compare each step with an
/// RK4 solution of `dP/dt = [J, P]` on a ten times finer grid.
pub fn continuum_commutator_check(j: &RMat, dt: f64, steps: usize, p0: &RMat) -> Result<CommutatorCheck> {
    crate::linalg::ensure_square(j)?;
    crate::linalg::ensure_same_shape(j, p0)?;
    let value = dt * spectral_norm(j);
    if value > MAX_STEP_NORM {
        return Err(Error::StepTooLarge {
            value,
            limit: MAX_STEP_NORM,
        });
    }
    let n = j.nrows();
    let f = RMat::identity(n, n) - j * dt;
    let mut p = ProbabilityMatrix {
        p: p0.clone(),
        site: 0,
        normalized: false,
    };
    let mut reference = p0.clone();
    let mut worst = 0.0f64;
    for _ in 0..steps {
        p = cycle_update(&p, &f)?;
        reference = commutator_rk4(j, &reference, dt, 10);
        worst = worst.max(crate::linalg::max_abs_diff(&p.p, &reference));
    }
    Ok(CommutatorCheck {
        dt,
        steps,
        max_residual: worst,
    })
}

/// `P^v` with a single unit entry at `(v, v)`.
pub fn eigenstate_matrix(v: usize, dim: usize) -> Result<ProbabilityMatrix> {
    if v >= dim {
        return Err(Error::IndexOutOfRange { index: v, dim });
    }
    let mut p = RMat::zeros(dim, dim);
    p[(v, v)] = 1.0;
    Ok(ProbabilityMatrix {
        p,
        site: 0,
        normalized: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureStateFactors {
    /// Nonzero only in row `v`: `sqrt(p) e^-phi`.
    pub f_ext: RMat,
    /// Nonzero only in column `v`: `sqrt(p) e^phi`.
    pub f_n: RMat,
}

impl PureStateFactors {
    /// `F_ext F_n`, the eigenstate at the first site.
    pub fn initial(&self) -> RMat {
        &self.f_ext * &self.f_n
    }

    /// `F_n F_ext`, with entries `sqrt(p p') e^(phi - phi')`.
    pub fn last(&self) -> RMat {
        &self.f_n * &self.f_ext
    }
}

pub fn pure_state_factors(v: usize, p_n: &RVec, phi_n: &RVec) -> Result<PureStateFactors> {
    let q = p_n.len();
    if v >= q {
        return Err(Error::IndexOutOfRange { index: v, dim: q });
    }
    if phi_n.len() != q {
        return Err(Error::ShapeMismatch {
            expected: format!("{q} phases"),
            got: phi_n.len().to_string(),
        });
    }
    if p_n.iter().any(|p| !p.is_finite() || *p < 0.0) || (p_n.sum() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution("p_n must be a distribution".into()));
    }
    if phi_n.iter().zip(p_n.iter()).any(|(f, p)| *p > 0.0 && !f.is_finite()) {
        return Err(Error::InvalidInput("phase must be finite on the support".into()));
    }
    let mut f_ext = RMat::zeros(q, q);
    let mut f_n = RMat::zeros(q, q);
    for k in 0..q {
        if p_n[k] > 0.0 {
            let s = p_n[k].sqrt();
            f_n[(k, v)] = s * phi_n[k].exp();
            f_ext[(v, k)] = s * (-phi_n[k]).exp();
        }
    }
    Ok(PureStateFactors { f_ext, f_n })
}

/// `P(x_{l+1} | x_l, x_n)` stored as `[x_l][x_n][x_{l+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub q_from: usize,
    pub q_end: usize,
    pub q_to: usize,
    pub values: Vec<f64>,
    /// Whether `(x_l, x_n)` has positive probability.
    pub support: Vec<bool>,
}

impl Conditional {
    pub fn get(&self, x: usize, xn: usize, next: usize) -> f64 {
        self.values[(x * self.q_end + xn) * self.q_to + next]
    }

    pub fn on_support(&self, x: usize, xn: usize) -> bool {
        self.support[x * self.q_end + xn]
    }

    /// Largest deviation of a supported row sum from one.
    pub fn row_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.q_from {
            for xn in 0..self.q_end {
                if self.on_support(x, xn) {
                    let s: f64 = (0..self.q_to).map(|y| self.get(x, xn, y)).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinDecomposition {
    /// `P(x_1, x_n)`.
    pub endpoint_marginal: RMat,
    /// `P+(x_{l+1} | x_l, x_n)` for `l = 1 .. n-2`.
    pub conditionals: Vec<Conditional>,
}

impl BernsteinDecomposition {
    pub fn probability(&self, config: &[usize]) -> f64 {
        let n = config.len();
        let xn = config[n - 1];
        let mut p = self.endpoint_marginal[(config[0], xn)];
        for (l, c) in self.conditionals.iter().enumerate() {
            p *= c.get(config[l], xn, config[l + 1]);
        }
        p
    }

    /// Largest `|product - joint|` over all configurations.
    pub fn reconstruction_error(&self, joint: &JointTable) -> f64 {
        joint
            .iter()
            .map(|(cfg, p)| (self.probability(&cfg) - p).abs())
            .fold(0.0, f64::max)
    }
}

pub fn bernstein_decompose(cycle: &FactorCycle) -> Result<BernsteinDecomposition> {
    let joint = enumerate_joint(cycle)?;
    bernstein_from_joint(&joint)
}

pub fn bernstein_from_joint(joint: &JointTable) -> Result<BernsteinDecomposition> {
    let n = joint.n_sites();
    if n < 3 {
        return Err(Error::InvalidInput("the decomposition needs at least three sites".into()));
    }
    let q = joint.states();
    let last = n - 1;
    let ends = joint.marginalize(&[0, last])?;
    let endpoint_marginal = RMat::from_row_slice(q[0], q[last], &ends);
    let mut conditionals = Vec::with_capacity(n - 2);
    for l in 0..n - 2 {
        let (qa, qb) = (q[l], q[l + 1]);
        let qn = q[last];
        let pair = joint.marginalize(&[l, last])?;
        let triple = if l + 1 == last {
            unreachable!()
        } else {
            joint.marginalize(&[l, last, l + 1])?
        };
        let mut values = vec![0.0; qa * qn * qb];
        let mut support = vec![false; qa * qn];
        for x in 0..qa {
            for xn in 0..qn {
                let denom = pair[x * qn + xn];
                if denom > 0.0 {
                    support[x * qn + xn] = true;
                    for y in 0..qb {
                        values[(x * qn + xn) * qb + y] = triple[(x * qn + xn) * qb + y] / denom;
                    }
                }
            }
        }
        conditionals.push(Conditional {
            q_from: qa,
            q_end: qn,
            q_to: qb,
            values,
            support,
        });
    }
    Ok(BernsteinDecomposition {
        endpoint_marginal,
        conditionals,
    })
}

/// Remove the closing factor and pin the end sites with unit-vector
/// messages.
pub fn clamp_cycle(cycle: &FactorCycle, x1: usize, xn: usize) -> Result<FactorChain> {
    let n = cycle.n_sites();
    let q = cycle.states();
    if x1 >= q[0] {
        return Err(Error::IndexOutOfRange { index: x1, dim: q[0] });
    }
    if xn >= q[n - 1] {
        return Err(Error::IndexOutOfRange {
            index: xn,
            dim: q[n - 1],
        });
    }
    let factors: Vec<RMat> = cycle.factors()[..n - 1].to_vec();
    let mut path = RMat::identity(q[0], q[0]);
    for f in &factors {
        path = &path * f;
    }
    if !(cycle.factor(n - 1)[(xn, x1)] > 0.0 && path[(x1, xn)] > 0.0) {
        return Err(Error::ZeroProbabilityClamp { x1, xn });
    }
    let mut left = RVec::zeros(q[0]);
    left[x1] = 1.0;
    let mut right = RVec::zeros(q[n - 1]);
    right[xn] = 1.0;
    FactorChain::new(factors)?.with_boundaries(Some(left), Some(right))
}

/// Conditional marginal `P(x_site | x_1, x_n)` read off the enumerated joint.
pub fn conditional_marginal(joint: &JointTable, site: usize, x1: usize, xn: usize) -> Result<RVec> {
    let n = joint.n_sites();
    let q = joint.states()[site];
    let mut out = RVec::zeros(q);
    for (cfg, p) in joint.iter() {
        if cfg[0] == x1 && cfg[n - 1] == xn {
            out[cfg[site]] += p;
        }
    }
    let total = out.sum();
    if !(total > 0.0) {
        return Err(Error::ZeroProbabilityClamp { x1, xn });
    }
    Ok(out / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Closing factor `F_sim(u_f, u_i)`.
    Simulation,
    /// Closing factor `F_dec(u_f, u_i)`.
    Ideomotor,
}

/// Role tables of a four-site experiment over `(u_i, v_i, v_f, u_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRoles {
    pub prep: RMat,
    pub ext: RMat,
    pub meas: RMat,
    pub closing: RMat,
    pub layout: Layout,
}

pub fn experiment_cycle(roles: &ExperimentRoles) -> Result<FactorCycle> {
    let closing_role = match roles.layout {
        Layout::Simulation => Role::Sim,
        Layout::Ideomotor => Role::Dec,
    };
    FactorCycle::new(vec![
        roles.prep.clone(),
        roles.ext.clone(),
        roles.meas.clone(),
        roles.closing.clone(),
    ])?
    .with_roles(vec![Role::Prep, Role::Ext, Role::Meas, closing_role])
}

/// Two-site cycle over `(v_i, v_f)` with `F_n = F_meas F_closing F_prep`.
pub fn reduce_observer(roles: &ExperimentRoles) -> Result<FactorCycle> {
    let f_n = &roles.meas * &roles.closing * &roles.prep;
    FactorCycle::new(vec![roles.ext.clone(), f_n])?.with_roles(vec![Role::Ext, Role::Plain])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionCheck {
    /// `P(v_i, v_f)` from the four-site cycle.
    pub full: RMat,
    /// The same from the reduced two-site cycle.
    pub reduced: RMat,
    pub max_error: f64,
    pub same_topology: bool,
}

/// Compare `(v_i, v_f)` marginals of both graphs, and the topology induced
/// by the two layouts.
pub fn check_observer_reduction(roles: &ExperimentRoles) -> Result<ReductionCheck> {
    let full_cycle = experiment_cycle(roles)?;
    let full = crate::oracle::pairwise_marginal(&enumerate_joint(&full_cycle)?, 1)?;
    let reduced = crate::oracle::pairwise_marginal(&enumerate_joint(&reduce_observer(roles)?)?, 0)?;
    let other = ExperimentRoles {
        layout: match roles.layout {
            Layout::Simulation => Layout::Ideomotor,
            Layout::Ideomotor => Layout::Simulation,
        },
        ..roles.clone()
    };
    let same_topology = experiment_cycle(&other)?.edges() == full_cycle.edges();
    Ok(ReductionCheck {
        max_error: crate::linalg::max_abs_diff(&full, &reduced),
        full,
        reduced,
        same_topology,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::oracle::{marginal, pairwise_marginal};
    use crate::rng;

    fn random_cycle(seed: u64, n: usize, q: usize) -> FactorCycle {
        let mut r = rng::stream(seed, 0);
        FactorCycle::new((0..n).map(|_| rng::positive_matrix(&mut r, q, q, 0.05, 1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_cycle_matrix() {
        let c = FactorCycle::new(vec![RMat::identity(2, 2); 3]).unwrap();
        let p = cycle_probability_matrix(&c, 0).unwrap();
        assert!(max_abs_diff(&p.p, &(RMat::identity(2, 2) * 0.5)) < 1e-15);
        assert_eq!(p.site_label(), 1);
    }

    #[test]
    fn uniform_cycle_matrix() {
        let c = FactorCycle::new(vec![RMat::from_element(2, 2, 1.0); 3]).unwrap();
        let p = cycle_probability_matrix(&c, 1).unwrap();
        assert!(p.p.iter().all(|x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn born_rule_matches_enumeration() {
        for (seed, n, q) in [(1, 3, 2), (2, 4, 3), (3, 6, 2), (4, 5, 4)] {
            let c = random_cycle(seed, n, q);
            let joint = enumerate_joint(&c).unwrap();
            for site in 0..n {
                let p = cycle_probability_matrix(&c, site).unwrap();
                assert!((p.diagonal() - marginal(&joint, site).unwrap()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn trivial_updates() {
        let p = cycle_probability_matrix(&random_cycle(5, 3, 2), 0).unwrap();
        let same = cycle_update(&p, &RMat::identity(2, 2)).unwrap();
        assert!(max_abs_diff(&same.p, &p.p) < 1e-15);
        let d = ProbabilityMatrix {
            p: RMat::from_diagonal(&RVec::from_vec(vec![0.3, 0.7])),
            site: 0,
            normalized: true,
        };
        let u = cycle_update(&d, &RMat::from_diagonal(&RVec::from_vec(vec![2.0, 1.0]))).unwrap();
        assert!(max_abs_diff(&u.p, &d.p) < 1e-15);
    }

    #[test]
    fn update_equals_permuted_product() {
        let mut r = rng::stream(9, 0);
        let f1 = RMat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let f2 = rng::positive_matrix(&mut r, 2, 2, 0.1, 1.0);
        let f3 = rng::positive_matrix(&mut r, 2, 2, 0.1, 1.0);
        let c = FactorCycle::new(vec![f1.clone(), f2, f3]).unwrap();
        let p1 = cycle_probability_matrix(&c, 0).unwrap();
        let p2 = cycle_update(&p1, &f1).unwrap();
        let direct = cycle_probability_matrix(&c, 1).unwrap();
        assert!(max_abs_diff(&p2.p, &direct.p) < 1e-10 * condition_number(&f1));
        assert!((p2.trace() - p1.trace()).abs() < 1e-14);
        assert_eq!(p2.site, 1);
    }

    #[test]
    fn singular_factor_is_rejected() {
        let p = eigenstate_matrix(0, 2).unwrap();
        let f = RMat::from_element(2, 2, 1.0);
        assert!(matches!(cycle_update(&p, &f), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn commutator_limit() {
        let p0 = RMat::from_diagonal(&RVec::from_vec(vec![0.5, 0.3, 0.2]));
        let zero = continuum_commutator_check(&RMat::zeros(3, 3), 0.01, 10, &p0).unwrap();
        assert_eq!(zero.max_residual, 0.0);
        let diag = RMat::from_diagonal(&RVec::from_vec(vec![1.0, -0.5, 0.2]));
        assert!(continuum_commutator_check(&diag, 0.01, 10, &p0).unwrap().max_residual < 1e-15);
        let j = rng::dynamical(&mut rng::stream(4, 0), 3);
        let dts = [0.02, 0.01, 0.005];
        let res: Vec<f64> = dts
            .iter()
            .map(|&dt| continuum_commutator_check(&j, dt, (1.0 / dt) as usize, &p0).unwrap().max_residual)
            .collect();
        let order = crate::linalg::log_log_slope(&dts, &res);
        assert!((0.9..=1.1).contains(&order), "{order}");
        assert!(matches!(
            continuum_commutator_check(&(j * 100.0), 0.01, 1, &p0),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn eigenstates() {
        for v in 0..3 {
            let e = eigenstate_matrix(v, 3).unwrap();
            assert_eq!(e.p[(v, v)], 1.0);
            assert_eq!(e.trace(), 1.0);
        }
        assert!(eigenstate_matrix(3, 3).is_err());
    }

    #[test]
    fn pure_state_structure() {
        let p = RVec::from_element(3, 1.0 / 3.0);
        let f = pure_state_factors(1, &p, &RVec::zeros(3)).unwrap();
        assert!(f.last().iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(max_abs_diff(&f.initial(), &eigenstate_matrix(1, 3).unwrap().p) < 1e-15);
        let delta = RVec::from_vec(vec![0.0, 0.0, 1.0]);
        let f = pure_state_factors(0, &delta, &RVec::from_vec(vec![0.0, 0.0, 0.4])).unwrap();
        assert!(max_abs_diff(&f.last(), &eigenstate_matrix(2, 3).unwrap().p) < 1e-15);
        let mut r = rng::stream(3, 0);
        let p = rng::distribution(&mut r, 4);
        let phi = rng::uniform_matrix(&mut r, 4, 1, 1.0).column(0).into_owned();
        let f = pure_state_factors(2, &p, &phi).unwrap();
        let last = f.last();
        for a in 0..4 {
            assert!((last[(a, a)] - p[a]).abs() < 1e-13);
            for b in 0..4 {
                let expect = (p[a] * p[b]).sqrt() * (phi[a] - phi[b]).exp();
                assert!((last[(a, b)] - expect).abs() < 1e-13);
            }
        }
        assert!(f.f_ext.row(2).iter().all(|x| *x > 0.0));
        assert_eq!(f.f_ext.row(0).sum(), 0.0);
    }

    #[test]
    fn bernstein_reconstruction() {
        let c = random_cycle(12, 5, 3);
        let joint = enumerate_joint(&c).unwrap();
        let b = bernstein_decompose(&c).unwrap();
        assert!(b.reconstruction_error(&joint) < 1e-12);
        assert!(b.conditionals.iter().all(|c| c.row_deviation() < 1e-12));
    }

    #[test]
    fn bernstein_limits() {
        let mut r = rng::stream(13, 0);
        let mut f: Vec<RMat> = (0..3).map(|_| rng::positive_matrix(&mut r, 2, 2, 0.1, 1.0)).collect();
        f.push(RMat::from_element(2, 2, 1.0));
        let cycle = FactorCycle::new(f.clone()).unwrap();
        let joint = enumerate_joint(&cycle).unwrap();
        let b = bernstein_decompose(&cycle).unwrap();
        let mut transitions = vec![];
        for l in 0..3 {
            let e = crate::caliber::markov_decompose(
                &pairwise_marginal(&joint, l).unwrap(),
                &marginal(&joint, l).unwrap(),
                &marginal(&joint, l + 1).unwrap(),
            )
            .unwrap();
            transitions.push(e.transitions.forward);
        }
        let p1 = marginal(&joint, 0).unwrap();
        for (cfg, p) in joint.iter() {
            let markov = p1[cfg[0]] * (0..3).map(|l| transitions[l][(cfg[l], cfg[l + 1])]).product::<f64>();
            assert!((b.probability(&cfg) - markov).abs() < 1e-12);
            assert!((p - markov).abs() < 1e-12);
        }
        f[3] = RMat::identity(2, 2);
        let b = bernstein_decompose(&FactorCycle::new(f).unwrap()).unwrap();
        assert_eq!(b.endpoint_marginal[(0, 1)], 0.0);
        assert_eq!(b.endpoint_marginal[(1, 0)], 0.0);
    }

    #[test]
    fn clamped_chain_reproduces_conditionals() {
        let c = random_cycle(17, 5, 3);
        let joint = enumerate_joint(&c).unwrap();
        for (x1, xn) in [(0, 0), (1, 2), (2, 1)] {
            let chain = clamp_cycle(&c, x1, xn).unwrap();
            let m = crate::cavityq::bp_sweep(&chain).unwrap();
            for site in 1..4 {
                let expect = conditional_marginal(&joint, site, x1, xn).unwrap();
                assert!((m.single(site) - expect).amax() < 1e-12);
            }
        }
        let id = FactorCycle::new(vec![RMat::identity(2, 2); 4]).unwrap();
        let m = crate::cavityq::bp_sweep(&clamp_cycle(&id, 0, 0).unwrap()).unwrap();
        assert_eq!(m.single(2)[0], 1.0);
        assert!(matches!(clamp_cycle(&id, 0, 1), Err(Error::ZeroProbabilityClamp { .. })));
        let ones = FactorCycle::new(vec![RMat::from_element(2, 2, 1.0); 4]).unwrap();
        let m = crate::cavityq::bp_sweep(&clamp_cycle(&ones, 1, 0).unwrap()).unwrap();
        assert!(m.single(1).iter().all(|p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn chain_reduction_with_flat_closing_factor() {
        let mut r = rng::stream(23, 0);
        let f: Vec<RMat> = (0..3).map(|_| rng::positive_matrix(&mut r, 3, 3, 0.1, 1.0)).collect();
        let mut cf = f.clone();
        cf.push(RMat::from_element(3, 3, 1.0));
        let cj = enumerate_joint(&FactorCycle::new(cf).unwrap()).unwrap();
        let chj = enumerate_joint(&FactorChain::new(f).unwrap()).unwrap();
        for l in 0..3 {
            assert!(max_abs_diff(&pairwise_marginal(&cj, l).unwrap(), &pairwise_marginal(&chj, l).unwrap()) < 1e-12);
        }
    }

    fn roles(seed: u64, layout: Layout) -> ExperimentRoles {
        let mut r = rng::stream(seed, 0);
        let mut m = || rng::positive_matrix(&mut r, 2, 2, 0.05, 1.0);
        ExperimentRoles {
            prep: m(),
            ext: m(),
            meas: m(),
            closing: m(),
            layout,
        }
    }

    #[test]
    fn observer_reduction() {
        for layout in [Layout::Simulation, Layout::Ideomotor] {
            let check = check_observer_reduction(&roles(31, layout)).unwrap();
            assert!(check.max_error < 1e-12);
            assert!(check.same_topology);
        }
        let flat = ExperimentRoles {
            prep: RMat::from_element(2, 2, 1.0),
            ext: RMat::from_element(2, 2, 1.0),
            meas: RMat::from_element(2, 2, 1.0),
            closing: RMat::from_element(2, 2, 1.0),
            layout: Layout::Ideomotor,
        };
        let check = check_observer_reduction(&flat).unwrap();
        assert!(check.full.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let det = ExperimentRoles {
            prep: RMat::identity(2, 2),
            ext: RMat::identity(2, 2),
            meas: RMat::identity(2, 2),
            closing: RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]),
            layout: Layout::Ideomotor,
        };
        let check = check_observer_reduction(&det).unwrap();
        assert!((check.full[(1, 1)] - 1.0).abs() < 1e-15);
    }
}
