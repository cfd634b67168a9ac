//! Brute-force enumeration of factor graphs and exact density-matrix
//! propagation. Everything else in the crate is checked against these.

use num_complex::Complex64;

use crate::densitydual::HermitianState;
use crate::error::{Error, Result};
use crate::factor::{FactorChain, FactorCycle};
use crate::linalg::{ensure_hermitian, hermitian_deviation, CMat, RMat, RVec};

/// Upper bound on the number of configurations `enumerate_joint` visits.
pub const MAX_CONFIGURATIONS: u128 = 10_000_000;

/// Anything whose joint weight can be evaluated configuration by
/// configuration.
pub trait FactorGraph {
    fn site_states(&self) -> Vec<usize>;
    fn weight(&self, config: &[usize]) -> f64;
    fn cyclic(&self) -> bool;
    /// Quadrature weight per site; the partition function carries
    /// `measure^n`.
    fn site_measure(&self) -> f64 {
        1.0
    }
}

impl FactorGraph for FactorChain {
    fn site_states(&self) -> Vec<usize> {
        self.states()
    }

    fn weight(&self, config: &[usize]) -> f64 {
        let n = config.len();
        let mut w = self.left().map_or(1.0, |v| v[config[0]]);
        for (l, f) in self.factors().iter().enumerate() {
            w *= f[(config[l], config[l + 1])];
        }
        w * self.right().map_or(1.0, |v| v[config[n - 1]])
    }

    fn cyclic(&self) -> bool {
        false
    }

    fn site_measure(&self) -> f64 {
        self.measure()
    }
}

impl FactorGraph for FactorCycle {
    fn site_states(&self) -> Vec<usize> {
        self.states()
    }

    fn weight(&self, config: &[usize]) -> f64 {
        let n = config.len();
        self.factors()
            .iter()
            .enumerate()
            .map(|(l, f)| f[(config[l], config[(l + 1) % n])])
            .product()
    }

    fn cyclic(&self) -> bool {
        true
    }
}

/// Normalized joint distribution over all configurations, stored in
/// mixed-radix order with the last site varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    states: Vec<usize>,
    probabilities: Vec<f64>,
    partition: f64,
    cyclic: bool,
}

impl JointTable {
    /// Build from unnormalized weights in mixed-radix order.
    pub fn from_weights(states: Vec<usize>, weights: Vec<f64>, cyclic: bool) -> Result<Self> {
        let count: usize = states.iter().product();
        if weights.len() != count {
            return Err(Error::ShapeMismatch {
                expected: format!("{count} weights"),
                got: weights.len().to_string(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NegativeFactor {
                context: "joint weights".into(),
            });
        }
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) {
            return Err(Error::ZeroPartition);
        }
        Ok(Self {
            states,
            probabilities: weights.into_iter().map(|w| w / z).collect(),
            partition: z,
            cyclic,
        })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_sites(&self) -> usize {
        self.states.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn partition_function(&self) -> f64 {
        self.partition
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    pub fn probability(&self, config: &[usize]) -> f64 {
        self.probabilities[self.index_of(config)]
    }

    pub fn index_of(&self, config: &[usize]) -> usize {
        config
            .iter()
            .zip(&self.states)
            .fold(0, |acc, (x, q)| acc * q + x)
    }

    /// Configurations paired with their probabilities, in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let mut config = vec![0; self.states.len()];
        let mut first = true;
        self.probabilities.iter().map(move |&p| {
            if !first {
                advance(&mut config, &self.states);
            }
            first = false;
            (config.clone(), p)
        })
    }

    /// Marginal over `sites` (in the given order), laid out mixed-radix with
    /// the last listed site fastest.
    pub fn marginalize(&self, sites: &[usize]) -> Result<Vec<f64>> {
        for &s in sites {
            if s >= self.states.len() {
                return Err(Error::IndexOutOfRange {
                    index: s,
                    dim: self.states.len(),
                });
            }
        }
        let dims: Vec<usize> = sites.iter().map(|&s| self.states[s]).collect();
        let mut out = vec![0.0; dims.iter().product()];
        for (config, p) in self.iter() {
            let idx = sites
                .iter()
                .zip(&dims)
                .fold(0, |acc, (&s, q)| acc * q + config[s]);
            out[idx] += p;
        }
        Ok(out)
    }
}

fn advance(config: &mut [usize], states: &[usize]) {
    for k in (0..config.len()).rev() {
        config[k] += 1;
        if config[k] < states[k] {
            return;
        }
        config[k] = 0;
    }
}

/// Enumerate every configuration of a chain or cycle. The partition
/// function includes the per-site measure.
pub fn enumerate_joint<G: FactorGraph + ?Sized>(graph: &G) -> Result<JointTable> {
    let states = graph.site_states();
    let count = states.iter().map(|&q| q as u128).product::<u128>();
    if count > MAX_CONFIGURATIONS {
        return Err(Error::ConfigurationOverflow {
            count,
            limit: MAX_CONFIGURATIONS,
        });
    }
    let mut weights = Vec::with_capacity(count as usize);
    let mut config = vec![0; states.len()];
    for i in 0..count {
        if i > 0 {
            advance(&mut config, &states);
        }
        weights.push(graph.weight(&config));
    }
    let mut table = JointTable::from_weights(states, weights, graph.cyclic())?;
    table.partition *= graph.site_measure().powi(table.n_sites() as i32);
    Ok(table)
}

pub fn marginal(joint: &JointTable, site: usize) -> Result<RVec> {
    Ok(RVec::from_vec(joint.marginalize(&[site])?))
}

/// Marginal of `(x_site, x_{site+1})`; on cycles the last site pairs with the
/// first.
pub fn pairwise_marginal(joint: &JointTable, site: usize) -> Result<RMat> {
    let n = joint.n_sites();
    let last = if joint.is_cyclic() { n } else { n - 1 };
    if site >= last {
        return Err(Error::IndexOutOfRange {
            index: site,
            dim: last,
        });
    }
    let next = (site + 1) % n;
    let data = joint.marginalize(&[site, next])?;
    Ok(RMat::from_row_slice(
        joint.states()[site],
        joint.states()[next],
        &data,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedDensity {
    pub rho_t: CMat,
    pub time: f64,
}

/// `U rho0 U^dagger` with `U = exp(-iHt/hbar)` from the eigendecomposition
/// of `H`.
pub fn evolve_density_exact(
    h: &CMat,
    rho0: &HermitianState,
    t: f64,
    hbar: f64,
) -> Result<PropagatedDensity> {
    ensure_hermitian(h, 1e-10)?;
    if h.nrows() != rho0.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0}", rho0.dim()),
            got: format!("{}x{}", h.nrows(), h.ncols()),
        });
    }
    let herm = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMat::from_diagonal(
        &eig.eigenvalues
            .map(|e| Complex64::from_polar(1.0, -e * t / hbar)),
    );
    let u = v * phases * v.adjoint();
    let rho = &u * rho0.rho() * u.adjoint();
    let rho_t = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    debug_assert!(hermitian_deviation(&rho_t) == 0.0);
    Ok(PropagatedDensity { rho_t, time: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ones(q: usize) -> RMat {
        RMat::from_element(q, q, 1.0)
    }

    #[test]
    fn uniform_chain_gives_uniform_table() {
        let chain = FactorChain::new(vec![ones(2), ones(2)]).unwrap();
        let t = enumerate_joint(&chain).unwrap();
        assert!(t.probabilities().iter().all(|p| (p - 0.125).abs() < 1e-15));
        assert_eq!(t.partition_function(), 8.0);
    }

    #[test]
    fn identity_cycle_forces_agreement() {
        let id = RMat::identity(2, 2);
        let cycle = FactorCycle::new(vec![id.clone(), id.clone(), id]).unwrap();
        let t = enumerate_joint(&cycle).unwrap();
        assert_eq!(t.probability(&[0, 0, 0]), 0.5);
        assert_eq!(t.probability(&[1, 1, 1]), 0.5);
        assert_eq!(t.probabilities().iter().filter(|p| **p > 0.0).count(), 2);
    }

    #[test]
    fn random_chain_matches_nested_loops() {
        let mut r = rng::stream(1, 0);
        let fs: Vec<RMat> = (0..3).map(|_| rng::positive_matrix(&mut r, 2, 2, 0.0, 1.0)).collect();
        let chain = FactorChain::new(fs.clone()).unwrap();
        let t = enumerate_joint(&chain).unwrap();
        let mut z = 0.0;
        let mut w = [[[[0.0; 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        w[a][b][c][d] = fs[0][(a, b)] * fs[1][(b, c)] * fs[2][(c, d)];
                        z += w[a][b][c][d];
                    }
                }
            }
        }
        for (cfg, p) in t.iter() {
            let expect = w[cfg[0]][cfg[1]][cfg[2]][cfg[3]] / z;
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn marginals_of_simple_tables() {
        let uniform = JointTable::from_weights(vec![2, 2, 2], vec![1.0; 8], false).unwrap();
        assert_eq!(marginal(&uniform, 0).unwrap().as_slice(), &[0.5, 0.5]);
        let pw = pairwise_marginal(&uniform, 1).unwrap();
        assert!(pw.iter().all(|x| (*x - 0.25).abs() < 1e-15));

        let mut w = vec![0.0; 8];
        w[7] = 1.0;
        let delta = JointTable::from_weights(vec![2, 2, 2], w, false).unwrap();
        assert_eq!(marginal(&delta, 2).unwrap().as_slice(), &[0.0, 1.0]);
        let pw = pairwise_marginal(&delta, 0).unwrap();
        assert_eq!(pw[(1, 1)], 1.0);
        assert_eq!(pw.sum(), 1.0);
    }

    #[test]
    fn pairwise_wraps_only_on_cycles() {
        let chain = FactorChain::new(vec![ones(2), ones(2)]).unwrap();
        let t = enumerate_joint(&chain).unwrap();
        assert!(pairwise_marginal(&t, 2).is_err());
        let cycle = FactorCycle::new(vec![ones(2), ones(2), ones(2)]).unwrap();
        let t = enumerate_joint(&cycle).unwrap();
        assert!(pairwise_marginal(&t, 2).is_ok());
    }

    #[test]
    fn overflow_is_reported() {
        let fs = vec![ones(10); 7];
        let chain = FactorChain::new(fs).unwrap();
        assert!(matches!(
            enumerate_joint(&chain),
            Err(Error::ConfigurationOverflow { .. })
        ));
    }

    #[test]
    fn zero_product_is_reported() {
        let z = RMat::zeros(2, 2);
        let chain = FactorChain::new(vec![z]).unwrap();
        assert!(matches!(enumerate_joint(&chain), Err(Error::ZeroPartition)));
    }

    #[test]
    fn zero_hamiltonian_leaves_state() {
        let rho0 = HermitianState::diagonal(&[0.7, 0.3]).unwrap();
        let out = evolve_density_exact(&CMat::zeros(2, 2), &rho0, 3.0, 1.0).unwrap();
        assert!(crate::linalg::max_abs_diff_c(&out.rho_t, rho0.rho()) < 1e-15);
    }

    #[test]
    fn two_level_rabi_oscillation() {
        // H = g sigma_x: populations cos^2(gt), sin^2(gt).
        let g = 0.7;
        let c = |x| Complex64::new(x, 0.0);
        let h = CMat::from_row_slice(2, 2, &[c(0.0), c(g), c(g), c(0.0)]);
        let rho0 = HermitianState::diagonal(&[1.0, 0.0]).unwrap();
        for &t in &[0.3, 1.0, 2.5] {
            let out = evolve_density_exact(&h, &rho0, t, 1.0).unwrap();
            let p0 = (g * t).cos().powi(2);
            assert!((out.rho_t[(0, 0)].re - p0).abs() < 1e-13);
            assert!((out.rho_t[(1, 1)].re - (1.0 - p0)).abs() < 1e-13);
            assert!((out.rho_t[(0, 1)].im - (g * t).sin() * (g * t).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn non_hermitian_generator_is_rejected() {
        let h = CMat::from_row_slice(2, 2, &[
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        let rho0 = HermitianState::diagonal(&[1.0, 0.0]).unwrap();
        assert!(matches!(
            evolve_density_exact(&h, &rho0, 1.0, 1.0),
            Err(Error::NotHermitian { .. })
        ));
    }
}
