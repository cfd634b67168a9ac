//! Belief propagation on chains with messages normalized by `sqrt(Z)`,
//! their phase decomposition, and the imaginary-time continuum limit.

use crate::caliber::{maxcal_chain_on_grid, CaliberSpec, TransitionPair};
use crate::error::{Error, Result};
use crate::factor::FactorChain;
use crate::kernelprop::{Field, Grid1D};
use crate::linalg::{RMat, RVec};

#[derive(Debug, Clone, PartialEq)]
pub struct CavityMessages {
    /// `mu_{->l} = Z_{->l} / sqrt(Z)`.
    pub mu_forward: Vec<RVec>,
    /// `mu_{l<-} = Z_{l<-} / sqrt(Z)`.
    pub mu_backward: Vec<RVec>,
    /// Standard messages, normalized at every step to unit measure.
    pub nu_forward: Vec<RVec>,
    pub nu_backward: Vec<RVec>,
    /// `ln Z_{->l} = ln nu-normalizer` accumulated along the sweep.
    pub log_scale_forward: Vec<f64>,
    pub log_scale_backward: Vec<f64>,
    pub log_partition: f64,
    pub measure: f64,
}

impl CavityMessages {
    pub fn n_sites(&self) -> usize {
        self.mu_forward.len()
    }

    pub fn partition_function(&self) -> f64 {
        self.log_partition.exp()
    }

    /// `p_l = mu_{->l} mu_{l<-}`, a density with respect to the measure.
    pub fn single(&self, site: usize) -> RVec {
        self.mu_forward[site].component_mul(&self.mu_backward[site])
    }

    /// `P_l = F_l mu_{->l} mu_{l+1<-}`.
    pub fn pairwise(&self, chain: &FactorChain, site: usize) -> RMat {
        let f = chain.factor(site);
        let (a, b) = (&self.mu_forward[site], &self.mu_backward[site + 1]);
        RMat::from_fn(f.nrows(), f.ncols(), |r, c| f[(r, c)] * a[r] * b[c])
    }

    /// Single marginal as probability masses.
    pub fn single_mass(&self, site: usize) -> RVec {
        self.single(site) * self.measure
    }

    pub fn pairwise_mass(&self, chain: &FactorChain, site: usize) -> RMat {
        self.pairwise(chain, site) * (self.measure * self.measure)
    }

    /// Marginal from the standard messages, normalized explicitly.
    pub fn single_from_nu(&self, site: usize) -> RVec {
        let p = self.nu_forward[site].component_mul(&self.nu_backward[site]);
        let s = p.sum();
        p / s
    }

    pub fn pairwise_from_nu(&self, chain: &FactorChain, site: usize) -> RMat {
        let f = chain.factor(site);
        let (a, b) = (&self.nu_forward[site], &self.nu_backward[site + 1]);
        let p = RMat::from_fn(f.nrows(), f.ncols(), |r, c| f[(r, c)] * a[r] * b[c]);
        let s = p.sum();
        p / s
    }

    /// `delta * sum_x mu_{->l}(x) mu_{l<-}(x)`, one at every site.
    pub fn normalization(&self, site: usize) -> f64 {
        self.single(site).sum() * self.measure
    }
}

fn normalize_step(v: RVec, delta: f64) -> Result<(RVec, f64)> {
    let s = v.sum() * delta;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZeroPartition);
    }
    Ok((v / s, s.ln()))
}

/// One forward and one backward sweep. Scale factors are accumulated in the
/// log domain and exponentiated once per message.
pub fn bp_sweep(chain: &FactorChain) -> Result<CavityMessages> {
    let n = chain.n_sites();
    let delta = chain.measure();
    let mut nu_f = Vec::with_capacity(n);
    let mut ls_f = Vec::with_capacity(n);
    let (v, s) = normalize_step(chain.left_or_ones(), delta)?;
    nu_f.push(v);
    ls_f.push(s);
    for l in 0..n - 1 {
        let next = chain.factor(l).tr_mul(&nu_f[l]) * delta;
        let (v, s) = normalize_step(next, delta)?;
        nu_f.push(v);
        ls_f.push(ls_f[l] + s);
    }
    let mut nu_b = vec![RVec::zeros(0); n];
    let mut ls_b = vec![0.0; n];
    let (v, s) = normalize_step(chain.right_or_ones(), delta)?;
    nu_b[n - 1] = v;
    ls_b[n - 1] = s;
    for l in (0..n - 1).rev() {
        let prev = chain.factor(l) * &nu_b[l + 1] * delta;
        let (v, s) = normalize_step(prev, delta)?;
        nu_b[l] = v;
        ls_b[l] = ls_b[l + 1] + s;
    }
    let overlap = nu_f[0].dot(&nu_b[0]) * delta;
    if !(overlap > 0.0) {
        return Err(Error::ZeroPartition);
    }
    let log_z = overlap.ln() + ls_f[0] + ls_b[0];
    let half = 0.5 * log_z;
    let mu_forward = nu_f
        .iter()
        .zip(&ls_f)
        .map(|(v, s)| v * (s - half).exp())
        .collect();
    let mu_backward = nu_b
        .iter()
        .zip(&ls_b)
        .map(|(v, s)| v * (s - half).exp())
        .collect();
    Ok(CavityMessages {
        mu_forward,
        mu_backward,
        nu_forward: nu_f,
        nu_backward: nu_b,
        log_scale_forward: ls_f,
        log_scale_backward: ls_b,
        log_partition: log_z,
        measure: delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub p: Vec<RVec>,
    /// `None` where `p = 0`.
    pub phi: Vec<Vec<Option<f64>>>,
}

impl PhaseField {
    /// `(sqrt(p) e^phi, sqrt(p) e^-phi)`, zero off the support.
    pub fn reconstruct(&self, site: usize) -> (RVec, RVec) {
        let p = &self.p[site];
        let phi = &self.phi[site];
        let fwd = RVec::from_fn(p.len(), |k, _| phi[k].map_or(0.0, |f| p[k].sqrt() * f.exp()));
        let bwd = RVec::from_fn(p.len(), |k, _| phi[k].map_or(0.0, |f| p[k].sqrt() * (-f).exp()));
        (fwd, bwd)
    }

    pub fn max_abs_phase(&self) -> f64 {
        self.phi
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, f| m.max(f.abs()))
    }
}

/// `p = mu_-> mu_<-`, `phi = ln(mu_-> / mu_<-) / 2`.
pub fn phase_decompose(messages: &CavityMessages) -> Result<PhaseField> {
    let mut p = Vec::with_capacity(messages.n_sites());
    let mut phi = Vec::with_capacity(messages.n_sites());
    for site in 0..messages.n_sites() {
        let (f, b) = (&messages.mu_forward[site], &messages.mu_backward[site]);
        let mut ph = Vec::with_capacity(f.len());
        for state in 0..f.len() {
            let (a, c) = (f[state], b[state]);
            if !(a.is_finite() && c.is_finite()) || a < 0.0 || c < 0.0 {
                return Err(Error::InvalidMessage { site, state });
            }
            let prod = a * c;
            if prod > 0.0 {
                ph.push(Some(0.5 * (a / c).ln()));
            } else {
                ph.push(None);
            }
        }
        p.push(f.component_mul(b));
        phi.push(ph);
    }
    Ok(PhaseField { p, phi })
}

/// Forward and backward transition matrices of every edge as probability
/// masses: `P+(x'|x) = F mu_{l+1<-}(x') / mu_{l<-}(x) * delta`.
pub fn transitions_from_messages(messages: &CavityMessages, chain: &FactorChain) -> Result<Vec<TransitionPair>> {
    let delta = messages.measure;
    let mut out = Vec::with_capacity(chain.n_sites() - 1);
    for l in 0..chain.n_sites() - 1 {
        for (site, state) in [(l, 0usize), (l + 1, 0)] {
            let p = messages.single(site);
            if let Some(k) = (state..p.len()).find(|&k| !(p[k] > 0.0)) {
                return Err(Error::ZeroMarginal { site, state: k });
            }
        }
        let f = chain.factor(l);
        let (bl, bn) = (&messages.mu_backward[l], &messages.mu_backward[l + 1]);
        let (fl, fn_) = (&messages.mu_forward[l], &messages.mu_forward[l + 1]);
        let forward = RMat::from_fn(f.nrows(), f.ncols(), |r, c| f[(r, c)] * bn[c] / bl[r] * delta);
        let backward = RMat::from_fn(f.nrows(), f.ncols(), |r, c| f[(r, c)] * fl[r] / fn_[c] * delta);
        out.push(TransitionPair { forward, backward });
    }
    Ok(out)
}

/// Rebuild a chain with `F_l = K_l` and boundary messages `theta_1`,
/// `theta_n` from its own marginals.
pub fn phase_free_chain(messages: &CavityMessages, chain: &FactorChain) -> Result<FactorChain> {
    let n = chain.n_sites();
    let singles: Vec<RVec> = (0..n).map(|l| messages.single_mass(l)).collect();
    let pairwise: Vec<RMat> = (0..n - 1).map(|l| messages.pairwise_mass(chain, l)).collect();
    let (_, sym) = crate::caliber::decompose_chain(&pairwise, &singles)?;
    FactorChain::new(sym.k)?.with_boundaries(
        Some(sym.theta[0].clone()),
        Some(sym.theta[n - 1].clone()),
    )
}

const D2_STENCIL: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

/// Eighth-order periodic second derivative.
pub fn second_derivative(v: &RVec, delta: f64) -> RVec {
    let n = v.len() as isize;
    RVec::from_fn(v.len(), |k, _| {
        let k = k as isize;
        let mut acc = D2_STENCIL[0] * v[k as usize];
        for (j, c) in D2_STENCIL.iter().enumerate().skip(1) {
            let j = j as isize;
            acc += c * (v[(k + j).rem_euclid(n) as usize] + v[(k - j).rem_euclid(n) as usize]);
        }
        acc / (delta * delta)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumResidual {
    pub site: usize,
    pub epsilon: f64,
    pub forward: RVec,
    pub backward: RVec,
    /// `max |residual| / max |message|`.
    pub forward_norm: f64,
    pub backward_norm: f64,
}

/// Residuals of the imaginary-time equations between sites `site - 1`,
/// `site` (forward) and `site`, `site + 1` (backward), with `hbar = T/lambda`.
pub fn continuum_residual(
    spec: &CaliberSpec,
    grid: &Grid1D,
    v: &Field,
    left: Option<RVec>,
    right: Option<RVec>,
    site: usize,
) -> Result<ContinuumResidual> {
    if site == 0 || site + 1 >= spec.n {
        return Err(Error::IndexOutOfRange {
            index: site,
            dim: spec.n,
        });
    }
    let chain = maxcal_chain_on_grid(spec, grid, v)?.chain.with_boundaries(left, right)?;
    let msg = bp_sweep(&chain)?;
    Ok(residual_from_messages(spec, grid, v, &msg, site))
}

pub fn residual_from_messages(
    spec: &CaliberSpec,
    grid: &Grid1D,
    v: &Field,
    msg: &CavityMessages,
    site: usize,
) -> ContinuumResidual {
    let hbar = spec.hbar_eff();
    let eps = spec.epsilon;
    let pot = v.sample(grid);
    let kin = hbar * hbar / (2.0 * spec.mass);
    let eval = |now: &RVec, before: &RVec, sign: f64| -> (RVec, f64) {
        let d2 = second_derivative(before, grid.delta);
        let r = RVec::from_fn(now.len(), |k, _| {
            sign * hbar * (now[k] - before[k]) / eps + kin * d2[k] - pot[k] * before[k]
        });
        let scale = before.amax().max(f64::MIN_POSITIVE);
        let norm = r.amax() / scale;
        (r, norm)
    };
    let (forward, forward_norm) = eval(&msg.mu_forward[site], &msg.mu_forward[site - 1], -1.0);
    let (backward, backward_norm) = eval(&msg.mu_backward[site], &msg.mu_backward[site + 1], -1.0);
    ContinuumResidual {
        site,
        epsilon: eps,
        forward,
        backward,
        forward_norm,
        backward_norm,
    }
}
