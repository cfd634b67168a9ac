//! Maximum-caliber path distributions as factor chains, the three
//! factorizations of a pairwise marginal, and drift/diffusion analysis of
//! time-symmetric Markov processes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorChain;
use crate::kernelprop::{Field, Grid1D, KernelSpec};
use crate::linalg::{RMat, RVec};
use crate::oracle::JointTable;

/// Largest `|lambda eps H / T|` accepted before exponentiation.
pub const MAX_EXPONENT: f64 = 700.0;
const MARGINAL_TOL: f64 = 1e-10;
const CHAIN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaliberSpec {
    pub lambda: f64,
    pub total_time: f64,
    pub epsilon: f64,
    /// Number of path points.
    pub n: usize,
    #[serde(default = "unit_mass")]
    pub mass: f64,
}

fn unit_mass() -> f64 {
    1.0
}

impl CaliberSpec {
    pub fn new(lambda: f64, epsilon: f64, n: usize, mass: f64) -> Result<Self> {
        let spec = Self {
            lambda,
            total_time: n as f64 * epsilon,
            epsilon,
            n,
            mass,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Choose `lambda` so that `T / lambda = hbar`.
    pub fn from_hbar(hbar: f64, epsilon: f64, n: usize, mass: f64) -> Result<Self> {
        Self::new(n as f64 * epsilon / hbar, epsilon, n, mass)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
            ("mass", self.mass),
            ("total_time", self.total_time),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n < 2 {
            return Err(Error::InvalidInput("a path needs at least two points".into()));
        }
        let t = self.n as f64 * self.epsilon;
        if (self.total_time - t).abs() > 1e-12 * t {
            return Err(Error::InvalidInput(format!(
                "total time {} differs from n * epsilon = {t}",
                self.total_time
            )));
        }
        Ok(())
    }

    /// Effective Planck constant `T / lambda`.
    pub fn hbar_eff(&self) -> f64 {
        self.total_time / self.lambda
    }

    /// `|A| = sqrt(2 pi T eps / (m lambda))`.
    pub fn normalization(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.total_time * self.epsilon / (self.mass * self.lambda))
            .sqrt()
    }

    /// Kernel parameters with `hbar = T / lambda`.
    pub fn kernel_spec(&self, v: Field) -> Result<KernelSpec> {
        Ok(KernelSpec::new(self.mass, self.epsilon, self.hbar_eff())?.with_potential(v))
    }
}

#[derive(Debug, Clone)]
pub struct MaxCalChain {
    pub chain: FactorChain,
    /// `|A|`, the constant every factor was divided by.
    pub normalization: f64,
}

/// Factors `exp(-(lambda/T) H(x, x') eps) / |A|`, identical on every edge.
pub fn maxcal_chain(spec: &CaliberSpec, energy: &RMat) -> Result<MaxCalChain> {
    spec.validate()?;
    let scale = spec.lambda * spec.epsilon / spec.total_time;
    let mut worst = 0.0f64;
    for h in energy.iter() {
        if !h.is_finite() {
            return Err(Error::InvalidInput("pair energy must be finite".into()));
        }
        worst = worst.max((scale * h).abs());
    }
    if worst > MAX_EXPONENT {
        return Err(Error::ExponentOverflow { arg: worst });
    }
    let norm = spec.normalization();
    let f = energy.map(|h| (-scale * h).exp() / norm);
    Ok(MaxCalChain {
        chain: FactorChain::new(vec![f; spec.n - 1])?,
        normalization: norm,
    })
}

/// `H(x, x') = m (x - x')^2 / (2 eps^2) + V(x)` on a periodic grid.
pub fn classical_energy(spec: &CaliberSpec, grid: &Grid1D, v: &Field) -> Result<RMat> {
    let k = spec.kernel_spec(v.clone())?;
    v.check(grid)?;
    Ok(RMat::from_fn(grid.n, grid.n, |i, j| k.classical_h(grid, i, j)))
}

/// Max-caliber chain over grid states with the grid spacing as measure.
pub fn maxcal_chain_on_grid(spec: &CaliberSpec, grid: &Grid1D, v: &Field) -> Result<MaxCalChain> {
    spec.kernel_spec(v.clone())?.validate(grid)?;
    let energy = classical_energy(spec, grid, v)?;
    let mc = maxcal_chain(spec, &energy)?;
    Ok(MaxCalChain {
        chain: mc.chain.with_measure(grid.delta)?,
        normalization: mc.normalization,
    })
}

/// `-(lambda / T) sum_l H(x_l, x_{l+1}) eps` for one path.
pub fn path_log_weight(spec: &CaliberSpec, energy: &RMat, path: &[usize]) -> f64 {
    let scale = spec.lambda * spec.epsilon / spec.total_time;
    -scale
        * path
            .windows(2)
            .map(|w| energy[(w[0], w[1])])
            .sum::<f64>()
}

/// Forward and backward transition matrices of one edge:
/// `forward[(x, x')] = P+(x' | x)` (rows sum to one) and
/// `backward[(x, x')] = P-(x | x')` (columns sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub forward: RMat,
    pub backward: RMat,
}

impl TransitionPair {
    /// `max |P+(x'|x) - P-(x|x')|`; zero exactly when `K` reduces to a
    /// transition probability.
    pub fn asymmetry(&self) -> f64 {
        crate::linalg::max_abs_diff(&self.forward, &self.backward)
    }
}

/// `theta_l = sqrt(p_l)` per site and `K_l` per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDecomposition {
    pub theta: Vec<RVec>,
    pub k: Vec<RMat>,
}

impl SymmetricDecomposition {
    /// `theta_l(x) K_l(x, x') theta_{l+1}(x')`.
    pub fn reconstruct(&self, edge: usize) -> RMat {
        let (a, b) = (&self.theta[edge], &self.theta[edge + 1]);
        RMat::from_fn(a.len(), b.len(), |r, c| a[r] * self.k[edge][(r, c)] * b[c])
    }
}

#[derive(Debug, Clone)]
pub struct EdgeDecomposition {
    pub transitions: TransitionPair,
    pub theta_l: RVec,
    pub theta_next: RVec,
    pub k: RMat,
    /// States of `x_l` with zero marginal.
    pub excluded_l: Vec<usize>,
    /// States of `x_{l+1}` with zero marginal.
    pub excluded_next: Vec<usize>,
}

impl EdgeDecomposition {
    pub fn from_forward(&self, p_l: &RVec) -> RMat {
        RMat::from_fn(self.k.nrows(), self.k.ncols(), |r, c| {
            self.transitions.forward[(r, c)] * p_l[r]
        })
    }

    pub fn from_backward(&self, p_next: &RVec) -> RMat {
        RMat::from_fn(self.k.nrows(), self.k.ncols(), |r, c| {
            self.transitions.backward[(r, c)] * p_next[c]
        })
    }

    pub fn from_symmetric(&self) -> RMat {
        RMat::from_fn(self.k.nrows(), self.k.ncols(), |r, c| {
            self.theta_l[r] * self.k[(r, c)] * self.theta_next[c]
        })
    }
}

fn check_distribution(p: &RVec, what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidDistribution(format!("{what} has negative entries")));
    }
    Ok(())
}

fn check_pairwise(pairwise: &RMat, p_l: &RVec, p_next: &RVec, tol: f64, context: &str) -> Result<()> {
    if pairwise.nrows() != p_l.len() || pairwise.ncols() != p_next.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", p_l.len(), p_next.len()),
            got: format!("{}x{}", pairwise.nrows(), pairwise.ncols()),
        });
    }
    if !crate::linalg::is_nonnegative(pairwise) {
        return Err(Error::NegativeFactor {
            context: context.to_string(),
        });
    }
    check_distribution(p_l, "row marginal")?;
    check_distribution(p_next, "column marginal")?;
    let rows = pairwise.column_sum();
    let cols = pairwise.row_sum().transpose();
    let mismatch = (rows - p_l).amax().max((cols - p_next).amax());
    if mismatch > tol {
        return Err(Error::InconsistentMarginals {
            mismatch,
            context: context.to_string(),
        });
    }
    Ok(())
}

/// The three factorizations of a pairwise marginal, restricted to the
/// support of the single marginals.
pub fn markov_decompose(pairwise: &RMat, p_l: &RVec, p_next: &RVec) -> Result<EdgeDecomposition> {
    check_pairwise(pairwise, p_l, p_next, MARGINAL_TOL, "pairwise marginal")?;
    let theta_l = p_l.map(f64::sqrt);
    let theta_next = p_next.map(f64::sqrt);
    let (r, c) = pairwise.shape();
    let mut forward = RMat::zeros(r, c);
    let mut backward = RMat::zeros(r, c);
    let mut k = RMat::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let v = pairwise[(i, j)];
            if p_l[i] > 0.0 {
                forward[(i, j)] = v / p_l[i];
            }
            if p_next[j] > 0.0 {
                backward[(i, j)] = v / p_next[j];
            }
            if p_l[i] > 0.0 && p_next[j] > 0.0 {
                k[(i, j)] = v / (theta_l[i] * theta_next[j]);
            }
        }
    }
    Ok(EdgeDecomposition {
        transitions: TransitionPair { forward, backward },
        theta_l,
        theta_next,
        k,
        excluded_l: (0..r).filter(|&i| p_l[i] == 0.0).collect(),
        excluded_next: (0..c).filter(|&j| p_next[j] == 0.0).collect(),
    })
}

/// Per-edge decompositions along a chain, collected into the symmetric
/// `(theta, K)` form.
pub fn decompose_chain(pairwise: &[RMat], singles: &[RVec]) -> Result<(Vec<TransitionPair>, SymmetricDecomposition)> {
    if singles.len() != pairwise.len() + 1 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} single marginals", pairwise.len() + 1),
            got: singles.len().to_string(),
        });
    }
    let mut transitions = Vec::with_capacity(pairwise.len());
    let mut k = Vec::with_capacity(pairwise.len());
    for (l, pw) in pairwise.iter().enumerate() {
        let edge = markov_decompose(pw, &singles[l], &singles[l + 1])?;
        transitions.push(edge.transitions);
        k.push(edge.k);
    }
    let theta = singles.iter().map(|p| p.map(f64::sqrt)).collect();
    Ok((transitions, SymmetricDecomposition { theta, k }))
}

/// Row sums of a kernel; all ones exactly when it is a transition matrix.
pub fn kernel_row_sums(k: &RMat) -> RVec {
    k.column_sum()
}

/// `prod_l P_l(x_l, x_{l+1}) / prod_{interior} p_l(x_l)`.
pub fn chain_joint_from_marginals(pairwise: &[RMat], singles: &[RVec]) -> Result<JointTable> {
    if pairwise.is_empty() || singles.len() != pairwise.len() + 1 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} single marginals", pairwise.len() + 1),
            got: singles.len().to_string(),
        });
    }
    for (l, pw) in pairwise.iter().enumerate() {
        check_pairwise(pw, &singles[l], &singles[l + 1], CHAIN_TOL, &format!("edge {l}"))?;
    }
    let states: Vec<usize> = singles.iter().map(|p| p.len()).collect();
    let count = states.iter().map(|&q| q as u128).product::<u128>();
    if count > crate::oracle::MAX_CONFIGURATIONS {
        return Err(Error::ConfigurationOverflow {
            count,
            limit: crate::oracle::MAX_CONFIGURATIONS,
        });
    }
    let n = states.len();
    let mut weights = Vec::with_capacity(count as usize);
    let mut config = vec![0usize; n];
    for idx in 0..count {
        if idx > 0 {
            for k in (0..n).rev() {
                config[k] += 1;
                if config[k] < states[k] {
                    break;
                }
                config[k] = 0;
            }
        }
        let mut w = 1.0;
        for l in 0..n - 1 {
            w *= pairwise[l][(config[l], config[l + 1])];
        }
        for l in 1..n - 1 {
            let p = singles[l][config[l]];
            w = if p > 0.0 { w / p } else { 0.0 };
        }
        weights.push(w);
    }
    JointTable::from_weights(states, weights, false)
}

/// Trapezoid rule on `[a, b]`, doubling the panel count until successive
/// estimates agree to `1e-14` relative.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut n = 64usize;
    let mut h = (b - a) / n as f64;
    let mut sum = 0.5 * (f(a) + f(b)) + (1..n).map(|k| f(a + k as f64 * h)).sum::<f64>();
    let mut est = sum * h;
    for _ in 0..14 {
        let mids: f64 = (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum();
        sum += mids;
        n *= 2;
        h *= 0.5;
        let next = sum * h;
        if (next - est).abs() <= 1e-14 * next.abs().max(1e-300) {
            return next;
        }
        est = next;
    }
    est
}

/// Tail-mass threshold for the quadrature window.
pub const TAIL_GUARD: f64 = 1e-8;
/// Quadrature half-width in standard deviations.
pub const WINDOW_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriftDiffusion {
    pub x: Vec<f64>,
    pub b_plus: Vec<f64>,
    pub d_plus: Vec<f64>,
    pub b_minus: Option<Vec<f64>>,
    pub c_plus: Option<Vec<f64>>,
    pub c_minus: Option<Vec<f64>>,
}

/// `b+(x) = (1/eps) int xi P(x + xi | x) dxi` and
/// `D+(x) = (1/eps) int xi^2 P(x + xi | x) dxi` on `|xi| <= window`.
pub fn estimate_drift_diffusion(
    density: impl Fn(f64, f64) -> f64,
    xs: &[f64],
    epsilon: f64,
    window: f64,
) -> Result<DriftDiffusion> {
    let mut out = DriftDiffusion {
        x: xs.to_vec(),
        ..Default::default()
    };
    for &x in xs {
        let mass = integrate(|xi| density(x + xi, x), -window, window);
        let tail = (1.0 - mass).abs();
        if tail > TAIL_GUARD {
            return Err(Error::WindowTooNarrow { tail });
        }
        let m1 = integrate(|xi| xi * density(x + xi, x), -window, window);
        let m2 = integrate(|xi| xi * xi * density(x + xi, x), -window, window);
        out.b_plus.push(m1 / epsilon);
        out.d_plus.push(m2 / epsilon);
    }
    Ok(out)
}

/// `(1/eps) int (x - x') P(x' | x) dx'` for a backward transition density.
pub fn backward_drift(
    density: impl Fn(f64, f64) -> f64,
    xs: &[f64],
    epsilon: f64,
    window: f64,
) -> Result<Vec<f64>> {
    let fwd = estimate_drift_diffusion(density, xs, epsilon, window)?;
    Ok(fwd.b_plus.iter().map(|b| -b).collect())
}

/// Amplitude `theta_t(x)` with its derivatives.
pub trait ThetaField {
    fn value(&self, t: f64, x: f64) -> f64;
    fn dt(&self, t: f64, x: f64) -> f64;
    fn dx(&self, t: f64, x: f64) -> f64;
    fn dxx(&self, t: f64, x: f64) -> f64;
}

/// Stationary `exp(-x^2 / (4 s))`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianTheta {
    pub s: f64,
}

impl ThetaField for GaussianTheta {
    fn value(&self, _t: f64, x: f64) -> f64 {
        (-x * x / (4.0 * self.s)).exp()
    }
    fn dt(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn dx(&self, t: f64, x: f64) -> f64 {
        -x / (2.0 * self.s) * self.value(t, x)
    }
    fn dxx(&self, t: f64, x: f64) -> f64 {
        (x * x / (4.0 * self.s * self.s) - 1.0 / (2.0 * self.s)) * self.value(t, x)
    }
}

/// Constant amplitude.
#[derive(Debug, Clone, Copy)]
pub struct FlatTheta;

impl ThetaField for FlatTheta {
    fn value(&self, _t: f64, _x: f64) -> f64 {
        1.0
    }
    fn dt(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn dx(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn dxx(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport {
    pub x: Vec<f64>,
    /// `(1 - int K(x, x') dx) / eps`.
    pub defect: Vec<f64>,
    /// `V_t(x') / D`.
    pub expected: Vec<f64>,
}

impl DefectReport {
    pub fn max_error(&self) -> f64 {
        self.defect
            .iter()
            .zip(&self.expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `V_t(x) / D = theta_dot / theta + (D / 2) theta'' / theta`.
pub fn potential_over_d<T: ThetaField + ?Sized>(theta: &T, t: f64, x: f64, d: f64) -> Result<f64> {
    let v = theta.value(t, x);
    if !(v.abs() > 0.0) {
        return Err(Error::VanishingAmplitude { x });
    }
    Ok(theta.dt(t, x) / v + 0.5 * d * theta.dxx(t, x) / v)
}

/// Integrate `K(x, x') = P+(x' | x) theta_t(x) / theta_{t+eps}(x')` over `x`
/// with Gaussian forward transitions of drift `b_plus` and diffusion `D`,
/// and compare `(1 - int K) / eps` with `V_t / D`.
pub fn kernel_integral_defect<T: ThetaField + ?Sized>(
    theta: &T,
    t: f64,
    d: f64,
    b_plus: impl Fn(f64) -> f64,
    epsilon: f64,
    xs: &[f64],
) -> Result<DefectReport> {
    let sigma = (d * epsilon).sqrt();
    let window = WINDOW_SIGMAS * sigma;
    let norm = (2.0 * std::f64::consts::PI * d * epsilon).sqrt();
    let mut report = DefectReport {
        x: xs.to_vec(),
        defect: Vec::with_capacity(xs.len()),
        expected: Vec::with_capacity(xs.len()),
    };
    for &xp in xs {
        let denom = theta.value(t + epsilon, xp);
        if !(denom.abs() > 0.0) {
            return Err(Error::VanishingAmplitude { x: xp });
        }
        let kernel = |x: f64| {
            let mean = x + b_plus(x) * epsilon;
            let p = (-(xp - mean).powi(2) / (2.0 * d * epsilon)).exp() / norm;
            p * theta.value(t, x) / denom
        };
        let edge = kernel(xp - window).abs().max(kernel(xp + window).abs());
        if edge > TAIL_GUARD * kernel(xp).abs() {
            return Err(Error::WindowTooNarrow { tail: edge });
        }
        let integral = integrate(kernel, xp - window, xp + window);
        report.defect.push((1.0 - integral) / epsilon);
        report.expected.push(potential_over_d(theta, t, xp, d)?);
    }
    Ok(report)
}

/// Transition matrices conditioned on the present state:
/// `forward[(x, x'')] = P+(x'' | x)`, `backward[(x, x')] = P-(x' | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTransitions {
    pub forward: RMat,
    pub backward: RMat,
}

fn check_row_stochastic(m: &RMat, what: &str) -> Result<()> {
    if !crate::linalg::is_nonnegative(m) {
        return Err(Error::NegativeFactor {
            context: what.to_string(),
        });
    }
    let dev = m.column_sum().map(|s| (s - 1.0).abs()).max();
    if dev > MARGINAL_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} rows deviate from 1 by {dev:e}"
        )));
    }
    Ok(())
}

/// `P+ = (Q+ + Q-) / 2`, `P- = P+`; both conditioned on the present state.
pub fn symmetrize_process(q_plus: &RMat, q_minus: &RMat, q: &RVec) -> Result<SymmetricTransitions> {
    crate::linalg::ensure_square(q_plus)?;
    crate::linalg::ensure_same_shape(q_plus, q_minus)?;
    if q.len() != q_plus.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("marginal of length {}", q_plus.nrows()),
            got: q.len().to_string(),
        });
    }
    check_distribution(q, "marginal")?;
    if (q.sum() - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::InvalidDistribution("marginal does not sum to 1".into()));
    }
    check_row_stochastic(q_plus, "Q+")?;
    check_row_stochastic(q_minus, "Q-")?;
    let forward = (q_plus + q_minus) * 0.5;
    Ok(SymmetricTransitions {
        backward: forward.clone(),
        forward,
    })
}

/// Gaussian process with forward transitions `N(x - gamma x eps, D eps)`
/// observed at a time where the marginal is `q_t = N(0, v)`. The backward
/// transitions follow from Bayes' rule with `q_{t-eps}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianProcess {
    pub gamma: f64,
    pub d: f64,
    pub v: f64,
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

impl GaussianProcess {
    pub fn new(gamma: f64, d: f64, v: f64) -> Result<Self> {
        if !(d > 0.0 && v > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput("diffusion and variance must be positive".into()));
        }
        Ok(Self { gamma, d, v })
    }

    /// Variance of `q_{t-eps}`.
    pub fn past_variance(&self, epsilon: f64) -> Result<f64> {
        let a = 1.0 - self.gamma * epsilon;
        let vm = (self.v - self.d * epsilon) / (a * a);
        if !(vm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon {epsilon} too large for variance {}",
                self.v
            )));
        }
        Ok(vm)
    }

    pub fn q_plus(&self, epsilon: f64) -> impl Fn(f64, f64) -> f64 + '_ {
        let (g, d) = (self.gamma, self.d);
        move |xn, x| normal_pdf(xn, x - g * x * epsilon, d * epsilon)
    }

    /// `Q-(x' | x)` for the past state `x'` given the present `x`.
    pub fn q_minus(&self, epsilon: f64) -> Result<impl Fn(f64, f64) -> f64 + '_> {
        let vm = self.past_variance(epsilon)?;
        let a = 1.0 - self.gamma * epsilon;
        let gain = a * vm / self.v;
        let var = vm * self.d * epsilon / self.v;
        Ok(move |xp: f64, x: f64| normal_pdf(xp, gain * x, var))
    }

    /// Limit forward drift `-gamma x`.
    pub fn c_plus_limit(&self, x: f64) -> f64 {
        -self.gamma * x
    }

    /// Limit backward drift `x (D / v - gamma)`.
    pub fn c_minus_limit(&self, x: f64) -> f64 {
        x * (self.d / self.v - self.gamma)
    }

    /// `D theta' / theta` with `theta = sqrt(q_t)`.
    pub fn osmotic_drift(&self, x: f64) -> f64 {
        -self.d * x / (2.0 * self.v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizationReport {
    pub epsilon: f64,
    pub drift: DriftDiffusion,
    /// `max |b+ - (c+ - c-)/2|` with limit drifts.
    pub drift_residual: f64,
    /// `max |b+ - D theta'/theta|`.
    pub osmotic_residual: f64,
    /// `max |b+ - (c+ - c-)/2|` with the same-epsilon quadrature drifts.
    pub finite_identity_residual: f64,
}

/// Symmetrize a Gaussian process in continuous space and measure the drift
/// identities by quadrature at the sample points `xs`.
pub fn symmetrize_gaussian(process: &GaussianProcess, epsilon: f64, xs: &[f64]) -> Result<SymmetrizationReport> {
    let qp = process.q_plus(epsilon);
    let qm = process.q_minus(epsilon)?;
    let p_plus = |xn: f64, x: f64| 0.5 * (qp(xn, x) + qm(xn, x));
    let sigma = (process.d * epsilon).sqrt();
    let drift_scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        * (process.gamma.abs() + process.d / process.v)
        * epsilon;
    let window = WINDOW_SIGMAS * sigma + 2.0 * drift_scale;
    let mut drift = estimate_drift_diffusion(p_plus, xs, epsilon, window)?;
    let c_plus = estimate_drift_diffusion(&qp, xs, epsilon, window)?.b_plus;
    let c_minus = backward_drift(&qm, xs, epsilon, window)?;
    let mut drift_residual = 0.0f64;
    let mut osmotic_residual = 0.0f64;
    let mut finite = 0.0f64;
    for (k, &x) in xs.iter().enumerate() {
        let b = drift.b_plus[k];
        let limit = 0.5 * (process.c_plus_limit(x) - process.c_minus_limit(x));
        drift_residual = drift_residual.max((b - limit).abs());
        osmotic_residual = osmotic_residual.max((b - process.osmotic_drift(x)).abs());
        finite = finite.max((b - 0.5 * (c_plus[k] - c_minus[k])).abs());
    }
    drift.b_minus = Some(drift.b_plus.iter().map(|b| -b).collect());
    drift.c_plus = Some(c_plus);
    drift.c_minus = Some(c_minus);
    Ok(SymmetrizationReport {
        epsilon,
        drift,
        drift_residual,
        osmotic_residual,
        finite_identity_residual: finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn spec(lambda: f64, eps: f64, n: usize) -> CaliberSpec {
        CaliberSpec::new(lambda, eps, n, 1.0).unwrap()
    }

    #[test]
    fn zero_energy_gives_constant_factors() {
        let s = spec(2.0, 0.1, 4);
        let mc = maxcal_chain(&s, &RMat::zeros(3, 3)).unwrap();
        assert_eq!(mc.chain.factors().len(), 3);
        for f in mc.chain.factors() {
            assert!(f.iter().all(|x| (x - 1.0 / mc.normalization).abs() < 1e-15));
        }
    }

    #[test]
    fn two_state_factor() {
        // lambda eps / T = 1 needs lambda = n.
        let s = spec(3.0, 0.5, 3);
        let h = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mc = maxcal_chain(&s, &h).unwrap();
        let f = mc.chain.factor(0) * mc.normalization;
        let e = (-1.0f64).exp();
        assert!(max_abs_diff(&f, &RMat::from_row_slice(2, 2, &[1.0, e, e, 1.0])) < 1e-15);
    }

    #[test]
    fn extreme_exponent_is_rejected() {
        let s = spec(1.0, 1.0, 2);
        let h = RMat::from_element(2, 2, 2000.0);
        assert!(matches!(maxcal_chain(&s, &h), Err(Error::ExponentOverflow { .. })));
    }

    #[test]
    fn kinetic_factor_is_the_gaussian_kernel() {
        let s = CaliberSpec::from_hbar(0.7, 0.01, 5, 1.3).unwrap();
        let grid = Grid1D::centered(0.02, 64).unwrap();
        let mc = maxcal_chain_on_grid(&s, &grid, &Field::Zero).unwrap();
        let k = crate::kernelprop::gaussian_kernel(&s.kernel_spec(Field::Zero).unwrap(), &grid).unwrap();
        assert!((s.hbar_eff() - 0.7).abs() < 1e-15);
        assert!(max_abs_diff(mc.chain.factor(0), &k) <= 1e-15 * crate::linalg::max_abs(&k));
    }

    #[test]
    fn uniform_independent_edge() {
        let pw = RMat::from_element(2, 2, 0.25);
        let p = RVec::from_element(2, 0.5);
        let e = markov_decompose(&pw, &p, &p).unwrap();
        assert!(e.theta_l.iter().all(|t| (t - 0.5f64.sqrt()).abs() < 1e-16));
        assert!(e.k.iter().all(|k| (k - 0.5).abs() < 1e-15));
        assert!(e.transitions.forward.iter().all(|k| (k - 0.5).abs() < 1e-15));
    }

    #[test]
    fn permutation_edge() {
        let perm = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = RVec::from_element(2, 0.5);
        let e = markov_decompose(&(&perm * 0.5), &p, &p).unwrap();
        assert!(max_abs_diff(&e.k, &perm) < 1e-15);
        assert_eq!(e.transitions.forward, perm);
        assert_eq!(e.transitions.backward, perm);
    }

    #[test]
    fn zero_marginal_states_are_excluded() {
        let pw = RMat::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]);
        let e = markov_decompose(&pw, &RVec::from_vec(vec![1.0, 0.0]), &RVec::from_element(2, 0.5)).unwrap();
        assert_eq!(e.excluded_l, vec![1]);
        assert!(e.excluded_next.is_empty());
        assert_eq!(e.transitions.forward.row(1).sum(), 0.0);
    }

    #[test]
    fn inconsistent_marginals_are_rejected() {
        let pw = RMat::from_element(2, 2, 0.25);
        let p = RVec::from_vec(vec![0.6, 0.4]);
        assert!(matches!(
            markov_decompose(&pw, &p, &p),
            Err(Error::InconsistentMarginals { .. })
        ));
    }

    #[test]
    fn kernel_is_probability_only_when_transitions_coincide() {
        // Equal uniform marginals: P+ = P- and K is stochastic.
        let pw = RMat::from_row_slice(2, 2, &[0.3, 0.2, 0.2, 0.3]);
        let p = RVec::from_element(2, 0.5);
        let e = markov_decompose(&pw, &p, &p).unwrap();
        assert!(e.transitions.asymmetry() < 1e-15);
        assert!(kernel_row_sums(&e.k).iter().all(|s| (s - 1.0).abs() < 1e-15));
        // Different marginals: K rows do not sum to one.
        let pw = RMat::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.2]);
        let e = markov_decompose(&pw, &RVec::from_vec(vec![0.7, 0.3]), &RVec::from_vec(vec![0.6, 0.4])).unwrap();
        assert!(e.transitions.asymmetry() > 1e-3);
        assert!(kernel_row_sums(&e.k).iter().any(|s| (s - 1.0).abs() > 1e-3));
    }

    #[test]
    fn two_site_joint_is_the_pairwise_marginal() {
        let pw = RMat::from_row_slice(2, 3, &[0.1, 0.2, 0.1, 0.3, 0.1, 0.2]);
        let singles = vec![pw.column_sum(), pw.row_sum().transpose()];
        let t = chain_joint_from_marginals(&[pw.clone()], &singles).unwrap();
        for (cfg, p) in t.iter() {
            assert!((p - pw[(cfg[0], cfg[1])]).abs() < 1e-15);
        }
    }

    #[test]
    fn independent_sites_give_product_joint() {
        let a = RVec::from_vec(vec![0.2, 0.8]);
        let b = RVec::from_vec(vec![0.5, 0.25, 0.25]);
        let c = RVec::from_vec(vec![0.9, 0.1]);
        let pw = vec![&a * b.transpose(), &b * c.transpose()];
        let t = chain_joint_from_marginals(&pw, &[a.clone(), b.clone(), c.clone()]).unwrap();
        for (cfg, p) in t.iter() {
            assert!((p - a[cfg[0]] * b[cfg[1]] * c[cfg[2]]).abs() < 1e-15);
        }
    }

    #[test]
    fn drift_and_diffusion_of_gaussian_transitions() {
        let (d, eps) = (0.8f64, 1e-4f64);
        let sigma = (d * eps).sqrt();
        let xs = [-1.0, 0.0, 0.5];
        let plain = estimate_drift_diffusion(|y, x| normal_pdf(y, x, d * eps), &xs, eps, 8.0 * sigma).unwrap();
        for k in 0..3 {
            assert!(plain.b_plus[k].abs() < 1e-6);
            assert!((plain.d_plus[k] - d).abs() < 1e-6);
        }
        let b = 1.5;
        let drifted = estimate_drift_diffusion(|y, x| normal_pdf(y, x + b * eps, d * eps), &xs, eps, 8.0 * sigma).unwrap();
        for k in 0..3 {
            assert!((drifted.b_plus[k] - b).abs() < 1e-3 * b);
            assert!((drifted.d_plus[k] - d).abs() < 1e-3 * d);
        }
        let g = 2.0;
        let ou = estimate_drift_diffusion(|y, x| normal_pdf(y, x - g * x * eps, d * eps), &xs, eps, 8.0 * sigma).unwrap();
        for k in 0..3 {
            assert!((ou.b_plus[k] + g * xs[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn narrow_window_is_reported() {
        let eps = 1e-2;
        let r = estimate_drift_diffusion(|y, x| normal_pdf(y, x, eps), &[0.0], eps, 0.2);
        assert!(matches!(r, Err(Error::WindowTooNarrow { .. })));
    }

    #[test]
    fn flat_theta_has_no_defect() {
        let r = kernel_integral_defect(&FlatTheta, 0.0, 1.0, |_| 0.0, 1e-3, &[-0.5, 0.0, 0.7]).unwrap();
        assert!(r.defect.iter().all(|d| d.abs() < 1e-8));
        assert!(r.expected.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn gaussian_theta_defect_matches_potential() {
        let s = 0.5;
        let d = 1.0;
        let theta = GaussianTheta { s };
        let xs = [-1.0, -0.3, 0.0, 0.4, 1.2];
        let mut errs = vec![];
        let eps_list = [4e-3, 2e-3, 1e-3];
        for &eps in &eps_list {
            let r = kernel_integral_defect(&theta, 0.0, d, |x| -d * x / (2.0 * s), eps, &xs).unwrap();
            for (k, &x) in xs.iter().enumerate() {
                let analytic = 0.5 * d * (x * x / (4.0 * s * s) - 1.0 / (2.0 * s));
                assert!((r.expected[k] - analytic).abs() < 1e-14);
            }
            errs.push(r.max_error());
        }
        assert!(errs[0] < 0.05);
        let order = crate::linalg::log_log_slope(&eps_list, &errs);
        assert!(order > 0.9 && order < 1.1, "order {order}");
    }

    #[test]
    fn symmetrization_of_matrices() {
        let q = RVec::from_vec(vec![0.5, 0.5]);
        let a = RMat::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let s = symmetrize_process(&a, &a, &q).unwrap();
        assert_eq!(s.forward, a);
        let b = RMat::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.8]);
        let s = symmetrize_process(&a, &b, &q).unwrap();
        assert_eq!(s.forward, s.backward);
        assert!(max_abs_diff(&s.forward, &((&a + &b) * 0.5)) == 0.0);
    }

    #[test]
    fn gaussian_symmetrization_drifts() {
        let proc_ = GaussianProcess::new(1.0, 0.5, 0.4).unwrap();
        let xs = [-0.6, -0.2, 0.3, 0.8];
        let r = symmetrize_gaussian(&proc_, 1e-4, &xs).unwrap();
        assert!(r.drift_residual < 1e-3);
        assert!(r.osmotic_residual < 1e-3);
        assert!(r.finite_identity_residual < 1e-9);
    }
}
