//! Short-time Gaussian kernels on a periodic 1-D grid: the real kernel
//! `exp(-H(x,x') eps / hbar) / |A|`, the complex electromagnetic kernel and
//! its real asymmetric counterpart, plus the finite-difference Hamiltonians
//! they are compared against.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::densitydual::HermitianState;
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, RMat, RVec};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest `|z|` accepted by [`em_real_kernel`].
pub const Z_BOUND: f64 = 0.3;
/// Half-width, in Gaussian standard deviations, of the support on which the
/// `z` bound is enforced.
pub const SUPPORT_SIGMAS: f64 = 8.0;

/// Uniform periodic grid `x_k = origin + k * delta`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub delta: f64,
    pub n: usize,
    pub origin: f64,
}

impl Grid1D {
    pub const MIN_POINTS: usize = 8;

    pub fn new(delta: f64, n: usize, origin: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {delta}")));
        }
        if n < Self::MIN_POINTS {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {} points, got {n}",
                Self::MIN_POINTS
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        Ok(Self { delta, n, origin })
    }

    /// Grid of `n` points centered on zero.
    pub fn centered(delta: f64, n: usize) -> Result<Self> {
        Self::new(delta, n, -0.5 * delta * n as f64)
    }

    pub fn length(&self) -> f64 {
        self.delta * self.n as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.delta
    }

    pub fn points(&self) -> RVec {
        RVec::from_fn(self.n, |k, _| self.x(k))
    }

    /// Signed minimum-image displacement `x_i - x_j`.
    pub fn displacement(&self, i: usize, j: usize) -> f64 {
        let mut k = i as i64 - j as i64;
        let n = self.n as i64;
        if k > n / 2 {
            k -= n;
        } else if k < -(n / 2) {
            k += n;
        }
        k as f64 * self.delta
    }

    /// Midpoint of `x_i` and `x_j` along the minimum-image segment, wrapped
    /// back into the grid window.
    pub fn midpoint(&self, i: usize, j: usize) -> f64 {
        self.wrap(self.x(j) + 0.5 * self.displacement(i, j))
    }

    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        self.origin + (x - self.origin).rem_euclid(l)
    }
}

/// Scalar field on the grid (potential energy or vector potential).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Field {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `k (x - center)^2 / 2`.
    Harmonic {
        k: f64,
        #[serde(default)]
        center: f64,
    },
    /// One sample per grid point; linear interpolation in between, periodic.
    Table { values: Vec<f64> },
}

impl Field {
    pub fn is_zero(&self) -> bool {
        match self {
            Field::Zero => true,
            Field::Constant { value } => *value == 0.0,
            Field::Harmonic { k, .. } => *k == 0.0,
            Field::Table { values } => values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn check(&self, grid: &Grid1D) -> Result<()> {
        match self {
            Field::Table { values } if values.len() != grid.n => Err(Error::ShapeMismatch {
                expected: format!("{} field samples", grid.n),
                got: values.len().to_string(),
            }),
            Field::Table { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("field samples must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn value_at(&self, grid: &Grid1D, x: f64) -> f64 {
        match self {
            Field::Zero => 0.0,
            Field::Constant { value } => *value,
            Field::Harmonic { k, center } => 0.5 * k * (x - center).powi(2),
            Field::Table { values } => {
                let s = (grid.wrap(x) - grid.origin) / grid.delta;
                let k0 = s.floor();
                let frac = s - k0;
                let k0 = (k0 as usize) % grid.n;
                let k1 = (k0 + 1) % grid.n;
                values[k0] * (1.0 - frac) + values[k1] * frac
            }
        }
    }

    pub fn sample(&self, grid: &Grid1D) -> RVec {
        match self {
            Field::Table { values } => RVec::from_column_slice(values),
            _ => RVec::from_fn(grid.n, |k, _| self.value_at(grid, grid.x(k))),
        }
    }

    /// Tabulate an arbitrary function on the grid.
    pub fn tabulate(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Field::Table {
            values: (0..grid.n).map(|k| f(grid.x(k))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub m: f64,
    pub epsilon: f64,
    pub hbar: f64,
    #[serde(default)]
    pub v: Field,
    #[serde(default)]
    pub a: Field,
    #[serde(default = "one")]
    pub e_over_c: f64,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn new(m: f64, epsilon: f64, hbar: f64) -> Result<Self> {
        let spec = Self {
            m,
            epsilon,
            hbar,
            v: Field::Zero,
            a: Field::Zero,
            e_over_c: 1.0,
        };
        spec.check_scalars()?;
        Ok(spec)
    }

    pub fn with_potential(mut self, v: Field) -> Self {
        self.v = v;
        self
    }

    pub fn with_vector_potential(mut self, a: Field, e_over_c: f64) -> Self {
        self.a = a;
        self.e_over_c = e_over_c;
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    fn check_scalars(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("epsilon", self.epsilon), ("hbar", self.hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.e_over_c.is_finite() {
            return Err(Error::InvalidInput("e_over_c must be finite".into()));
        }
        Ok(())
    }

    /// Standard deviation `sqrt(hbar eps / m)` of the kinetic Gaussian.
    pub fn width(&self) -> f64 {
        (self.hbar * self.epsilon / self.m).sqrt()
    }

    /// `|A| = sqrt(2 pi hbar eps / m)`.
    pub fn normalization(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.hbar * self.epsilon / self.m).sqrt()
    }

    /// Validate scalars, field tables and Gaussian resolvability.
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        self.check_scalars()?;
        self.v.check(grid)?;
        self.a.check(grid)?;
        let width = self.width();
        if width < 2.0 * grid.delta {
            return Err(Error::UnderResolved {
                width,
                delta: grid.delta,
            });
        }
        Ok(())
    }

    /// `H(x, x') = m d^2 / (2 eps^2) + V(x)` with `d = x - x'`.
    pub fn classical_h(&self, grid: &Grid1D, i: usize, j: usize) -> f64 {
        let d = grid.displacement(i, j);
        0.5 * self.m * d * d / (self.epsilon * self.epsilon) + self.v.value_at(grid, grid.x(i))
    }

    /// Complex EM Hamiltonian function with the midpoint convention:
    /// `m d^2 / (2 eps^2) + V(mid) - i (e/c) (d / eps) A(mid)`.
    pub fn classical_h_em_complex(&self, grid: &Grid1D, i: usize, j: usize) -> Complex64 {
        let d = grid.displacement(i, j);
        let mid = grid.midpoint(i, j);
        Complex64::new(
            0.5 * self.m * d * d / (self.epsilon * self.epsilon) + self.v.value_at(grid, mid),
            -self.e_over_c * d / self.epsilon * self.a.value_at(grid, mid),
        )
    }

    /// Real EM Hamiltonian function:
    /// `m d^2 / (2 eps^2) + V(mid) - (e/c)(d/eps) A(mid) + (e/c)^2 A(mid)^2 / m`.
    pub fn classical_h_em_real(&self, grid: &Grid1D, i: usize, j: usize) -> f64 {
        let d = grid.displacement(i, j);
        let mid = grid.midpoint(i, j);
        let a = self.a.value_at(grid, mid);
        0.5 * self.m * d * d / (self.epsilon * self.epsilon) + self.v.value_at(grid, mid)
            - self.e_over_c * d / self.epsilon * a
            + self.e_over_c * self.e_over_c * a * a / self.m
    }

    /// `z = (e / (hbar c)) d A(mid)`.
    pub fn z(&self, grid: &Grid1D, i: usize, j: usize) -> f64 {
        let mid = grid.midpoint(i, j);
        self.e_over_c / self.hbar * grid.displacement(i, j) * self.a.value_at(grid, mid)
    }
}

/// Validated wave function on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveVector(CVec);

impl WaveVector {
    pub fn new(psi: CVec) -> Result<Self> {
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("wave function has non-finite entries".into()));
        }
        if psi.norm() == 0.0 {
            return Err(Error::InvalidInput("wave function has zero norm".into()));
        }
        Ok(Self(psi))
    }

    /// `exp(-(x - x0)^2 / (4 s^2) + i k0 x)` sampled on the grid with
    /// minimum-image distance to `x0`.
    pub fn gaussian_packet(grid: &Grid1D, x0: f64, s: f64, k0: f64) -> Result<Self> {
        let psi = CVec::from_fn(grid.n, |k, _| {
            let x = grid.x(k);
            let l = grid.length();
            let d = (x - x0) - l * ((x - x0) / l).round();
            Complex64::from_polar((-d * d / (4.0 * s * s)).exp(), k0 * x)
        });
        Self::new(psi)
    }

    /// Plane wave `exp(i k x)`; `k` should be a multiple of `2 pi / L`.
    pub fn plane_wave(grid: &Grid1D, k: f64) -> Result<Self> {
        Self::new(CVec::from_fn(grid.n, |j, _| Complex64::from_polar(1.0, k * grid.x(j))))
    }

    pub fn psi(&self) -> &CVec {
        &self.0
    }

    pub fn into_inner(self) -> CVec {
        self.0
    }
}

impl std::ops::Deref for WaveVector {
    type Target = CVec;
    fn deref(&self) -> &CVec {
        &self.0
    }
}

/// Periodic second-order central-difference Hamiltonian for arbitrary
/// potential samples (no minimum size).
pub fn periodic_hamiltonian(delta: f64, v: &[f64], hbar: f64, m: f64) -> RMat {
    let n = v.len();
    let t = hbar * hbar / (2.0 * m * delta * delta);
    let mut h = RMat::zeros(n, n);
    for k in 0..n {
        h[(k, k)] += 2.0 * t + v[k];
        h[(k, (k + 1) % n)] -= t;
        h[(k, (k + n - 1) % n)] -= t;
    }
    h
}

pub fn discretize_hamiltonian(grid: &Grid1D, spec: &KernelSpec) -> Result<RMat> {
    spec.check_scalars()?;
    spec.v.check(grid)?;
    Ok(periodic_hamiltonian(
        grid.delta,
        spec.v.sample(grid).as_slice(),
        spec.hbar,
        spec.m,
    ))
}

/// Finite-difference Hamiltonian for `-(hbar^2/2m)(d/dx - i q A)^2 + V`
/// with `q = e/(hbar c)`, using link phases `exp(-i q A(x_{k+1/2}) delta)`.
pub fn discretize_em_hamiltonian(grid: &Grid1D, spec: &KernelSpec) -> Result<CMat> {
    spec.check_scalars()?;
    spec.v.check(grid)?;
    spec.a.check(grid)?;
    let n = grid.n;
    let t = spec.hbar * spec.hbar / (2.0 * spec.m * grid.delta * grid.delta);
    let q = spec.e_over_c / spec.hbar;
    let v = spec.v.sample(grid);
    let mut h = CMat::zeros(n, n);
    for k in 0..n {
        h[(k, k)] += Complex64::new(2.0 * t + v[k], 0.0);
        let a = spec.a.value_at(grid, grid.x(k) + 0.5 * grid.delta);
        let hop = Complex64::from_polar(t, -q * a * grid.delta);
        let k1 = (k + 1) % n;
        h[(k, k1)] -= hop;
        h[(k1, k)] -= hop.conj();
    }
    Ok(h)
}

/// Which argument the potential is evaluated at in the real kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialConvention {
    /// `V(x)`, the row coordinate.
    #[default]
    FirstArgument,
    /// `V((x + x') / 2)`, as in the EM kernels.
    Midpoint,
}

pub fn gaussian_kernel(spec: &KernelSpec, grid: &Grid1D) -> Result<RMat> {
    gaussian_kernel_with(spec, grid, PotentialConvention::FirstArgument)
}

pub fn gaussian_kernel_with(
    spec: &KernelSpec,
    grid: &Grid1D,
    convention: PotentialConvention,
) -> Result<RMat> {
    spec.validate(grid)?;
    let norm = spec.normalization();
    let scale = spec.epsilon / spec.hbar;
    Ok(RMat::from_fn(grid.n, grid.n, |i, j| {
        let d = grid.displacement(i, j);
        let x = match convention {
            PotentialConvention::FirstArgument => grid.x(i),
            PotentialConvention::Midpoint => grid.midpoint(i, j),
        };
        let h = 0.5 * spec.m * d * d / (spec.epsilon * spec.epsilon) + spec.v.value_at(grid, x);
        (-h * scale).exp() / norm
    }))
}

/// `delta * (row sums) - 1`.
pub fn normalization_defect(kernel: &RMat, grid: &Grid1D) -> Result<RVec> {
    check_kernel_shape(kernel.nrows(), kernel.ncols(), grid)?;
    if kernel.iter().any(|k| !k.is_finite() || *k < 0.0) {
        return Err(Error::NegativeFactor {
            context: "kernel".into(),
        });
    }
    Ok(RVec::from_fn(grid.n, |i, _| grid.delta * kernel.row(i).sum() - 1.0))
}

fn check_kernel_shape(rows: usize, cols: usize, grid: &Grid1D) -> Result<()> {
    if rows != grid.n || cols != grid.n {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} kernel", grid.n),
            got: format!("{rows}x{cols}"),
        });
    }
    Ok(())
}

fn check_vector(len: usize, grid: &Grid1D) -> Result<()> {
    if len != grid.n {
        return Err(Error::ShapeMismatch {
            expected: format!("{} grid values", grid.n),
            got: len.to_string(),
        });
    }
    Ok(())
}

/// `(K * psi)(x) = delta * sum_x' K(x, x') psi(x')`.
pub fn convolve_step(kernel: &RMat, psi: &CVec, grid: &Grid1D) -> Result<CVec> {
    check_kernel_shape(kernel.nrows(), kernel.ncols(), grid)?;
    check_vector(psi.len(), grid)?;
    let re = kernel * psi.map(|z| z.re);
    let im = kernel * psi.map(|z| z.im);
    Ok(CVec::from_fn(grid.n, |k, _| Complex64::new(re[k], im[k]) * grid.delta))
}

/// Complex-kernel convolution `delta * C psi`.
pub fn convolve_complex(kernel: &CMat, psi: &CVec, grid: &Grid1D) -> Result<CVec> {
    check_kernel_shape(kernel.nrows(), kernel.ncols(), grid)?;
    check_vector(psi.len(), grid)?;
    Ok(kernel * psi * Complex64::new(grid.delta, 0.0))
}

/// `(i / eps) (K * psi - psi)` with the real kernel of `spec`.
pub fn schrodinger_rhs_via_kernel(spec: &KernelSpec, psi: &CVec, grid: &Grid1D) -> Result<CVec> {
    let kernel = gaussian_kernel(spec, grid)?;
    schrodinger_rhs_with(&kernel, spec.epsilon, psi, grid)
}

pub fn schrodinger_rhs_with(kernel: &RMat, epsilon: f64, psi: &CVec, grid: &Grid1D) -> Result<CVec> {
    let kpsi = convolve_step(kernel, psi, grid)?;
    Ok((kpsi - psi) * (I / epsilon))
}

/// `(i / eps) (C * psi - psi)` with the complex EM kernel of `spec`.
pub fn em_schrodinger_rhs(spec: &KernelSpec, psi: &CVec, grid: &Grid1D) -> Result<CVec> {
    let kernel = em_complex_kernel(spec, grid)?;
    let cpsi = convolve_complex(&kernel, psi, grid)?;
    Ok((cpsi - psi) * (I / spec.epsilon))
}

/// `-(i / hbar) H psi`.
pub fn hamiltonian_rhs(h: &CMat, psi: &CVec, hbar: f64) -> CVec {
    h * psi * (-I / hbar)
}

/// `(i / eps) delta (K rho - rho K^T)` for a real kernel.
pub fn kernel_commutator_rhs(
    kernel: &RMat,
    epsilon: f64,
    rho: &HermitianState,
    grid: &Grid1D,
) -> Result<CMat> {
    check_kernel_shape(kernel.nrows(), kernel.ncols(), grid)?;
    kernel_commutator_rhs_complex(&crate::linalg::to_complex(kernel), epsilon, rho, grid)
}

/// `(i / eps) delta (C rho - rho C^dagger)`; for Hermitian `C` this is the
/// commutator form.
pub fn kernel_commutator_rhs_complex(
    kernel: &CMat,
    epsilon: f64,
    rho: &HermitianState,
    grid: &Grid1D,
) -> Result<CMat> {
    check_kernel_shape(kernel.nrows(), kernel.ncols(), grid)?;
    check_vector(rho.dim(), grid)?;
    let r = rho.rho();
    let out = (kernel * r - r * kernel.adjoint()) * (I * (grid.delta / epsilon));
    Ok(out)
}

/// `C(x, x') = exp(-eps H~_EM(x, x') / hbar) / |A|`. Only the upper
/// triangle is evaluated; the lower one is its conjugate mirror.
pub fn em_complex_kernel(spec: &KernelSpec, grid: &Grid1D) -> Result<CMat> {
    spec.validate(grid)?;
    let norm = spec.normalization();
    let scale = spec.epsilon / spec.hbar;
    let n = grid.n;
    let mut c = CMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let h = spec.classical_h_em_complex(grid, i, j);
            let mut v = (-h * scale).exp() / norm;
            if i == j {
                v.im = 0.0;
            }
            c[(i, j)] = v;
            c[(j, i)] = v.conj();
        }
    }
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct EmRealKernel {
    /// `exp(-eps H_EM / hbar) / |A|`.
    pub k_em: RMat,
    /// Gaussian times `cos z`.
    pub k_s: RMat,
    /// Gaussian times `sin z`.
    pub k_a: RMat,
    /// Largest `|z|` over the resolved support.
    pub max_z: f64,
}

impl EmRealKernel {
    pub fn sum(&self) -> RMat {
        &self.k_s + &self.k_a
    }
}

pub fn em_real_kernel(spec: &KernelSpec, grid: &Grid1D) -> Result<EmRealKernel> {
    spec.validate(grid)?;
    let n = grid.n;
    let support = SUPPORT_SIGMAS * spec.width();
    let mut max_z = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if grid.displacement(i, j).abs() <= support {
                max_z = max_z.max(spec.z(grid, i, j).abs());
            }
        }
    }
    if max_z > Z_BOUND {
        return Err(Error::PhaseBound {
            z: max_z,
            bound: Z_BOUND,
        });
    }
    let norm = spec.normalization();
    let scale = spec.epsilon / spec.hbar;
    let mut k_s = RMat::zeros(n, n);
    let mut k_a = RMat::zeros(n, n);
    let mut k_em = RMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = grid.displacement(i, j);
            let mid = grid.midpoint(i, j);
            let g = (-(0.5 * spec.m * d * d / (spec.epsilon * spec.epsilon)
                + spec.v.value_at(grid, mid))
                * scale)
                .exp()
                / norm;
            let z = spec.z(grid, i, j);
            k_s[(i, j)] = g * z.cos();
            k_a[(i, j)] = g * z.sin();
            k_em[(i, j)] = (-spec.classical_h_em_real(grid, i, j) * scale).exp() / norm;
        }
    }
    Ok(EmRealKernel {
        k_em,
        k_s,
        k_a,
        max_z,
    })
}

/// `|cos z + sin z - exp(z - z^2)|`.
pub fn z_identity_gap(z: f64) -> f64 {
    (z.cos() + z.sin() - (z - z * z).exp()).abs()
}
