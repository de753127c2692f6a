//! Periodic grids and real fields held both as samples and as Fourier coefficients.
//!
//! Coefficients are normalized by `1/n`, so `f(x_j) = sum_k c_k exp(i xi_k x_j)` with
//! `xi_k = 2 pi k / length`. Only the half spectrum `k = 0..=n/2` is stored; negative
//! wavenumbers follow from conjugate symmetry, which makes every field real by construction.
//!
//! Sobolev norms use `|f|_{H^s}^2 = length * sum_k <xi_k>^{2s} |c_k|^2` with
//! `<xi> = sqrt(1 + xi^2)`, which coincides with the continuum L2 norm at `s = 0`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{MuskatError, Result};

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

/// `<xi> = sqrt(1 + xi^2)`.
#[inline]
pub fn japanese(xi: f64) -> f64 {
    (1.0 + xi * xi).sqrt()
}

/// Quintic smoothstep: 0 for `t <= 0`, 1 for `t >= 1`, `C^2` in between.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Forward/inverse real transforms of one length with their scratch space.
pub(crate) struct RealFft {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    scratch_fwd: Vec<Complex64>,
    scratch_inv: Vec<Complex64>,
    buf_real: Vec<f64>,
    buf_cplx: Vec<Complex64>,
}

impl RealFft {
    pub(crate) fn new(n: usize) -> Self {
        let (r2c, c2r) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        });
        let scratch_fwd = r2c.make_scratch_vec();
        let scratch_inv = c2r.make_scratch_vec();
        RealFft {
            n,
            r2c,
            c2r,
            scratch_fwd,
            scratch_inv,
            buf_real: vec![0.0; n],
            buf_cplx: vec![Complex64::new(0.0, 0.0); n / 2 + 1],
        }
    }

    /// Normalized half spectrum of `values` (length n) into `out` (length n/2+1).
    pub(crate) fn forward(&mut self, values: &[f64], out: &mut [Complex64]) {
        self.buf_real.copy_from_slice(values);
        self.r2c
            .process_with_scratch(&mut self.buf_real, out, &mut self.scratch_fwd)
            .expect("forward transform length");
        let inv_n = 1.0 / self.n as f64;
        for c in out.iter_mut() {
            *c *= inv_n;
        }
    }

    /// Samples from a normalized half spectrum. DC and Nyquist imaginary parts are dropped.
    pub(crate) fn inverse(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        self.buf_cplx.copy_from_slice(coeffs);
        let last = self.buf_cplx.len() - 1;
        self.buf_cplx[0].im = 0.0;
        self.buf_cplx[last].im = 0.0;
        self.c2r
            .process_with_scratch(&mut self.buf_cplx, out, &mut self.scratch_inv)
            .expect("inverse transform length");
    }
}

fn forward_transform(values: &[f64]) -> Vec<Complex64> {
    let mut fft = RealFft::new(values.len());
    let mut out = vec![Complex64::new(0.0, 0.0); values.len() / 2 + 1];
    fft.forward(values, &mut out);
    out
}

fn inverse_transform(coeffs: &[Complex64], n: usize) -> Vec<f64> {
    let mut fft = RealFft::new(n);
    let mut out = vec![0.0; n];
    fft.inverse(coeffs, &mut out);
    out
}

/// Uniform periodic grid `x_j = j * length / n_points`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeriodicGrid {
    n_points: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < 8 || n_points % 2 != 0 {
            return Err(MuskatError::InvalidArgument(format!(
                "n_points must be even and >= 8, got {n_points}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(MuskatError::InvalidArgument(format!(
                "grid length must be positive, got {length}"
            )));
        }
        Ok(PeriodicGrid { n_points, length })
    }

    /// Grid on the standard torus of length 2 pi.
    pub fn standard(n_points: usize) -> Result<Self> {
        Self::new(n_points, 2.0 * PI)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_points as f64
    }

    /// Number of stored modes, `n/2 + 1`.
    pub fn n_modes(&self) -> usize {
        self.n_points / 2 + 1
    }

    pub fn nyquist(&self) -> usize {
        self.n_points / 2
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Physical wavenumber of integer mode `k`.
    pub fn xi(&self, k: i64) -> f64 {
        2.0 * PI * k as f64 / self.length
    }

    /// Represented integer wavenumbers `-n/2+1 ..= n/2`.
    pub fn wavenumbers(&self) -> impl Iterator<Item = i64> {
        let half = (self.n_points / 2) as i64;
        (-half + 1)..=half
    }
}

/// A real periodic function, held as grid samples and as normalized half-spectrum coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: PeriodicGrid,
    values: Vec<f64>,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(MuskatError::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        let coeffs = forward_transform(&values);
        Ok(SpectralField {
            grid,
            values,
            coeffs,
        })
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.nodes().into_iter().map(f).collect();
        let coeffs = forward_transform(&values);
        SpectralField {
            grid,
            values,
            coeffs,
        }
    }

    /// Builds a field from coefficients for `k = 0..=n/2`; imaginary parts of the
    /// mean and Nyquist coefficients are discarded.
    pub fn from_half_spectrum(grid: PeriodicGrid, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n_modes() {
            return Err(MuskatError::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.n_modes(),
                coeffs.len()
            )));
        }
        let last = coeffs.len() - 1;
        coeffs[0].im = 0.0;
        coeffs[last].im = 0.0;
        let values = inverse_transform(&coeffs, grid.n_points());
        Ok(SpectralField {
            grid,
            values,
            coeffs,
        })
    }

    /// Sum of cosine modes `sum a_k cos(xi_k x)` given as `(k, a_k)` pairs.
    pub fn cosine_modes(grid: PeriodicGrid, modes: &[(i64, f64)]) -> Self {
        Self::from_fn(grid, |x| {
            modes
                .iter()
                .map(|&(k, a)| a * (grid.xi(k) * x).cos())
                .sum()
        })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        SpectralField {
            grid,
            values: vec![0.0; grid.n_points()],
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_modes()],
        }
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.values.iter_mut().for_each(|v| *v = c);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn half_spectrum(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of integer wavenumber `k`, for any `k` in the represented range.
    pub fn coefficient(&self, k: i64) -> Complex64 {
        let n = self.grid.n_points() as i64;
        let k = k.rem_euclid(n);
        if k <= n / 2 {
            self.coeffs[k as usize]
        } else {
            self.coeffs[(n - k) as usize].conj()
        }
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Applies the Fourier multiplier `m(xi)`. Fails if `m` is not Hermitian, since the
    /// output would not be real.
    pub fn apply_multiplier(&self, m: impl Fn(f64) -> Complex64) -> Result<Self> {
        let half = self.grid.nyquist();
        let mut out = Vec::with_capacity(self.coeffs.len());
        for (k, c) in self.coeffs.iter().enumerate() {
            let xi = self.grid.xi(k as i64);
            let mp = m(xi);
            let mm = m(-xi);
            if !(mp.re.is_finite() && mp.im.is_finite() && mm.re.is_finite() && mm.im.is_finite())
            {
                return Err(MuskatError::InvalidArgument(format!(
                    "multiplier not finite at wavenumber {k}"
                )));
            }
            let scale = 1.0f64.max(mp.norm());
            if k < half && (mm - mp.conj()).norm() > 1e-12 * scale {
                return Err(MuskatError::SymmetryViolation {
                    wavenumber: k as i64,
                });
            }
            let mult = if k == half {
                // the Nyquist mode stands for both +xi and -xi
                Complex64::new(0.5 * (mp + mm).re, 0.0)
            } else {
                mp
            };
            out.push(mult * c);
        }
        Self::from_half_spectrum(self.grid, out)
    }

    /// Applies an even real multiplier given on `xi >= 0`.
    pub fn apply_real_multiplier(&self, m: impl Fn(f64) -> f64) -> Self {
        let coeffs: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * m(self.grid.xi(k as i64)))
            .collect();
        Self::from_half_spectrum(self.grid, coeffs).expect("same grid")
    }

    /// Spectral x-derivative. The Nyquist mode is dropped so the operator stays real
    /// and skew-adjoint on the grid.
    pub fn derivative(&self) -> Self {
        let half = self.grid.nyquist();
        let coeffs: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k == half {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, self.grid.xi(k as i64))
                }
            })
            .collect();
        Self::from_half_spectrum(self.grid, coeffs).expect("same grid")
    }

    pub fn sobolev_norm(&self, sigma: f64) -> f64 {
        let half = self.grid.nyquist();
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            let w = japanese(self.grid.xi(k as i64)).powf(2.0 * sigma);
            let mult = if k == 0 || k == half { 1.0 } else { 2.0 };
            acc += mult * w * c.norm_sqr();
        }
        (self.grid.length() * acc).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// Trapezoid L2 inner product, `(length/n) * sum f_j g_j`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.check_grid(other);
        self.grid.spacing()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Pointwise product with 2/3-rule dealiasing (evaluated on a doubled grid).
    pub fn product(&self, other: &SpectralField) -> Self {
        self.check_grid(other);
        let n = self.grid.n_points();
        let a = pad_values(&self.coeffs, n);
        let b = pad_values(&other.coeffs, n);
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        truncate(self.grid, &prod)
    }

    /// Pointwise nonlinear map evaluated on a doubled grid and truncated back.
    pub fn map_dealiased(&self, f: impl Fn(f64) -> f64) -> Self {
        let n = self.grid.n_points();
        let fine: Vec<f64> = pad_values(&self.coeffs, n).into_iter().map(f).collect();
        truncate(self.grid, &fine)
    }

    /// Pointwise map on the grid samples, without dealiasing.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::from_values(self.grid, values).expect("same length")
    }

    /// Field with the mean and Nyquist coefficients removed.
    pub fn without_mean_and_nyquist(&self) -> Self {
        let mut c = self.coeffs.clone();
        c[0] = Complex64::new(0.0, 0.0);
        let last = c.len() - 1;
        c[last] = Complex64::new(0.0, 0.0);
        Self::from_half_spectrum(self.grid, c).expect("same grid")
    }

    /// Mean plus Nyquist component (the part every discrete DN operator annihilates).
    pub fn mean_and_nyquist(&self) -> Self {
        let mut c = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        c[0] = self.coeffs[0];
        let last = c.len() - 1;
        c[last] = self.coeffs[last];
        Self::from_half_spectrum(self.grid, c).expect("same grid")
    }

    /// Circular shift by whole grid nodes: `out(x_j) = f(x_{j - shift})`.
    pub fn shifted(&self, shift: isize) -> Self {
        let n = self.grid.n_points() as isize;
        let values = (0..n)
            .map(|j| self.values[(j - shift).rem_euclid(n) as usize])
            .collect();
        Self::from_values(self.grid, values).expect("same length")
    }

    /// Reflection `out(x_j) = f(x_{-j})`.
    pub fn reflected(&self) -> Self {
        let n = self.grid.n_points();
        let values = (0..n).map(|j| self.values[(n - j) % n]).collect();
        Self::from_values(self.grid, values).expect("same length")
    }

    fn check_grid(&self, other: &SpectralField) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
    }
}

/// Values of the trigonometric interpolant on the doubled grid.
fn pad_values(coeffs: &[Complex64], n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut padded = vec![Complex64::new(0.0, 0.0); m / 2 + 1];
    let half = n / 2;
    padded[..half].copy_from_slice(&coeffs[..half]);
    padded[half] = coeffs[half] * 0.5;
    inverse_transform(&padded, m)
}

fn truncate(grid: PeriodicGrid, fine: &[f64]) -> SpectralField {
    let full = forward_transform(fine);
    let half = grid.nyquist();
    let mut coeffs: Vec<Complex64> = full[..=half].to_vec();
    coeffs[half] = Complex64::new(2.0 * full[half].re, 0.0);
    SpectralField::from_half_spectrum(grid, coeffs).expect("same grid")
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.check_grid(rhs);
        SpectralField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.check_grid(rhs);
        SpectralField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, s: f64) -> SpectralField {
        SpectralField {
            grid: self.grid,
            values: self.values.iter().map(|a| a * s).collect(),
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self * -1.0
    }
}

/// `m(xi) * f_hat(xi)`; see [`SpectralField::apply_multiplier`].
pub fn apply_multiplier(
    m: impl Fn(f64) -> Complex64,
    f: &SpectralField,
) -> Result<SpectralField> {
    f.apply_multiplier(m)
}

pub fn sobolev_norm(f: &SpectralField, sigma: f64) -> f64 {
    f.sobolev_norm(sigma)
}

/// `exp(-tau |zeta| <D>) f`, the forward smoothing semigroup.
pub fn smoothing_semigroup(tau: f64, zeta: f64, f: &SpectralField) -> Result<SpectralField> {
    if !(tau >= 0.0) {
        return Err(MuskatError::InvalidArgument(format!(
            "smoothing semigroup only runs forward, got tau = {tau}"
        )));
    }
    let rate = tau * zeta.abs();
    Ok(f.apply_real_multiplier(|xi| (-rate * japanese(xi)).exp()))
}
