//! Discrete Bony paradifferential calculus on the periodic grid.
//!
//! For a symbol `a(x, xi)` sampled at the grid nodes and the represented wavenumbers,
//!
//! ```text
//! (T_a u)^(xi) = sum_eta chi(xi - eta, eta) a^(xi - eta; eta) Psi(eta) u^(eta)
//! ```
//!
//! where `a^(theta; eta)` is the x-Fourier coefficient of `a(., eta)`. Wavenumbers run
//! over `|k| < n/2`; the Nyquist mode is not represented, so real symbols even in `xi`
//! map real fields to real fields exactly.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::elliptic::{DnOperator, EllipticSolveConfig};
use crate::error::{MuskatError, Result};
use crate::geometry::{curvature, symbol_l, DomainSpec, Interface, Side};
use crate::spectral::{japanese, smoothstep, PeriodicGrid, SpectralField};

/// Frequency cutoffs `Psi(k)` and `chi(theta, eta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffPair {
    pub eps1: f64,
    pub eps2: f64,
    /// `Psi` vanishes below `psi_low` and equals 1 above `psi_high`.
    pub psi_low: f64,
    pub psi_high: f64,
}

impl Default for CutoffPair {
    fn default() -> Self {
        CutoffPair {
            eps1: 0.1,
            eps2: 0.2,
            psi_low: 0.2,
            psi_high: 0.25,
        }
    }
}

impl CutoffPair {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(0.0 < eps1 && eps1 < eps2 && eps2 < 1.0) {
            return Err(MuskatError::InvalidArgument(format!(
                "need 0 < eps1 < eps2 < 1, got {eps1}, {eps2}"
            )));
        }
        Ok(CutoffPair {
            eps1,
            eps2,
            ..Default::default()
        })
    }

    pub fn psi(&self, xi: f64) -> f64 {
        smoothstep((xi.abs() - self.psi_low) / (self.psi_high - self.psi_low))
    }

    pub fn chi(&self, theta: f64, eta: f64) -> f64 {
        if eta == 0.0 {
            return if theta == 0.0 { 1.0 } else { 0.0 };
        }
        let r = theta.abs() / eta.abs();
        1.0 - smoothstep((r - self.eps1) / (self.eps2 - self.eps1))
    }
}

/// Signed wavenumbers `-(n/2 - 1) ..= n/2 - 1`, stored at index `k + n/2 - 1`.
#[derive(Clone, Copy, Debug)]
struct Band {
    half: i64,
}

impl Band {
    fn new(grid: &PeriodicGrid) -> Self {
        Band {
            half: grid.nyquist() as i64 - 1,
        }
    }

    fn len(&self) -> usize {
        (2 * self.half + 1) as usize
    }

    fn k(&self, i: usize) -> i64 {
        i as i64 - self.half
    }

    fn index(&self, k: i64) -> Option<usize> {
        (k.abs() <= self.half).then(|| (k + self.half) as usize)
    }
}

fn full_spectrum(u: &SpectralField, band: Band) -> Vec<Complex64> {
    (0..band.len()).map(|i| u.coefficient(band.k(i))).collect()
}

fn from_full_spectrum(grid: PeriodicGrid, c: &[Complex64], band: Band) -> SpectralField {
    let mut half = vec![Complex64::new(0.0, 0.0); grid.n_modes()];
    for (k, slot) in half.iter_mut().enumerate().take(band.half as usize + 1) {
        let k = k as i64;
        let p = c[band.index(k).expect("in band")];
        let m = c[band.index(-k).expect("in band")];
        // real part of the synthesized field
        *slot = 0.5 * (p + m.conj());
    }
    SpectralField::from_half_spectrum(grid, half).expect("mode count")
}

/// Symbol `a(x_j, xi_k)` with declared order and x-regularity.
#[derive(Clone, Debug)]
pub struct ParaSymbol {
    pub order: f64,
    pub regularity: f64,
    pub real: bool,
    grid: PeriodicGrid,
    /// `values[i * n + j] = a(x_j, xi_{k_i})`.
    values: Vec<Complex64>,
}

impl ParaSymbol {
    pub fn from_fn(
        grid: PeriodicGrid,
        order: f64,
        regularity: f64,
        a: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        Self::build(grid, order, regularity, true, |x, xi| Complex64::new(a(x, xi), 0.0))
    }

    pub fn from_complex_fn(
        grid: PeriodicGrid,
        order: f64,
        regularity: f64,
        a: impl Fn(f64, f64) -> Complex64,
    ) -> Result<Self> {
        Self::build(grid, order, regularity, false, a)
    }

    /// Symbol given, for each `xi`, as a field in `x`.
    pub fn from_fields(
        grid: PeriodicGrid,
        order: f64,
        regularity: f64,
        a: impl Fn(f64) -> SpectralField,
    ) -> Result<Self> {
        let band = Band::new(&grid);
        let n = grid.n_points();
        let mut values = Vec::with_capacity(band.len() * n);
        for i in 0..band.len() {
            let col = a(grid.xi(band.k(i)));
            if col.grid() != &grid {
                return Err(MuskatError::InvalidArgument("symbol field on a different grid".into()));
            }
            values.extend(col.values().iter().map(|&v| Complex64::new(v, 0.0)));
        }
        Self::checked(grid, order, regularity, true, values)
    }

    /// The x-independent symbol `a(xi)`.
    pub fn multiplier(grid: PeriodicGrid, order: f64, a: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, order, f64::INFINITY, |_, xi| a(xi))
    }

    fn build(
        grid: PeriodicGrid,
        order: f64,
        regularity: f64,
        real: bool,
        a: impl Fn(f64, f64) -> Complex64,
    ) -> Result<Self> {
        let band = Band::new(&grid);
        let nodes = grid.nodes();
        let mut values = Vec::with_capacity(band.len() * nodes.len());
        for i in 0..band.len() {
            let xi = grid.xi(band.k(i));
            values.extend(nodes.iter().map(|&x| a(x, xi)));
        }
        Self::checked(grid, order, regularity, real, values)
    }

    fn checked(
        grid: PeriodicGrid,
        order: f64,
        regularity: f64,
        real: bool,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if let Some(p) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(MuskatError::InvalidArgument(format!(
                "symbol not finite at node {} of wavenumber index {}",
                p % grid.n_points(),
                p / grid.n_points()
            )));
        }
        if real && values.iter().any(|v| v.im != 0.0) {
            return Err(MuskatError::InvalidArgument("real symbol with imaginary values".into()));
        }
        Ok(ParaSymbol {
            order,
            regularity,
            real,
            grid,
            values,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// `a(x_j, xi_k)` for `|k| < n/2`.
    pub fn value(&self, j: usize, k: i64) -> Complex64 {
        let band = Band::new(&self.grid);
        let i = band.index(k).expect("represented wavenumber");
        self.values[i * self.grid.n_points() + j]
    }

    /// Pointwise product `a b`; orders add, regularity is the smaller one.
    pub fn product(&self, other: &ParaSymbol) -> Result<ParaSymbol> {
        if self.grid != other.grid {
            return Err(MuskatError::InvalidArgument("symbols on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Self::checked(
            self.grid,
            self.order + other.order,
            self.regularity.min(other.regularity),
            self.real && other.real,
            values,
        )
    }

    pub fn conj(&self) -> ParaSymbol {
        ParaSymbol {
            values: self.values.iter().map(|v| v.conj()).collect(),
            ..self.clone()
        }
    }
}

/// Dense Fourier matrix of a paradifferential operator over the represented band.
#[derive(Clone, Debug)]
pub struct ParaMatrix {
    grid: PeriodicGrid,
    band: Band,
    /// Row-major `m[xi_index * len + eta_index]`.
    m: Vec<Complex64>,
}

impl ParaMatrix {
    pub fn build(a: &ParaSymbol, cut: &CutoffPair) -> ParaMatrix {
        let grid = a.grid;
        let band = Band::new(&grid);
        let len = band.len();
        let n = grid.n_points();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let scale = 1.0 / n as f64;
        let mut m = vec![Complex64::new(0.0, 0.0); len * len];
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for ie in 0..len {
            let eta_k = band.k(ie);
            let eta = grid.xi(eta_k);
            let psi = cut.psi(eta);
            if psi == 0.0 {
                continue;
            }
            let src = &a.values[ie * n..(ie + 1) * n];
            let constant = src.iter().all(|v| *v == src[0]);
            if !constant {
                col.copy_from_slice(src);
                fft.process(&mut col);
            }
            // x-Fourier coefficient of a(., eta) at signed wavenumber theta
            let ahat = |theta: i64| -> Complex64 {
                if constant {
                    return if theta == 0 { src[0] } else { Complex64::new(0.0, 0.0) };
                }
                col[theta.rem_euclid(n as i64) as usize] * scale
            };
            for ix in 0..len {
                let theta = band.k(ix) - eta_k;
                let chi = cut.chi(grid.xi(theta), eta);
                if chi == 0.0 || theta.abs() >= grid.nyquist() as i64 {
                    continue;
                }
                m[ix * len + ie] = ahat(theta) * (chi * psi);
            }
        }
        ParaMatrix { grid, band, m }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Entry at output wavenumber `xi` and input wavenumber `eta`.
    pub fn entry(&self, xi: i64, eta: i64) -> Complex64 {
        let (i, j) = (self.band.index(xi), self.band.index(eta));
        match (i, j) {
            (Some(i), Some(j)) => self.m[i * self.band.len() + j],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    fn apply_coeffs(&self, u: &[Complex64]) -> Vec<Complex64> {
        let len = self.band.len();
        (0..len)
            .map(|i| {
                self.m[i * len..(i + 1) * len]
                    .iter()
                    .zip(u)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField> {
        if u.grid() != &self.grid {
            return Err(MuskatError::InvalidArgument("field on a different grid".into()));
        }
        let c = self.apply_coeffs(&full_spectrum(u, self.band));
        Ok(from_full_spectrum(self.grid, &c, self.band))
    }

    /// `L^2` adjoint: the conjugate transpose.
    pub fn adjoint(&self) -> ParaMatrix {
        let len = self.band.len();
        let mut m = vec![Complex64::new(0.0, 0.0); len * len];
        for i in 0..len {
            for j in 0..len {
                m[j * len + i] = self.m[i * len + j].conj();
            }
        }
        ParaMatrix { m, ..self.clone() }
    }

    /// `self * other`.
    pub fn compose(&self, other: &ParaMatrix) -> ParaMatrix {
        let len = self.band.len();
        let mut m = vec![Complex64::new(0.0, 0.0); len * len];
        for i in 0..len {
            let row = &mut m[i * len..(i + 1) * len];
            for k in 0..len {
                let a = self.m[i * len + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (r, b) in row.iter_mut().zip(&other.m[k * len..(k + 1) * len]) {
                    *r += a * b;
                }
            }
        }
        ParaMatrix { m, ..self.clone() }
    }

    pub fn sub(&self, other: &ParaMatrix) -> ParaMatrix {
        ParaMatrix {
            m: self.m.iter().zip(&other.m).map(|(a, b)| a - b).collect(),
            ..self.clone()
        }
    }
}

/// `T_a u`, computed exactly over the represented wavenumbers.
pub fn paradiff_apply(a: &ParaSymbol, u: &SpectralField, cut: &CutoffPair) -> Result<SpectralField> {
    ParaMatrix::build(a, cut).apply(u)
}

/// Ordinary least squares `y = slope x + intercept`; returns `(slope, intercept, sse)`.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, sse)
}

/// Probe wavenumbers used by every order fit.
pub const ORDER_PROBES: [i64; 5] = [8, 12, 16, 24, 32];

#[derive(Clone, Debug, PartialEq)]
pub struct OrderFit {
    pub probes: Vec<i64>,
    /// `|T e_k|_{L^2}` per probe.
    pub norms: Vec<f64>,
    /// `-inf` when every probe output vanishes.
    pub order: f64,
}

/// Slope of `log |T e_k|` against `log k` over unit-norm probes `e_k = cos(kx) / |cos(kx)|`.
pub fn operator_order_fit(
    grid: PeriodicGrid,
    probes: &[i64],
    op: impl Fn(&SpectralField) -> Result<SpectralField>,
) -> Result<OrderFit> {
    let mut sorted = probes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 4 || sorted.len() != probes.len() {
        return Err(MuskatError::InvalidArgument(
            "order fit needs at least 4 distinct probe wavenumbers".into(),
        ));
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo < 1 || hi < 4 * lo || hi >= grid.nyquist() as i64 {
        return Err(MuskatError::InvalidArgument(format!(
            "probes must be positive, below n/2 and span a ratio of 4, got {lo}..{hi}"
        )));
    }
    let mut norms = Vec::with_capacity(probes.len());
    for &k in probes {
        let e = SpectralField::cosine_modes(grid, &[(k, 1.0)]);
        let e = &e * (1.0 / e.l2_norm());
        norms.push(op(&e)?.l2_norm());
    }
    let order = slope_above(probes, &norms, &vec![0.0; norms.len()]);
    Ok(OrderFit {
        probes: probes.to_vec(),
        norms,
        order,
    })
}

/// Log-log slope over the probes whose norm exceeds its floor; `-inf` if fewer than two do.
fn slope_above(probes: &[i64], norms: &[f64], floor: &[f64]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = probes
        .iter()
        .zip(norms)
        .zip(floor)
        .filter(|((_, &v), &f)| v > f)
        .map(|((&k, &v), _)| ((k as f64).ln(), v.ln()))
        .unzip();
    if xs.len() < 2 {
        f64::NEG_INFINITY
    } else {
        least_squares(&xs, &ys).0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GardingReport {
    /// Worst constant over the first half of the samples.
    pub constant: f64,
    /// Worst constant over all samples.
    pub constant_doubled: f64,
    pub samples: usize,
}

impl GardingReport {
    /// Finite, and grows by at most 10% when the sample count doubles.
    pub fn stable(&self) -> bool {
        self.constant.is_finite()
            && self.constant_doubled.is_finite()
            && self.constant_doubled <= 1.1 * self.constant
    }
}

/// Smallest `C` with `|Psi u|^2_{H^{m/2}} <= C (Re <T_a u, u> + |u|^2_{H^{(m-r)/2}})` over
/// `2 * samples` seeded random trigonometric polynomials.
pub fn garding_check(
    a: &ParaSymbol,
    c: f64,
    samples: usize,
    seed: u64,
    cut: &CutoffPair,
) -> Result<GardingReport> {
    if !a.real {
        return Err(MuskatError::Precondition("Garding check needs a real symbol".into()));
    }
    if samples == 0 || !(c > 0.0) {
        return Err(MuskatError::InvalidArgument("need samples > 0 and c > 0".into()));
    }
    let grid = a.grid;
    let band = Band::new(&grid);
    let n = grid.n_points();
    let m = a.order;
    for i in 0..band.len() {
        let xi = grid.xi(band.k(i));
        let floor = c * xi.abs().powf(m);
        for j in 0..n {
            let v = a.values[i * n + j].re;
            if v < floor * (1.0 - 1e-12) {
                return Err(MuskatError::Precondition(format!(
                    "symbol not elliptic: a = {v:.6e} < c |xi|^m = {floor:.6e} at xi = {xi}, x_{j}"
                )));
            }
        }
    }
    let t = ParaMatrix::build(a, cut);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = (n / 3) as i64;
    let len = grid.length();
    let lower = (m - a.regularity) / 2.0;
    let mut ratios = Vec::with_capacity(2 * samples);
    for _ in 0..2 * samples {
        let mut half = vec![Complex64::new(0.0, 0.0); grid.n_modes()];
        for slot in half.iter_mut().take(top as usize + 1).skip(1) {
            *slot = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let u = SpectralField::from_half_spectrum(grid, half)?;
        let uc = full_spectrum(&u, band);
        let tu = t.apply_coeffs(&uc);
        let mut lhs = 0.0;
        let mut form = 0.0;
        let mut low = 0.0;
        for i in 0..band.len() {
            let xi = grid.xi(band.k(i));
            let w = uc[i].norm_sqr();
            let psi = cut.psi(xi);
            lhs += japanese(xi).powf(m) * psi * psi * w;
            form += (uc[i].conj() * tu[i]).re;
            low += japanese(xi).powf(2.0 * lower) * w;
        }
        let ratio = (len * lhs) / (len * (form + low));
        ratios.push(if ratio >= 0.0 { ratio } else { f64::INFINITY });
    }
    let worst = |r: &[f64]| r.iter().copied().fold(0.0, f64::max);
    Ok(GardingReport {
        constant: worst(&ratios[..samples]),
        constant_doubled: worst(&ratios),
        samples,
    })
}

/// Which paralinearization to test.
#[derive(Clone, Debug)]
pub enum ParalinCase {
    /// `G^-(eta) f - T_lambda f` on the lower fluid.
    Dn {
        domain: DomainSpec,
        config: EllipticSolveConfig,
    },
    /// `H(eta) - T_{l(eta)} eta`.
    Curvature,
}

/// Probe residuals within this factor of the flat-interface residual count as zero.
pub const FLOOR_FACTOR: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct ParalinResult {
    pub residual: SpectralField,
    /// DN: `f -> G^-(eta) f - T_lambda f` over the probes. Curvature: the linearization of
    /// `eta -> H(eta) - T_{l(eta)} eta` at the given `eta`. `fit.order` uses every probe.
    pub fit: OrderFit,
    /// DN only: the same probe residuals at `eta = 0`, where the exact residual vanishes in
    /// infinite depth. They measure what the discretization can resolve. Empty otherwise.
    pub floor: Vec<f64>,
    /// Order fitted over the probes whose residual exceeds `FLOOR_FACTOR * floor`; `-inf` when
    /// fewer than two do. Equals `fit.order` in the curvature case.
    pub order: f64,
}

/// `H(eta) - T_{l(eta)} eta`.
pub fn curvature_residual(eta: &Interface, cut: &CutoffPair) -> Result<SpectralField> {
    let grid = *eta.height.grid();
    let l = ParaSymbol::from_fields(grid, 2.0, eta.regularity - 1.0, |xi| symbol_l(eta, xi))?;
    Ok(&curvature(eta) - &paradiff_apply(&l, &eta.height, cut)?)
}

/// Paralinearization residual and its fitted order. `f` is the DN argument and is ignored
/// in the curvature case.
pub fn paralin_residual(
    eta: &Interface,
    f: &SpectralField,
    case: &ParalinCase,
    cut: &CutoffPair,
) -> Result<ParalinResult> {
    let grid = *eta.height.grid();
    match case {
        ParalinCase::Dn { domain, config } => {
            let lambda = ParaMatrix::build(&ParaSymbol::multiplier(grid, 1.0, f64::abs)?, cut);
            let residual_of = |eta: &Interface| -> Result<(SpectralField, OrderFit)> {
                let op = DnOperator::new(eta, domain, Side::Lower, *config)?;
                let r = |u: &SpectralField| -> Result<SpectralField> {
                    Ok(&op.apply(u)? - &lambda.apply(u)?)
                };
                Ok((r(f)?, operator_order_fit(grid, &ORDER_PROBES, r)?))
            };
            let (residual, fit) = residual_of(eta)?;
            let flat = Interface::new(SpectralField::zeros(grid), eta.regularity);
            let floor = residual_of(&flat)?.1.norms;
            let scaled: Vec<f64> = floor.iter().map(|v| FLOOR_FACTOR * v).collect();
            let order = slope_above(&fit.probes, &fit.norms, &scaled);
            Ok(ParalinResult {
                residual,
                fit,
                floor,
                order,
            })
        }
        ParalinCase::Curvature => {
            let residual = curvature_residual(eta, cut)?;
            let delta = 1e-4;
            let lin = |u: &SpectralField| -> Result<SpectralField> {
                let plus = Interface::new(&eta.height + &(u * delta), eta.regularity);
                let minus = Interface::new(&eta.height - &(u * delta), eta.regularity);
                let d = &curvature_residual(&plus, cut)? - &curvature_residual(&minus, cut)?;
                Ok(&d * (0.5 / delta))
            };
            let fit = operator_order_fit(grid, &ORDER_PROBES, lin)?;
            Ok(ParalinResult {
                residual,
                order: fit.order,
                fit,
                floor: Vec::new(),
            })
        }
    }
}

/// Exponent `p` in `|H(eta) - T_l eta|_{L^2} ~ eps^p` over `eta = eps cos(kx)`.
pub fn curvature_amplitude_fit(grid: PeriodicGrid, k: i64, eps: &[f64], cut: &CutoffPair) -> Result<f64> {
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(MuskatError::InvalidArgument("need at least two positive amplitudes".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &e in eps {
        let eta = Interface::from_field(SpectralField::cosine_modes(grid, &[(k, e)]));
        xs.push(e.ln());
        ys.push(curvature_residual(&eta, cut)?.l2_norm().ln());
    }
    Ok(least_squares(&xs, &ys).0)
}

/// CSV with columns `probe_k,residual_norm,fitted_order`.
pub fn write_residual_csv(fit: &OrderFit, path: &Path) -> Result<()> {
    let mut out = String::from("probe_k,residual_norm,fitted_order\n");
    for (k, v) in fit.probes.iter().zip(&fit.norms) {
        out.push_str(&format!("{k},{v:e},{:e}\n", fit.order));
    }
    fs::write(path, out).map_err(|e| MuskatError::io(path, e))
}
