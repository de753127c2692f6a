//! Dirichlet-Neumann operators on the flattened strips and the two-phase coupling.
//!
//! Each strip carries the weak form of `div(A grad phi) = 0` in `(x, zeta)`, discretized
//! by Fourier collocation in `x` and Legendre spectral elements in `zeta`. With
//! `y = rho(x, s * zeta)` and `J = d rho / dz > 0`,
//!
//! ```text
//! A11 = J,   A12 = -s * rho_x,   A22 = (1 + rho_x^2) / J
//! ```
//!
//! The Dirichlet node row of the assembled stiffness applied to the harmonic extension is the
//! outward conormal flux; `G^- f` is that row and `G^+ f` its negative. The discrete
//! operators annihilate constants and the Nyquist mode exactly and have range orthogonal to
//! both.

use num_complex::Complex64;

use crate::dynamics::FluidParams;
use crate::error::{MuskatError, Result};
use crate::geometry::{
    build_flattening_with, initial_tau, DomainSpec, FlatteningMap, Interface, Side, StripMap,
};
use crate::sem::{first_node_schur, BandedCholesky, ZMesh};
use crate::spectral::{smoothstep, japanese, PeriodicGrid, RealFft, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EllipticSolveConfig {
    /// Vertical nodes per strip minus one; a multiple of 8.
    pub n_z: usize,
    /// Relative residual target of every Krylov solve.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Use the x-averaged mode-by-mode preconditioner (exact for a flat interface).
    pub preconditioner: bool,
}

impl Default for EllipticSolveConfig {
    fn default() -> Self {
        EllipticSolveConfig {
            n_z: 64,
            tolerance: 1e-10,
            max_iterations: 2000,
            preconditioner: true,
        }
    }
}

impl EllipticSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_z < 8 || self.n_z % crate::sem::ELEMENT_ORDER != 0 {
            return Err(MuskatError::Validation(format!(
                "n_z must be a multiple of 8 and at least 8, got {}",
                self.n_z
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-4) {
            return Err(MuskatError::Validation(format!(
                "solver tolerance must lie in (0, 1e-4], got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(MuskatError::Validation("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Krylov solves stop at `KRYLOV_MARGIN * tolerance` relative residual, so that operator
/// outputs (fluxes, inner products) meet `tolerance` itself.
pub const KRYLOV_MARGIN: f64 = 1e-2;

/// Outcome of a Krylov solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients, starting from `x = M^{-1} b` and stopping at
/// `|r| <= tol |b|`.
pub(crate) fn pcg(
    b: &[f64],
    tol: f64,
    max_iter: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    mut precond: impl FnMut(&[f64], &mut [f64]),
) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats::default()));
    }
    let mut x = vec![0.0; n];
    precond(b, &mut x);
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(MuskatError::KrylovDivergence {
                iterations: it,
                residual: rel,
                tolerance: tol,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel <= tol {
        return Ok((
            x,
            SolveStats {
                iterations: max_iter,
                relative_residual: rel,
            },
        ));
    }
    Err(MuskatError::KrylovDivergence {
        iterations: max_iter,
        residual: rel,
        tolerance: tol,
    })
}

/// Spectral `d/dx` applied to every level of a level-major array, Nyquist dropped.
struct LevelDx {
    fft: RealFft,
    xi: Vec<f64>,
    spec: Vec<Complex64>,
}

impl LevelDx {
    fn new(grid: &PeriodicGrid) -> Self {
        let nyq = grid.nyquist();
        LevelDx {
            fft: RealFft::new(grid.n_points()),
            xi: (0..=nyq)
                .map(|k| if k == nyq { 0.0 } else { grid.xi(k as i64) })
                .collect(),
            spec: vec![Complex64::new(0.0, 0.0); nyq + 1],
        }
    }

    fn apply(&mut self, row: &[f64], out: &mut [f64]) {
        self.fft.forward(row, &mut self.spec);
        for (c, &xi) in self.spec.iter_mut().zip(&self.xi) {
            *c = Complex64::new(-c.im * xi, c.re * xi);
        }
        self.fft.inverse(&self.spec, out);
    }
}

/// The operator `G^+-(eta)` of one strip together with its cached coefficients and
/// preconditioner.
#[derive(Clone, Debug)]
pub struct DnOperator {
    grid: PeriodicGrid,
    config: EllipticSolveConfig,
    strip: StripMap,
    a11: Vec<f64>,
    a12: Vec<f64>,
    a22: Vec<f64>,
    /// Interior-block factorizations of the x-averaged mode matrices, `k = 0..=n/2`.
    precond: Option<Vec<BandedCholesky>>,
}

impl DnOperator {
    /// Builds the operator of `side` for interface `eta`.
    pub fn new(
        eta: &Interface,
        dom: &DomainSpec,
        side: Side,
        config: EllipticSolveConfig,
    ) -> Result<Self> {
        config.validate()?;
        let map = build_flattening_with(eta, dom, initial_tau(eta, dom), config.n_z)?;
        let strip = match side {
            Side::Lower => map.lower,
            Side::Upper => map.upper.ok_or_else(|| {
                MuskatError::Precondition("no upper fluid in a one-phase domain".into())
            })?,
        };
        Self::from_strip(strip, *eta.height.grid(), config)
    }

    pub fn from_strip(strip: StripMap, grid: PeriodicGrid, config: EllipticSolveConfig) -> Result<Self> {
        config.validate()?;
        let s = strip.side.sign();
        let n = grid.n_points();
        let total = strip.rho_z.len();
        let mut a11 = vec![0.0; total];
        let mut a12 = vec![0.0; total];
        let mut a22 = vec![0.0; total];
        for i in 0..total {
            let j = strip.rho_z[i];
            let rx = strip.rho_x[i];
            a11[i] = j;
            a12[i] = -s * rx;
            a22[i] = (1.0 + rx * rx) / j;
        }
        let precond = if config.preconditioner {
            let levels = strip.n_levels();
            let mean = |a: &[f64]| -> Vec<f64> {
                (0..levels)
                    .map(|q| a[q * n..(q + 1) * n].iter().sum::<f64>() / n as f64)
                    .collect()
            };
            let c11 = mean(&a11);
            let c22 = mean(&a22);
            let nyq = grid.nyquist();
            let mut facs = Vec::with_capacity(nyq + 1);
            for k in 0..=nyq {
                let xi = if k == nyq { 0.0 } else { grid.xi(k as i64) };
                let m = strip.mesh.mode_matrix(xi * xi, &c11, &c22);
                facs.push(BandedCholesky::factor(&m.trailing(1))?);
            }
            Some(facs)
        } else {
            None
        };
        Ok(DnOperator {
            grid,
            config,
            strip,
            a11,
            a12,
            a22,
            precond,
        })
    }

    pub fn side(&self) -> Side {
        self.strip.side
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn strip(&self) -> &StripMap {
        &self.strip
    }

    pub fn config(&self) -> &EllipticSolveConfig {
        &self.config
    }

    pub fn n_levels(&self) -> usize {
        self.strip.n_levels()
    }

    /// Stiffness matrix applied to a full level-major array (interface level included).
    pub fn stiffness_apply(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; phi.len()];
        let mut dx = LevelDx::new(&self.grid);
        self.stiffness_into(phi, &mut out, &mut dx);
        out
    }

    fn stiffness_into(&self, phi: &[f64], out: &mut [f64], dx: &mut LevelDx) {
        let n = self.grid.n_points();
        let mesh: &ZMesh = &self.strip.mesh;
        let p = mesh.order;
        let levels = mesh.n_nodes();
        let mut gx = vec![0.0; levels * n];
        for q in 0..levels {
            dx.apply(&phi[q * n..(q + 1) * n], &mut gx[q * n..(q + 1) * n]);
        }
        let mut tx = vec![0.0; levels * n];
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut dz = vec![0.0; n];
        let mut v = vec![0.0; (p + 1) * n];
        for e in 0..mesh.n_el {
            let hl = mesh.half_len[e];
            for a in 0..=p {
                let g = e * p + a;
                dz.iter_mut().for_each(|d| *d = 0.0);
                for b in 0..=p {
                    let c = mesh.deriv[a][b] / hl;
                    let row = &phi[(e * p + b) * n..(e * p + b + 1) * n];
                    for (d, r) in dz.iter_mut().zip(row) {
                        *d += c * r;
                    }
                }
                let w = mesh.weights[a];
                let base = g * n;
                let va = &mut v[a * n..(a + 1) * n];
                for j in 0..n {
                    let i = base + j;
                    tx[i] += w * hl * (self.a11[i] * gx[i] + self.a12[i] * dz[j]);
                    va[j] = w * (self.a12[i] * gx[i] + self.a22[i] * dz[j]);
                }
            }
            for b in 0..=p {
                let row = &mut out[(e * p + b) * n..(e * p + b + 1) * n];
                for a in 0..=p {
                    let c = mesh.deriv[a][b];
                    for (o, val) in row.iter_mut().zip(&v[a * n..(a + 1) * n]) {
                        *o += c * val;
                    }
                }
            }
        }
        // x-flux contributions: Dx^T = -Dx
        for q in 0..levels {
            dx.apply(&tx[q * n..(q + 1) * n], &mut gx[q * n..(q + 1) * n]);
            for (o, t) in out[q * n..(q + 1) * n].iter_mut().zip(&gx[q * n..(q + 1) * n]) {
                *o -= t;
            }
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64], fft: &mut RealFft) {
        let n = self.grid.n_points();
        let facs = match &self.precond {
            Some(f) => f,
            None => {
                z.copy_from_slice(r);
                return;
            }
        };
        let inner = self.n_levels() - 1;
        let modes = self.grid.n_modes();
        let mut spec = vec![Complex64::new(0.0, 0.0); inner * modes];
        for q in 0..inner {
            fft.forward(&r[q * n..(q + 1) * n], &mut spec[q * modes..(q + 1) * modes]);
        }
        let mut re = vec![0.0; inner];
        let mut im = vec![0.0; inner];
        for (k, fac) in facs.iter().enumerate() {
            for q in 0..inner {
                re[q] = spec[q * modes + k].re;
                im[q] = spec[q * modes + k].im;
            }
            fac.solve(&mut re);
            fac.solve(&mut im);
            for q in 0..inner {
                spec[q * modes + k] = Complex64::new(re[q], im[q]);
            }
        }
        for q in 0..inner {
            fft.inverse(&spec[q * modes..(q + 1) * modes], &mut z[q * n..(q + 1) * n]);
        }
    }

    /// Harmonic extension of the Dirichlet data `f` into the strip.
    pub fn solve_interior(&self, f: &SpectralField) -> Result<InteriorSolution> {
        assert_eq!(f.grid(), &self.grid, "data lives on a different grid");
        let n = self.grid.n_points();
        let levels = self.n_levels();
        let mut dx = LevelDx::new(&self.grid);
        let mut fft = RealFft::new(n);
        let mut full = vec![0.0; levels * n];
        full[..n].copy_from_slice(f.values());
        let mut out = vec![0.0; levels * n];
        self.stiffness_into(&full, &mut out, &mut dx);
        let b: Vec<f64> = out[n..].iter().map(|v| -v).collect();
        let mut work_full = vec![0.0; levels * n];
        let mut work_out = vec![0.0; levels * n];
        let (x, stats) = pcg(
            &b,
            KRYLOV_MARGIN * self.config.tolerance,
            self.config.max_iterations,
            |p, ap| {
                work_full[..n].iter_mut().for_each(|v| *v = 0.0);
                work_full[n..].copy_from_slice(p);
                self.stiffness_into(&work_full, &mut work_out, &mut dx);
                ap.copy_from_slice(&work_out[n..]);
                Ok(())
            },
            |r, z| self.precondition(r, z, &mut fft),
        )?;
        full[n..].copy_from_slice(&x);
        Ok(InteriorSolution {
            phi: full,
            stats,
        })
    }

    /// `G f` computed from an interior solution.
    pub fn flux(&self, sol: &InteriorSolution) -> SpectralField {
        let n = self.grid.n_points();
        let out = self.stiffness_apply(&sol.phi);
        let s = -self.side().sign();
        let vals = out[..n].iter().map(|v| s * v).collect();
        SpectralField::from_values(self.grid, vals).expect("grid length")
    }

    /// `G^+-(eta) f`. Constants and the Nyquist mode are annihilated exactly.
    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField> {
        Ok(self.apply_with_stats(f)?.0)
    }

    pub fn apply_with_stats(&self, f: &SpectralField) -> Result<(SpectralField, SolveStats)> {
        let active = f.without_mean_and_nyquist();
        if active.max_abs() == 0.0 {
            return Ok((SpectralField::zeros(self.grid), SolveStats::default()));
        }
        let sol = self.solve_interior(&active)?;
        Ok((self.flux(&sol), sol.stats))
    }

    /// Vertical derivative `d phi / dy` on the interface, from the interior field.
    pub fn trace_dy(&self, sol: &InteriorSolution) -> SpectralField {
        let n = self.grid.n_points();
        let mesh = &self.strip.mesh;
        let hl = mesh.half_len[0];
        let s = self.side().sign();
        let mut vals = vec![0.0; n];
        for b in 0..=mesh.order {
            let c = mesh.deriv[0][b] / hl;
            for (v, p) in vals.iter_mut().zip(&sol.phi[b * n..(b + 1) * n]) {
                *v += c * p;
            }
        }
        for (j, v) in vals.iter_mut().enumerate() {
            *v /= s * self.strip.rho_z[j];
        }
        SpectralField::from_values(self.grid, vals).expect("grid length")
    }

    /// Horizontal derivative `d phi / dx` on the interface, from the interior field.
    pub fn trace_dx(&self, sol: &InteriorSolution) -> SpectralField {
        let n = self.grid.n_points();
        let f = SpectralField::from_values(self.grid, sol.phi[..n].to_vec()).expect("grid length");
        let dy = self.trace_dy(sol);
        let slope = &self.strip.rho_x[..n];
        let vals = f
            .derivative()
            .values()
            .iter()
            .zip(slope)
            .zip(dy.values())
            .map(|((fx, ex), py)| fx - ex * py)
            .collect();
        SpectralField::from_values(self.grid, vals).expect("grid length")
    }
}

/// Harmonic extension sampled on the strip, level-major.
#[derive(Clone, Debug)]
pub struct InteriorSolution {
    pub phi: Vec<f64>,
    pub stats: SolveStats,
}

/// `G^+-(eta) f` with a fresh operator.
pub fn dn_apply(
    eta: &Interface,
    dom: &DomainSpec,
    side: Side,
    f: &SpectralField,
    config: EllipticSolveConfig,
) -> Result<SpectralField> {
    DnOperator::new(eta, dom, side, config)?.apply(f)
}

/// Discrete flat-interface DN symbol `|g_k|` of a strip of the given depth for
/// `k = 0..=n/2`. Zero at `k = 0` and at the Nyquist mode, which every discrete DN
/// operator annihilates.
pub fn flat_symbols(grid: &PeriodicGrid, depth: f64, n_z: usize) -> Result<Vec<f64>> {
    let xi_max = grid.xi(grid.nyquist() as i64);
    let mesh = ZMesh::new(n_z, depth, xi_max)?;
    let c11 = vec![depth; mesh.n_nodes()];
    let c22 = vec![1.0 / depth; mesh.n_nodes()];
    let nyq = grid.nyquist();
    (0..=nyq)
        .map(|k| {
            if k == 0 || k == nyq {
                Ok(0.0)
            } else {
                let xi = grid.xi(k as i64);
                first_node_schur(&mesh.mode_matrix(xi * xi, &c11, &c22))
            }
        })
        .collect()
}

/// Both DN operators of an interface; `upper` is absent in the one-phase problem.
#[derive(Clone, Debug)]
pub struct DnPair {
    pub lower: DnOperator,
    pub upper: Option<DnOperator>,
    pub flattening_tau: f64,
}

impl DnPair {
    pub fn new(eta: &Interface, dom: &DomainSpec, config: EllipticSolveConfig) -> Result<Self> {
        config.validate()?;
        let FlatteningMap {
            tau, lower, upper, ..
        } = build_flattening_with(eta, dom, initial_tau(eta, dom), config.n_z)?;
        let grid = *eta.height.grid();
        Ok(DnPair {
            lower: DnOperator::from_strip(lower, grid, config)?,
            upper: match upper {
                Some(u) => Some(DnOperator::from_strip(u, grid, config)?),
                None => None,
            },
            flattening_tau: tau,
        })
    }

    pub fn get(&self, side: Side) -> Option<&DnOperator> {
        match side {
            Side::Lower => Some(&self.lower),
            Side::Upper => self.upper.as_ref(),
        }
    }
}

/// Boundary pressures of the transmission problem.
#[derive(Clone, Debug)]
pub struct TwoPhaseSolution {
    pub f_minus: SpectralField,
    pub f_plus: SpectralField,
    pub stats: SolveStats,
}

/// Solves `f^- - f^+ = v`, `mu^+ G^- f^- = mu^- G^+ f^+` through the Schur system
/// `(mu^+ G^- - mu^- G^+) f^- = -mu^- G^+ v`. The mean and Nyquist parts of `v`, on which
/// both operators vanish, are assigned to `f^-`.
pub fn solve_two_phase(
    ops: &DnPair,
    v: &SpectralField,
    params: &FluidParams,
) -> Result<TwoPhaseSolution> {
    if params.is_one_phase() {
        return Ok(TwoPhaseSolution {
            f_minus: v.clone(),
            f_plus: SpectralField::zeros(*v.grid()),
            stats: SolveStats::default(),
        });
    }
    let upper = ops.upper.as_ref().ok_or_else(|| {
        MuskatError::Precondition("two-phase parameters need an upper fluid domain".into())
    })?;
    let lower = &ops.lower;
    let grid = *v.grid();
    let (mu_m, mu_p) = (params.mu_minus, params.mu_plus);
    let config = lower.config;
    let inner_config = EllipticSolveConfig {
        tolerance: 0.1 * config.tolerance,
        ..config
    };
    let lower_in = DnOperator {
        config: inner_config,
        ..lower.clone()
    };
    let upper_in = DnOperator {
        config: inner_config,
        ..upper.clone()
    };
    let g_lo = flat_symbols(&grid, lower.strip.depth, config.n_z)?;
    let g_up = flat_symbols(&grid, upper.strip.depth, config.n_z)?;
    let schur_sym: Vec<f64> = g_lo
        .iter()
        .zip(&g_up)
        .map(|(a, b)| mu_p * a + mu_m * b)
        .collect();
    let active_v = v.without_mean_and_nyquist();
    // the true Schur range excludes the mean and Nyquist; inner-solve roundoff there could
    // never be removed by the preconditioner, so it is projected out of rhs and products
    let rhs = (&upper_in.apply(&active_v)? * (-mu_m)).without_mean_and_nyquist();
    let field = |x: &[f64]| SpectralField::from_values(grid, x.to_vec()).expect("grid length");
    let (x, stats) = pcg(
        rhs.values(),
        KRYLOV_MARGIN * config.tolerance,
        config.max_iterations,
        |p, ap| {
            let f = field(p);
            let a = lower_in.apply(&f)?;
            let b = upper_in.apply(&f)?;
            let s = (&(&a * mu_p) - &(&b * mu_m)).without_mean_and_nyquist();
            ap.copy_from_slice(s.values());
            Ok(())
        },
        |r, z| {
            let f = field(r);
            let c: Vec<Complex64> = f
                .half_spectrum()
                .iter()
                .zip(&schur_sym)
                .map(|(c, &s)| if s > 0.0 { c / s } else { Complex64::new(0.0, 0.0) })
                .collect();
            let out = SpectralField::from_half_spectrum(grid, c).expect("grid modes");
            z.copy_from_slice(out.values());
        },
    )?;
    let solved = field(&x).without_mean_and_nyquist();
    let f_minus = &solved + &v.mean_and_nyquist();
    let f_plus = &f_minus - v;
    Ok(TwoPhaseSolution {
        f_minus,
        f_plus,
        stats,
    })
}

/// Which of the two equivalent formulas evaluates `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LRoute {
    /// `G^- J^- f + G^+ J^+ f`.
    Sum,
    /// `((mu^+ + mu^-) / mu^-) G^- J^- f`.
    Reduced,
}

/// `L(eta) f`; in the one-phase problem this is `G^-(eta) f`.
pub fn operator_l(
    ops: &DnPair,
    f: &SpectralField,
    params: &FluidParams,
    route: LRoute,
) -> Result<SpectralField> {
    if params.is_one_phase() {
        return ops.lower.apply(f);
    }
    let sol = solve_two_phase(ops, f, params)?;
    let gm = ops.lower.apply(&sol.f_minus)?;
    match route {
        LRoute::Reduced => Ok(&gm * ((params.mu_plus + params.mu_minus) / params.mu_minus)),
        LRoute::Sum => {
            let upper = ops.upper.as_ref().expect("two-phase solve succeeded");
            let gp = upper.apply(&sol.f_plus)?;
            Ok(&gm + &gp)
        }
    }
}

/// The lift `theta(x, y) = -1/2 cutoff(z) e^{-|z| <D>} v(x)` with `z = (y - eta(x)) / h`,
/// vanishing at distance `h` from the interface.
#[derive(Clone, Debug)]
pub struct ThetaLift {
    v: SpectralField,
    eta: SpectralField,
    h: f64,
}

/// `1` on `|z| <= 1/2`, `0` on `|z| >= 1`, smooth in between.
pub fn lift_cutoff(z: f64) -> f64 {
    1.0 - smoothstep(2.0 * z.abs() - 1.0)
}

pub fn theta_lift(v: &SpectralField, eta: &Interface, h: f64) -> Result<ThetaLift> {
    if !(h.is_finite() && h > 0.0) {
        return Err(MuskatError::InvalidArgument(format!(
            "lift width must be positive, got {h}"
        )));
    }
    Ok(ThetaLift {
        v: v.clone(),
        eta: eta.height.clone(),
        h,
    })
}

impl ThetaLift {
    pub fn width(&self) -> f64 {
        self.h
    }

    /// `theta` at grid column `j` and height `y`.
    pub fn value(&self, j: usize, y: f64) -> f64 {
        let z = (y - self.eta.values()[j]) / self.h;
        if z.abs() >= 1.0 {
            return 0.0;
        }
        if z == 0.0 {
            return -0.5 * self.v.values()[j];
        }
        let grid = self.v.grid();
        let x = grid.node(j);
        let nyq = grid.nyquist();
        let mut acc = 0.0;
        for (k, c) in self.v.half_spectrum().iter().enumerate() {
            let xi = grid.xi(k as i64);
            let damp = (-z.abs() * japanese(xi)).exp();
            let phase = Complex64::new(0.0, xi * x).exp();
            let mult = if k == 0 || k == nyq { 1.0 } else { 2.0 };
            acc += mult * damp * (c * phase).re;
        }
        -0.5 * lift_cutoff(z) * acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Bottom, Top};

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::standard(n).unwrap()
    }

    fn one_phase(depth: f64) -> DomainSpec {
        DomainSpec::new(Bottom::FlatDepth(depth), Top::Vacuum, 0.25).unwrap()
    }

    #[test]
    fn flat_strip_matches_tanh() {
        let g = grid(32);
        let eta = Interface::from_field(SpectralField::zeros(g));
        let op = DnOperator::new(&eta, &one_phase(1.0), Side::Lower, Default::default()).unwrap();
        for k in 1..=8 {
            let f = SpectralField::from_fn(g, |x| (k as f64 * x).cos());
            let gf = op.apply(&f).unwrap();
            let exact = k as f64 * (k as f64).tanh();
            let got = gf.coefficient(k).re * 2.0;
            assert!((got - exact).abs() / exact < 1e-9, "k = {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn flat_preconditioner_is_exact() {
        let g = grid(32);
        let eta = Interface::from_field(SpectralField::zeros(g));
        let op = DnOperator::new(&eta, &one_phase(1.0), Side::Lower, Default::default()).unwrap();
        let f = SpectralField::from_fn(g, |x| x.sin() + 0.3 * (5.0 * x).cos());
        let (_, stats) = op.apply_with_stats(&f).unwrap();
        assert!(stats.iterations <= 1, "{stats:?}");
    }

    #[test]
    fn upper_side_sign() {
        let g = grid(32);
        let dom = DomainSpec::new(Bottom::FlatDepth(1.0), Top::FlatHeight(2.0), 0.25).unwrap();
        let eta = Interface::from_field(SpectralField::zeros(g));
        let op = DnOperator::new(&eta, &dom, Side::Upper, Default::default()).unwrap();
        let f = SpectralField::from_fn(g, |x| (3.0 * x).cos());
        let got = op.apply(&f).unwrap().coefficient(3).re * 2.0;
        let exact = -3.0 * (6.0f64).tanh();
        assert!((got - exact).abs() < 1e-9);
    }

    #[test]
    fn constants_and_nyquist_are_annihilated() {
        let g = grid(32);
        let eta = Interface::from_field(SpectralField::from_fn(g, |x| 0.1 * x.cos()));
        let op = DnOperator::new(&eta, &one_phase(1.0), Side::Lower, Default::default()).unwrap();
        let c = SpectralField::constant(g, 2.5);
        assert_eq!(op.apply(&c).unwrap().max_abs(), 0.0);
        // without the shortcut the interior solve must give the same
        let sol = op.solve_interior(&c).unwrap();
        assert!(op.flux(&sol).max_abs() < 10.0 * 1e-10 * c.l2_norm());
    }

    #[test]
    fn wavy_interface_is_symmetric_and_positive() {
        let g = grid(32);
        let eta = Interface::from_field(SpectralField::from_fn(g, |x| 0.1 * x.cos() + 0.05 * (2.0 * x).sin()));
        let op = DnOperator::new(&eta, &one_phase(1.0), Side::Lower, Default::default()).unwrap();
        let f = SpectralField::from_fn(g, |x| (2.0 * x).cos() + 0.2 * (3.0 * x).sin());
        let h = SpectralField::from_fn(g, |x| x.sin() - 0.4 * (4.0 * x).cos());
        let gf = op.apply(&f).unwrap();
        let gh = op.apply(&h).unwrap();
        let asym = (gf.inner(&h) - f.inner(&gh)).abs();
        assert!(asym < 1e-9 * f.l2_norm() * h.l2_norm(), "asymmetry {asym}");
        assert!(gf.inner(&f) > 0.0);
        assert!(gf.mean().abs() < 1e-9 * f.l2_norm());
    }

    #[test]
    fn flat_symbols_against_closed_form() {
        let g = grid(64);
        let sym = flat_symbols(&g, 1.0, 64).unwrap();
        assert_eq!(sym[0], 0.0);
        assert_eq!(sym[32], 0.0);
        for k in 1..32 {
            let exact = k as f64 * (k as f64).tanh();
            assert!((sym[k] - exact).abs() / exact < 1e-10);
        }
    }

    #[test]
    fn theta_lift_trace_and_support() {
        let g = grid(16);
        let eta = Interface::from_field(SpectralField::from_fn(g, |x| 0.1 * x.cos()));
        let v = SpectralField::from_fn(g, |x| x.sin() + 0.5 * (2.0 * x).cos());
        let lift = theta_lift(&v, &eta, 0.3).unwrap();
        for j in 0..16 {
            let y0 = eta.height.values()[j];
            assert!((lift.value(j, y0) + 0.5 * v.values()[j]).abs() < 1e-12);
            // continuous limit of the trace
            assert!((lift.value(j, y0 + 1e-12) + 0.5 * v.values()[j]).abs() < 1e-10);
            assert_eq!(lift.value(j, y0 + 0.3), 0.0);
            assert_eq!(lift.value(j, y0 - 0.31), 0.0);
        }
        let zero = theta_lift(&SpectralField::zeros(g), &eta, 0.3).unwrap();
        assert_eq!(zero.value(3, 0.05), 0.0);
        assert!(theta_lift(&v, &eta, 0.0).is_err());
    }
}
