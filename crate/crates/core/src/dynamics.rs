//! Evolution right-hand side and the stability functionals built on the DN operators.

use crate::elliptic::{
    flat_symbols, operator_l, solve_two_phase, DnPair, EllipticSolveConfig, LRoute,
};
use crate::error::{MuskatError, Result};
use crate::geometry::{curvature, DomainSpec, Interface, Side, Top};
use crate::spectral::{PeriodicGrid, SpectralField};

/// Physical constants. The one-phase problem is `mu_plus = rho_plus = 0`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluidParams {
    pub mu_minus: f64,
    pub mu_plus: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub gravity: f64,
    pub surface_tension: f64,
}

impl FluidParams {
    pub fn new(
        mu_minus: f64,
        mu_plus: f64,
        rho_minus: f64,
        rho_plus: f64,
        gravity: f64,
        surface_tension: f64,
    ) -> Result<Self> {
        let p = FluidParams {
            mu_minus,
            mu_plus,
            rho_minus,
            rho_plus,
            gravity,
            surface_tension,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn one_phase(mu: f64, rho: f64, gravity: f64, surface_tension: f64) -> Result<Self> {
        Self::new(mu, 0.0, rho, 0.0, gravity, surface_tension)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu_minus,
            self.mu_plus,
            self.rho_minus,
            self.rho_plus,
            self.gravity,
            self.surface_tension,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(MuskatError::Validation("fluid parameters must be finite".into()));
        }
        if !(self.mu_minus > 0.0) || self.mu_plus < 0.0 {
            return Err(MuskatError::Validation(format!(
                "viscosities need mu- > 0 and mu+ >= 0, got mu- = {}, mu+ = {}",
                self.mu_minus, self.mu_plus
            )));
        }
        if !(self.rho_minus > 0.0) || self.rho_plus < 0.0 {
            return Err(MuskatError::Validation(format!(
                "densities need rho- > 0 and rho+ >= 0, got rho- = {}, rho+ = {}",
                self.rho_minus, self.rho_plus
            )));
        }
        if self.rho_plus >= self.rho_minus {
            return Err(MuskatError::Validation(format!(
                "stable regime requires rho- > rho+, got rho- = {}, rho+ = {}",
                self.rho_minus, self.rho_plus
            )));
        }
        if !(self.gravity > 0.0) {
            return Err(MuskatError::Validation(format!(
                "gravity must be positive, got {}",
                self.gravity
            )));
        }
        if self.surface_tension < 0.0 {
            return Err(MuskatError::Validation(format!(
                "surface tension must be nonnegative, got {}",
                self.surface_tension
            )));
        }
        if self.mu_plus == 0.0 && self.rho_plus != 0.0 {
            return Err(MuskatError::Validation(
                "a vacuum upper phase (mu+ = 0) must also have rho+ = 0".into(),
            ));
        }
        Ok(())
    }

    pub fn is_one_phase(&self) -> bool {
        self.mu_plus == 0.0
    }

    /// Reduced gravity `g (rho- - rho+)`.
    pub fn reduced_gravity(&self) -> f64 {
        self.gravity * (self.rho_minus - self.rho_plus)
    }

    pub fn with_surface_tension(mut self, s: f64) -> Result<Self> {
        self.surface_tension = s;
        self.validate()?;
        Ok(self)
    }
}

/// Rayleigh-Taylor function with its grid infimum.
#[derive(Clone, Debug)]
pub struct RtReport {
    pub field: SpectralField,
    pub infimum: f64,
}

/// The Muskat problem on a given domain and elliptic resolution.
#[derive(Clone, Debug)]
pub struct MuskatModel {
    pub params: FluidParams,
    pub domain: DomainSpec,
    pub elliptic: EllipticSolveConfig,
}

impl MuskatModel {
    pub fn new(params: FluidParams, domain: DomainSpec, elliptic: EllipticSolveConfig) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        elliptic.validate()?;
        match (params.is_one_phase(), domain.top) {
            (true, Top::Vacuum) => {}
            (true, _) => {
                return Err(MuskatError::Validation(
                    "one-phase parameters need a vacuum top".into(),
                ))
            }
            (false, Top::Vacuum) => {
                return Err(MuskatError::Validation(
                    "two-phase parameters need an upper fluid layer".into(),
                ))
            }
            _ => {}
        }
        Ok(MuskatModel {
            params,
            domain,
            elliptic,
        })
    }

    pub fn with_surface_tension(&self, s: f64) -> Result<Self> {
        Ok(MuskatModel {
            params: self.params.with_surface_tension(s)?,
            ..self.clone()
        })
    }

    /// DN operators of `eta`; fails if the interface is too close to a wall.
    pub fn operators(&self, eta: &Interface) -> Result<DnPair> {
        DnPair::new(eta, &self.domain, self.elliptic)
    }

    /// `L(eta) f`.
    pub fn operator_l(&self, ops: &DnPair, f: &SpectralField) -> Result<SpectralField> {
        operator_l(ops, f, &self.params, LRoute::Reduced)
    }

    pub fn rayleigh_taylor(&self, eta: &Interface) -> Result<RtReport> {
        let ops = self.operators(eta)?;
        rayleigh_taylor(&ops, eta, &self.params)
    }

    /// `-(1 / (mu+ + mu-)) L(eta) (g' eta + s H(eta))`.
    pub fn evolution_rhs(&self, eta: &Interface) -> Result<SpectralField> {
        let ops = self.operators(eta)?;
        self.evolution_rhs_with(&ops, eta)
    }

    pub fn evolution_rhs_with(&self, ops: &DnPair, eta: &Interface) -> Result<SpectralField> {
        let p = &self.params;
        let mut forcing = &eta.height * p.reduced_gravity();
        if p.surface_tension > 0.0 {
            forcing = &forcing + &(&curvature(eta) * p.surface_tension);
        }
        let l = self.operator_l(ops, &forcing)?;
        Ok(&l * (-1.0 / (p.mu_plus + p.mu_minus)))
    }

    /// Flat-interface symbol `L_0(k)` of the discrete operator for `k = 0..=n/2`.
    pub fn flat_l_symbol(&self, grid: &PeriodicGrid) -> Result<Vec<f64>> {
        let len = grid.length();
        let lower = self
            .domain
            .strip_depth(Side::Lower, len)
            .expect("lower strip always present");
        let g_lo = flat_symbols(grid, lower, self.elliptic.n_z)?;
        if self.params.is_one_phase() {
            return Ok(g_lo);
        }
        let upper = self
            .domain
            .strip_depth(Side::Upper, len)
            .expect("two-phase model has an upper strip");
        let g_up = flat_symbols(grid, upper, self.elliptic.n_z)?;
        let (mm, mp) = (self.params.mu_minus, self.params.mu_plus);
        Ok(g_lo
            .iter()
            .zip(&g_up)
            .map(|(&a, &b)| {
                let den = mm * b + mp * a;
                if den > 0.0 {
                    (mm + mp) * a * b / den
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Linear decay rate `L_0(k) (g' + s xi^2) / (mu+ + mu-)` for `k = 0..=n/2`.
    pub fn linear_rates(&self, grid: &PeriodicGrid) -> Result<Vec<f64>> {
        let l0 = self.flat_l_symbol(grid)?;
        let p = &self.params;
        Ok(l0
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let xi = grid.xi(k as i64);
                l * (p.reduced_gravity() + p.surface_tension * xi * xi) / (p.mu_plus + p.mu_minus)
            })
            .collect())
    }
}

/// `B f = <eta_x>^{-2} (eta_x f_x + G f)`.
pub fn operator_b(
    ops: &DnPair,
    eta: &Interface,
    f: &SpectralField,
    side: Side,
) -> Result<SpectralField> {
    let op = ops
        .get(side)
        .ok_or_else(|| MuskatError::Precondition("no fluid on the requested side".into()))?;
    let gf = op.apply(f)?;
    Ok(combine_b(eta, f, &gf))
}

fn combine_b(eta: &Interface, f: &SpectralField, gf: &SpectralField) -> SpectralField {
    let ex = eta.height.derivative();
    let fx = f.derivative();
    let vals = ex
        .values()
        .iter()
        .zip(fx.values())
        .zip(gf.values())
        .map(|((e, d), g)| (e * d + g) / (1.0 + e * e))
        .collect();
    SpectralField::from_values(*f.grid(), vals).expect("grid length")
}

/// `V f = f_x - eta_x B f`.
pub fn operator_v(
    ops: &DnPair,
    eta: &Interface,
    f: &SpectralField,
    side: Side,
) -> Result<SpectralField> {
    let b = operator_b(ops, eta, f, side)?;
    let ex = eta.height.derivative();
    let fx = f.derivative();
    let vals = fx
        .values()
        .iter()
        .zip(ex.values())
        .zip(b.values())
        .map(|((d, e), b)| d - e * b)
        .collect();
    Ok(SpectralField::from_values(*f.grid(), vals).expect("grid length"))
}

/// `RT(eta) = 1 - (B^- J^- eta - B^+ J^+ eta)`.
pub fn rayleigh_taylor(ops: &DnPair, eta: &Interface, params: &FluidParams) -> Result<RtReport> {
    let sol = solve_two_phase(ops, &eta.height, params)?;
    let mut jump = operator_b(ops, eta, &sol.f_minus, Side::Lower)?;
    if !params.is_one_phase() {
        let up = operator_b(ops, eta, &sol.f_plus, Side::Upper)?;
        jump = &jump - &up;
    }
    let one = SpectralField::constant(*eta.height.grid(), 1.0);
    let field = &one - &jump;
    let infimum = field.min();
    Ok(RtReport { field, infimum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Bottom;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::standard(n).unwrap()
    }

    fn one_phase_model(s: f64) -> MuskatModel {
        let params = FluidParams::one_phase(1.0, 1.0, 1.0, s).unwrap();
        let dom = DomainSpec::new(Bottom::Infinite, Top::Vacuum, 0.5).unwrap();
        MuskatModel::new(params, dom, EllipticSolveConfig::default()).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(FluidParams::new(1.0, 1.0, 1.0, 2.0, 1.0, 0.0).is_err());
        assert!(FluidParams::new(1.0, 0.0, 1.0, 0.5, 1.0, 0.0).is_err());
        assert!(FluidParams::new(0.0, 1.0, 2.0, 1.0, 1.0, 0.0).is_err());
        assert!(FluidParams::new(1.0, 1.0, 2.0, 1.0, 1.0, -1.0).is_err());
        let p = FluidParams::new(1.0, 1e-8, 2.0, 0.0, 9.8, 0.1).unwrap();
        assert!(!p.is_one_phase());
        assert!((p.reduced_gravity() - 19.6).abs() < 1e-12);
        let err = FluidParams::new(1.0, 1.0, 1.0, 1.5, 1.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("stable regime"));
    }

    #[test]
    fn flat_interface_is_steady() {
        let m = one_phase_model(0.1);
        let eta = Interface::from_field(SpectralField::zeros(grid(32)));
        assert_eq!(m.evolution_rhs(&eta).unwrap().max_abs(), 0.0);
        let rt = m.rayleigh_taylor(&eta).unwrap();
        assert!(rt.field.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn b_and_v_on_flat_interface() {
        let m = one_phase_model(0.0);
        let g = grid(32);
        let eta = Interface::from_field(SpectralField::zeros(g));
        let ops = m.operators(&eta).unwrap();
        let f = SpectralField::from_fn(g, |x| (3.0 * x).cos());
        let b = operator_b(&ops, &eta, &f, Side::Lower).unwrap();
        let want = &f * 3.0;
        for (a, w) in b.values().iter().zip(want.values()) {
            assert!((a - w).abs() < 1e-9);
        }
        let v = operator_v(&ops, &eta, &f, Side::Lower).unwrap();
        let fx = f.derivative();
        for (a, w) in v.values().iter().zip(fx.values()) {
            assert!((a - w).abs() < 1e-12);
        }
        let c = SpectralField::constant(g, 1.7);
        assert_eq!(operator_v(&ops, &eta, &c, Side::Lower).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn linear_response_of_single_mode() {
        let g = grid(64);
        let m = one_phase_model(0.05);
        let k = 2.0;
        for eps in [1e-4, 1e-3] {
            let eta = Interface::from_field(SpectralField::from_fn(g, |x| eps * (k * x).cos()));
            let rhs = m.evolution_rhs(&eta).unwrap();
            let rate = k * (1.0 + 0.05 * k * k);
            let want = &eta.height * (-rate);
            let dev = (&rhs - &want).l2_norm() / want.l2_norm();
            assert!(dev <= 5.0 * eps, "eps {eps}: relative deviation {dev}");
        }
    }

    #[test]
    fn flat_l_symbol_two_phase() {
        let g = grid(32);
        let params = FluidParams::new(2.0, 0.5, 2.0, 1.0, 1.0, 0.0).unwrap();
        let dom = DomainSpec::new(Bottom::Infinite, Top::Infinite, 0.5).unwrap();
        let m = MuskatModel::new(params, dom, EllipticSolveConfig::default()).unwrap();
        let l0 = m.flat_l_symbol(&g).unwrap();
        for k in 1..16 {
            assert!((l0[k] - k as f64).abs() < 1e-9);
        }
    }
}
