//! Interface geometry: curvature, principal symbols, separation and the strip flattening.

use num_complex::Complex64;

use crate::error::{MuskatError, Result};
use crate::sem::ZMesh;
use crate::spectral::{japanese, RealFft, SpectralField};

/// Interface height `eta(x)` with the Sobolev index it is tracked in.
#[derive(Clone, Debug, PartialEq)]
pub struct Interface {
    pub height: SpectralField,
    pub regularity: f64,
}

impl Interface {
    pub fn new(height: SpectralField, regularity: f64) -> Self {
        Interface { height, regularity }
    }

    /// Interface tracked in `H^3`.
    pub fn from_field(height: SpectralField) -> Self {
        Interface {
            height,
            regularity: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Bottom {
    FlatDepth(f64),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Top {
    FlatHeight(f64),
    Infinite,
    /// One-phase problem: nothing above the interface.
    Vacuum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    /// `-1` below the interface, `+1` above.
    pub fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }
}

/// Fluid domain boundaries. Infinite layers are truncated at a flat artificial wall
/// carrying a homogeneous Neumann condition.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainSpec {
    pub bottom: Bottom,
    pub top: Top,
    /// Separation threshold `h`.
    pub separation: f64,
    /// Depth of the artificial wall; defaults to 8 grid lengths.
    pub artificial_depth: Option<f64>,
}

impl DomainSpec {
    pub fn new(bottom: Bottom, top: Top, separation: f64) -> Result<Self> {
        let d = DomainSpec {
            bottom,
            top,
            separation,
            artificial_depth: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_artificial_depth(mut self, depth: f64) -> Result<Self> {
        self.artificial_depth = Some(depth);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(MuskatError::Validation(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.separation, "separation h")?;
        if let Bottom::FlatDepth(d) = self.bottom {
            positive(d, "bottom depth")?;
        }
        if let Top::FlatHeight(d) = self.top {
            positive(d, "top height")?;
        }
        if let Some(d) = self.artificial_depth {
            positive(d, "artificial depth")?;
        }
        Ok(())
    }

    pub fn is_one_phase(&self) -> bool {
        self.top == Top::Vacuum
    }

    pub fn artificial_depth(&self, length: f64) -> f64 {
        self.artificial_depth.unwrap_or(8.0 * length)
    }

    /// Depth of the computational strip on `side`; `None` for the vacuum side.
    pub fn strip_depth(&self, side: Side, length: f64) -> Option<f64> {
        match side {
            Side::Lower => Some(match self.bottom {
                Bottom::FlatDepth(d) => d,
                Bottom::Infinite => self.artificial_depth(length),
            }),
            Side::Upper => match self.top {
                Top::FlatHeight(d) => Some(d),
                Top::Infinite => Some(self.artificial_depth(length)),
                Top::Vacuum => None,
            },
        }
    }

    /// Fails unless every physical wall is farther than `h` from the interface.
    pub fn check_separation(&self, eta: &Interface) -> Result<()> {
        let sep = separation(eta, self);
        if sep > self.separation {
            Ok(())
        } else {
            Err(MuskatError::Precondition(format!(
                "interface within {sep:.4e} of a wall, separation threshold is {}",
                self.separation
            )))
        }
    }
}

/// `H(eta) = -d/dx (eta_x / <eta_x>)`, with the nonlinearity dealiased.
pub fn curvature(eta: &Interface) -> SpectralField {
    let slope = eta.height.derivative();
    let flux = slope.map_dealiased(|u| u / (1.0 + u * u).sqrt());
    -&flux.derivative()
}

/// `lambda(x, xi)`; in one dimension this is exactly `|xi|`.
pub fn symbol_lambda(eta: &Interface, xi: f64) -> SpectralField {
    SpectralField::constant(*eta.height.grid(), xi.abs())
}

/// `l(x, xi) = <eta_x>^{-3} lambda^2`.
pub fn symbol_l(eta: &Interface, xi: f64) -> SpectralField {
    let slope = eta.height.derivative();
    let xi2 = xi * xi;
    slope.map(|u| xi2 * (1.0 + u * u).powf(-1.5))
}

/// Smallest vertical distance from the interface to a physical wall; `+inf` without walls.
pub fn separation(eta: &Interface, dom: &DomainSpec) -> f64 {
    let mut sep = f64::INFINITY;
    if let Bottom::FlatDepth(d) = dom.bottom {
        sep = sep.min(eta.height.min() + d);
    }
    if let Top::FlatHeight(d) = dom.top {
        sep = sep.min(d - eta.height.max());
    }
    sep
}

/// Flattening of one strip, sampled at the grid nodes `x_j` and the strip's vertical
/// nodes `zeta_q = |z|`. Arrays are level-major: index `q * n + j`.
///
/// With `zeta = |z|` and `s = -1` below, `+1` above,
/// `rho = (1 - zeta^2) e^{-tau zeta <D>} eta + s depth zeta - zeta (1 - zeta) eta`, so the outer
/// wall sits at `rho = s depth` and `rho(x, 0) = eta`. The last term is the reference-surface
/// interpolation: at `tau = 0` it cancels the `-2 zeta eta` slope of the bump, leaving
/// `d rho/dz = depth - s eta`, the local layer thickness.
#[derive(Clone, Debug)]
pub struct StripMap {
    pub side: Side,
    pub depth: f64,
    pub tau: f64,
    pub mesh: ZMesh,
    pub n_x: usize,
    pub rho: Vec<f64>,
    /// `d rho / dz`, positive for an admissible map.
    pub rho_z: Vec<f64>,
    pub rho_x: Vec<f64>,
}

impl StripMap {
    pub fn min_jacobian(&self) -> f64 {
        self.rho_z.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn n_levels(&self) -> usize {
        self.mesh.n_nodes()
    }

    fn build(eta: &SpectralField, side: Side, depth: f64, tau: f64, n_z: usize) -> Result<Self> {
        let grid = *eta.grid();
        let n = grid.n_points();
        let xi_max = grid.xi(grid.nyquist() as i64);
        let mesh = ZMesh::new(n_z, depth, xi_max)?;
        let levels = mesh.n_nodes();
        let s = side.sign();
        let coeffs = eta.half_spectrum();
        let mut fft = RealFft::new(n);
        let mut rho = vec![0.0; levels * n];
        let mut rho_z = vec![0.0; levels * n];
        let mut rho_x = vec![0.0; levels * n];
        let mut smooth = vec![Complex64::new(0.0, 0.0); coeffs.len()];
        let mut buf_a = vec![0.0; n];
        let mut buf_b = vec![0.0; n];
        let mut buf_c = vec![0.0; n];
        let nyq = grid.nyquist();
        let eta_v = eta.values();
        let eta_x = eta.derivative();
        let eta_x = eta_x.values();
        for (q, &zeta) in mesh.nodes.iter().enumerate() {
            let bump = 1.0 - zeta * zeta;
            for (k, c) in coeffs.iter().enumerate() {
                smooth[k] = c * (-tau * zeta * japanese(grid.xi(k as i64))).exp();
            }
            fft.inverse(&smooth, &mut buf_a);
            let weighted: Vec<Complex64> = smooth
                .iter()
                .enumerate()
                .map(|(k, c)| c * japanese(grid.xi(k as i64)))
                .collect();
            fft.inverse(&weighted, &mut buf_b);
            let slope: Vec<Complex64> = smooth
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == nyq {
                        Complex64::new(0.0, 0.0)
                    } else {
                        c * Complex64::new(0.0, grid.xi(k as i64))
                    }
                })
                .collect();
            fft.inverse(&slope, &mut buf_c);
            for j in 0..n {
                let i = q * n + j;
                let ramp = zeta * (1.0 - zeta);
                rho[i] = bump * buf_a[j] + s * depth * zeta - ramp * eta_v[j];
                // d/dz with z = s * zeta
                rho_z[i] = depth
                    - s * (2.0 * zeta * buf_a[j] + bump * tau * buf_b[j] + (1.0 - 2.0 * zeta) * eta_v[j]);
                rho_x[i] = bump * buf_c[j] - ramp * eta_x[j];
            }
        }
        // the interface level is eta itself, exactly
        rho[..n].copy_from_slice(eta.values());
        Ok(StripMap {
            side,
            depth,
            tau,
            mesh,
            n_x: n,
            rho,
            rho_z,
            rho_x,
        })
    }
}

/// Flattening of every strip bordering the interface.
#[derive(Clone, Debug)]
pub struct FlatteningMap {
    pub tau: f64,
    pub retries: usize,
    pub lower: StripMap,
    pub upper: Option<StripMap>,
}

impl FlatteningMap {
    pub fn strip(&self, side: Side) -> Option<&StripMap> {
        match side {
            Side::Lower => Some(&self.lower),
            Side::Upper => self.upper.as_ref(),
        }
    }

    pub fn min_jacobian(&self) -> f64 {
        let lo = self.lower.min_jacobian();
        self.upper.as_ref().map_or(lo, |u| lo.min(u.min_jacobian()))
    }
}

/// Maximum number of times `tau` is halved before the flattening is declared impossible.
pub const FLATTENING_RETRIES: usize = 40;

/// Starting smoothing rate `min(1, h / (12 |eta|_{H^s}))`.
pub fn initial_tau(eta: &Interface, dom: &DomainSpec) -> f64 {
    let norm = eta.height.sobolev_norm(eta.regularity);
    if norm == 0.0 {
        1.0
    } else {
        (dom.separation / (12.0 * norm)).min(1.0)
    }
}

/// Flattening on the default vertical resolution (64 nodes per strip).
pub fn build_flattening(eta: &Interface, dom: &DomainSpec, tau: f64) -> Result<FlatteningMap> {
    build_flattening_with(eta, dom, tau, 64)
}

/// Builds the strip maps, halving `tau` until `d rho/dz >= h/12` on every sample.
pub fn build_flattening_with(
    eta: &Interface,
    dom: &DomainSpec,
    tau: f64,
    n_z: usize,
) -> Result<FlatteningMap> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(MuskatError::InvalidArgument(format!(
            "flattening rate must be positive, got {tau}"
        )));
    }
    dom.check_separation(eta)?;
    let length = eta.height.grid().length();
    let required = dom.separation / 12.0;
    let mut tau = tau;
    let mut worst = f64::NEG_INFINITY;
    for retries in 0..=FLATTENING_RETRIES {
        let lower = StripMap::build(
            &eta.height,
            Side::Lower,
            dom.strip_depth(Side::Lower, length).expect("lower strip exists"),
            tau,
            n_z,
        )?;
        let upper = match dom.strip_depth(Side::Upper, length) {
            Some(d) => Some(StripMap::build(&eta.height, Side::Upper, d, tau, n_z)?),
            None => None,
        };
        let map = FlatteningMap {
            tau,
            retries,
            lower,
            upper,
        };
        worst = map.min_jacobian();
        if worst >= required {
            return Ok(map);
        }
        tau *= 0.5;
    }
    Err(MuskatError::Flattening {
        retries: FLATTENING_RETRIES,
        min_jacobian: worst,
        required,
    })
}
