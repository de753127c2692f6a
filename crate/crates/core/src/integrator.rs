//! Integrating-factor Runge-Kutta time stepping with step-doubling error control.
//!
//! Per Fourier mode the flat-interface rate `sigma_k` is integrated exactly; the remainder
//! `N(eta) = rhs(eta) + sigma eta` is advanced with Heun's method on the filtered variable:
//!
//! ```text
//! eta*    = E (eta + dt N(eta))
//! eta_new = E (eta + dt/2 N(eta)) + dt/2 N(eta*),      E = exp(-sigma dt)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::dynamics::{MuskatModel, RtReport};
use crate::error::{MuskatError, Result};
use crate::geometry::{separation, Interface};
use crate::spectral::{PeriodicGrid, SpectralField};

/// Well-posedness monitors of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Monitors {
    pub inf_rt: f64,
    pub separation: f64,
    pub energy: f64,
    pub mean: f64,
    /// `(sigma, |eta|_{H^sigma})` for every tracked index.
    pub norms: Vec<(f64, f64)>,
}

/// Right-hand side and optional RT report at one interface.
pub struct Evaluation {
    pub rhs: SpectralField,
    pub rt: Option<RtReport>,
}

/// A model the integrator can advance.
pub trait EvolutionModel: Sync {
    /// Exactly integrated decay rate per mode `k = 0..=n/2`.
    fn linear_rates(&self, grid: &PeriodicGrid) -> Result<Vec<f64>>;

    /// `d eta / dt`, plus the RT function when `with_rt` is set.
    fn evaluate(&self, eta: &Interface, with_rt: bool) -> Result<Evaluation>;

    /// Distance to physical walls (`+inf` without walls).
    fn separation(&self, eta: &Interface) -> f64;

    /// `(g'/2) |eta|^2 + s int (<eta_x> - 1)`.
    fn energy(&self, eta: &Interface) -> f64;
}

pub(crate) fn energy_of(eta: &Interface, reduced_gravity: f64, surface_tension: f64) -> f64 {
    let h = &eta.height;
    let dx = h.grid().spacing();
    let l2 = h.values().iter().map(|v| v * v).sum::<f64>() * dx;
    let arc: f64 = h
        .derivative()
        .values()
        .iter()
        .map(|u| u * u / ((1.0 + u * u).sqrt() + 1.0))
        .sum::<f64>()
        * dx;
    0.5 * reduced_gravity * l2 + surface_tension * arc
}

impl EvolutionModel for MuskatModel {
    fn linear_rates(&self, grid: &PeriodicGrid) -> Result<Vec<f64>> {
        MuskatModel::linear_rates(self, grid)
    }

    fn evaluate(&self, eta: &Interface, with_rt: bool) -> Result<Evaluation> {
        let ops = self.operators(eta)?;
        let rhs = self.evolution_rhs_with(&ops, eta)?;
        let rt = if with_rt {
            Some(crate::dynamics::rayleigh_taylor(&ops, eta, &self.params)?)
        } else {
            None
        };
        Ok(Evaluation { rhs, rt })
    }

    fn separation(&self, eta: &Interface) -> f64 {
        separation(eta, &self.domain)
    }

    fn energy(&self, eta: &Interface) -> f64 {
        energy_of(eta, self.params.reduced_gravity(), self.params.surface_tension)
    }
}

/// The flat-interface linearization of a [`MuskatModel`]: `d eta / dt = -sigma(D) eta`.
/// Monitors are still evaluated with the full model.
#[derive(Clone, Debug)]
pub struct LinearizedModel {
    pub base: MuskatModel,
}

impl EvolutionModel for LinearizedModel {
    fn linear_rates(&self, grid: &PeriodicGrid) -> Result<Vec<f64>> {
        self.base.linear_rates(grid)
    }

    fn evaluate(&self, eta: &Interface, with_rt: bool) -> Result<Evaluation> {
        let grid = *eta.height.grid();
        let rates = self.base.linear_rates(&grid)?;
        let coeffs = eta
            .height
            .half_spectrum()
            .iter()
            .zip(&rates)
            .map(|(c, r)| c * -r)
            .collect();
        let rhs = SpectralField::from_half_spectrum(grid, coeffs)?;
        let rt = if with_rt {
            Some(self.base.rayleigh_taylor(eta)?)
        } else {
            None
        };
        Ok(Evaluation { rhs, rt })
    }

    fn separation(&self, eta: &Interface) -> f64 {
        separation(eta, &self.base.domain)
    }

    fn energy(&self, eta: &Interface) -> f64 {
        EvolutionModel::energy(&self.base, eta)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// Per-step relative error target of the step-doubling controller.
    pub tolerance: f64,
    /// RT threshold `a_min`.
    pub rt_min: f64,
    /// Separation threshold `h_min`.
    pub separation_min: f64,
    pub tracked_sigmas: Vec<f64>,
    /// Times the integrator lands on exactly (besides `t_end`).
    pub forced_times: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_init: 1e-3,
            dt_min: 1e-12,
            dt_max: 0.1,
            t_end: 0.05,
            tolerance: 1e-6,
            rt_min: 0.1,
            separation_min: 0.05,
            tracked_sigmas: vec![3.0, 2.0, 1.0],
            forced_times: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(MuskatError::Validation(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.dt_init, "dt_init")?;
        pos(self.dt_min, "dt_min")?;
        pos(self.dt_max, "dt_max")?;
        pos(self.t_end, "t_end")?;
        pos(self.tolerance, "tolerance")?;
        pos(self.rt_min, "rt_min")?;
        pos(self.separation_min, "separation_min")?;
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(MuskatError::Validation(format!(
                "need dt_min <= dt_init <= dt_max, got {} <= {} <= {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if self.forced_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(MuskatError::Validation("forced times must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub eta: Interface,
    pub monitors: Monitors,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// RT or separation fell below its threshold; the series stops at the last valid state.
    HypothesisBreach { t: f64, reason: String },
}

#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub states: Vec<SimState>,
    /// Step that produced each state; 0 for the initial state.
    pub dts: Vec<f64>,
    pub status: RunStatus,
    pub rejected_steps: usize,
}

impl TimeSeries {
    pub fn last(&self) -> &SimState {
        self.states.last().expect("series holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// State recorded at exactly time `t`, if any.
    pub fn at(&self, t: f64) -> Option<&SimState> {
        self.states.iter().find(|s| s.t == t)
    }
}

/// Monitors of `eta` given its RT report.
pub fn monitors(
    model: &dyn EvolutionModel,
    eta: &Interface,
    rt: &RtReport,
    sigmas: &[f64],
) -> Monitors {
    Monitors {
        inf_rt: rt.infimum,
        separation: model.separation(eta),
        energy: model.energy(eta),
        mean: eta.height.mean(),
        norms: sigmas
            .iter()
            .map(|&s| (s, eta.height.sobolev_norm(s)))
            .collect(),
    }
}

fn check_monitors(m: &Monitors, cfg: &SimConfig, factor: f64) -> Option<String> {
    if !(m.inf_rt > factor * cfg.rt_min) {
        return Some(format!(
            "inf RT = {:.6e} not above {:.3e}",
            m.inf_rt,
            factor * cfg.rt_min
        ));
    }
    if !(m.separation > factor * cfg.separation_min) {
        return Some(format!(
            "separation = {:.6e} not above {:.3e}",
            m.separation,
            factor * cfg.separation_min
        ));
    }
    None
}

struct Stepper<'a> {
    model: &'a dyn EvolutionModel,
    grid: PeriodicGrid,
    rates: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a dyn EvolutionModel, grid: PeriodicGrid) -> Result<Self> {
        let rates = model.linear_rates(&grid)?;
        Ok(Stepper { model, grid, rates })
    }

    /// `N(eta) = rhs + sigma eta` in half-spectrum form.
    fn remainder(&self, eta: &SpectralField, rhs: &SpectralField) -> Vec<Complex64> {
        rhs.half_spectrum()
            .iter()
            .zip(eta.half_spectrum())
            .zip(&self.rates)
            .map(|((r, e), s)| r + e * s)
            .collect()
    }

    fn field(&self, c: Vec<Complex64>) -> Interface {
        Interface::from_field(SpectralField::from_half_spectrum(self.grid, c).expect("grid modes"))
    }

    /// One Heun step from `eta` whose remainder `n1` is already known.
    fn step(&self, eta: &Interface, n1: &[Complex64], dt: f64, reg: f64) -> Result<Interface> {
        let e: Vec<f64> = self.rates.iter().map(|s| (-s * dt).exp()).collect();
        let c0 = eta.height.half_spectrum();
        let pred: Vec<Complex64> = c0
            .iter()
            .zip(n1)
            .zip(&e)
            .map(|((c, n), e)| (c + n * dt) * e)
            .collect();
        let pred = Interface::new(
            SpectralField::from_half_spectrum(self.grid, pred)?,
            reg,
        );
        let n2 = self.remainder(&pred.height, &self.model.evaluate(&pred, false)?.rhs);
        let out: Vec<Complex64> = c0
            .iter()
            .zip(n1)
            .zip(&n2)
            .zip(&e)
            .map(|(((c, a), b), e)| (c + a * (0.5 * dt)) * e + b * (0.5 * dt))
            .collect();
        let mut next = self.field(out);
        next.regularity = reg;
        Ok(next)
    }
}

/// Advances `state` by exactly `dt` with one integrating-factor Heun step and recomputes
/// the monitors. Fails with a monitor breach if RT or separation drops below threshold.
pub fn imex_step(
    state: &SimState,
    dt: f64,
    model: &dyn EvolutionModel,
    cfg: &SimConfig,
) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(MuskatError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let stepper = Stepper::new(model, *state.eta.height.grid())?;
    let ev = model.evaluate(&state.eta, false)?;
    let n1 = stepper.remainder(&state.eta.height, &ev.rhs);
    let eta = stepper.step(&state.eta, &n1, dt, state.eta.regularity)?;
    let rt = model.evaluate(&eta, true)?.rt.expect("requested");
    let m = monitors(model, &eta, &rt, &cfg.tracked_sigmas);
    let t = state.t + dt;
    if let Some(reason) = check_monitors(&m, cfg, 1.0) {
        return Err(MuskatError::MonitorBreach { t, reason });
    }
    Ok(SimState {
        t,
        eta,
        monitors: m,
    })
}

/// Initial state with its monitors, without threshold checks.
pub fn initial_state(
    eta0: &Interface,
    model: &dyn EvolutionModel,
    cfg: &SimConfig,
) -> Result<SimState> {
    let rt = model.evaluate(eta0, true)?.rt.expect("requested");
    Ok(SimState {
        t: 0.0,
        eta: eta0.clone(),
        monitors: monitors(model, eta0, &rt, &cfg.tracked_sigmas),
    })
}

/// Adaptive integration to `cfg.t_end`, landing exactly on every forced time.
pub fn integrate(eta0: &Interface, model: &dyn EvolutionModel, cfg: &SimConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let grid = *eta0.height.grid();
    let stepper = Stepper::new(model, grid)?;
    let first = model.evaluate(eta0, true)?;
    let rt = first.rt.as_ref().expect("requested");
    let m0 = monitors(model, eta0, rt, &cfg.tracked_sigmas);
    if let Some(reason) = check_monitors(&m0, cfg, 2.0) {
        return Err(MuskatError::Precondition(format!(
            "initial data lacks the required margin: {reason}"
        )));
    }
    let mut stops: Vec<f64> = cfg
        .forced_times
        .iter()
        .copied()
        .filter(|&t| t < cfg.t_end)
        .collect();
    stops.push(cfg.t_end);
    stops.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    stops.dedup();

    let reg = eta0.regularity;
    let mut series = TimeSeries {
        states: vec![SimState {
            t: 0.0,
            eta: eta0.clone(),
            monitors: m0,
        }],
        dts: vec![0.0],
        status: RunStatus::Completed,
        rejected_steps: 0,
    };
    let mut eta = eta0.clone();
    let mut n1 = stepper.remainder(&eta.height, &first.rhs);
    let mut t = 0.0;
    let mut dt_proposal = cfg.dt_init;
    let mut next_stop = 0;
    let mut last_err = 0.0;
    while next_stop < stops.len() {
        let target = stops[next_stop];
        let gap = target - t;
        // land exactly on the stop; avoid leaving a sliver behind
        let (dt, lands) = if dt_proposal >= gap * (1.0 - 1e-12) {
            (gap, true)
        } else if dt_proposal > 0.5 * gap {
            (0.5 * gap, false)
        } else {
            (dt_proposal, false)
        };
        if dt < cfg.dt_min && !(lands && gap < cfg.dt_min) {
            return Err(MuskatError::DtUnderflow {
                t,
                dt,
                dt_min: cfg.dt_min,
                error_estimate: last_err,
            });
        }
        let big = stepper.step(&eta, &n1, dt, reg)?;
        let half = stepper.step(&eta, &n1, 0.5 * dt, reg)?;
        let mid_rhs = model.evaluate(&half, false)?.rhs;
        let n_mid = stepper.remainder(&half.height, &mid_rhs);
        let small = stepper.step(&half, &n_mid, 0.5 * dt, reg)?;
        let scale = eta.height.l2_norm().max(small.height.l2_norm());
        let diff = (&big.height - &small.height).l2_norm();
        let err = if scale > 0.0 { diff / scale } else { 0.0 };
        last_err = err;
        if !err.is_finite() {
            return Err(MuskatError::Numerical(format!(
                "non-finite step error at t = {t}, dt = {dt}"
            )));
        }
        let factor = if err > 0.0 {
            (0.9 * (cfg.tolerance / err).powf(1.0 / 3.0)).clamp(0.25, 2.0)
        } else {
            2.0
        };
        if err > cfg.tolerance {
            series.rejected_steps += 1;
            dt_proposal = (dt * factor).min(cfg.dt_max);
            if dt_proposal < cfg.dt_min {
                return Err(MuskatError::DtUnderflow {
                    t,
                    dt: dt_proposal,
                    error_estimate: err,
                    dt_min: cfg.dt_min,
                });
            }
            continue;
        }
        let t_new = if lands { target } else { t + dt };
        let ev = model.evaluate(&small, true)?;
        let rt = ev.rt.as_ref().expect("requested");
        let m = monitors(model, &small, rt, &cfg.tracked_sigmas);
        if let Some(reason) = check_monitors(&m, cfg, 1.0) {
            series.status = RunStatus::HypothesisBreach { t: t_new, reason };
            return Ok(series);
        }
        if !lands || dt >= 0.5 * dt_proposal {
            dt_proposal = (dt * factor).min(cfg.dt_max);
        }
        t = t_new;
        n1 = stepper.remainder(&small.height, &ev.rhs);
        eta = small;
        series.states.push(SimState {
            t,
            eta: eta.clone(),
            monitors: m,
        });
        series.dts.push(dt);
        if lands {
            next_stop += 1;
        }
    }
    Ok(series)
}

/// Writes one CSV row per recorded state:
/// `t,dt,inf_rt,separation,energy,mean,norm_h<sigma>...`.
pub fn write_series_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let mut out = String::from("t,dt,inf_rt,separation,energy,mean");
    if let Some(s) = series.states.first() {
        for (sigma, _) in &s.monitors.norms {
            out.push_str(&format!(",norm_h{sigma}"));
        }
    }
    out.push('\n');
    for (s, dt) in series.states.iter().zip(&series.dts) {
        let m = &s.monitors;
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            s.t, dt, m.inf_rt, m.separation, m.energy, m.mean
        ));
        for (_, v) in &m.norms {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| MuskatError::io(path, e))
}

/// Binary snapshot: `n_points` (u64), `length` (f64), `t` (f64), then `(re, im)` of the
/// coefficients `k = 0..=n/2`, all little-endian.
pub fn write_snapshot(state: &SimState, path: &Path) -> Result<()> {
    let h = &state.eta.height;
    let mut buf = Vec::with_capacity(24 + 16 * h.half_spectrum().len());
    buf.extend_from_slice(&(h.grid().n_points() as u64).to_le_bytes());
    buf.extend_from_slice(&h.grid().length().to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    for c in h.half_spectrum() {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| MuskatError::io(path, e))?;
    f.write_all(&buf).map_err(|e| MuskatError::io(path, e))
}

/// Reads a snapshot written by [`write_snapshot`], returning `(t, eta)`.
pub fn read_snapshot(path: &Path) -> Result<(f64, SpectralField)> {
    let bytes = fs::read(path).map_err(|e| MuskatError::io(path, e))?;
    let bad = || MuskatError::Validation(format!("{} is not a snapshot file", path.display()));
    if bytes.len() < 24 {
        return Err(bad());
    }
    let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().expect("8 bytes") };
    let n = u64::from_le_bytes(word(0)) as usize;
    let length = f64::from_le_bytes(word(8));
    let t = f64::from_le_bytes(word(16));
    let grid = PeriodicGrid::new(n, length)?;
    if bytes.len() != 24 + 16 * grid.n_modes() {
        return Err(bad());
    }
    let coeffs = (0..grid.n_modes())
        .map(|k| {
            let o = 24 + 16 * k;
            Complex64::new(f64::from_le_bytes(word(o)), f64::from_le_bytes(word(o + 8)))
        })
        .collect();
    Ok((t, SpectralField::from_half_spectrum(grid, coeffs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FluidParams;
    use crate::elliptic::EllipticSolveConfig;
    use crate::geometry::{Bottom, DomainSpec, Top};

    fn model(n_z: usize, s: f64) -> MuskatModel {
        let params = FluidParams::one_phase(1.0, 1.0, 1.0, s).unwrap();
        let dom = DomainSpec::new(Bottom::Infinite, Top::Vacuum, 0.5).unwrap();
        MuskatModel::new(
            params,
            dom,
            EllipticSolveConfig {
                n_z,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::standard(n).unwrap()
    }

    #[test]
    fn flat_state_is_preserved() {
        let m = model(32, 0.1);
        let eta = Interface::from_field(SpectralField::zeros(grid(16)));
        let cfg = SimConfig {
            t_end: 0.1,
            ..Default::default()
        };
        let s0 = initial_state(&eta, &m, &cfg).unwrap();
        let s1 = imex_step(&s0, 0.37, &m, &cfg).unwrap();
        assert_eq!(s1.eta.height.max_abs(), 0.0);
        let series = integrate(&eta, &m, &cfg).unwrap();
        assert!(series.completed());
        assert!(series.states.iter().all(|s| s.eta.height.max_abs() == 0.0));
    }

    #[test]
    fn linear_mode_decays_exactly() {
        let m = LinearizedModel { base: model(32, 0.2) };
        let g = grid(32);
        let k = 3;
        let eps = 0.01;
        let eta = Interface::from_field(SpectralField::from_fn(g, |x| eps * (k as f64 * x).cos()));
        let cfg = SimConfig::default();
        let s0 = initial_state(&eta, &m, &cfg).unwrap();
        let dt = 0.013;
        let s1 = imex_step(&s0, dt, &m, &cfg).unwrap();
        let rate = m.linear_rates(&g).unwrap()[k];
        let want = &eta.height * (-rate * dt).exp();
        let err = (&s1.eta.height - &want).max_abs();
        assert!(err < 1e-12 * eps, "{err}");
    }

    #[test]
    fn step_doubling_ratio_is_second_order() {
        let m = model(32, 0.0);
        let g = grid(32);
        let eta = Interface::from_field(SpectralField::from_fn(g, |x| 0.1 * x.cos()));
        let cfg = SimConfig {
            rt_min: 1e-3,
            ..Default::default()
        };
        let s0 = initial_state(&eta, &m, &cfg).unwrap();
        let err = |dt: f64| {
            let big = imex_step(&s0, dt, &m, &cfg).unwrap();
            let half = imex_step(&s0, 0.5 * dt, &m, &cfg).unwrap();
            let small = imex_step(&half, 0.5 * dt, &m, &cfg).unwrap();
            (&big.eta.height - &small.eta.height).l2_norm()
        };
        // local error of a second-order method scales like dt^3
        let ratio = err(0.2) / err(0.1);
        assert!((ratio - 8.0).abs() < 0.2 * 8.0, "ratio {ratio}");
    }

    #[test]
    fn forced_times_are_hit_exactly() {
        let m = model(32, 0.05);
        let g = grid(16);
        let eta = Interface::from_field(SpectralField::from_fn(g, |x| 0.05 * x.cos()));
        let cfg = SimConfig {
            t_end: 0.05,
            forced_times: vec![0.0125, 0.025, 0.0375, 0.0333],
            tolerance: 1e-5,
            ..Default::default()
        };
        let series = integrate(&eta, &m, &cfg).unwrap();
        assert!(series.completed());
        for t in [0.0125, 0.025, 0.0333, 0.0375, 0.05] {
            assert!(series.at(t).is_some(), "missing {t}");
        }
        for w in series.states.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    /// Rises uniformly at unit speed toward a wall at height 1.
    struct Drift;

    impl EvolutionModel for Drift {
        fn linear_rates(&self, grid: &PeriodicGrid) -> Result<Vec<f64>> {
            Ok(vec![0.0; grid.n_modes()])
        }
        fn evaluate(&self, eta: &Interface, with_rt: bool) -> Result<Evaluation> {
            let g = *eta.height.grid();
            Ok(Evaluation {
                rhs: SpectralField::constant(g, 1.0),
                rt: with_rt.then(|| RtReport {
                    field: SpectralField::constant(g, 1.0),
                    infimum: 1.0,
                }),
            })
        }
        fn separation(&self, eta: &Interface) -> f64 {
            1.0 - eta.height.max()
        }
        fn energy(&self, _: &Interface) -> f64 {
            0.0
        }
    }

    #[test]
    fn breach_is_reported_as_status() {
        let eta = Interface::from_field(SpectralField::zeros(grid(16)));
        let cfg = SimConfig {
            separation_min: 0.3,
            t_end: 2.0,
            ..Default::default()
        };
        let series = integrate(&eta, &Drift, &cfg).unwrap();
        match &series.status {
            RunStatus::HypothesisBreach { t, reason } => {
                assert!(reason.contains("separation"), "{reason}");
                assert!(*t > 0.69 && *t < 0.8, "{t}");
            }
            s => panic!("expected breach, got {s:?}"),
        }
        assert!(series.last().monitors.separation > 0.3);
        let strict = SimConfig {
            separation_min: 0.6,
            ..cfg
        };
        assert!(matches!(integrate(&eta, &Drift, &strict), Err(MuskatError::Precondition(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let g = grid(16);
        let eta = Interface::from_field(SpectralField::from_fn(g, |x| 0.1 * x.cos() + 0.02 * (3.0 * x).sin()));
        let m = model(32, 0.0);
        let cfg = SimConfig::default();
        let s = initial_state(&eta, &m, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("snap.bin");
        write_snapshot(&s, &p).unwrap();
        let (t, back) = read_snapshot(&p).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(back.half_spectrum(), eta.height.half_spectrum());
        let csv = dir.path().join("series.csv");
        let series = TimeSeries {
            states: vec![s],
            dts: vec![0.0],
            status: RunStatus::Completed,
            rejected_steps: 0,
        };
        write_series_csv(&series, &csv).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert!(text.starts_with("t,dt,inf_rt,separation,energy,mean,norm_h3,norm_h2,norm_h1\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
