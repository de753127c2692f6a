//! Convergence sweeps over the surface-tension coefficient, rate fits and report files,
//! plus the configuration format and the self-check suites behind the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dynamics::{FluidParams, MuskatModel};
use crate::elliptic::{
    dn_apply, operator_l, solve_two_phase, DnPair, EllipticSolveConfig, LRoute,
};
use crate::error::{MuskatError, Result};
use crate::geometry::{Bottom, DomainSpec, Interface, Side, Top};
use crate::integrator::{integrate, EvolutionModel, LinearizedModel, SimConfig, TimeSeries};
use crate::paracalc::{
    garding_check, operator_order_fit, paralin_residual, CutoffPair, ParaMatrix, ParaSymbol,
    ParalinCase, ORDER_PROBES,
};
use crate::spectral::{PeriodicGrid, SpectralField};

/// Header of `sweep.csv`, bit-exact.
pub const SWEEP_HEADER: &str = "s_coeff,sup_Hsm1,l2t_Hsmhalf,sup_Hsm2,l2t_Hsm3half,completed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    OnePhase,
    TwoPhase,
}

/// Initial interface: a sum of cosine modes `amp * cos(k x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub modes: Vec<(i64, f64)>,
}

impl InitialData {
    pub fn preset(name: &str) -> Option<Self> {
        let modes = match name {
            "headline" => vec![(1, 0.1), (3, 0.02)],
            "single" => vec![(1, 0.1)],
            "flat" => Vec::new(),
            _ => return None,
        };
        Some(InitialData { modes })
    }

    pub fn interface(&self, grid: PeriodicGrid, regularity: f64) -> Interface {
        Interface::new(SpectralField::cosine_modes(grid, &self.modes), regularity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Evolve the flat-interface linearization instead of the full model.
    pub linear: bool,
    pub params: FluidParams,
    pub domain: DomainSpec,
    pub elliptic: EllipticSolveConfig,
    pub sim: SimConfig,
    pub n_points: usize,
    /// Sobolev index `s` of the data.
    pub regularity: f64,
    pub initial: InitialData,
    /// Positive, strictly decreasing; the `s = 0` reference is implicit.
    pub sweep: Vec<f64>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// The headline one-phase configuration.
    pub fn headline() -> Self {
        let sweep = (2..=8).map(|p| 0.5f64.powi(p)).collect();
        RunConfig {
            scenario: Scenario::OnePhase,
            linear: false,
            params: FluidParams::one_phase(1.0, 1.0, 1.0, 0.0).expect("valid"),
            domain: DomainSpec::new(Bottom::Infinite, Top::Vacuum, 0.5).expect("valid"),
            elliptic: EllipticSolveConfig::default(),
            sim: SimConfig {
                separation_min: 0.5,
                ..SimConfig::default()
            },
            n_points: 256,
            regularity: 3.0,
            initial: InitialData::preset("headline").expect("preset"),
            sweep,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.domain.validate()?;
        self.elliptic.validate()?;
        self.sim.validate()?;
        PeriodicGrid::standard(self.n_points)?;
        if !(self.regularity > 1.5) {
            return Err(MuskatError::Validation(format!(
                "regularity s must exceed 3/2, got {}",
                self.regularity
            )));
        }
        match (self.scenario, self.params.is_one_phase()) {
            (Scenario::OnePhase, false) => {
                return Err(MuskatError::Validation("one-phase scenario needs mu+ = rho+ = 0".into()))
            }
            (Scenario::TwoPhase, true) => {
                return Err(MuskatError::Validation("two-phase scenario needs mu+ > 0".into()))
            }
            _ => {}
        }
        check_sweep(&self.sweep).map_err(MuskatError::Validation)?;
        if let Some((k, _)) = self.initial.modes.iter().find(|(k, _)| *k < 0 || *k as usize >= self.n_points / 2) {
            return Err(MuskatError::Validation(format!("initial mode {k} not below n/2")));
        }
        Ok(())
    }

    pub fn grid(&self) -> PeriodicGrid {
        PeriodicGrid::standard(self.n_points).expect("validated grid")
    }

    pub fn eta0(&self) -> Interface {
        self.initial.interface(self.grid(), self.regularity)
    }

    /// Model at surface tension `s`.
    pub fn model(&self, s: f64) -> Result<Box<dyn EvolutionModel + Send>> {
        let base = MuskatModel::new(self.params.with_surface_tension(s)?, self.domain, self.elliptic)?;
        Ok(if self.linear {
            Box::new(LinearizedModel { base })
        } else {
            Box::new(base)
        })
    }
}

fn check_sweep(s: &[f64]) -> std::result::Result<(), String> {
    if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err("sweep values must be positive".into());
    }
    if s.windows(2).any(|w| w[1] >= w[0]) {
        return Err("sweep values must be strictly decreasing".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------------------
// config format

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Doc {
    sections: BTreeMap<String, Section>,
    end_line: usize,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("scenario", &["kind", "linear"]),
    ("fluid", &["mu_minus", "mu_plus", "rho_minus", "rho_plus", "gravity", "surface_tension"]),
    ("domain", &["bottom", "top", "h", "artificial_depth"]),
    ("grid", &["n", "regularity"]),
    ("initial", &["preset", "modes"]),
    ("time", &["t_end", "dt_init", "dt_min", "dt_max", "tolerance", "rt_min", "separation_min"]),
    ("elliptic", &["n_z", "tolerance", "max_iterations", "preconditioner"]),
    ("sweep", &["s_values", "s_powers"]),
    ("output", &["dir"]),
];

fn cfg_err(line: usize, message: impl Into<String>) -> MuskatError {
    MuskatError::Config {
        line,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Doc> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut end_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        end_line = line;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, "unterminated section header"))?
                .trim()
                .to_string();
            if !KNOWN.iter().any(|(n, _)| *n == name) {
                return Err(cfg_err(line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(&name) {
                return Err(cfg_err(line, format!("duplicate section [{name}]")));
            }
            sections.insert(
                name.clone(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected `key = value`, got `{s}`")))?;
        let key = key.trim().to_string();
        let sec_name = current
            .as_ref()
            .ok_or_else(|| cfg_err(line, format!("key `{key}` outside any section")))?;
        let allowed = KNOWN.iter().find(|(n, _)| n == sec_name).expect("known").1;
        if !allowed.contains(&key.as_str()) {
            return Err(cfg_err(line, format!("unknown key `{key}` in [{sec_name}]")));
        }
        let sec = sections.get_mut(sec_name).expect("inserted");
        if sec.entries.contains_key(&key) {
            return Err(cfg_err(line, format!("duplicate key `{key}`")));
        }
        sec.entries.insert(
            key,
            Entry {
                value: value.trim().to_string(),
                line,
                used: false,
            },
        );
    }
    Ok(Doc { sections, end_line })
}

impl Doc {
    fn raw(&mut self, sec: &str, key: &str) -> Option<(String, usize)> {
        let e = self.sections.get_mut(sec)?.entries.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn section_line(&self, sec: &str) -> usize {
        self.sections.get(sec).map_or(self.end_line, |s| s.line)
    }

    fn has(&self, sec: &str, key: &str) -> bool {
        self.sections.get(sec).is_some_and(|s| s.entries.contains_key(key))
    }

    fn required(&mut self, sec: &str, key: &str) -> Result<(String, usize)> {
        let line = self.section_line(sec);
        self.raw(sec, key)
            .ok_or_else(|| cfg_err(line, format!("missing required key `{key}` in [{sec}]")))
    }

    fn parse<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
        v.parse::<T>()
            .map_err(|_| cfg_err(line, format!("invalid value `{v}` for `{key}`")))
    }

    fn f64_req(&mut self, sec: &str, key: &str) -> Result<(f64, usize)> {
        let (v, line) = self.required(sec, key)?;
        Ok((Self::parse(&v, line, key)?, line))
    }

    fn f64_or(&mut self, sec: &str, key: &str, default: f64) -> Result<(f64, usize)> {
        match self.raw(sec, key) {
            Some((v, line)) => Ok((Self::parse(&v, line, key)?, line)),
            None => Ok((default, self.section_line(sec))),
        }
    }

    fn positive(&mut self, sec: &str, key: &str, default: f64) -> Result<f64> {
        let (v, line) = self.f64_or(sec, key, default)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(cfg_err(line, format!("`{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn nonneg(&mut self, sec: &str, key: &str, default: f64) -> Result<f64> {
        let (v, line) = self.f64_or(sec, key, default)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(cfg_err(line, format!("`{key}` must be nonnegative, got {v}")));
        }
        Ok(v)
    }

    fn usize_or(&mut self, sec: &str, key: &str, default: usize) -> Result<(usize, usize)> {
        match self.raw(sec, key) {
            Some((v, line)) => Ok((Self::parse(&v, line, key)?, line)),
            None => Ok((default, self.section_line(sec))),
        }
    }

    fn bool_or(&mut self, sec: &str, key: &str, default: bool) -> Result<bool> {
        match self.raw(sec, key) {
            Some((v, line)) => Self::parse(&v, line, key),
            None => Ok(default),
        }
    }
}

fn parse_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|t| Doc::parse::<f64>(t.trim(), line, key))
        .collect()
}

/// Parses the `[section]` / `key = value` configuration text. Every error carries the line
/// it refers to; a missing key refers to its section header.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut d = tokenize(text)?;

    let (kind, kind_line) = d.required("scenario", "kind")?;
    let scenario = match kind.as_str() {
        "one-phase" => Scenario::OnePhase,
        "two-phase" => Scenario::TwoPhase,
        other => return Err(cfg_err(kind_line, format!("unknown scenario `{other}`"))),
    };
    let linear = d.bool_or("scenario", "linear", false)?;

    let fluid_line = d.section_line("fluid");
    let (mu_minus, _) = d.f64_req("fluid", "mu_minus")?;
    let (rho_minus, _) = d.f64_req("fluid", "rho_minus")?;
    let (mu_plus, rho_plus) = match scenario {
        Scenario::OnePhase => (d.f64_or("fluid", "mu_plus", 0.0)?.0, d.f64_or("fluid", "rho_plus", 0.0)?.0),
        Scenario::TwoPhase => (d.f64_req("fluid", "mu_plus")?.0, d.f64_req("fluid", "rho_plus")?.0),
    };
    let (gravity, _) = d.f64_or("fluid", "gravity", 1.0)?;
    let surface_tension = d.nonneg("fluid", "surface_tension", 0.0)?;
    let params = FluidParams::new(mu_minus, mu_plus, rho_minus, rho_plus, gravity, surface_tension)
        .map_err(|e| cfg_err(fluid_line, e.to_string()))?;

    let h = d.positive("domain", "h", 0.5)?;
    let bottom = match d.raw("domain", "bottom") {
        None => Bottom::Infinite,
        Some((v, _)) if v == "infinite" => Bottom::Infinite,
        Some((v, line)) => Bottom::FlatDepth(Doc::parse(&v, line, "bottom")?),
    };
    let default_top = match scenario {
        Scenario::OnePhase => "vacuum",
        Scenario::TwoPhase => "infinite",
    };
    let (top_raw, top_line) = d
        .raw("domain", "top")
        .unwrap_or_else(|| (default_top.to_string(), 0));
    let top = match top_raw.as_str() {
        "vacuum" => Top::Vacuum,
        "infinite" => Top::Infinite,
        v => Top::FlatHeight(Doc::parse(v, top_line, "top")?),
    };
    let domain_line = d.section_line("domain");
    let mut domain = DomainSpec::new(bottom, top, h).map_err(|e| cfg_err(domain_line, e.to_string()))?;
    if d.has("domain", "artificial_depth") {
        let a = d.positive("domain", "artificial_depth", 1.0)?;
        domain = domain.with_artificial_depth(a).map_err(|e| cfg_err(domain_line, e.to_string()))?;
    }
    if (scenario == Scenario::OnePhase) != (top == Top::Vacuum) {
        return Err(cfg_err(
            if top_line > 0 { top_line } else { domain_line },
            "one-phase runs need top = vacuum, two-phase runs an upper layer",
        ));
    }

    let (n_points, n_line) = d.usize_or("grid", "n", 256)?;
    if n_points < 8 || n_points % 2 != 0 {
        return Err(cfg_err(n_line, format!("grid n must be even and >= 8, got {n_points}")));
    }
    let (regularity, s_line) = d.f64_or("grid", "regularity", 3.0)?;
    if !(regularity > 1.5) {
        return Err(cfg_err(s_line, format!("regularity must exceed 3/2, got {regularity}")));
    }

    let initial = match (d.raw("initial", "preset"), d.raw("initial", "modes")) {
        (Some(_), Some((_, line))) => {
            return Err(cfg_err(line, "give either `preset` or `modes`, not both"))
        }
        (Some((name, line)), None) => InitialData::preset(&name)
            .ok_or_else(|| cfg_err(line, format!("unknown preset `{name}`")))?,
        (None, Some((list, line))) => {
            let mut modes = Vec::new();
            for item in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let (k, a) = item
                    .split_once(':')
                    .ok_or_else(|| cfg_err(line, format!("mode `{item}` is not `k:amplitude`")))?;
                let k: i64 = Doc::parse(k.trim(), line, "modes")?;
                if k < 0 || k as usize >= n_points / 2 {
                    return Err(cfg_err(line, format!("mode {k} must lie in 0..n/2")));
                }
                modes.push((k, Doc::parse(a.trim(), line, "modes")?));
            }
            InitialData { modes }
        }
        (None, None) => InitialData::preset("headline").expect("preset"),
    };

    let defaults = SimConfig::default();
    let sim = SimConfig {
        t_end: d.positive("time", "t_end", defaults.t_end)?,
        dt_init: d.positive("time", "dt_init", defaults.dt_init)?,
        dt_min: d.positive("time", "dt_min", defaults.dt_min)?,
        dt_max: d.positive("time", "dt_max", defaults.dt_max)?,
        tolerance: d.positive("time", "tolerance", defaults.tolerance)?,
        rt_min: d.positive("time", "rt_min", defaults.rt_min)?,
        separation_min: d.positive("time", "separation_min", h)?,
        ..defaults
    };
    let time_line = d.section_line("time");
    sim.validate().map_err(|e| cfg_err(time_line, e.to_string()))?;

    let ed = EllipticSolveConfig::default();
    let (n_z, nz_line) = d.usize_or("elliptic", "n_z", ed.n_z)?;
    let (max_iterations, _) = d.usize_or("elliptic", "max_iterations", ed.max_iterations)?;
    let elliptic = EllipticSolveConfig {
        n_z,
        tolerance: d.positive("elliptic", "tolerance", ed.tolerance)?,
        max_iterations,
        preconditioner: d.bool_or("elliptic", "preconditioner", ed.preconditioner)?,
    };
    elliptic.validate().map_err(|e| cfg_err(nz_line, e.to_string()))?;

    let sweep = match (d.raw("sweep", "s_values"), d.raw("sweep", "s_powers")) {
        (Some(_), Some((_, line))) => {
            return Err(cfg_err(line, "give either `s_values` or `s_powers`, not both"))
        }
        (Some((v, line)), None) => {
            let s = parse_list(&v, line, "s_values")?;
            check_sweep(&s).map_err(|m| cfg_err(line, m))?;
            s
        }
        (None, Some((v, line))) => {
            let (a, b) = v
                .split_once("..")
                .ok_or_else(|| cfg_err(line, format!("`s_powers` must read `a..b`, got `{v}`")))?;
            let a: i32 = Doc::parse(a.trim(), line, "s_powers")?;
            let b: i32 = Doc::parse(b.trim(), line, "s_powers")?;
            if a > b {
                return Err(cfg_err(line, "s_powers range must be increasing"));
            }
            (a..=b).map(|p| 0.5f64.powi(p)).collect()
        }
        (None, None) => (2..=8).map(|p| 0.5f64.powi(p)).collect(),
    };

    let output_dir = PathBuf::from(d.raw("output", "dir").map_or("out".to_string(), |v| v.0));

    // keys are checked against KNOWN when read, so anything unread is a logic slip
    for sec in d.sections.values() {
        if let Some(e) = sec.entries.values().find(|e| !e.used) {
            return Err(cfg_err(e.line, "key not applicable to this scenario"));
        }
    }

    let cfg = RunConfig {
        scenario,
        linear,
        params,
        domain,
        elliptic,
        sim,
        n_points,
        regularity,
        initial,
        sweep,
        output_dir,
    };
    cfg.validate().map_err(|e| cfg_err(1, e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| MuskatError::io(path, e))?;
    parse_config_str(&text)
}

// ---------------------------------------------------------------------------------------
// rate fits

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval for the slope.
    pub interval: (f64, f64),
    pub points: usize,
    /// Set when no fit is possible; the numeric fields are then NaN.
    pub degenerate: Option<String>,
}

impl RateFit {
    fn degenerate(reason: impl Into<String>, points: usize) -> Self {
        RateFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            interval: (f64::NAN, f64::NAN),
            points,
            degenerate: Some(reason.into()),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }
}

/// Least squares on `(log s, log diff)` with a Student-t 95% slope interval.
pub fn fit_rate(pairs: &[(f64, f64)]) -> RateFit {
    if pairs.len() < 3 {
        return RateFit::degenerate(format!("{} points, need at least 3", pairs.len()), pairs.len());
    }
    if pairs.iter().any(|(s, d)| !(*s > 0.0 && *d > 0.0 && s.is_finite() && d.is_finite())) {
        return RateFit::degenerate("zero or non-finite values", pairs.len());
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, sse) = crate::paracalc::least_squares(&xs, &ys);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return RateFit::degenerate("all s values equal", pairs.len());
    }
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    RateFit {
        slope,
        intercept,
        interval: (slope - t * se, slope + t * se),
        points: pairs.len(),
        degenerate: None,
    }
}

// ---------------------------------------------------------------------------------------
// sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s_coeff: f64,
    pub sup_hsm1: f64,
    pub l2t_hsmhalf: f64,
    pub sup_hsm2: f64,
    pub l2t_hsm3half: f64,
    /// Sup-in-time difference in `H^{s-3/2}`, between the two sup columns.
    pub sup_hsm3half: f64,
    /// `sqrt(s) |eta_s|_{L^2_t H^{s+3/2}}`.
    pub uniform_bound: f64,
    pub completed: bool,
    /// Why the run stopped early, if it did.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub sup_hsm1: RateFit,
    pub l2t_hsmhalf: RateFit,
    pub sup_hsm2: RateFit,
    pub l2t_hsm3half: RateFit,
    pub sup_hsm3half: RateFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<SweepRow>,
    pub fits: Fits,
    /// Largest `s` below which every diff column is nonincreasing as `s` decreases.
    pub knee: Option<f64>,
    /// max / min of `uniform_bound` over the completed rows.
    pub uniform_bound_ratio: f64,
    pub regularity: f64,
    pub n_points: usize,
    pub reference_steps: usize,
    pub config: RunConfig,
}

fn trapezoid(ts: &[f64], vals: &[f64]) -> f64 {
    ts.windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Row of a completed run against the reference, on the reference snapshot times.
fn compare(s: f64, run: &TimeSeries, reference: &TimeSeries, reg: f64) -> Result<SweepRow> {
    let mut ts = Vec::new();
    let mut d = [Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let sig = [reg - 1.0, reg - 0.5, reg - 2.0, reg - 1.5];
    for r in &reference.states {
        let other = run.at(r.t).ok_or_else(|| {
            MuskatError::Numerical(format!("run at s = {s} has no snapshot at t = {}", r.t))
        })?;
        let diff = &other.eta.height - &r.eta.height;
        ts.push(r.t);
        for (slot, sg) in d.iter_mut().zip(sig) {
            slot.push(diff.sobolev_norm(sg));
        }
    }
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let l2t = |v: &[f64]| trapezoid(&ts, &v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    let run_ts = run.times();
    let top: Vec<f64> = run
        .states
        .iter()
        .map(|st| st.eta.height.sobolev_norm(reg + 1.5).powi(2))
        .collect();
    Ok(SweepRow {
        s_coeff: s,
        sup_hsm1: sup(&d[0]),
        l2t_hsmhalf: l2t(&d[1]),
        sup_hsm2: sup(&d[2]),
        l2t_hsm3half: l2t(&d[3]),
        sup_hsm3half: sup(&d[3]),
        uniform_bound: s.sqrt() * trapezoid(&run_ts, &top).sqrt(),
        completed: true,
        failure: None,
    })
}

fn incomplete(s: f64, why: String) -> SweepRow {
    SweepRow {
        s_coeff: s,
        sup_hsm1: f64::NAN,
        l2t_hsmhalf: f64::NAN,
        sup_hsm2: f64::NAN,
        l2t_hsm3half: f64::NAN,
        sup_hsm3half: f64::NAN,
        uniform_bound: f64::NAN,
        completed: false,
        failure: Some(why),
    }
}

fn column_fit(rows: &[SweepRow], col: impl Fn(&SweepRow) -> f64) -> RateFit {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.completed)
        .map(|r| (r.s_coeff, col(r)))
        .collect();
    fit_rate(&pairs)
}

/// Rows sorted by decreasing `s`; returns the largest `s` from which every column is
/// nonincreasing all the way down.
fn knee(rows: &[SweepRow]) -> Option<f64> {
    let done: Vec<&SweepRow> = rows.iter().filter(|r| r.completed).collect();
    let cols = |r: &SweepRow| [r.sup_hsm1, r.l2t_hsmhalf, r.sup_hsm2, r.l2t_hsm3half];
    let mut start = done.len().checked_sub(1)?;
    while start > 0 {
        let (a, b) = (cols(done[start - 1]), cols(done[start]));
        if a.iter().zip(&b).all(|(x, y)| y <= x) {
            start -= 1;
        } else {
            break;
        }
    }
    Some(done[start].s_coeff)
}

/// Time tolerance of every sweep run: `1e-3` times the smallest `s`.
pub fn sweep_time_tolerance(cfg: &RunConfig) -> f64 {
    cfg.sweep
        .last()
        .map_or(cfg.sim.tolerance, |s| 1e-3 * s)
}

/// The `s = 0` reference and one run per sweep value, compared on shared snapshot times.
pub fn run_convergence_sweep(cfg: &RunConfig, threads: usize) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let eta0 = cfg.eta0();
    let t_end = cfg.sim.t_end;
    let tol = sweep_time_tolerance(cfg);
    let ref_cfg = SimConfig {
        tolerance: tol,
        forced_times: vec![0.25 * t_end, 0.5 * t_end, 0.75 * t_end],
        ..cfg.sim.clone()
    };
    let reference = integrate(&eta0, cfg.model(0.0)?.as_ref(), &ref_cfg)?;
    if let crate::integrator::RunStatus::HypothesisBreach { t, reason } = &reference.status {
        return Err(MuskatError::MonitorBreach {
            t: *t,
            reason: format!("reference run (s = 0): {reason}"),
        });
    }
    let run_cfg = SimConfig {
        forced_times: reference.times().into_iter().filter(|t| *t > 0.0).collect(),
        ..ref_cfg
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| MuskatError::InvalidArgument(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cfg.sweep
            .par_iter()
            .map(|&s| {
                let model = match cfg.model(s) {
                    Ok(m) => m,
                    Err(e) => return incomplete(s, e.to_string()),
                };
                match integrate(&eta0, model.as_ref(), &run_cfg) {
                    Ok(run) if run.completed() => compare(s, &run, &reference, cfg.regularity)
                        .unwrap_or_else(|e| incomplete(s, e.to_string())),
                    Ok(run) => incomplete(s, format!("{:?}", run.status)),
                    Err(e) => incomplete(s, e.to_string()),
                }
            })
            .collect()
    });
    let bounds: Vec<f64> = rows.iter().filter(|r| r.completed).map(|r| r.uniform_bound).collect();
    let uniform_bound_ratio = if bounds.is_empty() {
        f64::NAN
    } else {
        bounds.iter().copied().fold(0.0, f64::max) / bounds.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(ConvergenceReport {
        fits: Fits {
            sup_hsm1: column_fit(&rows, |r| r.sup_hsm1),
            l2t_hsmhalf: column_fit(&rows, |r| r.l2t_hsmhalf),
            sup_hsm2: column_fit(&rows, |r| r.sup_hsm2),
            l2t_hsm3half: column_fit(&rows, |r| r.l2t_hsm3half),
            sup_hsm3half: column_fit(&rows, |r| r.sup_hsm3half),
        },
        knee: knee(&rows),
        uniform_bound_ratio,
        regularity: cfg.regularity,
        n_points: cfg.n_points,
        reference_steps: reference.states.len() - 1,
        rows,
        config: cfg.clone(),
    })
}

/// `sweep.csv` contents.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{}\n",
            r.s_coeff, r.sup_hsm1, r.l2t_hsmhalf, r.sup_hsm2, r.l2t_hsm3half, r.completed
        ));
    }
    out
}

/// Parses `sweep.csv` text back into `(s, [four diffs], completed)` rows.
pub fn read_sweep_csv(text: &str) -> Result<Vec<(f64, [f64; 4], bool)>> {
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        return Err(MuskatError::Validation("sweep.csv header mismatch".into()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let bad = || MuskatError::Validation(format!("sweep.csv row {}: `{l}`", i + 1));
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok((
                num(f[0])?,
                [num(f[1])?, num(f[2])?, num(f[3])?, num(f[4])?],
                f[5].parse::<bool>().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// Writes `sweep.csv` and `fit.json` into `dir`.
pub fn emit_report(report: &ConvergenceReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MuskatError::io(dir, e))?;
    let csv = dir.join("sweep.csv");
    fs::write(&csv, sweep_csv(&report.rows)).map_err(|e| MuskatError::io(&csv, e))?;
    let json = dir.join("fit.json");
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| MuskatError::Numerical(format!("serializing report: {e}")))?;
    fs::write(&json, text).map_err(|e| MuskatError::io(&json, e))
}

// ---------------------------------------------------------------------------------------
// self-check suites

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> SuiteCheck {
    SuiteCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Elliptic checks: flat-strip symbol, symmetry and positivity on random interfaces, and the
/// two-phase jump identity.
pub fn dn_suite(seed: u64, n_points: usize) -> Result<Vec<SuiteCheck>> {
    let grid = PeriodicGrid::standard(n_points)?;
    let cfg = EllipticSolveConfig {
        n_z: 128,
        ..Default::default()
    };
    let mut out = Vec::new();

    let flat = Interface::new(SpectralField::zeros(grid), 3.0);
    let dom = DomainSpec::new(Bottom::FlatDepth(1.0), Top::Vacuum, 0.5)?;
    let mut worst: f64 = 0.0;
    for k in 1..=8i64 {
        let f = SpectralField::cosine_modes(grid, &[(k, 1.0)]);
        let g = dn_apply(&flat, &dom, Side::Lower, &f, cfg)?;
        let want = k as f64 * (k as f64).tanh();
        worst = worst.max(((g.coefficient(k).re * 2.0) - want).abs() / want);
    }
    out.push(check("flat symbol k tanh k", worst < 2.5e-4, format!("max rel err {worst:.3e}")));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inf = DomainSpec::new(Bottom::Infinite, Top::Vacuum, 0.5)?;
    let mut sym: f64 = 0.0;
    let mut neg: f64 = 0.0;
    for _ in 0..5 {
        let a: Vec<(i64, f64)> = (1..=3).map(|k| (k, rng.gen_range(-0.05..0.05))).collect();
        let eta = Interface::new(SpectralField::cosine_modes(grid, &a), 3.0);
        let f = SpectralField::cosine_modes(grid, &[(rng.gen_range(1..6), 1.0), (rng.gen_range(6..12), 0.3)]);
        let kg = rng.gen_range(1..4) as f64;
        let g = SpectralField::from_fn(grid, |x| (kg * x).sin());
        let op = crate::elliptic::DnOperator::new(&eta, &inf, Side::Lower, cfg)?;
        let (gf, gg) = (op.apply(&f)?, op.apply(&g)?);
        let scale = f.l2_norm() * g.l2_norm();
        sym = sym.max((gf.inner(&g) - gg.inner(&f)).abs() / scale);
        neg = neg.min(gf.inner(&f) / f.l2_norm().powi(2));
    }
    out.push(check("G symmetric", sym < 10.0 * cfg.tolerance, format!("max defect {sym:.3e}")));
    out.push(check("G nonnegative", neg >= -10.0 * cfg.tolerance, format!("min <Gf,f> {neg:.3e}")));

    let eta = Interface::new(SpectralField::cosine_modes(grid, &[(1, 0.1)]), 3.0);
    let two = DomainSpec::new(Bottom::Infinite, Top::Infinite, 0.5)?;
    let params = FluidParams::new(2.0, 0.5, 1.0, 0.5, 1.0, 0.0)?;
    let ops = DnPair::new(&eta, &two, cfg)?;
    let v = SpectralField::cosine_modes(grid, &[(2, 1.0), (5, 0.2)]);
    let sol = solve_two_phase(&ops, &v, &params)?;
    let jump = (&(&sol.f_minus - &sol.f_plus) - &v).max_abs();
    out.push(check("two-phase jump", jump < 1e-12, format!("|f- - f+ - v| = {jump:.3e}")));
    let l = operator_l(&ops, &v, &params, LRoute::Sum)?;
    let lr = operator_l(&ops, &v, &params, LRoute::Reduced)?;
    let agree = (&l - &lr).max_abs() / l.max_abs();
    out.push(check("L routes agree", agree < 1e-6, format!("relative gap {agree:.3e}")));
    Ok(out)
}

/// Paracalc checks on the standard test symbols at `n = 256`.
pub fn para_suite() -> Result<Vec<SuiteCheck>> {
    let grid = PeriodicGrid::standard(256)?;
    let cut = CutoffPair::default();
    let mut out = Vec::new();

    let one = ParaMatrix::build(&ParaSymbol::multiplier(grid, 0.0, |_| 1.0)?, &cut);
    let u = SpectralField::from_fn(grid, |x| 1.0 + x.cos() + 0.3 * (40.0 * x).sin());
    let gap = (&one.apply(&u)? - &u.without_mean_and_nyquist()).max_abs();
    out.push(check("T_1 = Psi(D)", gap < 1e-13, format!("max gap {gap:.3e}")));

    let a = ParaSymbol::from_fn(grid, 1.0, f64::INFINITY, |x, xi| (1.0 + 0.3 * x.cos()) * xi.abs())?;
    let b = ParaSymbol::from_fn(grid, 1.0, f64::INFINITY, |x, xi| (1.0 + 0.3 * x.sin()) * xi.abs())?;
    let ta = ParaMatrix::build(&a, &cut);
    let comp = ta
        .compose(&ParaMatrix::build(&b, &cut))
        .sub(&ParaMatrix::build(&a.product(&b)?, &cut));
    let fit = operator_order_fit(grid, &ORDER_PROBES, |u| comp.apply(u))?;
    out.push(check("T_a T_b - T_ab order", fit.order <= 1.15, format!("order {:.3}", fit.order)));
    let adj = ta.adjoint().sub(&ParaMatrix::build(&a.conj(), &cut));
    let fit = operator_order_fit(grid, &ORDER_PROBES, |u| adj.apply(u))?;
    out.push(check("T_a* - T_abar order", fit.order <= 0.15, format!("order {:.3}", fit.order)));

    let eta = Interface::new(SpectralField::cosine_modes(grid, &[(1, 0.1)]), 3.0);
    let case = ParalinCase::Dn {
        domain: DomainSpec::new(Bottom::Infinite, Top::Vacuum, 0.5)?,
        config: EllipticSolveConfig {
            n_z: 128,
            tolerance: 1e-12,
            ..Default::default()
        },
    };
    let r = paralin_residual(&eta, &SpectralField::cosine_modes(grid, &[(8, 1.0)]), &case, &cut)?;
    out.push(check(
        "DN paralinearization order",
        r.order <= 0.6,
        format!("order {} (every-probe slope {:.3})", r.order, r.fit.order),
    ));

    let g128 = PeriodicGrid::standard(128)?;
    let s = ParaSymbol::from_fn(g128, 3.0, f64::INFINITY, |x, xi| (1.0 + 0.2 * x.cos()) * xi.abs().powi(3))?;
    let rep = garding_check(&s, 0.8, 50, 11, &cut)?;
    out.push(check(
        "Garding constant stable",
        rep.stable(),
        format!("C = {:.4}, doubled {:.4}", rep.constant, rep.constant_doubled),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[scenario]\nkind = one-phase\n\n[fluid]\nmu_minus = 1\nrho_minus = 1\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.n_points, 256);
        assert_eq!(c.regularity, 3.0);
        assert_eq!(c.domain.top, Top::Vacuum);
        assert_eq!(c.sweep.len(), 7);
        assert_eq!(c.sweep[0], 0.25);
        assert_eq!(c.initial, InitialData::preset("headline").unwrap());
        assert!(!c.linear);
    }

    #[test]
    fn config_errors_carry_lines() {
        let text = format!("{MINIMAL}rho_plus = 2\n");
        match parse_config_str(&text) {
            Err(MuskatError::Config { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("stable regime requires rho- > rho+"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = format!("{MINIMAL}viscosity = 2\n");
        assert!(matches!(parse_config_str(&text), Err(MuskatError::Config { line: 7, .. })));
        let text = format!("{MINIMAL}[sweep]\ns_values = 0.1, 0.2\n");
        match parse_config_str(&text) {
            Err(MuskatError::Config { line, message }) => {
                assert_eq!(line, 8);
                assert!(message.contains("decreasing"));
            }
            other => panic!("{other:?}"),
        }
        let text = "[scenario]\nkind = one-phase\n[fluid]\nmu_minus = 1\n";
        match parse_config_str(text) {
            Err(MuskatError::Config { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("rho_minus"));
            }
            other => panic!("{other:?}"),
        }
        let text = format!("{MINIMAL}[grid]\nn = 100000000000000000000\n");
        assert!(matches!(parse_config_str(&text), Err(MuskatError::Config { line: 8, .. })));
        let text = format!("{MINIMAL}[grid]\nn = 7\n");
        assert!(matches!(parse_config_str(&text), Err(MuskatError::Config { line: 8, .. })));
        let text = format!("{MINIMAL}[time]\nt_end = -1\n");
        assert!(matches!(parse_config_str(&text), Err(MuskatError::Config { line: 8, .. })));
    }

    #[test]
    fn full_config_round_trip() {
        let text = "\
[scenario]
kind = two-phase
linear = true
[fluid]
mu_minus = 2
mu_plus = 0.5   # lighter fluid on top
rho_minus = 1
rho_plus = 0.5
gravity = 9.81
[domain]
bottom = 2.0
top = 3
h = 0.3
[grid]
n = 64
regularity = 2.5
[initial]
modes = 1:0.1, 2:-0.05
[time]
t_end = 0.1
tolerance = 1e-5
[elliptic]
n_z = 32
[sweep]
s_powers = 1..4
[output]
dir = results
";
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.scenario, Scenario::TwoPhase);
        assert!(c.linear);
        assert_eq!(c.domain.bottom, Bottom::FlatDepth(2.0));
        assert_eq!(c.domain.top, Top::FlatHeight(3.0));
        assert_eq!(c.sim.separation_min, 0.3);
        assert_eq!(c.initial.modes, vec![(1, 0.1), (2, -0.05)]);
        assert_eq!(c.sweep, vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(c.elliptic.n_z, 32);
        assert_eq!(c.output_dir, PathBuf::from("results"));
    }

    #[test]
    fn fit_rate_exact_and_degenerate() {
        let lin: Vec<(f64, f64)> = (2..=8).map(|p| (0.5f64.powi(p), 3.0 * 0.5f64.powi(p))).collect();
        let f = fit_rate(&lin);
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.interval.1 - f.interval.0 < 1e-10);
        let root: Vec<(f64, f64)> = lin.iter().map(|(s, _)| (*s, 0.7 * s.sqrt())).collect();
        assert!((fit_rate(&root).slope - 0.5).abs() < 1e-12);
        assert!(fit_rate(&lin[..2]).is_degenerate());
        let zero: Vec<(f64, f64)> = lin.iter().map(|(s, _)| (*s, 0.0)).collect();
        assert!(fit_rate(&zero).is_degenerate());
    }

    #[test]
    fn knee_finds_monotone_tail() {
        let row = |s: f64, d: f64| SweepRow {
            s_coeff: s,
            sup_hsm1: d,
            l2t_hsmhalf: d,
            sup_hsm2: d,
            l2t_hsm3half: d,
            sup_hsm3half: d,
            uniform_bound: 1.0,
            completed: true,
            failure: None,
        };
        let rows = vec![row(0.5, 1.0), row(0.25, 2.0), row(0.125, 1.0), row(0.0625, 0.5)];
        assert_eq!(knee(&rows), Some(0.25));
        assert_eq!(knee(&[]), None);
    }

    #[test]
    fn csv_header_and_rows() {
        assert_eq!(sweep_csv(&[]), format!("{SWEEP_HEADER}\n"));
        let rows: Vec<SweepRow> = (0..7)
            .map(|i| SweepRow {
                s_coeff: 0.5f64.powi(i + 2),
                sup_hsm1: 0.1 / 3.0 * i as f64,
                l2t_hsmhalf: 1e-17 * std::f64::consts::PI,
                sup_hsm2: 2.0f64.sqrt(),
                l2t_hsm3half: 123456.789,
                sup_hsm3half: 0.0,
                uniform_bound: 0.0,
                completed: i != 3,
                failure: None,
            })
            .collect();
        let text = sweep_csv(&rows);
        assert_eq!(text.lines().count(), 8);
        let back = read_sweep_csv(&text).unwrap();
        for (r, (s, d, c)) in rows.iter().zip(back) {
            assert_eq!(s, r.s_coeff);
            assert_eq!(d, [r.sup_hsm1, r.l2t_hsmhalf, r.sup_hsm2, r.l2t_hsm3half]);
            assert_eq!(c, r.completed);
        }
    }
}
