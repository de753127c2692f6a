//! DN, B and V against exact harmonic functions traced on a curved interface.
//!
//! For `phi` harmonic in the fluid with a homogeneous Neumann condition on the wall,
//! `f = phi(x, eta(x))` has `G f = phi_y - eta_x phi_x`, `B f = phi_y` and `V f = phi_x` on
//! the interface, with the normal pointing up on both sides.

use muskat_core::dynamics::{operator_b, operator_v};
use muskat_core::elliptic::{dn_apply, DnPair};
use muskat_core::{Bottom, DomainSpec, EllipticSolveConfig, Interface, PeriodicGrid, Side, SpectralField, Top};

fn grid(n: usize) -> PeriodicGrid {
    PeriodicGrid::standard(n).unwrap()
}

fn interface(g: PeriodicGrid) -> Interface {
    Interface::from_field(SpectralField::from_fn(g, |x| 0.1 * x.cos() + 0.05 * (2.0 * x).sin()))
}

/// `(phi, phi_x, phi_y)` of a harmonic mode at `(x, y)`.
type Harmonic = dyn Fn(f64, f64) -> (f64, f64, f64);

fn traces(eta: &Interface, phi: &Harmonic) -> (SpectralField, SpectralField, SpectralField, SpectralField) {
    let g = *eta.height.grid();
    let ex = eta.height.derivative();
    let (mut f, mut gn, mut px, mut py) = (vec![], vec![], vec![], vec![]);
    for (j, x) in g.nodes().into_iter().enumerate() {
        let y = eta.height.values()[j];
        let (p, dx, dy) = phi(x, y);
        f.push(p);
        gn.push(dy - ex.values()[j] * dx);
        px.push(dx);
        py.push(dy);
    }
    let field = |v| SpectralField::from_values(g, v).unwrap();
    (field(f), field(gn), field(px), field(py))
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    (a - b).max_abs() / b.max_abs()
}

#[test]
fn lower_infinite_depth_matches_decaying_modes() {
    let g = grid(64);
    let eta = interface(g);
    let dom = DomainSpec::new(Bottom::Infinite, Top::Vacuum, 0.3).unwrap();
    for k in 1..=5 {
        let k = k as f64;
        let phi = move |x: f64, y: f64| {
            let e = (k * y).exp();
            (e * (k * x).cos(), -k * e * (k * x).sin(), k * e * (k * x).cos())
        };
        let (f, want, _, _) = traces(&eta, &phi);
        let got = dn_apply(&eta, &dom, Side::Lower, &f, EllipticSolveConfig::default()).unwrap();
        // the trace carries a small mean, which G annihilates; the exact G f has zero mean
        let err = rel(&got, &want);
        assert!(err < 1e-7, "k = {k}: {err:.3e}");
    }
}

#[test]
fn lower_finite_depth_matches_cosh_modes() {
    let g = grid(64);
    let eta = interface(g);
    let depth = 1.0;
    let dom = DomainSpec::new(Bottom::FlatDepth(depth), Top::Vacuum, 0.3).unwrap();
    for k in [1.0, 2.0, 4.0] {
        let phi = move |x: f64, y: f64| {
            let (c, s) = ((k * (y + depth)).cosh(), (k * (y + depth)).sinh());
            (c * (k * x).sin(), k * c * (k * x).cos(), k * s * (k * x).sin())
        };
        let (f, want, _, _) = traces(&eta, &phi);
        let got = dn_apply(&eta, &dom, Side::Lower, &f, EllipticSolveConfig::default()).unwrap();
        let err = rel(&got, &want);
        assert!(err < 1e-7, "k = {k}: {err:.3e}");
    }
}

#[test]
fn upper_side_has_the_upward_normal() {
    let g = grid(64);
    let eta = interface(g);
    let dom = DomainSpec::new(Bottom::Infinite, Top::Infinite, 0.3).unwrap();
    for k in [1.0, 3.0] {
        let phi = move |x: f64, y: f64| {
            let e = (-k * y).exp();
            (e * (k * x).cos(), -k * e * (k * x).sin(), -k * e * (k * x).cos())
        };
        let (f, want, _, _) = traces(&eta, &phi);
        let got = dn_apply(&eta, &dom, Side::Upper, &f, EllipticSolveConfig::default()).unwrap();
        let err = rel(&got, &want);
        assert!(err < 1e-7, "k = {k}: {err:.3e}");
    }
}

#[test]
fn b_and_v_are_the_velocity_traces() {
    let g = grid(64);
    let eta = interface(g);
    let dom = DomainSpec::new(Bottom::Infinite, Top::Infinite, 0.3).unwrap();
    let ops = DnPair::new(&eta, &dom, EllipticSolveConfig::default()).unwrap();
    let k = 2.0;
    let lower = move |x: f64, y: f64| {
        let e = (k * y).exp();
        (e * (k * x).sin(), k * e * (k * x).cos(), k * e * (k * x).sin())
    };
    let upper = move |x: f64, y: f64| {
        let e = (-k * y).exp();
        (e * (k * x).sin(), k * e * (k * x).cos(), -k * e * (k * x).sin())
    };
    for (side, phi) in [(Side::Lower, &lower as &Harmonic), (Side::Upper, &upper as &Harmonic)] {
        let (f, _, px, py) = traces(&eta, phi);
        let b = operator_b(&ops, &eta, &f, side).unwrap();
        let v = operator_v(&ops, &eta, &f, side).unwrap();
        assert!(rel(&b, &py) < 1e-6, "{side:?} B: {:.3e}", rel(&b, &py));
        assert!(rel(&v, &px) < 1e-6, "{side:?} V: {:.3e}", rel(&v, &px));
    }
}

#[test]
fn flat_strip_converges_to_the_tanh_symbol() {
    let g = grid(32);
    let flat = Interface::from_field(SpectralField::zeros(g));
    let dom = DomainSpec::new(Bottom::FlatDepth(1.0), Top::Vacuum, 0.3).unwrap();
    for n_z in [8, 16, 64, 128] {
        let cfg = EllipticSolveConfig {
            n_z,
            ..Default::default()
        };
        let mut worst: f64 = 0.0;
        for k in 1..=8i64 {
            let f = SpectralField::cosine_modes(g, &[(k, 1.0)]);
            let got = 2.0 * dn_apply(&flat, &dom, Side::Lower, &f, cfg).unwrap().coefficient(k).re;
            let kf = k as f64;
            worst = worst.max((got / (kf * kf.tanh()) - 1.0).abs());
        }
        assert!(worst < 1e-3, "n_z = {n_z}: {worst:.3e}");
        if n_z >= 128 {
            assert!(worst < 2.5e-4, "n_z = {n_z}: {worst:.3e}");
        }
    }
}
