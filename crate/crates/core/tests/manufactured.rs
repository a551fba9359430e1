//! Consistency of the discrete momentum update on a manufactured 1D
//! solution. The forcing is differentiated by hand here, independently of
//! the solver's operators.

use std::f64::consts::PI;

use dns_lab_core::grid::advect_vector;
use dns_lab_core::linearized::{momentum_rhs, FrozenCoeffs, StepConfig};
use dns_lab_core::model::lame_l;
use dns_lab_core::{Boundary, Grid, Params, ScalarField, VectorField};

const ETA: f64 = 0.05;

fn params() -> Params {
    Params::new(1.3, 1.8, 0.7, 0.2, 1.4).with_rho_bar(1.0)
}

// phi = 1 + a sin(pi x) cos t, u = b cos(pi x) (1 + t)
const A: f64 = 0.2;
const B: f64 = 0.3;

fn phi(x: f64, t: f64) -> f64 {
    1.0 + A * (PI * x).sin() * t.cos()
}
fn phi_x(x: f64, t: f64) -> f64 {
    A * PI * (PI * x).cos() * t.cos()
}
fn u(x: f64, t: f64) -> f64 {
    B * (PI * x).cos() * (1.0 + t)
}
fn u_x(x: f64, t: f64) -> f64 {
    -B * PI * (PI * x).sin() * (1.0 + t)
}
fn u_xx(x: f64, t: f64) -> f64 {
    -B * PI * PI * (PI * x).cos() * (1.0 + t)
}
fn u_t(x: f64, _t: f64) -> f64 {
    B * (PI * x).cos()
}

/// Continuous momentum residual source at `(x, t)`.
fn forcing(x: f64, t: f64, p: &Params, with_advection: bool) -> f64 {
    let q = 2.0 * (p.gamma - 1.0) / (p.delta - 1.0);
    let kp = p.a * p.gamma / (p.gamma - 1.0);
    let f = phi(x, t);
    let lame = -(2.0 * p.alpha + p.beta) * u_xx(x, t);
    let coupling = 2.0 * f * phi_x(x, t) * p.delta / (p.delta - 1.0) * (2.0 * p.alpha + p.beta) * u_x(x, t);
    let adv = if with_advection { u(x, t) * u_x(x, t) } else { 0.0 };
    u_t(x, t) + adv + kp * q * f.powf(q - 1.0) * phi_x(x, t) + (f * f + ETA * ETA) * lame - coupling
}

/// Max over nodes of the one-step residual; `centred_only` removes the
/// upwind advection error so only centred stencils remain.
fn residual(n: usize, dt: f64, centred_only: bool) -> f64 {
    let p = params();
    let g = Grid::new(1, &[n], &[2.0], Boundary::Periodic).unwrap();
    let t0 = 0.3;
    let t1 = t0 + dt;
    let sample = |f: fn(f64, f64) -> f64, t: f64| ScalarField::from_fn(g, 0.0, move |x| f(x[0], t));
    let u0 = VectorField::new(g, vec![sample(u, t0).into_values()]).unwrap();
    let u1 = VectorField::new(g, vec![sample(u, t1).into_values()]).unwrap();
    let phi0 = sample(phi, t0);
    let phi1 = sample(phi, t1);
    let coeffs = FrozenCoeffs::new(phi0, u0.clone()).unwrap();
    let cfg = StepConfig::new(dt);
    let rhs = momentum_rhs(&u0, &phi1, &coeffs, &cfg, &p, ETA).unwrap();
    let lu = lame_l(&u1, &p);
    let adv = advect_vector(&u0, &u0).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let x = g.position(i)[0];
        let f1 = phi1.values()[i];
        // u1 - rhs = dt * (explicit tendency), the implicit part is added back
        let discrete = (u1.comp(0)[i] - rhs[0][i]) / dt + (f1 * f1 + ETA * ETA) * lu.comp(0)[i];
        let mut r = discrete - forcing(x, t1, &p, true);
        if centred_only {
            r -= adv.comp(0)[i] - u(x, t0) * u_x(x, t0);
        }
        worst = worst.max(r.abs());
    }
    worst
}

fn orders(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn centred_operators_are_second_order_in_space() {
    let e: Vec<f64> = [32, 64, 128, 256].iter().map(|&n| residual(n, 1e-7, true)).collect();
    for q in orders(&e) {
        assert!(q >= 1.9, "{e:?}");
    }
}

#[test]
fn full_update_is_first_order_in_space() {
    let e: Vec<f64> = [64, 128, 256, 512].iter().map(|&n| residual(n, 1e-7, false)).collect();
    for q in orders(&e) {
        assert!(q >= 0.9, "{e:?}");
    }
}

#[test]
fn full_update_is_first_order_in_time() {
    // centred stencils on a fine grid leave the time error dominant
    let e: Vec<f64> = [0.08, 0.04, 0.02, 0.01].iter().map(|&dt| residual(4096, dt, true)).collect();
    for q in orders(&e) {
        assert!(q >= 0.9, "{e:?}");
    }
}
