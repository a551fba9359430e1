//! Physical parameters and the pointwise constitutive pieces of the model:
//! pressure `P = A rho^gamma`, viscosities `mu = alpha rho^delta`,
//! `lambda = beta rho^delta`, the change of variable
//! `phi = rho^((delta-1)/2)`, and the operators `L`, `S` and `Q`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ScalarField, TensorField, VectorField};
use crate::initdata::VectorExpr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Pressure coefficient `A`.
    #[serde(alias = "A")]
    pub a: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    #[serde(default)]
    pub rho_bar: f64,
    /// Artificial viscosity used when no schedule overrides it.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Body force per unit mass `h(x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<VectorExpr>,
}

fn default_eta() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    PressureCoefficient,
    AdiabaticExponent,
    ShearViscosity,
    BulkViscosity,
    ViscosityExponentLower,
    ViscosityExponentUpper,
    FarFieldDensity,
    ArtificialViscosity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl Params {
    pub fn new(a: f64, gamma: f64, alpha: f64, beta: f64, delta: f64) -> Self {
        Params { a, gamma, alpha, beta, delta, rho_bar: 0.0, eta: default_eta(), force: None }
    }

    pub fn with_rho_bar(mut self, rho_bar: f64) -> Self {
        self.rho_bar = rho_bar;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Upper admissible viscosity exponent `min((gamma+1)/2, 3)`.
    pub fn delta_max(&self) -> f64 {
        ((self.gamma + 1.0) / 2.0).min(3.0)
    }

    /// `K = 4 (gamma-1) / (delta-1)`; at least 8 whenever the parameters
    /// are admissible.
    pub fn k_exponent(&self) -> f64 {
        4.0 * (self.gamma - 1.0) / (self.delta - 1.0)
    }

    /// Exponent taking `rho` to `phi`.
    pub fn phi_exponent(&self) -> f64 {
        (self.delta - 1.0) / 2.0
    }

    /// Exponent `q` with `rho^(gamma-1) = phi^q`.
    pub fn pressure_exponent(&self) -> f64 {
        (2.0 * self.gamma - 2.0) / (self.delta - 1.0)
    }

    pub fn phi_bar(&self) -> f64 {
        pow0(self.rho_bar, self.phi_exponent())
    }

    /// `beta + 2 alpha / 3`, the coefficient of the bulk dissipation bound.
    pub fn bulk_coefficient(&self) -> f64 {
        self.beta + 2.0 * self.alpha / 3.0
    }

    /// Local sound speed `sqrt(A gamma rho^(gamma-1))` written in `phi`.
    pub fn sound_speed(&self, phi: f64) -> f64 {
        (self.a * self.gamma * pow0(phi, self.pressure_exponent())).sqrt()
    }
}

/// Checks every admissibility constraint and returns the ones that fail.
pub fn validate_params(p: &Params) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |constraint, message: String| out.push(Violation { constraint, message });
    let all = [p.a, p.gamma, p.alpha, p.beta, p.delta, p.rho_bar, p.eta];
    if all.iter().any(|v| !v.is_finite()) {
        push(Constraint::PressureCoefficient, "parameters must be finite numbers".into());
        return out;
    }
    if p.a <= 0.0 {
        push(Constraint::PressureCoefficient, format!("pressure law: A > 0 fails (A = {})", p.a));
    }
    if p.gamma <= 1.0 {
        push(
            Constraint::AdiabaticExponent,
            format!("pressure law: gamma > 1 fails (gamma = {})", p.gamma),
        );
    }
    if p.alpha <= 0.0 {
        push(
            Constraint::ShearViscosity,
            format!("viscosity law: alpha > 0 fails (alpha = {})", p.alpha),
        );
    }
    if 2.0 * p.alpha + 3.0 * p.beta < 0.0 {
        push(
            Constraint::BulkViscosity,
            format!(
                "viscosity law: 2*alpha + 3*beta >= 0 fails (2*{} + 3*{} = {})",
                p.alpha,
                p.beta,
                2.0 * p.alpha + 3.0 * p.beta
            ),
        );
    }
    if p.delta <= 1.0 {
        push(
            Constraint::ViscosityExponentLower,
            format!("viscosity exponent: 1 < delta fails (delta = {})", p.delta),
        );
    }
    if p.delta > (p.gamma + 1.0) / 2.0 {
        push(
            Constraint::ViscosityExponentUpper,
            format!(
                "viscosity exponent: delta <= (gamma+1)/2 fails (delta = {} > {})",
                p.delta,
                (p.gamma + 1.0) / 2.0
            ),
        );
    }
    if p.delta > 3.0 {
        push(
            Constraint::ViscosityExponentUpper,
            format!("viscosity exponent: delta <= 3 fails (delta = {})", p.delta),
        );
    }
    if p.rho_bar < 0.0 {
        push(
            Constraint::FarFieldDensity,
            format!("far-field density: rho_bar >= 0 fails (rho_bar = {})", p.rho_bar),
        );
    }
    if !(0.0..1.0).contains(&p.eta) {
        push(
            Constraint::ArtificialViscosity,
            format!("artificial viscosity: 0 <= eta < 1 fails (eta = {})", p.eta),
        );
    }
    out
}

/// `x^q` with the convention `0^q = 0` for `q > 0`.
#[inline]
pub fn pow0(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        if q > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        x.powf(q)
    }
}

fn checked_pow(f: &ScalarField, q: f64, what: &'static str) -> Result<ScalarField> {
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Domain { what, node, value });
    }
    Ok(f.map(pow0(f.far().max(0.0), q), |v| pow0(v, q)))
}

pub fn rho_to_phi(rho: &ScalarField, p: &Params) -> Result<ScalarField> {
    checked_pow(rho, p.phi_exponent(), "density")
}

pub fn phi_to_rho(phi: &ScalarField, p: &Params) -> Result<ScalarField> {
    checked_pow(phi, 2.0 / (p.delta - 1.0), "phi")
}

pub fn pressure(rho: &ScalarField, p: &Params) -> Result<ScalarField> {
    let a = p.a;
    Ok(checked_pow(rho, p.gamma, "density")?.map(a * pow0(rho.far().max(0.0), p.gamma), |v| a * v))
}

/// `L u = -alpha lap u - (alpha + beta) grad div u`.
pub fn lame_l(u: &VectorField, p: &Params) -> VectorField {
    let g = *u.grid();
    VectorField::new(g, grid::lame_apply(&g, p.alpha, p.beta, u.comps()))
        .expect("lame_apply preserves shape")
}

/// `S(u) = alpha (grad u + grad u^T) + beta div u I`.
pub fn stress_s(u: &VectorField, p: &Params) -> TensorField {
    let g = *u.grid();
    let d = g.dim();
    let j = grid::grad_vector(u);
    let div: Vec<f64> = j.trace();
    let mut comps = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            let (jab, jba) = (j.comp(a, b), j.comp(b, a));
            let c: Vec<f64> = (0..g.len())
                .map(|n| {
                    let diag = if a == b { p.beta * div[n] } else { 0.0 };
                    p.alpha * (jab[n] + jba[n]) + diag
                })
                .collect();
            comps.push(c);
        }
    }
    TensorField::new(g, comps).expect("stress shape")
}

/// `Q(u) = delta / (delta - 1) S(u)`.
pub fn q_operator(u: &VectorField, p: &Params) -> TensorField {
    stress_s(u, p).scaled(p.delta / (p.delta - 1.0))
}

/// Viscous stress `T = rho^delta S(u)`.
pub fn viscous_stress(rho: &ScalarField, u: &VectorField, p: &Params) -> Result<TensorField> {
    let w = checked_pow(rho, p.delta, "density")?;
    let s = stress_s(u, p);
    let comps = s
        .comps()
        .iter()
        .map(|c| c.iter().zip(w.values()).map(|(x, y)| x * y).collect())
        .collect();
    TensorField::new(*u.grid(), comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid};
    use std::f64::consts::PI;

    fn ok_params() -> Params {
        Params::new(1.0, 2.0, 1.0, 0.0, 1.5)
    }

    #[test]
    fn validation_examples() {
        assert!(validate_params(&ok_params()).is_empty());

        let mut p = ok_params();
        p.beta = -1.0;
        let v = validate_params(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, Constraint::BulkViscosity);
        assert!(v[0].message.contains("2*alpha + 3*beta >= 0 fails"));

        let mut p = ok_params();
        p.delta = 2.0;
        let v = validate_params(&p);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("delta <= (gamma+1)/2 fails"));
    }

    #[test]
    fn validation_reports_every_violation() {
        let p = Params { a: -1.0, gamma: 0.5, alpha: 0.0, beta: -1.0, delta: 0.9, rho_bar: -1.0, eta: 2.0, force: None };
        assert_eq!(validate_params(&p).len(), 8);
    }

    #[test]
    fn k_exponent_is_at_least_eight_when_admissible() {
        for gamma in [1.1, 1.4, 2.0, 5.0, 9.0] {
            let p = Params::new(1.0, gamma, 1.0, 0.0, 1.0 + 0.999 * (Params::new(1.0, gamma, 1.0, 0.0, 1.5).delta_max() - 1.0));
            assert!(validate_params(&p).is_empty());
            assert!(p.k_exponent() >= 8.0);
        }
    }

    fn scalar(v: f64) -> ScalarField {
        let g = Grid::new(1, &[3], &[1.0], Boundary::Periodic).unwrap();
        ScalarField::constant(g, v)
    }

    #[test]
    fn phi_transform_examples() {
        let p3 = Params::new(1.0, 5.0, 1.0, 0.0, 3.0);
        assert_eq!(rho_to_phi(&scalar(4.0), &p3).unwrap().values()[0], 4.0);
        assert_eq!(phi_to_rho(&scalar(4.0), &p3).unwrap().values()[0], 4.0);
        assert_eq!(rho_to_phi(&scalar(0.0), &p3).unwrap().values()[0], 0.0);
        assert_eq!(phi_to_rho(&scalar(0.0), &p3).unwrap().values()[0], 0.0);

        let p2 = Params::new(1.0, 3.0, 1.0, 0.0, 2.0);
        let phi = rho_to_phi(&scalar(2.0), &p2).unwrap().values()[0];
        // oracle: the number whose square is 2
        assert!((phi * phi - 2.0).abs() < 1e-15);
        assert!((phi - 1.41421356).abs() < 1e-8);
        let rho = phi_to_rho(&scalar(2f64.sqrt()), &p2).unwrap().values()[0];
        assert!((rho - 2.0).abs() < 1e-15);
    }

    #[test]
    fn negative_inputs_name_the_node() {
        let g = Grid::new(1, &[4], &[1.0], Boundary::Periodic).unwrap();
        let f = ScalarField::new(g, vec![1.0, 0.0, -0.5, 1.0], 0.0).unwrap();
        match rho_to_phi(&f, &ok_params()) {
            Err(Error::Domain { node: 2, value, .. }) => assert_eq!(value, -0.5),
            other => panic!("{other:?}"),
        }
        assert!(phi_to_rho(&f, &ok_params()).is_err());
        assert!(pressure(&f, &ok_params()).is_err());
    }

    #[test]
    fn pressure_examples() {
        let p = Params::new(1.0, 2.0, 1.0, 0.0, 1.5);
        assert_eq!(pressure(&scalar(2.0), &p).unwrap().values()[0], 4.0);
        assert_eq!(pressure(&scalar(0.0), &p).unwrap().values()[0], 0.0);
        let p = Params::new(2.0, 1.4, 1.0, 0.0, 1.2);
        let v = pressure(&scalar(3.0), &p).unwrap().values()[0];
        let oracle = 2.0 * (1.4 * 3f64.ln()).exp();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 9.311073).abs() < 1e-6);
    }

    #[test]
    fn lame_examples() {
        let g = Grid::with_origin(1, &[128], &[2.0 * PI], &[0.0], Boundary::Periodic).unwrap();
        let p = Params::new(1.0, 2.0, 1.0, 0.0, 1.5);
        let c = VectorField::from_fn(g, |_| [0.7, 0.0, 0.0]);
        assert_eq!(lame_l(&c, &p).max_abs(), 0.0);
        let s = VectorField::from_fn(g, |x| [x[0].sin(), 0.0, 0.0]);
        let ls = lame_l(&s, &p);
        let err = (0..g.len())
            .map(|i| (ls.comp(0)[i] - 2.0 * g.position(i)[0].sin()).abs())
            .fold(0.0, f64::max);
        let h = g.h()[0];
        assert!(err < h * h, "{err}");
    }

    #[test]
    fn stress_examples() {
        let g = Grid::new(1, &[9], &[2.0], Boundary::FarField).unwrap();
        let p = Params::new(1.0, 2.0, 1.0, 1.0, 1.5);
        let lin = VectorField::from_fn(g, |x| [x[0], 0.0, 0.0]);
        let s = stress_s(&lin, &p);
        // interior nodes see the exact slope
        for i in 1..8 {
            assert!((s.comp(0, 0)[i] - 3.0).abs() < 1e-12);
        }
        let c = VectorField::from_fn(g, |_| [1.0, 0.0, 0.0]);
        let p0 = Params::new(1.0, 2.0, 1.0, 0.0, 1.5);
        let sc = stress_s(&VectorField::from_fn(*c.grid(), |_| [0.0; 3]), &p0);
        assert_eq!(sc.max_abs(), 0.0);

        let p2 = Params::new(1.0, 3.0, 1.0, 0.5, 2.0);
        let q = q_operator(&lin, &p2);
        let s2 = stress_s(&lin, &p2);
        for (a, b) in q.comps()[0].iter().zip(&s2.comps()[0]) {
            assert_eq!(*a, 2.0 * b);
        }
    }
}
