//! Moments of a material region and the virial functional
//!
//! ```text
//! I(t) = M - 2(t+1) F + 2(t+1)^2 E
//!      = int |x - (t+1) u|^2 rho + 2/(gamma-1) (t+1)^2 int P
//! ```
//!
//! with its convexity lower bound (growing like `(1+t)^2`) and the closed
//! form upper bound curves. When the lower curve overtakes the upper one,
//! a smooth solution cannot exist that long.

mod region;

pub use region::{interpolate, Region, Surface};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_vector, ScalarField};
use crate::model::{pow0, stress_s, Params};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentSet {
    pub t: f64,
    /// `m = int rho`.
    pub mass: f64,
    /// `M = int rho |x|^2`.
    pub second_moment: f64,
    /// `F = int rho u . x`.
    pub radial_momentum: f64,
    /// `E = int rho |u|^2 / 2 + P / (gamma - 1)`.
    pub energy: f64,
    pub pressure_integral: f64,
    pub i_expr1: f64,
    pub i_expr2: f64,
    /// NaN until filled in.
    pub jensen_lower_bound: f64,
    pub upper_bound: f64,
    /// Set when the region holds no node.
    pub empty: bool,
}

impl MomentSet {
    pub fn functional(&self) -> f64 {
        self.i_expr1
    }
}

/// Moments over the region mask (the whole grid when `region` is `None`).
pub fn moments(state: &State, region: Option<&Region>, p: &Params) -> Result<MomentSet> {
    let g = *state.grid();
    let mask = match region {
        Some(r) => {
            if r.grid() != &g {
                return Err(Error::DimensionMismatch("region and state grids differ".into()));
            }
            Some(r.mask())
        }
        None => None,
    };
    let mut out = MomentSet {
        t: state.t,
        jensen_lower_bound: f64::NAN,
        upper_bound: f64::NAN,
        ..MomentSet::default()
    };
    if mask.is_some_and(|m| !m.iter().any(|&b| b)) {
        out.empty = true;
        return Ok(out);
    }
    let rho = state.rho(p)?;
    let s = state.t + 1.0;
    let kp = 1.0 / (p.gamma - 1.0);
    let (mut m, mut mm, mut f, mut kin, mut pint, mut spread) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..g.len() {
        if let Some(mk) = mask {
            if !mk[i] {
                continue;
            }
        }
        let r = rho.values()[i];
        let x = g.position(i);
        let u = state.u.at(i);
        let (mut x2, mut ux, mut u2, mut d2) = (0.0, 0.0, 0.0, 0.0);
        for a in 0..g.dim() {
            x2 += x[a] * x[a];
            ux += u[a] * x[a];
            u2 += u[a] * u[a];
            let d = x[a] - s * u[a];
            d2 += d * d;
        }
        m += r;
        mm += r * x2;
        f += r * ux;
        kin += 0.5 * r * u2;
        pint += p.a * pow0(r, p.gamma);
        spread += r * d2;
    }
    let dv = g.cell_volume();
    out.mass = m * dv;
    out.second_moment = mm * dv;
    out.radial_momentum = f * dv;
    out.pressure_integral = pint * dv;
    out.energy = (kin + kp * pint) * dv;
    out.i_expr1 = out.second_moment - 2.0 * s * out.radial_momentum + 2.0 * s * s * out.energy;
    out.i_expr2 = spread * dv + 2.0 * kp * s * s * out.pressure_integral;
    Ok(out)
}

/// `(2A/(gamma-1)) (1+t)^2 |A0|^(1-gamma) m0^gamma`.
pub fn jensen_bound(t: f64, m0: f64, initial_volume: f64, p: &Params) -> Result<f64> {
    if !(initial_volume > 0.0) {
        return Err(Error::InvalidConfig("region initial volume must be positive".into()));
    }
    if !(m0 >= 0.0) {
        return Err(Error::InvalidConfig(format!("initial mass must be known and nonnegative, got {m0}")));
    }
    Ok(jensen_coefficient(m0, initial_volume, p) * (1.0 + t) * (1.0 + t))
}

fn jensen_coefficient(m0: f64, initial_volume: f64, p: &Params) -> f64 {
    2.0 * p.a / (p.gamma - 1.0) * initial_volume.powf(1.0 - p.gamma) * pow0(m0, p.gamma)
}

/// Which closed form the upper bound takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `1 < gamma < 5/3`, `gamma != 4/3`.
    Subcritical,
    /// `gamma = 4/3`: logarithmic growth.
    LogCritical,
    /// `gamma >= 5/3`.
    Supercritical,
}

const CRITICAL_TOL: f64 = 1e-12;

impl Regime {
    pub fn classify(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::RegimeMismatch(format!("gamma must exceed 1, got {gamma}")));
        }
        Ok(if (gamma - 4.0 / 3.0).abs() <= CRITICAL_TOL {
            Regime::LogCritical
        } else if gamma >= 5.0 / 3.0 - CRITICAL_TOL {
            Regime::Supercritical
        } else {
            Regime::Subcritical
        })
    }
}

/// Constants `(a1, a2)` of the upper bound.
pub fn bound_constants(p: &Params, initial_volume: f64) -> (f64, f64) {
    let c = 18.0 * p.bulk_coefficient();
    let a1 = c * p.delta * (p.gamma - 1.0) / (2.0 * p.a * p.gamma);
    let a2 = c * (p.gamma - p.delta) / p.gamma * initial_volume;
    (a1, a2)
}

/// Lower and upper bound curves for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCurves {
    pub regime: Regime,
    pub a1: f64,
    pub a2: f64,
    pub i0: f64,
    /// Coefficient of `(1+t)^2` in the lower bound.
    pub jensen_coefficient: f64,
    gamma: f64,
}

impl BoundCurves {
    pub fn new(p: &Params, i0: f64, m0: f64, initial_volume: f64) -> Result<Self> {
        Self::with_regime(p, i0, m0, initial_volume, Regime::classify(p.gamma)?)
    }

    /// Fails when `regime` does not match `gamma`.
    pub fn with_regime(p: &Params, i0: f64, m0: f64, initial_volume: f64, regime: Regime) -> Result<Self> {
        let actual = Regime::classify(p.gamma)?;
        if actual != regime {
            return Err(Error::RegimeMismatch(format!(
                "gamma = {} belongs to {actual:?}, not {regime:?}",
                p.gamma
            )));
        }
        if !(initial_volume > 0.0) {
            return Err(Error::InvalidConfig("region initial volume must be positive".into()));
        }
        let (a1, a2) = bound_constants(p, initial_volume);
        Ok(BoundCurves {
            regime,
            a1,
            a2,
            i0,
            jensen_coefficient: jensen_coefficient(m0, initial_volume, p),
            gamma: p.gamma,
        })
    }

    pub fn jensen(&self, t: f64) -> f64 {
        self.jensen_coefficient * (1.0 + t) * (1.0 + t)
    }

    pub fn upper(&self, t: f64) -> f64 {
        self.upper_scaled(t.ln_1p()) * (1.0 + t) * (1.0 + t)
    }

    /// `upper(t) / (1+t)^2` as a function of `s = ln(1+t)`; stays finite for
    /// very large times.
    fn upper_scaled(&self, s: f64) -> f64 {
        let (a1, a2, i0) = (self.a1, self.a2, self.i0);
        let inv = (-s).exp(); // 1 / (1+t)
        match self.regime {
            Regime::Subcritical => {
                let k = 3.0 * (self.gamma - 1.0) - 1.0;
                let e = 2.0 - 3.0 * (self.gamma - 1.0);
                let damp = (a1 - a1 * inv).exp(); // e^{a1} e^{-a1/(t+1)}
                ((e - 2.0) * s).exp() * damp * (i0 - a2 / k) + a2 * damp * inv / k
            }
            Regime::LogCritical => {
                let damp = (a1 - a1 * inv).exp();
                inv * damp * (i0 + a2 * s)
            }
            Regime::Supercritical => a1.exp() * (i0 + a2 * s.exp_m1()) * inv * inv,
        }
    }

    /// First time at which the lower bound exceeds the upper one; infinity
    /// if none is found.
    pub fn analytic_crossing(&self) -> f64 {
        if self.jensen_coefficient <= 0.0 {
            return f64::INFINITY;
        }
        let gap = |s: f64| self.upper_scaled(s) - self.jensen_coefficient;
        if gap(0.0) < 0.0 {
            return 0.0;
        }
        const S_MAX: f64 = 700.0;
        const DS: f64 = 1e-2;
        let mut lo = 0.0;
        let mut hi = f64::NAN;
        let mut k = 1;
        while (k as f64) * DS <= S_MAX {
            let s = k as f64 * DS;
            if gap(s) < 0.0 {
                hi = s;
                break;
            }
            lo = s;
            k += 1;
        }
        if hi.is_nan() {
            return f64::INFINITY;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if gap(mid) < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi.exp_m1()
    }
}

/// Evaluates the regime's closed-form upper bound at `t`.
pub fn upper_bound(t: f64, i0: f64, initial_volume: f64, p: &Params, regime: Regime) -> Result<f64> {
    Ok(BoundCurves::with_regime(p, i0, 0.0, initial_volume, regime)?.upper(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    /// The lower bound exceeded the upper bound on the recorded history.
    Contradiction,
    NoContradictionYet,
    /// Zero initial mass: the lower bound vanishes.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// First recorded time with `jensen > upper`.
    pub history_crossing: Option<f64>,
    /// Crossing time of the closed-form curves.
    pub analytic_crossing: f64,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            VerdictKind::Contradiction => write!(
                f,
                "contradiction at t = {} (analytic crossing {})",
                self.history_crossing.unwrap_or(f64::NAN),
                self.analytic_crossing
            ),
            VerdictKind::NoContradictionYet => {
                write!(f, "no contradiction yet (analytic crossing {})", self.analytic_crossing)
            }
            VerdictKind::Never => f.write_str("never"),
        }
    }
}

pub fn contradiction_monitor(history: &[MomentSet], curves: &BoundCurves) -> Verdict {
    if curves.jensen_coefficient <= 0.0 {
        return Verdict { kind: VerdictKind::Never, history_crossing: None, analytic_crossing: f64::INFINITY };
    }
    let history_crossing = history
        .iter()
        .find(|m| m.jensen_lower_bound > m.upper_bound)
        .map(|m| m.t);
    let kind = if history_crossing.is_some() {
        VerdictKind::Contradiction
    } else {
        VerdictKind::NoContradictionYet
    };
    Verdict { kind, history_crossing, analytic_crossing: curves.analytic_crossing() }
}

/// Smallest pointwise slack of `S(u) : grad u >= (beta + 2 alpha/3) (div u)^2`,
/// scaled by the local magnitude. Multiplying by `rho^delta` gives the
/// viscous work inequality, so a negative value flags a discretization
/// fault.
pub fn viscous_work_slack(state: &State, p: &Params) -> f64 {
    let g = *state.grid();
    let j = grad_vector(&state.u);
    let s = stress_s(&state.u, p);
    let div = j.trace();
    let d = g.dim();
    let mut worst = f64::INFINITY;
    for n in 0..g.len() {
        let mut work = 0.0;
        let mut scale = 0.0;
        for a in 0..d {
            for b in 0..d {
                work += s.comp(a, b)[n] * j.comp(a, b)[n];
                scale += j.comp(a, b)[n] * j.comp(a, b)[n];
            }
        }
        let slack = work - p.bulk_coefficient() * div[n] * div[n];
        let norm = (p.alpha.abs() + p.beta.abs()) * scale;
        worst = worst.min(if norm > 0.0 { slack / norm } else { 0.0 });
    }
    worst
}

/// Moments with both bound columns filled in.
pub fn annotate(mut m: MomentSet, curves: &BoundCurves) -> MomentSet {
    m.jensen_lower_bound = curves.jensen(m.t);
    m.upper_bound = curves.upper(m.t);
    m
}

/// Helper for densities given directly (used by oracles and tests).
pub fn mass_of(rho: &ScalarField, region: Option<&Region>) -> Result<f64> {
    crate::grid::integrate(rho, region.map(|r| r.mask()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid, VectorField};

    fn p(gamma: f64, delta: f64) -> Params {
        Params::new(1.0, gamma, 1.0, 0.0, delta)
    }

    #[test]
    fn empty_density_gives_zero_moments() {
        let g = Grid::new(1, &[101], &[4.0], Boundary::FarField).unwrap();
        let s = State::new(ScalarField::zeros(g), VectorField::from_fn(g, |x| [x[0], 0.0, 0.0]), 0.0).unwrap();
        let r = Region::ball(g, &[0.0], 0.5, 0).unwrap();
        let m = moments(&s, Some(&r), &p(2.0, 1.5)).unwrap();
        assert_eq!((m.mass, m.i_expr1, m.i_expr2, m.energy), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn static_uniform_column() {
        // rho = 1 on the unit interval, A = 1, gamma = 2
        let g = Grid::new(1, &[401], &[4.0], Boundary::FarField).unwrap();
        let prm = p(2.0, 1.5);
        let r = Region::ball(g, &[0.0], 0.5, 0).unwrap();
        let phi = ScalarField::from_fn(g, 0.0, |x| if x[0].abs() <= 0.5 { 1.0 } else { 0.0 });
        let s = State::new(phi, VectorField::zeros(g), 0.0).unwrap();
        let m = moments(&s, Some(&r), &prm).unwrap();
        let n = r.mask().iter().filter(|&&b| b).count() as f64;
        let h = g.h()[0];
        assert!((m.mass - n * h).abs() < 1e-14);
        assert_eq!(m.radial_momentum, 0.0);
        assert!((m.energy - m.mass).abs() < 1e-14);
        // quadrature oracle for the second moment
        let oracle: f64 = (0..g.len())
            .filter(|&i| r.mask()[i])
            .map(|i| g.position(i)[0].powi(2) * h)
            .sum();
        assert!((m.second_moment - oracle).abs() < 1e-14);
        assert!((m.i_expr1 - (m.second_moment + 2.0 * m.energy)).abs() < 1e-14);
    }

    #[test]
    fn jensen_examples() {
        assert_eq!(jensen_bound(0.0, 1.0, 1.0, &p(2.0, 1.5)).unwrap(), 2.0);
        assert_eq!(jensen_bound(3.0, 0.0, 1.0, &p(2.0, 1.5)).unwrap(), 0.0);
        assert!(jensen_bound(0.0, f64::NAN, 1.0, &p(2.0, 1.5)).is_err());
    }

    #[test]
    fn regime_selection() {
        assert_eq!(Regime::classify(4.0 / 3.0).unwrap(), Regime::LogCritical);
        assert_eq!(Regime::classify(1.4).unwrap(), Regime::Subcritical);
        assert_eq!(Regime::classify(5.0 / 3.0).unwrap(), Regime::Supercritical);
        assert_eq!(Regime::classify(2.0).unwrap(), Regime::Supercritical);
        assert!(upper_bound(1.0, 1.0, 1.0, &p(1.4, 1.2), Regime::Supercritical).is_err());
    }

    #[test]
    fn supercritical_with_equal_exponents_is_flat() {
        let prm = p(2.0, 2.0);
        let (a1, a2) = bound_constants(&prm, 1.0);
        assert_eq!(a2, 0.0);
        for t in [0.0, 1.0, 10.0] {
            let u = upper_bound(t, 3.0, 1.0, &prm, Regime::Supercritical).unwrap();
            assert!((u - a1.exp() * 3.0).abs() < 1e-12 * u);
        }
        let mut inviscid = p(2.0, 1.5);
        inviscid.alpha = 0.0;
        assert_eq!(upper_bound(5.0, 3.0, 1.0, &inviscid, Regime::Supercritical).unwrap(), 3.0);
    }

    #[test]
    fn bounds_start_at_initial_value_below_five_thirds() {
        for gamma in [1.2, 4.0 / 3.0, 1.5] {
            let prm = p(gamma, 1.05);
            let c = BoundCurves::new(&prm, 2.5, 1.0, 1.0).unwrap();
            assert!((c.upper(0.0) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn log_branch_shape() {
        let mut prm = p(4.0 / 3.0, 1.1);
        prm.alpha = 0.0;
        prm.beta = 0.0;
        let c = BoundCurves::new(&prm, 2.0, 1.0, 1.0).unwrap();
        for t in [0.5, 3.0] {
            assert!((c.upper(t) - 2.0 * (1.0 + t)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_mass_means_never() {
        let c = BoundCurves::new(&p(1.4, 1.2), 1.0, 0.0, 1.0).unwrap();
        let v = contradiction_monitor(&[], &c);
        assert_eq!(v.kind, VerdictKind::Never);
        assert_eq!(v.to_string(), "never");
    }

    #[test]
    fn viscous_work_holds_pointwise() {
        let g = Grid::new(2, &[24, 24], &[2.0, 2.0], Boundary::Periodic).unwrap();
        let u = VectorField::from_fn(g, |x| [(3.0 * x[0]).sin() * x[1].cos(), (x[0] + 2.0 * x[1]).cos(), 0.0]);
        let s = State::new(ScalarField::constant(g, 1.0), u, 0.0).unwrap();
        for (alpha, beta) in [(1.0, 0.0), (1.0, -2.0 / 3.0), (0.5, 3.0)] {
            let mut prm = p(1.4, 1.2);
            prm.alpha = alpha;
            prm.beta = beta;
            assert!(viscous_work_slack(&s, &prm) >= -1e-12);
        }
    }
}
