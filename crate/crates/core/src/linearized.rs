//! One time step of the linearized problem with frozen coefficients
//! `(psi, v)`:
//!
//! ```text
//! phi_t + v . grad phi + (delta-1)/2 psi div v = 0
//! u_t + v . grad u + A gamma/(gamma-1) grad phi^q + (phi^2 + eta^2) L u
//!     = grad phi^2 . Q(v) + h
//! ```
//!
//! Transport is explicit upwind. In the momentum equation only the
//! `(phi^2 + eta^2) L` term is implicit (theta scheme); everything else is
//! explicit.
//!
//! The implicit system `(I + dt theta W L) u = r` with `W = phi^2 + eta^2`
//! is not symmetric. Writing `u = W^(1/2) y` on nodes where `W` is above a
//! floor gives `(I + dt theta W^(1/2) L W^(1/2)) y = W^(-1/2) r`, which is
//! symmetric positive definite and solved by Jacobi-preconditioned CG.
//! Nodes below the floor (vacuum without artificial viscosity) lose the
//! diffusion and take `u = r`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{advect, advect_vector, div, grad, lame_apply, lame_diagonal, Grid, ScalarField, VectorField};
use crate::model::{pow0, q_operator, Params};
use crate::state::State;

/// Below this weight the diffusion term is dropped at a node.
pub const WEIGHT_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCoeffs {
    pub psi: ScalarField,
    pub v: VectorField,
}

impl FrozenCoeffs {
    pub fn new(psi: ScalarField, v: VectorField) -> Result<Self> {
        v.same_grid(psi.grid())?;
        if let Some((node, &value)) = psi.values().iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
            return Err(Error::Domain { what: "frozen psi", node, value });
        }
        Ok(FrozenCoeffs { psi, v })
    }

    /// Coefficients frozen at a state: `(phi, u)`.
    pub fn from_state(s: &State) -> Self {
        FrozenCoeffs { psi: s.phi.clone(), v: s.u.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_iter")]
    pub solver_max_iter: usize,
    /// 0.5 is Crank-Nicolson, 1 is backward Euler.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Admissible `dt max|v| / min h`.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    2000
}
fn default_theta() -> f64 {
    1.0
}
fn default_cfl() -> f64 {
    0.9
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        StepConfig {
            dt,
            solver_tol: default_tol(),
            solver_max_iter: default_max_iter(),
            theta: default_theta(),
            cfl: default_cfl(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::InvalidConfig(format!("theta must lie in [0.5, 1], got {}", self.theta)));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidConfig("solver_tol must be positive".into()));
        }
        if self.solver_max_iter == 0 {
            return Err(Error::InvalidConfig("solver_max_iter must be positive".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidConfig(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        Ok(())
    }
}

/// Largest time step the CFL condition admits for velocity `v`.
pub fn admissible_dt(v: &VectorField, cfl: f64) -> f64 {
    let vmax = v.max_norm();
    if vmax == 0.0 {
        f64::INFINITY
    } else {
        cfl * v.grid().min_h() / vmax
    }
}

/// Explicit upwind transport of `phi`; returns the new field and the number
/// of nodes clipped at zero.
pub fn transport_step(
    phi: &ScalarField,
    coeffs: &FrozenCoeffs,
    cfg: &StepConfig,
    p: &Params,
) -> Result<(ScalarField, usize)> {
    coeffs.psi.same_grid(phi.grid())?;
    coeffs.v.same_grid(phi.grid())?;
    let admissible = admissible_dt(&coeffs.v, cfg.cfl);
    if cfg.dt > admissible {
        return Err(Error::Cfl { dt: cfg.dt, admissible });
    }
    let adv = advect(&coeffs.v, phi)?;
    let dv = div(&coeffs.v);
    let k = 0.5 * (p.delta - 1.0);
    let dt = cfg.dt;
    let mut clips = 0;
    let out: Vec<f64> = phi
        .values()
        .iter()
        .zip(adv.values())
        .zip(coeffs.psi.values())
        .zip(dv.values())
        .map(|(((f, a), s), d)| {
            let next = f - dt * (a + k * s * d);
            if next < 0.0 {
                clips += 1;
                0.0
            } else {
                next
            }
        })
        .collect();
    Ok((ScalarField::new(*phi.grid(), out, phi.far())?, clips))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolverStats {
    pub iterations: usize,
    /// Final relative residual of the symmetric system.
    pub residual: f64,
}

/// The symmetric operator `y -> y + dt theta S L S y` with `S = diag(s)`.
#[derive(Debug, Clone)]
pub struct ThetaOperator {
    grid: Grid,
    alpha: f64,
    beta: f64,
    dt_theta: f64,
    s: Vec<f64>,
}

impl ThetaOperator {
    /// `weight` is `phi^2 + eta^2` per node.
    pub fn new(grid: Grid, p: &Params, dt_theta: f64, weight: &[f64]) -> Self {
        let s = weight.iter().map(|&w| if w > WEIGHT_FLOOR { w.sqrt() } else { 0.0 }).collect();
        ThetaOperator { grid, alpha: p.alpha, beta: p.beta, dt_theta, s }
    }

    pub fn scaling(&self) -> &[f64] {
        &self.s
    }

    pub fn apply(&self, y: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let sy: Vec<Vec<f64>> =
            y.iter().map(|c| c.iter().zip(&self.s).map(|(a, b)| a * b).collect()).collect();
        let l = lame_apply(&self.grid, self.alpha, self.beta, &sy);
        y.iter()
            .zip(l)
            .map(|(yc, lc)| {
                yc.iter()
                    .zip(lc)
                    .zip(&self.s)
                    .map(|((a, b), s)| a + self.dt_theta * s * b)
                    .collect()
            })
            .collect()
    }

    pub fn diagonal(&self, comp: usize) -> Vec<f64> {
        let d = lame_diagonal(&self.grid, self.alpha, self.beta, comp);
        self.s.iter().map(|s| 1.0 + self.dt_theta * s * s * d).collect()
    }
}

const CHUNK: usize = 4096;

/// Dot product with a fixed reduction order, independent of thread count.
fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        let parts: Vec<f64> = x
            .par_chunks(CHUNK)
            .zip(y.par_chunks(CHUNK))
            .map(|(p, q)| p.iter().zip(q).map(|(u, v)| u * v).sum::<f64>())
            .collect();
        total += parts.iter().sum::<f64>();
    }
    total
}

fn axpy(y: &mut [Vec<f64>], a: f64, x: &[Vec<f64>]) {
    for (yc, xc) in y.iter_mut().zip(x) {
        for (u, v) in yc.iter_mut().zip(xc) {
            *u += a * v;
        }
    }
}

/// Jacobi-preconditioned CG for `op y = b`, starting from `y`.
pub fn conjugate_gradient(
    op: &ThetaOperator,
    b: &[Vec<f64>],
    y: &mut [Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<SolverStats> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        for c in y.iter_mut() {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return Ok(SolverStats::default());
    }
    let inv_diag: Vec<Vec<f64>> =
        (0..b.len()).map(|c| op.diagonal(c).into_iter().map(|d| 1.0 / d).collect()).collect();
    let precondition = |r: &[Vec<f64>]| -> Vec<Vec<f64>> {
        r.iter().zip(&inv_diag).map(|(rc, dc)| rc.iter().zip(dc).map(|(a, b)| a * b).collect()).collect()
    };
    let ay = op.apply(y);
    let mut r: Vec<Vec<f64>> = b
        .iter()
        .zip(&ay)
        .map(|(bc, ac)| bc.iter().zip(ac).map(|(x, z)| x - z).collect())
        .collect();
    let mut z = precondition(&r);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::LinearSolver { residual: res, iterations: it });
        }
        let ad = op.apply(&d);
        let dad = dot(&d, &ad);
        if !(dad > 0.0) {
            return Err(Error::LinearSolver { residual: res, iterations: it });
        }
        let step = rz / dad;
        axpy(y, step, &d);
        axpy(&mut r, -step, &ad);
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
        if res <= tol {
            break;
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (dc, zc) in d.iter_mut().zip(&z) {
            for (dv, zv) in dc.iter_mut().zip(zc) {
                *dv = zv + beta * *dv;
            }
        }
    }
    Ok(SolverStats { iterations: it, residual: res })
}

/// Body force sampled at the nodes (zero without a force).
pub fn force_field(grid: Grid, p: &Params) -> VectorField {
    match &p.force {
        Some(f) => VectorField::from_fn(grid, |x| f.value(x)),
        None => VectorField::zeros(grid),
    }
}

/// Explicit part of the momentum update, before the implicit solve.
pub fn momentum_rhs(
    u: &VectorField,
    phi_new: &ScalarField,
    coeffs: &FrozenCoeffs,
    cfg: &StepConfig,
    p: &Params,
    eta: f64,
) -> Result<Vec<Vec<f64>>> {
    let g = *u.grid();
    phi_new.same_grid(&g)?;
    coeffs.v.same_grid(&g)?;
    let dt = cfg.dt;
    let adv = advect_vector(&coeffs.v, u)?;
    let q = p.pressure_exponent();
    let enthalpy = phi_new.map(pow0(phi_new.far(), q), |f| pow0(f, q));
    let gp = grad(&enthalpy);
    let kp = p.a * p.gamma / (p.gamma - 1.0);
    let phi2 = phi_new.map(phi_new.far() * phi_new.far(), |f| f * f);
    let gphi2 = grad(&phi2);
    let qv = q_operator(&coeffs.v, p);
    let h = force_field(g, p);
    let explicit_l = if cfg.theta < 1.0 {
        Some(lame_apply(&g, p.alpha, p.beta, u.comps()))
    } else {
        None
    };
    let d = g.dim();
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let mut c = u.comp(j).to_vec();
        for n in 0..g.len() {
            let mut couple = 0.0;
            for i in 0..d {
                couple += gphi2.comp(i)[n] * qv.comp(i, j)[n];
            }
            let mut tendency = adv.comp(j)[n] + kp * gp.comp(j)[n] - couple - h.comp(j)[n];
            if let Some(l) = &explicit_l {
                let f = phi_new.values()[n];
                tendency += (1.0 - cfg.theta) * (f * f + eta * eta) * l[j][n];
            }
            c[n] -= dt * tendency;
        }
        out.push(c);
    }
    Ok(out)
}

/// Momentum update with artificial viscosity `eta`.
pub fn momentum_step(
    u: &VectorField,
    phi_new: &ScalarField,
    coeffs: &FrozenCoeffs,
    cfg: &StepConfig,
    p: &Params,
    eta: f64,
) -> Result<(VectorField, SolverStats)> {
    let g = *u.grid();
    let rhs = momentum_rhs(u, phi_new, coeffs, cfg, p, eta)?;
    let weight: Vec<f64> = phi_new.values().iter().map(|f| f * f + eta * eta).collect();
    let op = ThetaOperator::new(g, p, cfg.dt * cfg.theta, &weight);
    let s = op.scaling();
    if s.iter().all(|&v| v == 0.0) {
        return Ok((VectorField::new(g, rhs)?, SolverStats::default()));
    }
    // vacuum nodes keep u = r; their coupling moves to the right-hand side
    let passive: Vec<Vec<f64>> =
        rhs.iter().map(|c| c.iter().zip(s).map(|(r, &sv)| if sv == 0.0 { *r } else { 0.0 }).collect()).collect();
    let lp = lame_apply(&g, p.alpha, p.beta, &passive);
    let dtt = cfg.dt * cfg.theta;
    let b: Vec<Vec<f64>> = rhs
        .iter()
        .zip(&lp)
        .map(|(rc, lc)| {
            rc.iter()
                .zip(lc)
                .zip(s)
                .map(|((r, l), &sv)| if sv == 0.0 { 0.0 } else { r / sv - dtt * sv * l })
                .collect()
        })
        .collect();
    // warm start from the current velocity
    let mut y: Vec<Vec<f64>> = u
        .comps()
        .iter()
        .map(|c| c.iter().zip(s).map(|(v, &sv)| if sv == 0.0 { 0.0 } else { v / sv }).collect())
        .collect();
    let stats = conjugate_gradient(&op, &b, &mut y, cfg.solver_tol, cfg.solver_max_iter)?;
    let comps: Vec<Vec<f64>> = y
        .iter()
        .zip(&passive)
        .map(|(yc, pc)| yc.iter().zip(pc).zip(s).map(|((yv, pv), sv)| yv * sv + pv).collect())
        .collect();
    Ok((VectorField::new(g, comps)?, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TickStats {
    pub clip_count: usize,
    pub cg_iters: usize,
    pub cg_residual: f64,
}

/// Transport then momentum, advancing `t` by `dt`.
pub fn linearized_tick(
    state: &State,
    coeffs: &FrozenCoeffs,
    cfg: &StepConfig,
    p: &Params,
    eta: f64,
) -> Result<(State, TickStats)> {
    coeffs.psi.same_grid(state.grid())?;
    let (phi, clip_count) = transport_step(&state.phi, coeffs, cfg, p)?;
    let (u, stats) = momentum_step(&state.u, &phi, coeffs, cfg, p, eta)?;
    Ok((
        State { phi, u, t: state.t + cfg.dt },
        TickStats { clip_count, cg_iters: stats.iterations, cg_residual: stats.residual },
    ))
}
