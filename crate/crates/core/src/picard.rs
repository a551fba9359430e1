//! Picard iteration over time slabs, adaptive time stepping and the
//! artificial-viscosity continuation.
//!
//! Iterate 0 on a slab runs every tick with coefficients frozen at the slab
//! start. Iterate `k` runs tick `j` with coefficients taken from iterate
//! `k-1` at the start of that tick. The contraction measure is
//! `Gamma_k = max_j |phi_k - phi_{k-1}|^2 + |u_k - u_{k-1}|^2` over tick
//! times; the slab is accepted once `Gamma_k < tol^2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_vector, Grid};
use crate::linearized::{linearized_tick, FrozenCoeffs, StepConfig, TickStats};
use crate::model::Params;
use crate::state::State;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractionTrace {
    /// `Gamma` for iterations 1, 2, ...
    pub gamma: Vec<f64>,
    /// `sum_ticks dt |phi_k grad(u_k - u_{k-1})|^2` for the same iterations.
    pub weighted_increment: Vec<f64>,
}

impl ContractionTrace {
    pub fn iterations(&self) -> usize {
        self.gamma.len() + 1
    }

    /// Successive ratios `Gamma_{k+1} / Gamma_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.gamma.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    /// Inner tick settings; `dt` is the nominal step.
    pub step: StepConfig,
    /// Slab duration; defaults to ten nominal steps.
    #[serde(default)]
    pub slab_dt: Option<f64>,
    #[serde(default = "default_iters")]
    pub max_picard_iters: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    /// Decreasing artificial viscosities; the last one is the target.
    #[serde(default)]
    pub eta_schedule: Vec<f64>,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    /// Acoustic safety factor for the slab step `c h / (|u| + sound speed)`.
    #[serde(default = "default_acoustic")]
    pub acoustic_cfl: f64,
    /// Resolution guard `h |grad u| <= kappa max(|u|, c)`; `None` disables it.
    #[serde(default = "default_kappa")]
    pub resolution_guard: Option<f64>,
    /// Interval between recorded samples used for eta comparisons.
    #[serde(default)]
    pub sample_dt: Option<f64>,
}

fn default_iters() -> usize {
    30
}
fn default_picard_tol() -> f64 {
    1e-8
}
fn default_dt_min() -> f64 {
    1e-8
}
fn default_acoustic() -> f64 {
    0.5
}
fn default_kappa() -> Option<f64> {
    Some(0.25)
}

impl PicardConfig {
    pub fn new(step: StepConfig) -> Self {
        PicardConfig {
            step,
            slab_dt: None,
            max_picard_iters: default_iters(),
            picard_tol: default_picard_tol(),
            eta_schedule: Vec::new(),
            dt_min: default_dt_min(),
            acoustic_cfl: default_acoustic(),
            resolution_guard: default_kappa(),
            sample_dt: None,
        }
    }

    pub fn with_eta_schedule(mut self, etas: Vec<f64>) -> Self {
        self.eta_schedule = etas;
        self
    }

    /// Ticks per slab.
    pub fn slab_ticks(&self) -> usize {
        match self.slab_dt {
            Some(s) => ((s / self.step.dt).round() as usize).max(1),
            None => 10,
        }
    }

    /// The schedule, or `[p.eta]` when none is configured.
    pub fn etas(&self, p: &Params) -> Vec<f64> {
        if self.eta_schedule.is_empty() {
            vec![p.eta]
        } else {
            self.eta_schedule.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidConfig("picard_tol must be positive".into()));
        }
        if self.max_picard_iters == 0 {
            return Err(Error::InvalidConfig("max_picard_iters must be positive".into()));
        }
        if let Some(s) = self.slab_dt {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("slab_dt must be positive".into()));
            }
        }
        if let Some(first) = self.eta_schedule.first() {
            if !(*first < 1.0) {
                return Err(Error::InvalidConfig(format!("eta schedule must start below 1, got {first}")));
            }
        }
        if self.eta_schedule.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidConfig("eta values must be nonnegative".into()));
        }
        if self.eta_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidConfig("eta schedule must be strictly decreasing".into()));
        }
        if !(self.dt_min > 0.0) {
            return Err(Error::InvalidConfig("dt_min must be positive".into()));
        }
        if !(self.acoustic_cfl > 0.0) {
            return Err(Error::InvalidConfig("acoustic_cfl must be positive".into()));
        }
        if let Some(k) = self.resolution_guard {
            if !(k > 0.0) {
                return Err(Error::InvalidConfig("resolution_guard must be positive".into()));
            }
        }
        if let Some(s) = self.sample_dt {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("sample_dt must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Accepted slab: the converged trajectory (start included) and its ticks.
#[derive(Debug, Clone)]
pub struct SlabOutcome {
    pub trajectory: Vec<State>,
    pub ticks: Vec<TickStats>,
    pub trace: ContractionTrace,
}

impl SlabOutcome {
    pub fn end(&self) -> &State {
        self.trajectory.last().expect("trajectory holds the start state")
    }
}

fn run_trajectory(
    start: &State,
    coeffs: &dyn Fn(usize) -> FrozenCoeffs,
    ticks: usize,
    step: &StepConfig,
    p: &Params,
    eta: f64,
) -> Result<(Vec<State>, Vec<TickStats>)> {
    let mut traj = Vec::with_capacity(ticks + 1);
    let mut stats = Vec::with_capacity(ticks);
    traj.push(start.clone());
    for j in 0..ticks {
        let (next, s) = linearized_tick(&traj[j], &coeffs(j), step, p, eta)?;
        traj.push(next);
        stats.push(s);
    }
    Ok((traj, stats))
}

fn weighted_increment(a: &State, b: &State) -> f64 {
    let g = *a.grid();
    let ua = grad_vector(&a.u);
    let ub = grad_vector(&b.u);
    let mut s = 0.0;
    for (ca, cb) in ua.comps().iter().zip(ub.comps()) {
        for ((x, y), f) in ca.iter().zip(cb).zip(a.phi.values()) {
            let d = f * (x - y);
            s += d * d;
        }
    }
    s * g.cell_volume()
}

/// Runs Picard iterations over one slab of `ticks` steps of size
/// `step.dt`.
pub fn picard_slab(
    start: &State,
    ticks: usize,
    cfg: &PicardConfig,
    step: &StepConfig,
    p: &Params,
    eta: f64,
) -> Result<SlabOutcome> {
    let frozen = FrozenCoeffs::from_state(start);
    let (mut traj, _) = run_trajectory(start, &|_| frozen.clone(), ticks, step, p, eta)?;
    let mut trace = ContractionTrace::default();
    let tol2 = cfg.picard_tol * cfg.picard_tol;
    for k in 1..=cfg.max_picard_iters {
        let prev = traj;
        let (next, next_stats) =
            run_trajectory(start, &|j| FrozenCoeffs::from_state(&prev[j]), ticks, step, p, eta)?;
        let mut gamma: f64 = 0.0;
        let mut wi = 0.0;
        for (a, b) in next.iter().zip(&prev).skip(1) {
            let (dp, du) = a.distance_sq(b)?;
            gamma = gamma.max(dp + du);
            wi += step.dt * weighted_increment(a, b);
        }
        trace.gamma.push(gamma);
        trace.weighted_increment.push(wi);
        traj = next;
        if gamma < tol2 {
            return Ok(SlabOutcome { trajectory: traj, ticks: next_stats, trace });
        }
        if k >= 2 {
            let previous = trace.gamma[k - 2];
            if gamma > previous {
                return Err(Error::PicardGrowth { iteration: k, previous, current: gamma });
            }
        }
        if !gamma.is_finite() {
            break;
        }
    }
    Err(Error::PicardNonConvergence { trace })
}

/// Re-runs the slab once with the converged trajectory as coefficients and
/// returns the L2 change of the end state.
pub fn fixed_point_residual(outcome: &SlabOutcome, step: &StepConfig, p: &Params, eta: f64) -> Result<f64> {
    let traj = &outcome.trajectory;
    let (again, _) = run_trajectory(
        &traj[0],
        &|j| FrozenCoeffs::from_state(&traj[j]),
        traj.len() - 1,
        step,
        p,
        eta,
    )?;
    again.last().unwrap().distance(outcome.end())
}

/// Per-tick information handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct TickInfo {
    pub dt: f64,
    pub eta: f64,
    pub picard_iters: usize,
    pub stats: TickStats,
}

/// Callbacks fed by [`solve`].
pub trait Observer {
    fn on_run_start(&mut self, _eta: f64, _state: &State) -> Result<()> {
        Ok(())
    }

    fn on_tick(&mut self, _prev: &State, _next: &State, _info: &TickInfo) -> Result<()> {
        Ok(())
    }

    fn on_slab(&mut self, _outcome: &SlabOutcome, _eta: f64) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl Observer for NoObserver {}

/// One run over the horizon at fixed `eta`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub eta: f64,
    pub final_state: State,
    /// States at the sample times (the start included).
    pub samples: Vec<State>,
    pub traces: Vec<ContractionTrace>,
    pub steps: usize,
}

/// Smallest `dt` the acoustic condition allows at `state`.
pub fn acoustic_dt(state: &State, p: &Params, safety: f64) -> f64 {
    let g: &Grid = state.grid();
    let umax = state.u.max_norm();
    let cmax = state
        .phi
        .values()
        .iter()
        .fold(p.sound_speed(state.phi.far()), |m, &f| m.max(p.sound_speed(f)));
    let speed = umax + cmax;
    if speed == 0.0 {
        f64::INFINITY
    } else {
        safety * g.min_h() / speed
    }
}

/// `None` when the state is resolved, else a description of the failure.
pub fn resolution_check(state: &State, p: &Params, kappa: f64) -> Option<String> {
    let j = grad_vector(&state.u);
    let gmax = j.max_abs();
    let umax = state.u.max_abs();
    let cmax = state
        .phi
        .values()
        .iter()
        .fold(p.sound_speed(state.phi.far()), |m, &f| m.max(p.sound_speed(f)));
    let h = state.grid().min_h();
    let scale = umax.max(cmax).max(1e-12);
    if h * gmax > kappa * scale {
        Some(format!("h |grad u| = {:.3e} exceeds {kappa} x {:.3e}", h * gmax, scale))
    } else {
        None
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::Cfl { .. }
            | Error::LinearSolver { .. }
            | Error::PicardNonConvergence { .. }
            | Error::PicardGrowth { .. }
            | Error::RegularityLoss(_)
    )
}

/// Chains slabs from `start.t` to `t_end` at fixed `eta`.
pub fn run_horizon(
    start: &State,
    t_end: f64,
    cfg: &PicardConfig,
    p: &Params,
    eta: f64,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if !(t_end >= start.t) {
        return Err(Error::InvalidConfig(format!("t_end {t_end} precedes start time {}", start.t)));
    }
    observer.on_run_start(eta, start)?;
    let ticks = cfg.slab_ticks();
    let span = t_end - start.t;
    let sample_dt = cfg.sample_dt.unwrap_or(span / 20.0);
    let eps = 1e-12 * t_end.abs().max(1.0);
    let mut state = start.clone();
    let mut samples = vec![start.clone()];
    let mut next_sample = start.t + sample_dt;
    let mut traces = Vec::new();
    let mut steps = 0;
    while state.t < t_end - eps {
        let target = next_sample.min(t_end);
        let mut dt = cfg.step.dt.min(acoustic_dt(&state, p, cfg.acoustic_cfl));
        let mut last_cause = String::new();
        let outcome = loop {
            if dt < cfg.dt_min {
                return Err(Error::MaximalTime { t: state.t, dt_min: cfg.dt_min, cause: last_cause });
            }
            // land exactly on the next sample time
            let remaining = target - state.t;
            let (n, tick_dt) = if ticks as f64 * dt >= remaining - eps {
                let n = (remaining / dt).ceil().max(1.0) as usize;
                (n, remaining / n as f64)
            } else {
                (ticks, dt)
            };
            let step = cfg.step.with_dt(tick_dt);
            let attempt = picard_slab(&state, n, cfg, &step, p, eta).and_then(|o| {
                if let Some(kappa) = cfg.resolution_guard {
                    if let Some(msg) = resolution_check(o.end(), p, kappa) {
                        return Err(Error::RegularityLoss(msg));
                    }
                }
                Ok(o)
            });
            match attempt {
                Ok(o) => break o,
                Err(e) if recoverable(&e) => {
                    last_cause = e.to_string();
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        let picard_iters = outcome.trace.iterations();
        for (j, w) in outcome.trajectory.windows(2).enumerate() {
            let info = TickInfo { dt: w[1].t - w[0].t, eta, picard_iters, stats: outcome.ticks[j] };
            observer.on_tick(&w[0], &w[1], &info)?;
            steps += 1;
        }
        observer.on_slab(&outcome, eta)?;
        traces.push(outcome.trace.clone());
        state = outcome.end().clone();
        if (state.t - target).abs() <= eps {
            state.t = target;
            samples.push(state.clone());
            next_sample = target + sample_dt;
        }
    }
    Ok(RunOutcome { eta, final_state: state, samples, traces, steps })
}

/// Runs the horizon for every entry of the schedule; the last run is the
/// result.
pub fn solve(
    start: &State,
    t_end: f64,
    cfg: &PicardConfig,
    p: &Params,
    observer: &mut dyn Observer,
) -> Result<Vec<RunOutcome>> {
    let mut runs = Vec::new();
    for eta in cfg.etas(p) {
        runs.push(run_horizon(start, t_end, cfg, p, eta, observer)?);
    }
    Ok(runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaGap {
    pub eta_coarse: f64,
    pub eta_fine: f64,
    /// `sup_t sqrt(|dphi|^2 + |du|^2)` over the common sample times.
    pub gap: f64,
}

/// Sup-in-time gap between two runs' samples.
pub fn sample_gap(a: &RunOutcome, b: &RunOutcome) -> Result<f64> {
    if a.samples.len() != b.samples.len() {
        return Err(Error::InvalidConfig("runs recorded different sample counts".into()));
    }
    let mut gap: f64 = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        gap = gap.max(x.distance(y)?);
    }
    Ok(gap)
}

/// Gaps between consecutive entries of the schedule. Runs execute in
/// parallel; each is deterministic on its own.
pub fn eta_robustness(start: &State, t_end: f64, cfg: &PicardConfig, p: &Params) -> Result<Vec<EtaGap>> {
    if cfg.eta_schedule.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "eta sweep needs at least 3 schedule entries, got {}",
            cfg.eta_schedule.len()
        )));
    }
    robustness_for(start, t_end, cfg, p, &cfg.eta_schedule)
}

/// Same as [`eta_robustness`] for an arbitrary list (repeats allowed).
pub fn robustness_for(
    start: &State,
    t_end: f64,
    cfg: &PicardConfig,
    p: &Params,
    etas: &[f64],
) -> Result<Vec<EtaGap>> {
    let runs: Vec<RunOutcome> = etas
        .par_iter()
        .map(|&eta| run_horizon(start, t_end, cfg, p, eta, &mut NoObserver))
        .collect::<Result<_>>()?;
    runs.windows(2)
        .map(|w| Ok(EtaGap { eta_coarse: w[0].eta, eta_fine: w[1].eta, gap: sample_gap(&w[0], &w[1])? }))
        .collect()
}
