//! The subcommands. Each returns `Ok` on success; the caller maps errors to
//! exit codes.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dns_lab_core::diagnostics::write_bound_curves;
use dns_lab_core::functionals::{moments, BoundCurves, Regime, Verdict};
use dns_lab_core::grid::{grad_vector, Boundary};
use dns_lab_core::initdata::VectorExpr;
use dns_lab_core::model::{phi_to_rho, rho_to_phi, validate_params};
use dns_lab_core::picard::{eta_robustness, solve, NoObserver, Observer, PicardConfig, TickInfo};
use dns_lab_core::vacuum::{free_transport_exact, BlowupPrediction, Transport};
use dns_lab_core::{Error, Params, State, EPS_VAC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{build_init, InitData, InitSection, RunConfig};
use crate::output::{RunObserver, BOUNDS_FILE, SUMMARY_FILE};
use crate::{CliError, CliResult};

pub const ETA_SWEEP_FILE: &str = "eta_sweep.csv";
pub const SCAN_FILE: &str = "blowup_scan.csv";
pub const VACUUM_CHECK_FILE: &str = "vacuum_check.csv";
pub const CONFIG_ECHO_FILE: &str = "config.json";

/// Points on which the bound curves are tabulated.
const BOUND_SAMPLES: usize = 257;

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Options {
    fn dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.output.dir.clone())
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn prepare_dir(dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_ECHO_FILE), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

fn fmt_time(t: f64) -> String {
    if t.is_infinite() {
        "infinity".to_string()
    } else {
        format!("{t}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub init: String,
    /// `completed`, `maximal_time` or `solver_error`.
    pub status: String,
    pub t_end: f64,
    pub t_final: f64,
    pub message: Option<String>,
    pub eta_runs: usize,
    pub max_dt: f64,
    pub verdict: Option<Verdict>,
    pub prediction: Option<BlowupPrediction>,
}

/// `run`: solve over the horizon, writing diagnostics, bound curves,
/// contraction traces, snapshots and a summary.
pub fn cmd_run(cfg: &RunConfig, opts: &Options) -> CliResult<RunSummary> {
    let dir = opts.dir(cfg);
    let init = cfg.build_init()?;
    prepare_dir(&dir, cfg)?;
    let mut obs = RunObserver::create(
        &dir,
        &cfg.params,
        init.region.clone(),
        cfg.output.diagnostics_every,
        cfg.output.norm_every,
        cfg.output.snapshot_every,
        opts.quiet,
    )?;
    let result = solve(&init.state, cfg.t_end, &cfg.picard, &cfg.params, &mut obs);
    let t_final = obs.last_time();
    let max_dt = obs.max_dt;
    let recorder = obs.close()?;
    let curves = recorder.curves().copied();
    let verdict = recorder.verdict();
    if let Some(mut sink) = recorder.into_sink() {
        sink.flush()?;
    }
    if let Some(c) = &curves {
        write_bounds(&dir.join(BOUNDS_FILE), c, cfg.t_end)?;
    }
    let (status, message, outcome) = match result {
        Ok(runs) => ("completed", None, Ok(runs.len())),
        Err(e) => {
            let e = CliError::from(e);
            let status = if matches!(e, CliError::MaximalTime { .. }) { "maximal_time" } else { "solver_error" };
            (status, Some(e.to_string()), Err(e))
        }
    };
    let summary = RunSummary {
        init: cfg.init.name().to_string(),
        status: status.to_string(),
        t_end: cfg.t_end,
        t_final,
        message,
        eta_runs: *outcome.as_ref().unwrap_or(&0),
        max_dt,
        verdict,
        prediction: init.prediction,
    };
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    if let Some(v) = &verdict {
        opts.say(format!("bound verdict: {v}"));
    }
    match outcome {
        Ok(_) => {
            opts.say(format!("reached t = {}", summary.t_final));
            Ok(summary)
        }
        Err(e) => {
            if let CliError::MaximalTime { t, .. } = &e {
                opts.say(format!("suspected blow-up: aborted at t = {t}"));
            }
            Err(e)
        }
    }
}

/// Tabulates both bound curves up to the horizon, extended past the
/// analytic crossing when that is not too far away.
fn write_bounds(path: &Path, curves: &BoundCurves, t_end: f64) -> CliResult<()> {
    let crossing = curves.analytic_crossing();
    let mut span = t_end.max(1e-12);
    if crossing.is_finite() {
        span = span.max((1.25 * crossing).min(100.0 * span));
    }
    let times: Vec<f64> = (0..BOUND_SAMPLES).map(|i| span * i as f64 / (BOUND_SAMPLES - 1) as f64).collect();
    let w = BufWriter::new(File::create(path)?);
    write_bound_curves(w, curves, &times)?;
    Ok(())
}

/// One line of the `check` report.
#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

fn item(name: &str, ok: bool, detail: impl Into<String>) -> CheckItem {
    CheckItem { name: name.to_string(), ok, detail: detail.into() }
}

/// Validation report for a configuration text; never fails itself.
pub fn check_report(text: &str) -> Vec<CheckItem> {
    let mut out = Vec::new();
    let cfg: RunConfig = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => {
            out.push(item("parse", false, format!("line {} column {}: {e}", e.line(), e.column())));
            return out;
        }
    };
    out.push(item("parse", true, ""));
    let violations = validate_params(&cfg.params);
    if violations.is_empty() {
        out.push(item("params", true, ""));
    } else {
        for v in &violations {
            out.push(item("params", false, v.message.clone()));
        }
        return out;
    }
    match cfg.validate() {
        Ok(()) => out.push(item("picard", true, "")),
        Err(e) => {
            out.push(item("picard", false, e.to_string()));
            return out;
        }
    }
    let grid = match cfg.grid.build() {
        Ok(g) => {
            out.push(item("grid", true, format!("{} nodes, h = {:?}", g.len(), g.h())));
            g
        }
        Err(e) => {
            out.push(item("grid", false, e.to_string()));
            return out;
        }
    };
    let init = match build_init(&cfg.init, grid, &cfg.params) {
        Ok(d) => {
            out.push(item("init", true, cfg.init.name()));
            d
        }
        Err(e) => {
            out.push(item("init", false, e.to_string()));
            return out;
        }
    };
    out.extend(init_invariants(&cfg, &init));
    out
}

fn init_invariants(cfg: &RunConfig, init: &InitData) -> Vec<CheckItem> {
    let p = &cfg.params;
    let mut out = Vec::new();
    let phi = init.state.phi.values();
    let bad = phi.iter().filter(|v| !(v.is_finite() && **v >= 0.0)).count();
    out.push(item("phi >= 0", bad == 0, format!("{bad} offending nodes")));
    let round = phi_to_rho(&init.state.phi, p).and_then(|rho| rho_to_phi(&rho, p));
    match round {
        Ok(back) => {
            let worst = back
                .values()
                .iter()
                .zip(phi)
                .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
                .fold(0.0, f64::max);
            out.push(item("rho/phi round trip", worst <= 1e-12, format!("max relative error {worst:.3e}")));
        }
        Err(e) => out.push(item("rho/phi round trip", false, e.to_string())),
    }
    if let (Some(a), Some(b)) = (&init.region, &init.outer_region) {
        match init.state.rho(p) {
            Ok(rho) => {
                let nonzero = a
                    .mask()
                    .iter()
                    .zip(b.mask())
                    .zip(rho.values())
                    .filter(|((in_a, in_b), r)| **in_b && !**in_a && **r != 0.0)
                    .count();
                out.push(item("vacuum annulus", nonzero == 0, format!("{nonzero} annulus nodes with mass")));
            }
            Err(e) => out.push(item("vacuum annulus", false, e.to_string())),
        }
        match moments(&init.state, Some(a), p) {
            Ok(m) => out.push(item("mass in A0", m.mass > 0.0, format!("m = {}", m.mass))),
            Err(e) => out.push(item("mass in A0", false, e.to_string())),
        }
    }
    if let Some(u0) = &init.velocity {
        let worst = jacobian_consistency(u0, &init.state, cfg.seed, 100);
        out.push(item("analytic Jacobian", worst <= 1e-6, format!("max deviation {worst:.3e} at 100 probes")));
    }
    if let Some(pred) = &init.prediction {
        out.push(item("blow-up prediction", true, format!("predicted time {}", fmt_time(pred.predicted_time))));
    }
    out
}

/// Largest deviation between the analytic Jacobian and central differences
/// (step 1e-5) at random points of the box.
pub fn jacobian_consistency(u0: &VectorExpr, state: &State, seed: u64, probes: usize) -> f64 {
    let g = state.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(g.dim()) {
            let (lo, hi) = g.extent(a);
            *xa = rng.gen_range(lo..=hi);
        }
        let (_, jac) = u0.eval(x);
        for j in 0..g.dim() {
            let mut xp = x;
            let mut xm = x;
            xp[j] += step;
            xm[j] -= step;
            let vp = u0.value(xp);
            let vm = u0.value(xm);
            for i in 0..u0.dim() {
                let fd = (vp[i] - vm[i]) / (2.0 * step);
                worst = worst.max((fd - jac[i][j]).abs() / (1.0 + jac[i][j].abs()));
            }
        }
    }
    worst
}

/// `check`: prints the report; fails unless every item passes.
pub fn cmd_check(text: &str, opts: &Options) -> CliResult<()> {
    let report = check_report(text);
    let mut failed = Vec::new();
    for it in &report {
        let tag = if it.ok { "ok  " } else { "FAIL" };
        if it.detail.is_empty() {
            opts.say(format!("{tag} {}", it.name));
        } else {
            opts.say(format!("{tag} {}: {}", it.name, it.detail));
        }
        if !it.ok {
            failed.push(format!("{}: {}", it.name, it.detail));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(failed.join("; ")))
    }
}

fn analytic_velocity(cfg: &RunConfig) -> CliResult<()> {
    match cfg.init {
        InitSection::HyperbolicSingularity(_) | InitSection::PureVacuum(_) => Ok(()),
        _ => Err(CliError::Config(format!(
            "init kind {} carries no analytic initial velocity; use hyperbolic_singularity or pure_vacuum",
            cfg.init.name()
        ))),
    }
}

/// `vacuum-predict`: spectral scan of the initial velocity gradient.
pub fn cmd_vacuum_predict(cfg: &RunConfig) -> CliResult<BlowupPrediction> {
    analytic_velocity(cfg)?;
    let init = cfg.build_init()?;
    let pred = init.prediction.expect("analytic init kinds carry a prediction");
    println!("min_eigenvalue {}", pred.min_eigenvalue);
    let loc = &pred.location[..cfg.grid.dim];
    println!("location {loc:?}");
    println!("predicted_time {}", fmt_time(pred.predicted_time));
    Ok(pred)
}

/// One row of the vacuum consistency table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VacuumCheckRow {
    pub t: f64,
    pub nodes: usize,
    pub u_err: f64,
    pub grad_err: f64,
    pub grad_max: f64,
    pub bound: f64,
}

#[derive(Default)]
struct StepTracker {
    max_dt: f64,
}

impl Observer for StepTracker {
    fn on_tick(&mut self, _prev: &State, _next: &State, info: &TickInfo) -> dns_lab_core::Result<()> {
        self.max_dt = self.max_dt.max(info.dt);
        Ok(())
    }
}

/// Compares a simulated state against free transport at its vacuum nodes.
/// Far-field grids skip the outermost layer, whose one-sided stencil sees
/// the ghost state.
pub fn vacuum_errors(u0: &VectorExpr, state: &State) -> VacuumCheckRow {
    let g = *state.grid();
    let interior = match g.boundary() {
        Boundary::Periodic => vec![true; g.len()],
        Boundary::FarField => g.interior_mask(1),
    };
    let jac = grad_vector(&state.u);
    let dim = g.dim();
    let mut row = VacuumCheckRow { t: state.t, nodes: 0, u_err: 0.0, grad_err: 0.0, grad_max: 0.0, bound: 0.0 };
    for i in 0..g.len() {
        if !interior[i] || state.phi.values()[i] >= EPS_VAC {
            continue;
        }
        if let Transport::Regular { u, grad, .. } = free_transport_exact(u0, g.position(i), state.t) {
            row.nodes += 1;
            for a in 0..dim {
                row.u_err = row.u_err.max((state.u.comp(a)[i] - u[a]).abs());
                for b in 0..dim {
                    row.grad_err = row.grad_err.max((jac.comp(a, b)[i] - grad[a][b]).abs());
                    row.grad_max = row.grad_max.max(grad[a][b].abs());
                }
            }
        }
    }
    row
}

/// Constant in the vacuum agreement bound `C (dt + h) |grad u|_inf`.
pub const VACUUM_BOUND_CONSTANT: f64 = 5.0;

/// `vacuum-check`: runs at `eta` from the schedule's last entry up to
/// `0.8` of the predicted blow-up time (or `t_end` if sooner) and compares
/// the vacuum nodes against free transport at eight sample times.
pub fn cmd_vacuum_check(cfg: &RunConfig, opts: &Options) -> CliResult<Vec<VacuumCheckRow>> {
    analytic_velocity(cfg)?;
    let dir = opts.dir(cfg);
    let init = cfg.build_init()?;
    let u0 = init.velocity.clone().expect("analytic init kinds carry the velocity");
    let predicted = init.prediction.map_or(f64::INFINITY, |p| p.predicted_time);
    let horizon = cfg.t_end.min(0.8 * predicted);
    let mut picard: PicardConfig = cfg.picard.clone();
    picard.sample_dt = Some(horizon / 8.0);
    let eta = *picard.etas(&cfg.params).last().expect("schedule is never empty");
    let mut tracker = StepTracker::default();
    let run = dns_lab_core::picard::run_horizon(&init.state, horizon, &picard, &cfg.params, eta, &mut tracker)?;
    let h = init.state.grid().min_h();
    let mut rows: Vec<VacuumCheckRow> = run.samples.iter().map(|s| vacuum_errors(&u0, s)).collect();
    let grad_max = rows.iter().map(|r| r.grad_max).fold(0.0, f64::max);
    let bound = VACUUM_BOUND_CONSTANT * (tracker.max_dt + h) * grad_max;
    for r in rows.iter_mut() {
        r.bound = bound;
    }
    fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join(VACUUM_CHECK_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let worst = rows.iter().map(|r| r.grad_err).fold(0.0, f64::max);
    opts.say(format!(
        "vacuum gradient error {worst:.4e} against bound {bound:.4e} (dt = {:.3e}, h = {h:.3e}) up to t = {horizon}",
        tracker.max_dt
    ));
    if worst <= bound {
        Ok(rows)
    } else {
        Err(CliError::Config(format!("vacuum gradient error {worst:e} exceeds bound {bound:e}")))
    }
}

/// `eta-sweep`: gaps between consecutive schedule entries.
pub fn cmd_eta_sweep(cfg: &RunConfig, opts: &Options) -> CliResult<Vec<dns_lab_core::picard::EtaGap>> {
    if cfg.picard.eta_schedule.len() < 3 {
        return Err(CliError::Config(format!(
            "eta-sweep needs an eta_schedule with at least 3 entries, got {}",
            cfg.picard.eta_schedule.len()
        )));
    }
    let dir = opts.dir(cfg);
    let init = cfg.build_init()?;
    let gaps = eta_robustness(&init.state, cfg.t_end, &cfg.picard, &cfg.params)?;
    prepare_dir(&dir, cfg)?;
    let mut w = csv::Writer::from_path(dir.join(ETA_SWEEP_FILE))?;
    w.write_record(["eta_coarse", "eta_fine", "gap"])?;
    for g in &gaps {
        w.write_record([g.eta_coarse.to_string(), g.eta_fine.to_string(), g.gap.to_string()])?;
        opts.say(format!("eta {:e} -> {:e}: gap {:.6e}", g.eta_coarse, g.eta_fine, g.gap));
    }
    w.flush()?;
    Ok(gaps)
}

/// One cell of the parameter scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub gamma: f64,
    pub delta: f64,
    pub regime: String,
    /// `completed`, `maximal_time`, `solver_error` or `invalid`.
    pub status: String,
    /// Abort time for `maximal_time`, final time otherwise.
    pub t_stop: f64,
    pub analytic_crossing: f64,
}

fn scan_cell(cfg: &RunConfig, gamma: f64, delta: f64) -> ScanRow {
    let mut p: Params = cfg.params.clone();
    p.gamma = gamma;
    p.delta = delta;
    let regime = Regime::classify(gamma).map(|r| format!("{r:?}")).unwrap_or_else(|_| "invalid".into());
    let mut row = ScanRow {
        gamma,
        delta,
        regime,
        status: "invalid".into(),
        t_stop: f64::NAN,
        analytic_crossing: f64::NAN,
    };
    if !validate_params(&p).is_empty() {
        return row;
    }
    let grid = match cfg.grid.build() {
        Ok(g) => g,
        Err(_) => return row,
    };
    let init = match build_init(&cfg.init, grid, &p) {
        Ok(d) => d,
        Err(_) => return row,
    };
    if let Some(r) = &init.region {
        let crossing = moments(&init.state, Some(r), &p)
            .and_then(|m| BoundCurves::new(&p, m.i_expr1, m.mass, r.initial_volume()))
            .map(|c| c.analytic_crossing());
        row.analytic_crossing = crossing.unwrap_or(f64::NAN);
    }
    let (status, t) = match solve(&init.state, cfg.t_end, &cfg.picard, &p, &mut NoObserver) {
        Ok(runs) => ("completed", runs.last().map_or(cfg.t_end, |r| r.final_state.t)),
        Err(Error::MaximalTime { t, .. }) => ("maximal_time", t),
        Err(_) => ("solver_error", f64::NAN),
    };
    row.status = status.into();
    row.t_stop = t;
    row
}

/// `blowup-scan`: runs the configuration over a `(gamma, delta)` grid and
/// tabulates stop times with the analytic bound crossing.
pub fn cmd_blowup_scan(cfg: &RunConfig, opts: &Options) -> CliResult<Vec<ScanRow>> {
    let scan = cfg.scan.clone().unwrap_or_default();
    let dir = opts.dir(cfg);
    cfg.build_grid()?;
    let rows: Vec<ScanRow> = scan.points().par_iter().map(|&(g, d)| scan_cell(cfg, g, d)).collect();
    prepare_dir(&dir, cfg)?;
    let mut w = csv::Writer::from_path(dir.join(SCAN_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    for r in &rows {
        opts.say(format!(
            "gamma {:.4} delta {:.4}: {} at t = {} (analytic crossing {})",
            r.gamma,
            r.delta,
            r.status,
            r.t_stop,
            fmt_time(r.analytic_crossing)
        ));
    }
    Ok(rows)
}
