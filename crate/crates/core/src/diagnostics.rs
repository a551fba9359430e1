//! Per-step diagnostics records, their CSV stream, and a conservative
//! reference integrator for the continuity equation.
//!
//! CSV columns, in order:
//!
//! ```text
//! t, dt, eta, mass, mass_drift, M, F, energy, I_expr1, I_expr2, jensen_lb,
//! upper_ub, vac_fraction, vac_residual, phi_h3, u_h3, wgt_grad4,
//! picard_iters, cg_iters, clip_count
//! ```
//!
//! Norm columns are NaN on steps where the norm ladder was skipped, and the
//! bound columns are NaN when no region is tracked.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{annotate, contradiction_monitor, moments, BoundCurves, MomentSet, Region, Verdict};
use crate::grid::{integrate, sobolev_norms, sobolev_norms_vector, Boundary, ScalarField, VectorField};
use crate::model::Params;
use crate::picard::{Observer, SlabOutcome, TickInfo};
use crate::state::State;
use crate::vacuum::vacuum_residual;
use crate::EPS_VAC;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub eta: f64,
    pub mass: f64,
    pub mass_drift: f64,
    #[serde(rename = "M")]
    pub second_moment: f64,
    #[serde(rename = "F")]
    pub radial_momentum: f64,
    pub energy: f64,
    #[serde(rename = "I_expr1")]
    pub i_expr1: f64,
    #[serde(rename = "I_expr2")]
    pub i_expr2: f64,
    pub jensen_lb: f64,
    pub upper_ub: f64,
    pub vac_fraction: f64,
    pub vac_residual: f64,
    pub phi_h3: f64,
    pub u_h3: f64,
    pub wgt_grad4: f64,
    pub picard_iters: usize,
    pub cg_iters: usize,
    pub clip_count: usize,
}

pub const CSV_COLUMNS: [&str; 20] = [
    "t",
    "dt",
    "eta",
    "mass",
    "mass_drift",
    "M",
    "F",
    "energy",
    "I_expr1",
    "I_expr2",
    "jensen_lb",
    "upper_ub",
    "vac_fraction",
    "vac_residual",
    "phi_h3",
    "u_h3",
    "wgt_grad4",
    "picard_iters",
    "cg_iters",
    "clip_count",
];

/// Solver-side inputs to a record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverInfo {
    pub dt: f64,
    pub eta: f64,
    pub picard_iters: usize,
    pub cg_iters: usize,
    pub clip_count: usize,
}

/// Everything a record needs besides the states.
#[derive(Debug, Clone, Copy)]
pub struct RecordContext<'a> {
    pub params: &'a Params,
    /// Region the moments are taken over (whole grid when `None`).
    pub region: Option<&'a Region>,
    pub curves: Option<&'a BoundCurves>,
    /// Total mass at `t = 0`.
    pub initial_mass: f64,
    pub with_norms: bool,
}

/// Total mass `int rho` over the grid.
pub fn total_mass(state: &State, p: &Params) -> Result<f64> {
    integrate(&state.rho(p)?, None)
}

/// Builds one record. `prev` is the state one step earlier, if any.
pub fn record(
    state: &State,
    prev: Option<&State>,
    ctx: &RecordContext<'_>,
    info: &SolverInfo,
) -> Result<(DiagnosticsRecord, MomentSet)> {
    let p = ctx.params;
    let mass = total_mass(state, p)?;
    let mass_drift = if ctx.initial_mass > 0.0 {
        (mass - ctx.initial_mass) / ctx.initial_mass
    } else {
        mass - ctx.initial_mass
    };
    let mut m = moments(state, ctx.region, p)?;
    if let Some(c) = ctx.curves {
        m = annotate(m, c);
    }
    let (vac_fraction, vac_residual) = match prev {
        Some(prev) if state.t > prev.t => {
            let r = vacuum_residual(prev, state, p)?;
            (r.fraction, r.residual_linf)
        }
        _ => {
            let n = state.phi.values().iter().filter(|&&v| v < EPS_VAC).count();
            (n as f64 / state.grid().len() as f64, 0.0)
        }
    };
    let (phi_h3, u_h3, wgt_grad4) = if ctx.with_norms {
        let phi_bar = p.phi_bar();
        let pert = state.phi.map(0.0, |v| v - phi_bar);
        let pn = sobolev_norms(&pert, None)?;
        let un = sobolev_norms_vector(&state.u, Some(&state.phi))?;
        (pn.h3, un.h3, un.weighted.unwrap_or(f64::NAN))
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    let rec = DiagnosticsRecord {
        t: state.t,
        dt: info.dt,
        eta: info.eta,
        mass,
        mass_drift,
        second_moment: m.second_moment,
        radial_momentum: m.radial_momentum,
        energy: m.energy,
        i_expr1: m.i_expr1,
        i_expr2: m.i_expr2,
        jensen_lb: m.jensen_lower_bound,
        upper_ub: m.upper_bound,
        vac_fraction,
        vac_residual,
        phi_h3,
        u_h3,
        wgt_grad4,
        picard_iters: info.picard_iters,
        cg_iters: info.cg_iters,
        clip_count: info.clip_count,
    };
    Ok((rec, m))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("csv: {other:?}")),
    }
}

/// Streams records as CSV with the fixed column order.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(w: W) -> Self {
        CsvSink { writer: csv::WriterBuilder::new().has_headers(true).from_writer(w) }
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.writer.serialize(rec).map_err(csv_error)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(Error::Io)
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::InvalidConfig(format!("unexpected CSV header: {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(csv_error)).collect()
}

/// Writes `t, jensen_lb, upper_ub` at the given times.
pub fn write_bound_curves<W: Write>(w: W, curves: &BoundCurves, times: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "jensen_lb", "upper_ub"]).map_err(csv_error)?;
    for &t in times {
        wr.write_record([t.to_string(), curves.jensen(t).to_string(), curves.upper(t).to_string()])
            .map_err(csv_error)?;
    }
    wr.flush().map_err(Error::Io)
}

/// One step of `rho_t + div(rho u) = 0` in flux form with first-order
/// upwind face fluxes. Periodic grids only; total mass telescopes.
pub fn conservative_mass_oracle(rho: &ScalarField, u: &VectorField, dt: f64) -> Result<ScalarField> {
    let g = *rho.grid();
    u.same_grid(&g)?;
    if g.boundary() != Boundary::Periodic {
        return Err(Error::InvalidGrid("the conservative oracle needs a periodic grid".into()));
    }
    let r = rho.values();
    let mut out = r.to_vec();
    for a in 0..g.dim() {
        let ua = u.comp(a);
        let k = dt / g.h()[a];
        // flux through the upper face of every node
        let flux: Vec<f64> = (0..g.len())
            .map(|i| {
                let j = g.neighbor(i, a, 1).expect("periodic");
                let uf = 0.5 * (ua[i] + ua[j]);
                if uf > 0.0 {
                    uf * r[i]
                } else {
                    uf * r[j]
                }
            })
            .collect();
        for i in 0..g.len() {
            let lower = g.neighbor(i, a, -1).expect("periodic");
            out[i] -= k * (flux[i] - flux[lower]);
        }
    }
    ScalarField::new(g, out, rho.far())
}

/// Tolerance of the two-expression identity for `I`.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance of the convexity lower bound against `I`.
pub const JENSEN_TOL: f64 = 1e-8;

/// Hard checks applied to every record: both expressions of `I` agree and,
/// when bound curves are attached, the convexity bound stays below `I`.
pub fn check_record(rec: &DiagnosticsRecord, with_bound: bool) -> Result<()> {
    let i = rec.i_expr1;
    if !((rec.i_expr1 - rec.i_expr2).abs() <= IDENTITY_TOL * (1.0 + i.abs())) {
        return Err(Error::Invariant(format!(
            "I expressions disagree at t = {}: {} vs {}",
            rec.t, rec.i_expr1, rec.i_expr2
        )));
    }
    if with_bound && !(rec.jensen_lb <= i + JENSEN_TOL * (1.0 + i)) {
        return Err(Error::Invariant(format!(
            "convexity bound {} exceeds I = {} at t = {}",
            rec.jensen_lb, i, rec.t
        )));
    }
    Ok(())
}

/// Observer that tracks a material region, assembles records and streams
/// them to a sink.
pub struct Recorder<W: Write> {
    params: Params,
    sink: Option<CsvSink<W>>,
    initial_region: Option<Region>,
    region: Option<Region>,
    curves: Option<BoundCurves>,
    initial_mass: f64,
    norm_every: usize,
    write_every: usize,
    step: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub history: Vec<MomentSet>,
    /// Contraction traces of accepted slabs.
    pub traces: Vec<crate::picard::ContractionTrace>,
    keep_records: bool,
}

impl<W: Write> Recorder<W> {
    /// `norm_every = 0` disables the norm ladder.
    pub fn new(params: Params, region: Option<Region>, sink: Option<CsvSink<W>>, norm_every: usize) -> Self {
        Recorder {
            params,
            sink,
            initial_region: region.clone(),
            region,
            curves: None,
            initial_mass: 0.0,
            norm_every,
            write_every: 1,
            step: 0,
            records: Vec::new(),
            history: Vec::new(),
            traces: Vec::new(),
            keep_records: true,
        }
    }

    /// Stop keeping records in memory (the sink still receives them).
    pub fn streaming_only(mut self) -> Self {
        self.keep_records = false;
        self
    }

    /// Send only every `n`-th record to the sink; the first record of each
    /// run is always written. Every record is still computed and checked.
    pub fn with_write_every(mut self, n: usize) -> Self {
        self.write_every = n.max(1);
        self
    }

    pub fn curves(&self) -> Option<&BoundCurves> {
        self.curves.as_ref()
    }

    pub fn region(&self) -> Option<&Region> {
        self.region.as_ref()
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.curves.as_ref().map(|c| contradiction_monitor(&self.history, c))
    }

    pub fn into_sink(self) -> Option<CsvSink<W>> {
        self.sink
    }

    fn emit(&mut self, state: &State, prev: Option<&State>, info: SolverInfo) -> Result<()> {
        let with_norms = self.norm_every > 0 && self.step % self.norm_every == 0;
        let ctx = RecordContext {
            params: &self.params,
            region: self.region.as_ref(),
            curves: self.curves.as_ref(),
            initial_mass: self.initial_mass,
            with_norms,
        };
        let (rec, m) = record(state, prev, &ctx, &info)?;
        check_record(&rec, self.curves.is_some())?;
        if self.step % self.write_every == 0 {
            if let Some(s) = self.sink.as_mut() {
                s.write(&rec)?;
            }
        }
        if self.keep_records {
            self.records.push(rec);
        }
        self.history.push(m);
        Ok(())
    }
}

impl<W: Write> Observer for Recorder<W> {
    fn on_run_start(&mut self, eta: f64, state: &State) -> Result<()> {
        self.step = 0;
        self.region = self.initial_region.clone();
        self.history.clear();
        self.initial_mass = total_mass(state, &self.params)?;
        self.curves = match &self.region {
            Some(r) => {
                let m0 = moments(state, Some(r), &self.params)?;
                Some(BoundCurves::new(&self.params, m0.i_expr1, m0.mass, r.initial_volume())?)
            }
            None => None,
        };
        self.emit(state, None, SolverInfo { eta, ..SolverInfo::default() })
    }

    fn on_tick(&mut self, prev: &State, next: &State, info: &TickInfo) -> Result<()> {
        if let Some(r) = &self.region {
            let g = *prev.grid();
            let mid = VectorField::new(
                g,
                prev.u
                    .comps()
                    .iter()
                    .zip(next.u.comps())
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                    .collect(),
            )?;
            self.region = Some(r.advance_flow_map(&mid, info.dt)?);
        }
        self.step += 1;
        let si = SolverInfo {
            dt: info.dt,
            eta: info.eta,
            picard_iters: info.picard_iters,
            cg_iters: info.stats.cg_iters,
            clip_count: info.stats.clip_count,
        };
        self.emit(next, Some(prev), si)
    }

    fn on_slab(&mut self, outcome: &SlabOutcome, _eta: f64) -> Result<()> {
        self.traces.push(outcome.trace.clone());
        if let Some(s) = self.sink.as_mut() {
            s.flush()?;
        }
        Ok(())
    }
}
