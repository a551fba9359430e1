//! Run observer writing diagnostics, contraction traces and snapshots.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dns_lab_core::diagnostics::{CsvSink, Recorder};
use dns_lab_core::functionals::Region;
use dns_lab_core::grid::snapshot::write_snapshot;
use dns_lab_core::picard::{Observer, SlabOutcome, TickInfo};
use dns_lab_core::{Params, Result, State};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const CONTRACTION_FILE: &str = "contraction.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Snapshot components: `phi` followed by the velocity components.
pub fn write_state_snapshot(path: &Path, state: &State) -> Result<()> {
    let mut comps: Vec<&[f64]> = vec![state.phi.values()];
    for c in state.u.comps() {
        comps.push(c);
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(&mut w, state.grid(), state.t, &comps)?;
    w.flush()?;
    Ok(())
}

pub struct RunObserver {
    pub recorder: Recorder<BufWriter<File>>,
    contraction: csv::Writer<BufWriter<File>>,
    snapshot_dir: PathBuf,
    snapshot_every: usize,
    quiet: bool,
    run: usize,
    step: usize,
    slab: usize,
    last: Option<State>,
    last_time: f64,
    /// Largest step taken over all runs.
    pub max_dt: f64,
}

impl RunObserver {
    pub fn create(
        dir: &Path,
        params: &Params,
        region: Option<Region>,
        diagnostics_every: usize,
        norm_every: usize,
        snapshot_every: usize,
        quiet: bool,
    ) -> Result<Self> {
        let snapshot_dir = dir.join(SNAPSHOT_DIR);
        fs::create_dir_all(&snapshot_dir)?;
        let sink = CsvSink::new(BufWriter::new(File::create(dir.join(DIAGNOSTICS_FILE))?));
        let recorder = Recorder::new(params.clone(), region, Some(sink), norm_every)
            .with_write_every(diagnostics_every)
            .streaming_only();
        let mut contraction = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(CONTRACTION_FILE))?));
        contraction
            .write_record(["eta", "slab", "iteration", "gamma", "weighted_increment"])
            .map_err(csv_io)?;
        Ok(RunObserver {
            recorder,
            contraction,
            snapshot_dir,
            snapshot_every,
            quiet,
            run: 0,
            step: 0,
            slab: 0,
            last: None,
            last_time: 0.0,
            max_dt: 0.0,
        })
    }

    fn snapshot(&self, state: &State) -> Result<()> {
        let name = format!("run{}_step{:07}.bin", self.run, self.step);
        write_state_snapshot(&self.snapshot_dir.join(name), state)
    }

    /// Writes the last state of the current run and flushes every file.
    pub fn finish_run(&mut self) -> Result<()> {
        if let Some(s) = self.last.take() {
            if self.step > 0 && (self.snapshot_every == 0 || self.step % self.snapshot_every != 0) {
                self.snapshot(&s)?;
            }
            self.last_time = s.t;
        }
        self.contraction.flush()?;
        Ok(())
    }

    /// Time of the most recent state seen.
    pub fn last_time(&self) -> f64 {
        self.last.as_ref().map_or(self.last_time, |s| s.t)
    }

    pub fn close(mut self) -> Result<Recorder<BufWriter<File>>> {
        self.finish_run()?;
        self.contraction.flush()?;
        Ok(self.recorder)
    }
}

fn csv_io(e: csv::Error) -> dns_lab_core::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => dns_lab_core::Error::InvalidConfig(format!("csv: {other:?}")),
    }
}

impl Observer for RunObserver {
    fn on_run_start(&mut self, eta: f64, state: &State) -> Result<()> {
        if self.last.is_some() {
            self.finish_run()?;
            self.run += 1;
        }
        self.step = 0;
        self.slab = 0;
        self.recorder.on_run_start(eta, state)?;
        self.snapshot(state)?;
        self.last = Some(state.clone());
        if !self.quiet {
            eprintln!("run {} (eta = {eta:e}) from t = {}", self.run, state.t);
        }
        Ok(())
    }

    fn on_tick(&mut self, prev: &State, next: &State, info: &TickInfo) -> Result<()> {
        self.recorder.on_tick(prev, next, info)?;
        self.step += 1;
        self.max_dt = self.max_dt.max(info.dt);
        if self.snapshot_every > 0 && self.step % self.snapshot_every == 0 {
            self.snapshot(next)?;
        }
        self.last = Some(next.clone());
        Ok(())
    }

    fn on_slab(&mut self, outcome: &SlabOutcome, eta: f64) -> Result<()> {
        self.recorder.on_slab(outcome, eta)?;
        for (k, (g, w)) in outcome.trace.gamma.iter().zip(&outcome.trace.weighted_increment).enumerate() {
            self.contraction
                .write_record([
                    eta.to_string(),
                    self.slab.to_string(),
                    (k + 1).to_string(),
                    g.to_string(),
                    w.to_string(),
                ])
                .map_err(csv_io)?;
        }
        self.slab += 1;
        if !self.quiet && self.slab % 50 == 0 {
            eprintln!("  t = {:.6} after {} steps", outcome.end().t, self.step);
        }
        Ok(())
    }
}
