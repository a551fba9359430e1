//! JSON run configuration.
//!
//! Loading is parse-then-validate: the parameters are checked against every
//! admissibility constraint before any field is allocated.

use std::fs;
use std::path::{Path, PathBuf};

use dns_lab_core::functionals::Region;
use dns_lab_core::grid::{Boundary, Grid};
use dns_lab_core::initdata::{
    build_hyperbolic_singularity_data, build_isolated_mass_group, build_pure_vacuum, build_smooth_state,
    HyperbolicSpec, IsolatedMassGroupSpec, SmoothSpec, VectorExpr, VelocityMode,
};
use dns_lab_core::model::validate_params;
use dns_lab_core::picard::PicardConfig;
use dns_lab_core::vacuum::{predict_blowup, BlowupPrediction};
use dns_lab_core::{Params, State};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    pub grid: GridSection,
    pub init: InitSection,
    pub picard: PicardConfig,
    pub t_end: f64,
    #[serde(default)]
    pub output: OutputSection,
    /// Seeds probe-point sampling only; the solver itself is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: Vec<usize>,
    pub length: Vec<f64>,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// Lower corner; the box is centred on the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

fn default_boundary() -> Boundary {
    Boundary::FarField
}

impl GridSection {
    pub fn build(&self) -> dns_lab_core::Result<Grid> {
        match &self.origin {
            Some(o) => Grid::with_origin(self.dim, &self.n, &self.length, o, self.boundary),
            None => Grid::new(self.dim, &self.n, &self.length, self.boundary),
        }
    }
}

/// Initial data, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSection {
    Smooth(SmoothSpec),
    IsolatedMassGroup(IsolatedMassGroupSpec),
    HyperbolicSingularity(HyperbolicSpec),
    PureVacuum(PureVacuumSpec),
}

impl InitSection {
    pub fn name(&self) -> &'static str {
        match self {
            InitSection::Smooth(_) => "smooth",
            InitSection::IsolatedMassGroup(_) => "isolated_mass_group",
            InitSection::HyperbolicSingularity(_) => "hyperbolic_singularity",
            InitSection::PureVacuum(_) => "pure_vacuum",
        }
    }
}

/// `phi = 0` everywhere; the velocity mode is evaluated around `center`
/// with `radius` as the reference length (compression and expansion bumps
/// default to twice it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PureVacuumSpec {
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default = "unit")]
    pub radius: f64,
    pub velocity: VelocityMode,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Steps between field snapshots; 0 writes only the first and last.
    #[serde(default)]
    pub snapshot_every: usize,
    /// Steps between CSV rows.
    #[serde(default = "one")]
    pub diagnostics_every: usize,
    /// Steps between evaluations of the norm ladder; 0 disables it.
    #[serde(default = "ten")]
    pub norm_every: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir(), snapshot_every: 0, diagnostics_every: 1, norm_every: 10 }
    }
}

/// Parameter grid for `blowup-scan`. `delta` runs over `count` interior
/// points of the admissible interval `(1, min((gamma+1)/2, 3)]` for each
/// `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default = "gamma_min")]
    pub gamma_min: f64,
    #[serde(default = "gamma_max")]
    pub gamma_max: f64,
    #[serde(default = "ten")]
    pub gamma_count: usize,
    #[serde(default = "ten")]
    pub delta_count: usize,
}

fn gamma_min() -> f64 {
    1.1
}

fn gamma_max() -> f64 {
    3.0
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { gamma_min: gamma_min(), gamma_max: gamma_max(), gamma_count: 10, delta_count: 10 }
    }
}

impl ScanSection {
    /// `(gamma, delta)` pairs, row-major in `gamma`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.gamma_count * self.delta_count);
        for i in 0..self.gamma_count {
            let gamma = if self.gamma_count == 1 {
                self.gamma_min
            } else {
                self.gamma_min + (self.gamma_max - self.gamma_min) * i as f64 / (self.gamma_count - 1) as f64
            };
            let top = ((gamma + 1.0) / 2.0).min(3.0);
            for j in 0..self.delta_count {
                let delta = 1.0 + (top - 1.0) * (j + 1) as f64 / self.delta_count as f64;
                out.push((gamma, delta));
            }
        }
        out
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.gamma_min > 1.0 && self.gamma_max >= self.gamma_min) {
            return Err(CliError::Config("scan: need 1 < gamma_min <= gamma_max".into()));
        }
        if self.gamma_count == 0 || self.delta_count == 0 {
            return Err(CliError::Config("scan: counts must be positive".into()));
        }
        Ok(())
    }
}

/// Initial state together with whatever the init kind carries.
#[derive(Debug, Clone)]
pub struct InitData {
    pub state: State,
    /// Material region for the moments (`A0` or `V`).
    pub region: Option<Region>,
    /// Surrounding ball `B0` of an isolated mass group.
    pub outer_region: Option<Region>,
    /// Analytic initial velocity, for the vacuum oracle.
    pub velocity: Option<VectorExpr>,
    pub prediction: Option<BlowupPrediction>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("malformed config at line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Everything that can be checked without allocating fields.
    pub fn validate(&self) -> Result<(), CliError> {
        let violations = validate_params(&self.params);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(|v| v.message.clone()).collect();
            return Err(CliError::Config(msgs.join("; ")));
        }
        self.picard.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.picard.step.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(CliError::Config(format!("t_end must be finite and nonnegative, got {}", self.t_end)));
        }
        if let Some(s) = &self.scan {
            s.validate()?;
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid, CliError> {
        self.grid.build().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn build_init(&self) -> Result<InitData, CliError> {
        build_init(&self.init, self.build_grid()?, &self.params)
    }
}

pub fn build_init(init: &InitSection, grid: Grid, p: &Params) -> Result<InitData, CliError> {
    let cfg_err = |e: dns_lab_core::Error| CliError::Config(e.to_string());
    Ok(match init {
        InitSection::Smooth(spec) => {
            let d = build_smooth_state(spec, grid, p).map_err(cfg_err)?;
            InitData { state: d.state, region: None, outer_region: None, velocity: None, prediction: None }
        }
        InitSection::IsolatedMassGroup(spec) => {
            let d = build_isolated_mass_group(spec, grid, p).map_err(cfg_err)?;
            InitData {
                state: d.state,
                region: Some(d.region_a),
                outer_region: Some(d.region_b),
                velocity: spec.interior_velocity.clone(),
                prediction: None,
            }
        }
        InitSection::HyperbolicSingularity(spec) => {
            let d = build_hyperbolic_singularity_data(spec, grid, p).map_err(cfg_err)?;
            InitData {
                state: d.state,
                region: Some(d.region),
                outer_region: None,
                velocity: Some(d.velocity),
                prediction: Some(d.prediction),
            }
        }
        InitSection::PureVacuum(spec) => {
            let center = if spec.center.is_empty() { vec![0.0; grid.dim()] } else { spec.center.clone() };
            if center.len() != grid.dim() {
                return Err(CliError::Config("pure_vacuum center has the wrong dimension".into()));
            }
            let u0 = spec.velocity.field(&center, spec.radius);
            let state = build_pure_vacuum(grid, &u0).map_err(cfg_err)?;
            let prediction = predict_blowup(&u0, &Region::whole_grid(grid));
            InitData { state, region: None, outer_region: None, velocity: Some(u0), prediction: Some(prediction) }
        }
    })
}
