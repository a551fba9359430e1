//! Initial-data constructors: isolated mass groups, vacuum balls with a
//! compressive velocity, pure vacuum, and smooth perturbations of the
//! far-field state.

mod analytic;

pub use analytic::{Expr, VectorExpr};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::Region;
use crate::grid::{sobolev_norms, sobolev_norms_vector, Boundary, Grid, NormReport, ScalarField, VectorField};
use crate::model::{rho_to_phi, Params};
use crate::state::State;
use crate::vacuum::{predict_blowup, BlowupPrediction};

/// Marker count used for region boundaries (2D ring size; the 3D mesh uses
/// subdivision level 2).
const RING_MARKERS: usize = 128;

/// Quintic smoothstep on `[0, 1]`, clamped outside.
pub fn smoothstep(x: f64) -> f64 {
    let s = x.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

fn radius_from(x: [f64; 3], center: &[f64]) -> f64 {
    center.iter().enumerate().map(|(a, c)| (x[a] - c) * (x[a] - c)).sum::<f64>().sqrt()
}

fn region_resolution(grid: &Grid) -> usize {
    if grid.dim() == 3 {
        2
    } else {
        RING_MARKERS
    }
}

fn check_center(grid: &Grid, center: &[f64]) -> Result<()> {
    if center.len() != grid.dim() {
        return Err(Error::InitialData(format!(
            "centre has {} coordinates on a {}-dimensional grid",
            center.len(),
            grid.dim()
        )));
    }
    Ok(())
}

/// True when the closed ball lies strictly inside a far-field box.
fn ball_inside(grid: &Grid, center: &[f64], radius: f64) -> bool {
    grid.boundary() == Boundary::Periodic
        || (0..grid.dim()).all(|a| {
            let (lo, hi) = grid.extent(a);
            center[a] - radius > lo && center[a] + radius < hi
        })
}

fn sample_velocity(grid: Grid, u: &VectorExpr) -> Result<VectorField> {
    if u.dim() != grid.dim() {
        return Err(Error::InitialData(format!(
            "velocity has {} components on a {}-dimensional grid",
            u.dim(),
            grid.dim()
        )));
    }
    Ok(VectorField::from_fn(grid, |x| u.value(x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolatedMassGroupSpec {
    pub center: Vec<f64>,
    /// Radius of the mass support `A0`.
    pub radius_a: f64,
    /// Radius of the surrounding ball `B0`; the annulus between is vacuum.
    pub radius_b: f64,
    /// Radius of the outer ball containing `B0`.
    pub radius_outer: f64,
    /// Peak density.
    pub amplitude: f64,
    /// Bump sharpness `k` in `exp(k (1 - 1/(1 - r^2/R^2)))`.
    #[serde(default = "one")]
    pub order: f64,
    /// Constant velocity on `dA0` and outside it.
    pub boundary_velocity: Vec<f64>,
    /// Velocity added inside `A0`, faded out across the collar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_velocity: Option<VectorExpr>,
    /// Width of the fade inside `A0`; at least three cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collar: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub struct MassGroupData {
    pub state: State,
    pub region_a: Region,
    pub region_b: Region,
}

/// `ubar + fade(r) w(x)`, with the fade dropping from 1 to 0 across the
/// collar just inside `dA0`.
fn mass_group_velocity(spec: &IsolatedMassGroupSpec, collar: f64) -> impl Fn([f64; 3]) -> [f64; 3] + '_ {
    move |x| {
        let r = radius_from(x, &spec.center);
        let fade = 1.0 - smoothstep((r - (spec.radius_a - collar)) / collar);
        let mut u = [0.0; 3];
        u[..spec.boundary_velocity.len()].copy_from_slice(&spec.boundary_velocity);
        if let Some(w) = &spec.interior_velocity {
            if fade > 0.0 {
                let wv = w.value(x);
                for a in 0..3 {
                    u[a] += fade * wv[a];
                }
            }
        }
        u
    }
}

pub fn build_isolated_mass_group(
    spec: &IsolatedMassGroupSpec,
    grid: Grid,
    p: &Params,
) -> Result<MassGroupData> {
    check_center(&grid, &spec.center)?;
    if spec.boundary_velocity.len() != grid.dim() {
        return Err(Error::InitialData("boundary velocity has the wrong dimension".into()));
    }
    if let Some(w) = &spec.interior_velocity {
        if w.dim() != grid.dim() {
            return Err(Error::InitialData("interior velocity has the wrong dimension".into()));
        }
    }
    if p.rho_bar != 0.0 {
        return Err(Error::InitialData(
            "an isolated mass group needs vacuum far field (rho_bar = 0)".into(),
        ));
    }
    if !(spec.amplitude > 0.0) {
        return Err(Error::InitialData(format!(
            "amplitude {} gives no mass in A0; the mass integral must be positive",
            spec.amplitude
        )));
    }
    if !(spec.order > 0.0) {
        return Err(Error::InitialData("bump order must be positive".into()));
    }
    let h = grid.min_h();
    if !(spec.radius_a > 0.0 && spec.radius_b > spec.radius_a && spec.radius_outer >= spec.radius_b)
    {
        return Err(Error::InitialData(format!(
            "need 0 < radius_a < radius_b <= radius_outer, got {}, {}, {}",
            spec.radius_a, spec.radius_b, spec.radius_outer
        )));
    }
    if spec.radius_b - spec.radius_a < 3.0 * h {
        return Err(Error::InitialData(format!(
            "vacuum annulus {} is thinner than three cells ({})",
            spec.radius_b - spec.radius_a,
            3.0 * h
        )));
    }
    let collar = spec.collar.unwrap_or((0.25 * spec.radius_a).max(3.0 * h));
    if collar < 3.0 * h || collar >= spec.radius_a {
        return Err(Error::InitialData(format!(
            "collar {collar} must be at least three cells ({}) and below radius_a",
            3.0 * h
        )));
    }
    if !ball_inside(&grid, &spec.center, spec.radius_b) {
        return Err(Error::InitialData("B0 does not fit strictly inside the grid".into()));
    }

    let bump = Expr::Bump { center: spec.center.clone(), radius: spec.radius_a, order: spec.order };
    let rho = ScalarField::from_fn(grid, 0.0, |x| {
        if radius_from(x, &spec.center) >= spec.radius_a {
            0.0
        } else {
            spec.amplitude * bump.value(x)
        }
    });
    let phi = rho_to_phi(&rho, p)?;
    let vel = mass_group_velocity(spec, collar);
    let u = VectorField::from_fn(grid, &vel);
    let state = State::new(phi, u, 0.0)?;

    let res = region_resolution(&grid);
    let region_a = Region::ball(grid, &spec.center, spec.radius_a, res)?;
    let region_b = Region::ball(grid, &spec.center, spec.radius_b, res)?;
    if region_a.is_empty() {
        return Err(Error::InitialData("A0 contains no grid node".into()));
    }

    Ok(MassGroupData { state, region_a, region_b })
}

/// Velocity modes for a vacuum ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityMode {
    /// `-s (x - c) bump(x)`, radius defaults to twice the vacuum radius.
    Compression {
        strength: f64,
        #[serde(default)]
        radius: Option<f64>,
    },
    Expansion {
        strength: f64,
        #[serde(default)]
        radius: Option<f64>,
    },
    Shear {
        strength: f64,
    },
    Rotation {
        omega: f64,
    },
    Custom {
        field: VectorExpr,
    },
}

impl VelocityMode {
    pub fn field(&self, center: &[f64], vacuum_radius: f64) -> VectorExpr {
        match self {
            VelocityMode::Compression { strength, radius } => {
                VectorExpr::compression(center, radius.unwrap_or(2.0 * vacuum_radius), *strength)
            }
            VelocityMode::Expansion { strength, radius } => {
                VectorExpr::expansion(center, radius.unwrap_or(2.0 * vacuum_radius), *strength)
            }
            VelocityMode::Shear { strength } => VectorExpr::shear(center, *strength),
            VelocityMode::Rotation { omega } => VectorExpr::rotation(center, *omega),
            VelocityMode::Custom { field } => field.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperbolicSpec {
    pub center: Vec<f64>,
    /// Radius of the vacuum ball `V`.
    pub radius: f64,
    /// Width over which the density rises from 0 to `rho_bar` outside `V`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<f64>,
    pub velocity: VelocityMode,
}

#[derive(Debug, Clone)]
pub struct HyperbolicData {
    pub state: State,
    pub region: Region,
    pub velocity: VectorExpr,
    pub prediction: BlowupPrediction,
}

/// Vacuum ball `V` inside a background of density `rho_bar`, with a velocity
/// whose Jacobian has a negative real eigenvalue somewhere in `V`.
pub fn build_hyperbolic_singularity_data(
    spec: &HyperbolicSpec,
    grid: Grid,
    p: &Params,
) -> Result<HyperbolicData> {
    check_center(&grid, &spec.center)?;
    if !(spec.radius > 0.0) {
        return Err(Error::InitialData("vacuum radius must be positive".into()));
    }
    if !ball_inside(&grid, &spec.center, spec.radius) {
        return Err(Error::InitialData("V does not fit strictly inside the grid".into()));
    }
    let velocity = spec.velocity.field(&spec.center, spec.radius);
    if velocity.dim() != grid.dim() {
        return Err(Error::InitialData("velocity has the wrong dimension".into()));
    }
    let region = Region::ball(grid, &spec.center, spec.radius, region_resolution(&grid))?;
    if region.is_empty() {
        return Err(Error::InitialData("V contains no grid node".into()));
    }
    let prediction = predict_blowup(&velocity, &region);
    if !prediction.predicted_time.is_finite() {
        return Err(Error::InitialData(format!(
            "grad u0 has no negative real eigenvalue in V (smallest real eigenvalue {})",
            prediction.min_eigenvalue
        )));
    }
    let width = spec.transition.unwrap_or(3.0 * grid.min_h()).max(grid.min_h());
    let rho = ScalarField::from_fn(grid, p.rho_bar, |x| {
        p.rho_bar * smoothstep((radius_from(x, &spec.center) - spec.radius) / width)
    });
    let phi = rho_to_phi(&rho, p)?;
    let u = sample_velocity(grid, &velocity)?;
    Ok(HyperbolicData { state: State::new(phi, u, 0.0)?, region, velocity, prediction })
}

/// `phi = 0` everywhere with the given velocity.
pub fn build_pure_vacuum(grid: Grid, u0: &VectorExpr) -> Result<State> {
    State::new(ScalarField::zeros(grid), sample_velocity(grid, u0)?, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Gaussian,
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothSpec {
    pub center: Vec<f64>,
    /// Gaussian width or bump radius.
    pub width: f64,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    /// Density perturbation added to `rho_bar`.
    #[serde(default)]
    pub rho_amplitude: f64,
    /// Velocity `u_amplitude * shape(x) * direction`.
    #[serde(default)]
    pub u_amplitude: f64,
    #[serde(default)]
    pub direction: Vec<f64>,
}

fn default_profile() -> Profile {
    Profile::Bump
}

#[derive(Debug, Clone)]
pub struct SmoothData {
    pub state: State,
    /// Norms of `phi0 - phi_bar`.
    pub phi_norms: NormReport,
    pub u_norms: NormReport,
}

pub fn build_smooth_state(spec: &SmoothSpec, grid: Grid, p: &Params) -> Result<SmoothData> {
    check_center(&grid, &spec.center)?;
    if !(spec.width > 0.0) {
        return Err(Error::InitialData("profile width must be positive".into()));
    }
    let shape = match spec.profile {
        Profile::Gaussian => Expr::gaussian(&spec.center, spec.width),
        Profile::Bump => Expr::bump(&spec.center, spec.width),
    };
    let mut dir = [0.0; 3];
    if spec.u_amplitude != 0.0 {
        if spec.direction.len() != grid.dim() {
            return Err(Error::InitialData("velocity direction has the wrong dimension".into()));
        }
        dir[..grid.dim()].copy_from_slice(&spec.direction);
    }
    let rho = ScalarField::from_fn(grid, p.rho_bar, |x| p.rho_bar + spec.rho_amplitude * shape.value(x));
    let phi = rho_to_phi(&rho, p)?;
    let u = VectorField::from_fn(grid, |x| {
        let s = spec.u_amplitude * shape.value(x);
        [s * dir[0], s * dir[1], s * dir[2]]
    });
    let phi_bar = p.phi_bar();
    let perturbation = phi.map(0.0, |v| v - phi_bar);
    let phi_norms = sobolev_norms(&perturbation, None)?;
    let u_norms = sobolev_norms_vector(&u, None)?;
    Ok(SmoothData { state: State::new(phi, u, 0.0)?, phi_norms, u_norms })
}
