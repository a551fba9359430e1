use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::model::{phi_to_rho, Params};

/// The evolving pair `(phi, u)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub phi: ScalarField,
    pub u: VectorField,
    pub t: f64,
}

impl State {
    pub fn new(phi: ScalarField, u: VectorField, t: f64) -> Result<Self> {
        u.same_grid(phi.grid())?;
        Ok(State { phi, u, t })
    }

    /// The far-field state `(phi_bar, 0)` on every node.
    pub fn constant(grid: Grid, p: &Params) -> Self {
        State { phi: ScalarField::constant(grid, p.phi_bar()), u: VectorField::zeros(grid), t: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }

    pub fn rho(&self, p: &Params) -> Result<ScalarField> {
        phi_to_rho(&self.phi, p)
    }

    /// Squared discrete L2 distances `(|dphi|^2, |du|^2)`.
    pub fn distance_sq(&self, other: &State) -> Result<(f64, f64)> {
        if self.grid() != other.grid() {
            return Err(Error::DimensionMismatch("states live on different grids".into()));
        }
        let dv = self.grid().cell_volume();
        let dphi: f64 =
            self.phi.values().iter().zip(other.phi.values()).map(|(a, b)| (a - b) * (a - b)).sum();
        let du: f64 = self
            .u
            .comps()
            .iter()
            .zip(other.u.comps())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        Ok((dphi * dv, du * dv))
    }

    /// `sqrt(|dphi|^2 + |du|^2)`.
    pub fn distance(&self, other: &State) -> Result<f64> {
        let (a, b) = self.distance_sq(other)?;
        Ok((a + b).sqrt())
    }
}
