//! Uniform Cartesian grids in one to three dimensions and the fields that
//! live on them.
//!
//! Nodes are stored in row-major order with the last active axis varying
//! fastest. Inactive axes have a single node so index arithmetic is the
//! same in every dimension.

mod calculus;
mod norms;
pub mod snapshot;

pub use calculus::{
    advect, advect_vector, div, div_tensor, grad, grad_vector, integrate, laplacian, lame_apply,
    lame_diagonal, partial, partial2, upwind_partial,
};
pub use norms::{sobolev_norms, sobolev_norms_vector, NormReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Wrap-around in every axis.
    Periodic,
    /// Ghost nodes outside the box hold the far-field state `(phi_bar, 0)`.
    FarField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 3],
    length: [f64; 3],
    origin: [f64; 3],
    h: [f64; 3],
    boundary: Boundary,
}

impl Grid {
    /// Builds a grid centred on the origin.
    pub fn new(dim: usize, n: &[usize], length: &[f64], boundary: Boundary) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n.len() != dim || length.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} entries for n and length, got {} and {}",
                n.len(),
                length.len()
            )));
        }
        let mut origin = [0.0; 3];
        for a in 0..dim {
            origin[a] = -0.5 * length[a];
        }
        Self::with_origin(dim, n, length, &origin[..dim], boundary)
    }

    pub fn with_origin(
        dim: usize,
        n: &[usize],
        length: &[f64],
        origin: &[f64],
        boundary: Boundary,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n.len() != dim || length.len() != dim || origin.len() != dim {
            return Err(Error::InvalidGrid("axis count does not match dim".into()));
        }
        let mut g = Grid {
            dim,
            n: [1; 3],
            length: [0.0; 3],
            origin: [0.0; 3],
            h: [1.0; 3],
            boundary,
        };
        for a in 0..dim {
            if n[a] < 3 {
                return Err(Error::GridTooSmall { need: 3, got: n[a] });
            }
            if !(length[a] > 0.0) || !length[a].is_finite() {
                return Err(Error::InvalidGrid(format!("length[{a}] must be positive")));
            }
            g.n[a] = n[a];
            g.length[a] = length[a];
            g.origin[a] = origin[a];
            g.h[a] = match boundary {
                Boundary::Periodic => length[a] / n[a] as f64,
                Boundary::FarField => length[a] / (n[a] - 1) as f64,
            };
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn h(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    pub fn length(&self) -> &[f64] {
        &self.length[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn min_h(&self) -> f64 {
        self.h().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().iter().product()
    }

    /// Total volume covered by the node cells.
    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    pub(crate) fn strides(&self) -> [usize; 3] {
        [self.n[1] * self.n[2], self.n[2], 1]
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        let s = self.strides();
        ijk[0] * s[0] + ijk[1] * s[1] + ijk[2] * s[2]
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let s = self.strides();
        [idx / s[0], (idx / s[1]) % self.n[1], idx % self.n[2]]
    }

    /// Physical position of a node; inactive axes report 0.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.origin[a] + c[a] as f64 * self.h[a];
        }
        x
    }

    /// Neighbour index along `axis`; `None` means the neighbour is a
    /// far-field ghost.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let c = self.coords(idx);
        let n = self.n[axis] as isize;
        let j = c[axis] as isize + offset;
        let j = match self.boundary {
            Boundary::Periodic => j.rem_euclid(n),
            Boundary::FarField => {
                if j < 0 || j >= n {
                    return None;
                }
                j
            }
        };
        let s = self.strides();
        Some((idx as isize + (j - c[axis] as isize) * s[axis] as isize) as usize)
    }

    /// Lower and upper coordinate bounds of the box along `axis`.
    pub fn extent(&self, axis: usize) -> (f64, f64) {
        let lo = self.origin[axis];
        let hi = match self.boundary {
            Boundary::Periodic => lo + self.length[axis],
            Boundary::FarField => lo + self.h[axis] * (self.n[axis] - 1) as f64,
        };
        (lo, hi)
    }

    pub(crate) fn require_min_nodes(&self, need: usize) -> Result<()> {
        match self.n().iter().copied().min() {
            Some(m) if m < need => Err(Error::GridTooSmall { need, got: m }),
            _ => Ok(()),
        }
    }

    /// Nodes that are at least `margin` cells away from a far-field edge.
    /// On periodic grids every node qualifies.
    pub fn interior_mask(&self, margin: usize) -> Vec<bool> {
        (0..self.len())
            .map(|i| match self.boundary {
                Boundary::Periodic => true,
                Boundary::FarField => {
                    let c = self.coords(i);
                    (0..self.dim).all(|a| c[a] >= margin && c[a] + margin < self.n[a])
                }
            })
            .collect()
    }
}

fn check_len(grid: &Grid, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} values, got {len}",
            grid.len()
        )));
    }
    Ok(())
}

/// Scalar values on every node, plus the value its ghosts take under a
/// far-field boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
    far: f64,
}

impl ScalarField {
    pub fn new(grid: Grid, data: Vec<f64>, far: f64) -> Result<Self> {
        check_len(&grid, data.len())?;
        Ok(Self { grid, data, far })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, data: vec![value; grid.len()], far: value }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, far: f64, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, data, far }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn map(&self, far: f64, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect(), far }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn same_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid != *grid {
            return Err(Error::DimensionMismatch("scalar field on a different grid".into()));
        }
        Ok(())
    }
}

/// `dim` components per node. Ghosts are zero under a far-field boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} components, got {}",
                grid.dim(),
                comps.len()
            )));
        }
        for c in &comps {
            check_len(&grid, c.len())?;
        }
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, comps: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut comps = vec![vec![0.0; grid.len()]; grid.dim()];
        for i in 0..grid.len() {
            let v = f(grid.position(i));
            for (a, c) in comps.iter_mut().enumerate() {
                c[i] = v[a];
            }
        }
        Self { grid, comps }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comp(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    pub fn comp_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.comps[a]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_comps(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, c) in self.comps.iter().enumerate() {
            v[a] = c[idx];
        }
        v
    }

    /// Largest Euclidean norm over nodes.
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn same_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid != *grid {
            return Err(Error::DimensionMismatch("vector field on a different grid".into()));
        }
        Ok(())
    }
}

/// Dense `dim x dim` tensor per node, component `(i, j)` at `i * dim + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl TensorField {
    pub fn new(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        let d = grid.dim();
        if comps.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} tensor components, got {}",
                d * d,
                comps.len()
            )));
        }
        for c in &comps {
            check_len(&grid, c.len())?;
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comp(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[i * self.grid.dim() + j]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            comps: self.comps.iter().map(|c| c.iter().map(|v| v * s).collect()).collect(),
        }
    }

    pub fn trace(&self) -> Vec<f64> {
        let d = self.grid.dim();
        (0..self.grid.len())
            .map(|n| (0..d).map(|i| self.comps[i * d + i][n]).sum())
            .collect()
    }

    /// `max |T_ij - T_ji|` over nodes and index pairs.
    pub fn asymmetry(&self) -> f64 {
        let d = self.grid.dim();
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for (a, b) in self.comps[i * d + j].iter().zip(&self.comps[j * d + i]) {
                    m = m.max((a - b).abs());
                }
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}
