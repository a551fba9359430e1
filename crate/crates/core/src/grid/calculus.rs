//! Second-order centred differences, first-order upwind transport and
//! midpoint quadrature.
//!
//! Every stencil reads at most one neighbour per side along an axis. Under
//! a far-field boundary the missing neighbour takes the field's ghost value;
//! mixed and higher derivatives are built by composing these stencils.

use rayon::prelude::*;

use super::{Grid, ScalarField, TensorField, VectorField};
use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 1 << 14;

/// Fills a node array in parallel when it is large. Each output node is an
/// independent function of immutable input, so the result does not depend
/// on the thread count.
pub(crate) fn build(len: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    if len >= PAR_THRESHOLD {
        (0..len).into_par_iter().map(f).collect()
    } else {
        (0..len).map(f).collect()
    }
}

#[inline]
fn neighbor_value(grid: &Grid, data: &[f64], far: f64, idx: usize, axis: usize, s: isize) -> f64 {
    let stride = grid.strides()[axis];
    let n = grid.n[axis];
    let c = (idx / stride) % n;
    if s > 0 {
        if c + 1 < n {
            data[idx + stride]
        } else {
            match grid.boundary {
                super::Boundary::Periodic => data[idx - (n - 1) * stride],
                super::Boundary::FarField => far,
            }
        }
    } else if c > 0 {
        data[idx - stride]
    } else {
        match grid.boundary {
            super::Boundary::Periodic => data[idx + (n - 1) * stride],
            super::Boundary::FarField => far,
        }
    }
}

/// Centred first derivative along `axis`.
pub fn partial(grid: &Grid, data: &[f64], far: f64, axis: usize) -> Vec<f64> {
    let inv = 0.5 / grid.h[axis];
    build(grid.len(), |i| {
        (neighbor_value(grid, data, far, i, axis, 1) - neighbor_value(grid, data, far, i, axis, -1))
            * inv
    })
}

/// Compact three-point second derivative along `axis`.
pub fn partial2(grid: &Grid, data: &[f64], far: f64, axis: usize) -> Vec<f64> {
    let inv = 1.0 / (grid.h[axis] * grid.h[axis]);
    build(grid.len(), |i| {
        (neighbor_value(grid, data, far, i, axis, 1) - 2.0 * data[i]
            + neighbor_value(grid, data, far, i, axis, -1))
            * inv
    })
}

/// One-sided difference along `axis`, taken from the side the velocity
/// comes from.
pub fn upwind_partial(grid: &Grid, data: &[f64], far: f64, axis: usize, vel: &[f64]) -> Vec<f64> {
    let inv = 1.0 / grid.h[axis];
    build(grid.len(), |i| {
        if vel[i] > 0.0 {
            (data[i] - neighbor_value(grid, data, far, i, axis, -1)) * inv
        } else {
            (neighbor_value(grid, data, far, i, axis, 1) - data[i]) * inv
        }
    })
}

pub fn grad(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let comps = (0..g.dim()).map(|a| partial(&g, f.values(), f.far(), a)).collect();
    VectorField { grid: g, comps }
}

pub fn div(v: &VectorField) -> ScalarField {
    let g = *v.grid();
    let mut out = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let d = partial(&g, v.comp(a), 0.0, a);
        for (o, x) in out.iter_mut().zip(d) {
            *o += x;
        }
    }
    ScalarField { grid: g, data: out, far: 0.0 }
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let mut out = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let d = partial2(&g, f.values(), f.far(), a);
        for (o, x) in out.iter_mut().zip(d) {
            *o += x;
        }
    }
    ScalarField { grid: g, data: out, far: 0.0 }
}

/// `v . grad f` with first-order upwind differences chosen per component
/// by the sign of `v`.
pub fn advect(v: &VectorField, f: &ScalarField) -> Result<ScalarField> {
    v.same_grid(f.grid())?;
    let g = *f.grid();
    let mut out = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let va = v.comp(a);
        let d = upwind_partial(&g, f.values(), f.far(), a, va);
        for ((o, x), vv) in out.iter_mut().zip(d).zip(va) {
            *o += vv * x;
        }
    }
    Ok(ScalarField { grid: g, data: out, far: 0.0 })
}

/// Componentwise `v . grad u`.
pub fn advect_vector(v: &VectorField, u: &VectorField) -> Result<VectorField> {
    v.same_grid(u.grid())?;
    let g = *u.grid();
    let mut comps = Vec::with_capacity(g.dim());
    for c in 0..g.dim() {
        let mut out = vec![0.0; g.len()];
        for a in 0..g.dim() {
            let va = v.comp(a);
            let d = upwind_partial(&g, u.comp(c), 0.0, a, va);
            for ((o, x), vv) in out.iter_mut().zip(d).zip(va) {
                *o += vv * x;
            }
        }
        comps.push(out);
    }
    Ok(VectorField { grid: g, comps })
}

/// Jacobian `J_ij = d u_i / d x_j`.
pub fn grad_vector(u: &VectorField) -> TensorField {
    let g = *u.grid();
    let d = g.dim();
    let mut comps = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            comps.push(partial(&g, u.comp(i), 0.0, j));
        }
    }
    TensorField { grid: g, comps }
}

/// `(div T)_j = sum_i d_i T_ij`, with far-field ghosts of `T` equal to 0.
pub fn div_tensor(t: &TensorField) -> VectorField {
    let g = *t.grid();
    let d = g.dim();
    let mut comps = vec![vec![0.0; g.len()]; d];
    for (j, out) in comps.iter_mut().enumerate() {
        for i in 0..d {
            let di = partial(&g, t.comp(i, j), 0.0, i);
            for (o, x) in out.iter_mut().zip(di) {
                *o += x;
            }
        }
    }
    VectorField { grid: g, comps }
}

/// Lamé operator `L u = -alpha lap u - (alpha + beta) grad div u` acting on
/// raw component arrays with zero ghosts.
///
/// Pure second derivatives use the compact stencil and mixed ones the
/// product of centred first differences. With this pairing the discrete
/// operator is symmetric and, for `alpha > 0` and `alpha + beta >= 0`,
/// positive semidefinite on periodic and zero-ghost grids.
pub fn lame_apply(grid: &Grid, alpha: f64, beta: f64, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let ab = alpha + beta;
    let second: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|c| (0..d).map(|a| partial2(grid, &u[c], 0.0, a)).collect())
        .collect();
    let first: Vec<Vec<Vec<f64>>> = if d > 1 {
        (0..d).map(|c| (0..d).map(|a| partial(grid, &u[c], 0.0, a)).collect()).collect()
    } else {
        Vec::new()
    };
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let mut o = vec![0.0; grid.len()];
        for n in 0..grid.len() {
            let lap: f64 = (0..d).map(|b| second[a][b][n]).sum();
            o[n] = -alpha * lap - ab * second[a][a][n];
        }
        for b in 0..d {
            if b == a {
                continue;
            }
            // d_a (d_b u_b)
            let mixed = partial(grid, &first[b][b], 0.0, a);
            for (x, m) in o.iter_mut().zip(mixed) {
                *x -= ab * m;
            }
        }
        out.push(o);
    }
    out
}

/// Diagonal entry of [`lame_apply`] for component `a` (identical at every
/// node; mixed terms contribute nothing).
pub fn lame_diagonal(grid: &Grid, alpha: f64, beta: f64, a: usize) -> f64 {
    let h = grid.h();
    let lap: f64 = h.iter().map(|hb| 2.0 / (hb * hb)).sum();
    alpha * lap + (alpha + beta) * 2.0 / (h[a] * h[a])
}

/// Midpoint-rule integral `sum f * cell_volume`, optionally restricted to
/// masked nodes. Summation is sequential in node order.
pub fn integrate(f: &ScalarField, mask: Option<&[bool]>) -> Result<f64> {
    let g = f.grid();
    let sum: f64 = match mask {
        None => f.values().iter().sum(),
        Some(m) => {
            if m.len() != g.len() {
                return Err(Error::DimensionMismatch("mask length differs from grid".into()));
            }
            f.values().iter().zip(m).filter(|(_, &keep)| keep).map(|(v, _)| v).sum()
        }
    };
    Ok(sum * g.cell_volume())
}
