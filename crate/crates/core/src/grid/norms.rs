//! Discrete Sobolev norm ladder used to monitor regularity.
//!
//! Derivatives up to order four are obtained by composing centred first
//! differences. Only distinct (sorted) multi-indices are formed; each
//! contributes with its multinomial multiplicity, so `|grad^k f|^2` sums
//! over every ordered index tuple as in the continuum definition.
//!
//! On far-field grids the sums run over nodes at least four cells from the
//! box edge; the clamped ghost layer would otherwise dominate high-order
//! stacks.

use super::{calculus::partial, Boundary, Grid, ScalarField, VectorField};
use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormReport {
    /// `|f|_2`.
    pub l2: f64,
    /// Full norms: `h[k]^2 = sum_{j<=k} |grad^j f|_2^2`.
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub linf: f64,
    /// Seminorms `|grad^k f|_2` for `k = 0..=3`.
    pub semi: [f64; 4],
    /// `|w grad^4 f|_2` when a weight was supplied.
    pub weighted: Option<f64>,
}

impl NormReport {
    fn from_squares(sq: [f64; 4], linf: f64, weighted_sq: Option<f64>) -> Self {
        let semi = sq.map(f64::sqrt);
        NormReport {
            l2: semi[0],
            h1: (sq[0] + sq[1]).sqrt(),
            h2: (sq[0] + sq[1] + sq[2]).sqrt(),
            h3: (sq[0] + sq[1] + sq[2] + sq[3]).sqrt(),
            linf,
            semi,
            weighted: weighted_sq.map(f64::sqrt),
        }
    }
}

fn multiplicity(tuple: &[usize]) -> f64 {
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    let mut counts = [0usize; 3];
    for &a in tuple {
        counts[a] += 1;
    }
    fact(tuple.len()) / counts.iter().map(|&c| fact(c)).product::<f64>()
}

/// Accumulates `sum mult * |d^alpha f|^2` (and the weighted fourth-order
/// sum) into `sq`, recursing over sorted multi-indices.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    grid: &Grid,
    field: &[f64],
    far: f64,
    tuple: &mut Vec<usize>,
    mask: &[bool],
    weight: Option<&[f64]>,
    sq: &mut [f64; 4],
    wsq: &mut f64,
) {
    let order = tuple.len();
    let dv = grid.cell_volume();
    let mult = multiplicity(tuple);
    if order < MAX_ORDER {
        let s: f64 = field.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v * v).sum();
        sq[order] += mult * s * dv;
    } else {
        if let Some(w) = weight {
            let s: f64 = field
                .iter()
                .zip(w)
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|((v, wv), _)| (v * wv) * (v * wv))
                .sum();
            *wsq += mult * s * dv;
        }
        return;
    }
    if order == MAX_ORDER - 1 && weight.is_none() {
        return;
    }
    let start = tuple.last().copied().unwrap_or(0);
    for a in start..grid.dim() {
        let d = partial(grid, field, far, a);
        tuple.push(a);
        accumulate(grid, &d, 0.0, tuple, mask, weight, sq, wsq);
        tuple.pop();
    }
}

fn norm_squares(
    f: &ScalarField,
    weight: Option<&ScalarField>,
    mask: &[bool],
) -> Result<([f64; 4], f64)> {
    let grid = f.grid();
    if let Some(w) = weight {
        w.same_grid(grid)?;
    }
    let mut sq = [0.0; 4];
    let mut wsq = 0.0;
    accumulate(
        grid,
        f.values(),
        f.far(),
        &mut Vec::with_capacity(MAX_ORDER),
        mask,
        weight.map(|w| w.values()),
        &mut sq,
        &mut wsq,
    );
    Ok((sq, wsq))
}

fn monitored_nodes(grid: &Grid) -> Result<Vec<bool>> {
    grid.require_min_nodes(2 * MAX_ORDER + 1)
        .map_err(|e| match e {
            Error::GridTooSmall { got, .. } => Error::GridTooSmall { need: 2 * MAX_ORDER + 1, got },
            other => other,
        })?;
    Ok(match grid.boundary() {
        Boundary::Periodic => vec![true; grid.len()],
        Boundary::FarField => grid.interior_mask(MAX_ORDER),
    })
}

/// Norm ladder of a scalar field, plus `|weight * grad^4 f|_2` if a weight
/// is given.
pub fn sobolev_norms(f: &ScalarField, weight: Option<&ScalarField>) -> Result<NormReport> {
    let mask = monitored_nodes(f.grid())?;
    let (sq, wsq) = norm_squares(f, weight, &mask)?;
    let linf = f
        .values()
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .fold(0.0f64, |acc, (v, _)| acc.max(v.abs()));
    Ok(NormReport::from_squares(sq, linf, weight.map(|_| wsq)))
}

/// Norm ladder of a vector field (component squares summed).
pub fn sobolev_norms_vector(u: &VectorField, weight: Option<&ScalarField>) -> Result<NormReport> {
    let grid = *u.grid();
    let mask = monitored_nodes(&grid)?;
    let mut sq = [0.0; 4];
    let mut wsq = 0.0;
    let mut linf: f64 = 0.0;
    for c in u.comps() {
        let f = ScalarField::new(grid, c.clone(), 0.0)?;
        let (s, w) = norm_squares(&f, weight, &mask)?;
        for k in 0..4 {
            sq[k] += s[k];
        }
        wsq += w;
        for (v, m) in c.iter().zip(&mask) {
            if *m {
                linf = linf.max(v.abs());
            }
        }
    }
    Ok(NormReport::from_squares(sq, linf, weight.map(|_| wsq)))
}
