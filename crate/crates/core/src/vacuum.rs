//! Vacuum dynamics: the free-transport law that holds where `rho = 0`, its
//! exact solution along characteristics, and the eigenvalue blow-up
//! predictor.
//!
//! Along a characteristic starting at `xi`, `u` is constant, so
//! `u(x, t) = u0(xi)` with `xi + t u0(xi) = x`, and differentiating gives
//! `grad u(t) = (I + t grad u0(xi))^-1 grad u0(xi)`. The gradient is finite
//! until `det(I + t grad u0)` first vanishes, at `t = -1/l` for the most
//! negative real eigenvalue `l` of `grad u0`.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::functionals::Region;
use crate::grid::{advect_vector, Boundary};
use crate::initdata::VectorExpr;
use crate::model::Params;
use crate::state::State;
use crate::EPS_VAC;

/// Characteristics are declared collapsed below this determinant.
pub const DET_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VacuumReport {
    /// Nodes that are vacuum at both times.
    pub mask: Vec<bool>,
    /// `max |u_t + u . grad u - h|` over the masked nodes where the stencil
    /// stays inside the box.
    pub residual_linf: f64,
    /// Vacuum volume fraction.
    pub fraction: f64,
}

/// Discrete material-derivative residual on the vacuum set between two
/// consecutive states.
pub fn vacuum_residual(prev: &State, next: &State, p: &Params) -> Result<VacuumReport> {
    let g = *prev.grid();
    next.u.same_grid(&g)?;
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(crate::Error::InvalidConfig(format!(
            "vacuum residual needs increasing times, got {} -> {}",
            prev.t, next.t
        )));
    }
    let mask: Vec<bool> = prev
        .phi
        .values()
        .iter()
        .zip(next.phi.values())
        .map(|(a, b)| *a < EPS_VAC && *b < EPS_VAC)
        .collect();
    let count = mask.iter().filter(|&&m| m).count();
    let fraction = count as f64 / g.len() as f64;
    if count == 0 {
        return Ok(VacuumReport { mask, residual_linf: 0.0, fraction });
    }
    let adv = advect_vector(&prev.u, &prev.u)?;
    let inner = g.interior_mask(1);
    let mut res: f64 = 0.0;
    for i in 0..g.len() {
        if !mask[i] || (g.boundary() == Boundary::FarField && !inner[i]) {
            continue;
        }
        let force = p.force.as_ref().map(|f| f.value(g.position(i))).unwrap_or([0.0; 3]);
        let mut r2 = 0.0;
        for c in 0..g.dim() {
            let r = (next.u.comp(c)[i] - prev.u.comp(c)[i]) / dt + adv.comp(c)[i] - force[c];
            r2 += r * r;
        }
        res = res.max(r2.sqrt());
    }
    Ok(VacuumReport { mask, residual_linf: res, fraction })
}

/// Outcome of following the characteristic through `x` back to time 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transport {
    Regular {
        u: [f64; 3],
        /// `grad[i][j] = d u_i / d x_j`.
        grad: [[f64; 3]; 3],
        /// The foot point `xi` at time 0.
        foot: [f64; 3],
    },
    /// The characteristic map has folded (or the root-finder failed).
    BlownUp {
        foot: [f64; 3],
        det: f64,
        converged: bool,
    },
}

fn jacobian_matrix(j: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| j[r][c])
}

/// Exact free-transport solution at `(x, t)` for analytic initial velocity.
pub fn free_transport_exact(u0: &VectorExpr, x: [f64; 3], t: f64) -> Transport {
    let dim = u0.dim();
    let mut xi = x;
    let residual = |xi: &[f64; 3]| {
        let v = u0.value(*xi);
        let mut f = [0.0; 3];
        for a in 0..dim {
            f[a] = xi[a] + t * v[a] - x[a];
        }
        f
    };
    let norm = |f: &[f64; 3]| f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = 1.0 + norm(&x);
    let mut f = residual(&xi);
    let mut converged = norm(&f) <= 1e-14 * scale;
    for _ in 0..200 {
        if converged {
            break;
        }
        let (_, j) = u0.eval(xi);
        let m = Matrix3::identity() + jacobian_matrix(&j) * t;
        let Some(inv) = m.try_inverse() else { break };
        let step = inv * nalgebra::Vector3::new(f[0], f[1], f[2]);
        let f0 = norm(&f);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = xi;
            for a in 0..dim {
                trial[a] -= lambda * step[a];
            }
            let ft = residual(&trial);
            if norm(&ft) < f0 || norm(&ft) <= 1e-14 * scale {
                xi = trial;
                f = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = norm(&f) <= 1e-14 * scale;
    }
    let (u, j) = u0.eval(xi);
    let m = Matrix3::identity() + jacobian_matrix(&j) * t;
    let det = m.determinant();
    if !converged || det <= DET_FLOOR {
        return Transport::BlownUp { foot: xi, det, converged };
    }
    let g = m.try_inverse().expect("determinant above floor") * jacobian_matrix(&j);
    let mut grad = [[0.0; 3]; 3];
    for (r, row) in grad.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = g[(r, c)];
        }
    }
    Transport::Regular { u, grad, foot: xi }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupPrediction {
    /// Smallest real eigenvalue of `grad u0` over the sampled points
    /// (`+inf` if every spectrum is complex).
    pub min_eigenvalue: f64,
    pub location: [f64; 3],
    /// `-1 / min_eigenvalue` when negative, otherwise infinity.
    pub predicted_time: f64,
}

/// Real eigenvalues of the leading `dim x dim` block.
pub fn real_eigenvalues(j: &[[f64; 3]; 3], dim: usize) -> Vec<f64> {
    match dim {
        1 => vec![j[0][0]],
        2 => {
            let tr = j[0][0] + j[1][1];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let half = 0.5 * tr;
            let disc = half * half - det;
            let tol = 1e-14 * (half * half + det.abs());
            if disc < -tol {
                Vec::new()
            } else {
                let s = disc.max(0.0).sqrt();
                vec![half - s, half + s]
            }
        }
        _ => jacobian_matrix(j)
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-12 * (1.0 + z.re.abs()))
            .map(|z| z.re)
            .collect(),
    }
}

/// Scans the spectrum of `grad u0` at the region's sample points. The
/// predicted time is the first positive root of `det(I + t grad u0)`.
pub fn predict_blowup(u0: &VectorExpr, region: &Region) -> BlowupPrediction {
    predict_blowup_at(u0, &region.sample_points())
}

pub fn predict_blowup_at(u0: &VectorExpr, points: &[[f64; 3]]) -> BlowupPrediction {
    let dim = u0.dim();
    let per_point: Vec<(f64, [f64; 3])> = points
        .par_iter()
        .map(|x| {
            let (_, j) = u0.eval(*x);
            let l = real_eigenvalues(&j, dim).into_iter().fold(f64::INFINITY, f64::min);
            (l, *x)
        })
        .collect();
    // sequential selection keeps the first minimiser in point order
    let mut best = (f64::INFINITY, [0.0; 3]);
    for (l, x) in per_point {
        if l < best.0 {
            best = (l, x);
        }
    }
    let predicted_time = if best.0 < 0.0 { -1.0 / best.0 } else { f64::INFINITY };
    BlowupPrediction { min_eigenvalue: best.0, location: best.1, predicted_time }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, ScalarField, VectorField};
    use crate::initdata::Expr;

    fn minus_x() -> VectorExpr {
        VectorExpr::new(vec![Expr::coord(0).scale(-1.0)])
    }

    #[test]
    fn constant_velocity_never_steepens() {
        let u0 = VectorExpr::constant(&[0.3, -1.0]);
        for t in [0.0, 1.0, 50.0] {
            match free_transport_exact(&u0, [0.2, 0.1, 0.0], t) {
                Transport::Regular { u, grad, .. } => {
                    assert_eq!(u, [0.3, -1.0, 0.0]);
                    assert_eq!(grad, [[0.0; 3]; 3]);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn linear_compression_closed_form() {
        let u0 = minus_x();
        for t in [0.1, 0.5, 0.9, 0.99] {
            let x = 0.37;
            match free_transport_exact(&u0, [x, 0.0, 0.0], t) {
                Transport::Regular { u, grad, .. } => {
                    let exact = -1.0 / (1.0 - t);
                    assert!((grad[0][0] - exact).abs() <= 1e-12 * exact.abs(), "t={t}");
                    assert!((u[0] - exact * x).abs() < 1e-12);
                }
                other => panic!("{other:?}"),
            }
        }
        assert!(matches!(free_transport_exact(&u0, [0.3, 0.0, 0.0], 1.0), Transport::BlownUp { .. }));
    }

    #[test]
    fn gradient_law_and_eigenvector_identity() {
        let u0 = VectorExpr::compression(&[0.0, 0.0], 1.0, 0.8)
            .comps
            .into_iter()
            .zip(VectorExpr::shear(&[0.0, 0.0], 0.3).comps)
            .map(|(a, b)| a.plus(b))
            .collect::<Vec<_>>();
        let u0 = VectorExpr::new(u0);
        let x = [0.1, -0.2, 0.0];
        let t = 0.4;
        let Transport::Regular { grad, foot, .. } = free_transport_exact(&u0, x, t) else {
            panic!("unexpected collapse")
        };
        let (_, j0) = u0.eval(foot);
        let m = Matrix3::identity() + jacobian_matrix(&j0) * t;
        let lhs = m * jacobian_matrix(&grad);
        assert!((lhs - jacobian_matrix(&j0)).abs().max() < 1e-12);

        // eigenpairs of grad u0 map to l / (1 + t l)
        for l in real_eigenvalues(&j0, 2) {
            let a = nalgebra::Matrix2::new(j0[0][0] - l, j0[0][1], j0[1][0], j0[1][1] - l);
            let w = if a[(0, 1)].abs() > 1e-14 || a[(0, 0)].abs() > 1e-14 {
                nalgebra::Vector2::new(-a[(0, 1)], a[(0, 0)])
            } else {
                nalgebra::Vector2::new(-a[(1, 1)], a[(1, 0)])
            };
            let g2 = nalgebra::Matrix2::new(grad[0][0], grad[0][1], grad[1][0], grad[1][1]);
            let expect = w * (l / (1.0 + t * l));
            assert!((g2 * w - expect).norm() < 1e-10 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn positive_spectrum_never_blows_up() {
        let u0 = VectorExpr::new(vec![Expr::coord(0).scale(2.0), Expr::coord(1).scale(0.5)]);
        for t in [1.0, 10.0, 1e4] {
            assert!(matches!(
                free_transport_exact(&u0, [0.3, -0.4, 0.0], t),
                Transport::Regular { .. }
            ));
        }
    }

    #[test]
    fn prediction_examples() {
        let g = Grid::new(2, &[41, 41], &[4.0, 4.0], crate::Boundary::FarField).unwrap();
        let region = Region::ball(g, &[0.0, 0.0], 1.0, 32).unwrap();
        let contract = VectorExpr::new(vec![Expr::coord(0).scale(-1.0), Expr::coord(1).scale(-1.0)]);
        assert_eq!(predict_blowup(&contract, &region).predicted_time, 1.0);
        let expand = VectorExpr::new(vec![Expr::coord(0), Expr::coord(1)]);
        assert_eq!(predict_blowup(&expand, &region).predicted_time, f64::INFINITY);
        let rot = VectorExpr::rotation(&[0.0, 0.0], 1.0);
        assert_eq!(predict_blowup(&rot, &region).predicted_time, f64::INFINITY);
        let shear = VectorExpr::shear(&[0.0, 0.0], 1.0);
        assert_eq!(predict_blowup(&shear, &region).predicted_time, f64::INFINITY);
        let bump = VectorExpr::compression(&[0.0, 0.0], 1.5, 1.0);
        let pred = predict_blowup(&bump, &region);
        assert_eq!(pred.predicted_time, 1.0);
        assert_eq!(pred.location, [0.0; 3]);
    }

    #[test]
    fn three_dimensional_spectrum() {
        let u0 = VectorExpr::new(vec![
            Expr::coord(0).scale(-2.0),
            Expr::coord(1).scale(0.5),
            Expr::coord(2).scale(-0.25),
        ]);
        let p = predict_blowup_at(&u0, &[[0.0; 3]]);
        assert!((p.predicted_time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn residual_of_constant_transport_is_zero() {
        let g = Grid::new(1, &[64], &[2.0], crate::Boundary::Periodic).unwrap();
        let p = Params::new(1.0, 2.0, 1.0, 0.0, 1.5);
        let u = VectorField::from_fn(g, |_| [0.7, 0.0, 0.0]);
        let a = State::new(ScalarField::zeros(g), u.clone(), 0.0).unwrap();
        let b = State::new(ScalarField::zeros(g), u, 0.01).unwrap();
        let r = vacuum_residual(&a, &b, &p).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert_eq!(r.residual_linf, 0.0);

        let full = State::new(ScalarField::constant(g, 1.0), a.u.clone(), 0.0).unwrap();
        let r = vacuum_residual(&full, &State { t: 0.01, ..full.clone() }, &p).unwrap();
        assert_eq!((r.fraction, r.residual_linf), (0.0, 0.0));
    }
}
