//! Material regions carried by the flow map.
//!
//! A region is a closed material surface (interval end points, a polygon
//! ring, or a triangulated sphere) plus a few interior markers. All markers
//! move with the fluid; the connectivity of the surface never changes, so
//! the node mask can be recovered at any time by an inside test against the
//! transported surface. This handles non-convex deformations in every
//! dimension.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid, VectorField};

#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// 1D: the two end markers.
    Interval { lo: usize, hi: usize },
    /// 2D: marker indices around a closed polygon.
    Ring(Vec<usize>),
    /// 3D: triangles over marker indices.
    Mesh(Vec<[usize; 3]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    grid: Grid,
    markers: Vec<[f64; 3]>,
    surface: Surface,
    mask: Vec<bool>,
    initial_volume: f64,
}

impl Region {
    /// A ball sampled with `resolution` boundary markers in 2D (subdivision
    /// level `resolution.min(4)` of an icosahedron in 3D; ignored in 1D).
    pub fn ball(grid: Grid, center: &[f64], radius: f64, resolution: usize) -> Result<Self> {
        let dim = grid.dim();
        if center.len() != dim {
            return Err(Error::DimensionMismatch("ball centre has wrong dimension".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidConfig("region radius must be positive".into()));
        }
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(center);
        let at = |dir: [f64; 3], r: f64| [c[0] + r * dir[0], c[1] + r * dir[1], c[2] + r * dir[2]];

        let (mut markers, surface) = match dim {
            1 => (vec![at([-1.0, 0.0, 0.0], radius), at([1.0, 0.0, 0.0], radius)], Surface::Interval {
                lo: 0,
                hi: 1,
            }),
            2 => {
                let k = resolution.max(16);
                let m: Vec<[f64; 3]> = (0..k)
                    .map(|i| {
                        let th = 2.0 * PI * i as f64 / k as f64;
                        at([th.cos(), th.sin(), 0.0], radius)
                    })
                    .collect();
                (m, Surface::Ring((0..k).collect()))
            }
            _ => {
                let (verts, tris) = icosphere(resolution.clamp(1, 4));
                (verts.iter().map(|v| at(*v, radius)).collect(), Surface::Mesh(tris))
            }
        };
        // interior fill: the centre and half-radius points on each axis
        markers.push(c);
        for a in 0..dim {
            for s in [-0.5, 0.5] {
                let mut dir = [0.0; 3];
                dir[a] = s;
                markers.push(at(dir, radius));
            }
        }
        let mut region =
            Region { grid, markers, surface, mask: vec![false; grid.len()], initial_volume: 0.0 };
        region.initial_volume = region.volume();
        region.rasterize();
        Ok(region)
    }

    /// Every node of the grid; markers are the box corners in 1D and the
    /// node positions otherwise (used for sampling only).
    pub fn whole_grid(grid: Grid) -> Self {
        let markers = (0..grid.len()).map(|i| grid.position(i)).collect();
        Region {
            grid,
            markers,
            surface: Surface::Mesh(Vec::new()),
            mask: vec![true; grid.len()],
            initial_volume: grid.volume(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn markers(&self) -> &[[f64; 3]] {
        &self.markers
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn initial_volume(&self) -> f64 {
        self.initial_volume
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Volume of the masked node cells.
    pub fn mask_volume(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 * self.grid.cell_volume()
    }

    /// Positions worth sampling: markers and masked nodes.
    pub fn sample_points(&self) -> Vec<[f64; 3]> {
        let mut pts = self.markers.clone();
        if !matches!(&self.surface, Surface::Mesh(t) if t.is_empty()) {
            pts.extend(
                self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| self.grid.position(i)),
            );
        }
        pts
    }

    /// Volume enclosed by the marker surface.
    pub fn volume(&self) -> f64 {
        let m = &self.markers;
        match &self.surface {
            Surface::Interval { lo, hi } => (m[*hi][0] - m[*lo][0]).abs(),
            Surface::Ring(ring) => {
                let mut s = 0.0;
                for k in 0..ring.len() {
                    let (p, q) = (m[ring[k]], m[ring[(k + 1) % ring.len()]]);
                    s += p[0] * q[1] - q[0] * p[1];
                }
                0.5 * s.abs()
            }
            Surface::Mesh(tris) if tris.is_empty() => self.initial_volume,
            Surface::Mesh(tris) => {
                // centre on a marker to limit cancellation
                let o = m[0];
                let mut s = 0.0;
                for t in tris {
                    let a = sub(m[t[0]], o);
                    let b = sub(m[t[1]], o);
                    let c = sub(m[t[2]], o);
                    s += dot(a, cross(b, c));
                }
                (s / 6.0).abs()
            }
        }
    }

    fn centroid(&self) -> [f64; 3] {
        let n = self.markers.len() as f64;
        let mut c = [0.0; 3];
        for m in &self.markers {
            for a in 0..3 {
                c[a] += m[a] / n;
            }
        }
        c
    }

    /// Inside test against the transported surface.
    pub fn contains(&self, x: [f64; 3]) -> bool {
        let m = &self.markers;
        match &self.surface {
            Surface::Interval { lo, hi } => {
                let (a, b) = (m[*lo][0].min(m[*hi][0]), m[*lo][0].max(m[*hi][0]));
                x[0] >= a && x[0] <= b
            }
            Surface::Ring(ring) => {
                let mut inside = false;
                let n = ring.len();
                for k in 0..n {
                    let p = m[ring[k]];
                    let q = m[ring[(k + n - 1) % n]];
                    if (p[1] > x[1]) != (q[1] > x[1])
                        && x[0] < (q[0] - p[0]) * (x[1] - p[1]) / (q[1] - p[1]) + p[0]
                    {
                        inside = !inside;
                    }
                }
                inside
            }
            Surface::Mesh(tris) if tris.is_empty() => true,
            Surface::Mesh(tris) => {
                let mut omega = 0.0;
                for t in tris {
                    let a = sub(m[t[0]], x);
                    let b = sub(m[t[1]], x);
                    let c = sub(m[t[2]], x);
                    let (la, lb, lc) = (norm(a), norm(b), norm(c));
                    let num = dot(a, cross(b, c));
                    let den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
                    omega += 2.0 * num.atan2(den);
                }
                (omega / (4.0 * PI)).abs() > 0.5
            }
        }
    }

    /// Recomputes the node mask from the current marker surface.
    pub fn rasterize(&mut self) {
        if matches!(&self.surface, Surface::Mesh(t) if t.is_empty()) {
            return;
        }
        let g = self.grid;
        let dim = g.dim();
        let c = self.centroid();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for m in &self.markers {
            for a in 0..dim {
                lo[a] = lo[a].min(m[a]);
                hi[a] = hi[a].max(m[a]);
            }
        }
        for i in 0..g.len() {
            let mut x = g.position(i);
            if g.boundary() == Boundary::Periodic {
                for a in 0..dim {
                    let l = g.length()[a];
                    x[a] -= l * ((x[a] - c[a]) / l).round();
                }
            }
            let in_box = (0..dim).all(|a| x[a] >= lo[a] - 1e-12 && x[a] <= hi[a] + 1e-12);
            self.mask[i] = in_box && self.contains(x);
        }
    }

    /// Moves every marker with the flow of the frozen velocity `u` for one
    /// step of explicit midpoint Runge-Kutta, then re-rasterizes.
    pub fn advance_flow_map(&self, u: &VectorField, dt: f64) -> Result<Region> {
        u.same_grid(&self.grid)?;
        let mut next = self.clone();
        for (k, x) in next.markers.iter_mut().enumerate() {
            let k1 = interpolate(u, *x).ok_or(Error::RegionEscape { marker: k })?;
            let mut mid = *x;
            for a in 0..3 {
                mid[a] += 0.5 * dt * k1[a];
            }
            let k2 = interpolate(u, mid).ok_or(Error::RegionEscape { marker: k })?;
            for a in 0..3 {
                x[a] += dt * k2[a];
            }
            if interpolate(u, *x).is_none() {
                return Err(Error::RegionEscape { marker: k });
            }
        }
        next.rasterize();
        Ok(next)
    }
}

/// Multilinear interpolation of `u` at `x`; `None` outside a far-field box.
pub fn interpolate(u: &VectorField, x: [f64; 3]) -> Option<[f64; 3]> {
    let g = u.grid();
    let dim = g.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..dim {
        let n = g.n()[a];
        let xi = (x[a] - g.origin()[a]) / g.h()[a];
        match g.boundary() {
            Boundary::Periodic => {
                let f = xi.floor();
                base[a] = (f as i64).rem_euclid(n as i64) as usize;
                frac[a] = xi - f;
            }
            Boundary::FarField => {
                if !(xi >= 0.0 && xi <= (n - 1) as f64) {
                    return None;
                }
                let f = xi.floor().min((n - 2) as f64);
                base[a] = f as usize;
                frac[a] = xi - f;
            }
        }
    }
    let mut out = [0.0; 3];
    for corner in 0..(1usize << dim) {
        let mut ijk = [0usize; 3];
        let mut w = 1.0;
        for a in 0..dim {
            let up = (corner >> a) & 1;
            ijk[a] = (base[a] + up) % g.n()[a];
            w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w == 0.0 {
            continue;
        }
        let idx = g.index(ijk);
        for (c, o) in out.iter_mut().enumerate().take(dim) {
            *o += w * u.comp(c)[idx];
        }
    }
    Some(out)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalized(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Unit icosphere with outward-oriented triangles.
fn icosphere(level: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| normalized(*v))
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalized([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    (verts, tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> Grid {
        Grid::new(1, &[201], &[4.0], Boundary::FarField).unwrap()
    }

    #[test]
    fn ball_volumes() {
        let r = Region::ball(g1(), &[0.0], 0.5, 0).unwrap();
        assert!((r.volume() - 1.0).abs() < 1e-15);
        assert!(r.markers().len() >= 4);
        assert!((r.mask_volume() - 1.02).abs() < 1e-12); // 51 nodes

        let g2 = Grid::new(2, &[81, 81], &[4.0, 4.0], Boundary::FarField).unwrap();
        let r = Region::ball(g2, &[0.2, -0.1], 1.0, 256).unwrap();
        assert!((r.volume() - PI).abs() < 1e-3);
        assert!((r.mask_volume() - PI).abs() < 0.1);
        assert!(r.markers().len() >= 8);

        let g3 = Grid::new(3, &[33, 33, 33], &[4.0, 4.0, 4.0], Boundary::FarField).unwrap();
        let r = Region::ball(g3, &[0.0, 0.0, 0.0], 1.0, 3).unwrap();
        let exact = 4.0 / 3.0 * PI;
        assert!((r.volume() - exact).abs() / exact < 1e-2);
        assert!((r.mask_volume() - exact).abs() / exact < 0.1);
    }

    #[test]
    fn zero_velocity_leaves_region_unchanged() {
        let g2 = Grid::new(2, &[41, 41], &[4.0, 4.0], Boundary::FarField).unwrap();
        let r = Region::ball(g2, &[0.0, 0.0], 1.0, 64).unwrap();
        let next = r.advance_flow_map(&VectorField::zeros(g2), 0.1).unwrap();
        assert_eq!(next, r);
    }

    #[test]
    fn constant_velocity_translates_rigidly() {
        let g2 = Grid::new(2, &[41, 41], &[4.0, 4.0], Boundary::FarField).unwrap();
        let r = Region::ball(g2, &[0.0, 0.0], 1.0, 64).unwrap();
        let c = [0.3, -0.2, 0.0];
        let u = VectorField::from_fn(g2, |_| c);
        let next = r.advance_flow_map(&u, 0.5).unwrap();
        for (a, b) in r.markers().iter().zip(next.markers()) {
            assert!((b[0] - a[0] - 0.15).abs() < 1e-14);
            assert!((b[1] - a[1] + 0.1).abs() < 1e-14);
        }
        assert!((next.volume() - r.volume()).abs() <= 1e-12 * r.volume());
    }

    #[test]
    fn rotation_preserves_marker_distances_to_third_order() {
        let mut errs = Vec::new();
        for dt in [0.02, 0.01] {
            let g2 = Grid::new(2, &[81, 81], &[6.0, 6.0], Boundary::FarField).unwrap();
            let r = Region::ball(g2, &[0.5, 0.0], 0.8, 32).unwrap();
            let u = VectorField::from_fn(g2, |x| [-x[1], x[0], 0.0]);
            let next = r.advance_flow_map(&u, dt).unwrap();
            let d = |m: &[[f64; 3]], i: usize, j: usize| norm(sub(m[i], m[j]));
            let mut e: f64 = 0.0;
            for i in 0..r.markers().len() {
                for j in 0..i {
                    e = e.max((d(next.markers(), i, j) - d(r.markers(), i, j)).abs());
                }
            }
            errs.push(e);
        }
        assert!(errs[0] < 1e-4);
        assert!((errs[0] / errs[1]).log2() > 2.7, "{errs:?}");
    }

    #[test]
    fn escape_is_reported() {
        let r = Region::ball(g1(), &[1.5], 0.4, 0).unwrap();
        let u = VectorField::from_fn(*r.grid(), |_| [1.0, 0.0, 0.0]);
        assert!(matches!(r.advance_flow_map(&u, 0.5), Err(Error::RegionEscape { .. })));
    }

    #[test]
    fn non_convex_ring_mask() {
        // an L-shaped ring
        let g2 = Grid::new(2, &[41, 41], &[4.0, 4.0], Boundary::FarField).unwrap();
        let mut r = Region::ball(g2, &[0.0, 0.0], 1.0, 16).unwrap();
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]];
        r.markers = pts.iter().map(|p| [p[0], p[1], 0.0]).collect();
        r.surface = Surface::Ring((0..pts.len()).collect());
        r.rasterize();
        assert!(r.contains([0.25, 0.75, 0.0]));
        assert!(!r.contains([0.75, 0.75, 0.0]));
        assert!((r.volume() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn periodic_interpolation_wraps() {
        let g = Grid::with_origin(1, &[10], &[1.0], &[0.0], Boundary::Periodic).unwrap();
        let u = VectorField::from_fn(g, |x| [x[0], 0.0, 0.0]);
        let v = interpolate(&u, [0.95, 0.0, 0.0]).unwrap();
        // halfway between node 9 (0.9) and node 0 (0.0)
        assert!((v[0] - 0.45).abs() < 1e-12);
    }
}
