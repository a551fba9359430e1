//! Closed-form fields with exact gradients.
//!
//! Expressions are small trees evaluated in forward mode: every node
//! returns its value together with its gradient, so Jacobians are exact up
//! to roundoff. They serialize to tagged JSON objects so run configurations
//! can carry them.

use serde::{Deserialize, Serialize};

type Grad = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Expr {
    Const {
        value: f64,
    },
    /// The coordinate `x_axis`.
    Coord {
        axis: usize,
    },
    Sum {
        terms: Vec<Expr>,
    },
    Product {
        factors: Vec<Expr>,
    },
    Scale {
        factor: f64,
        expr: Box<Expr>,
    },
    /// `exp(-|x - c|^2 / (2 w^2))`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
    },
    /// `exp(order * (1 - 1 / (1 - |x - c|^2 / r^2)))` inside the ball,
    /// exactly zero outside; equals 1 at the centre.
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        order: f64,
    },
    Sin {
        expr: Box<Expr>,
    },
    Cos {
        expr: Box<Expr>,
    },
    Exp {
        expr: Box<Expr>,
    },
}

fn one() -> f64 {
    1.0
}

fn offset(x: &[f64; 3], center: &[f64]) -> [f64; 3] {
    let mut d = [0.0; 3];
    for (a, c) in center.iter().enumerate().take(3) {
        d[a] = x[a] - c;
    }
    d
}

fn scaled(g: Grad, s: f64) -> Grad {
    [g[0] * s, g[1] * s, g[2] * s]
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const { value }
    }

    pub fn coord(axis: usize) -> Self {
        Expr::Coord { axis }
    }

    pub fn bump(center: &[f64], radius: f64) -> Self {
        Expr::Bump { center: center.to_vec(), radius, order: 1.0 }
    }

    pub fn gaussian(center: &[f64], width: f64) -> Self {
        Expr::Gaussian { center: center.to_vec(), width }
    }

    pub fn scale(self, factor: f64) -> Self {
        Expr::Scale { factor, expr: Box::new(self) }
    }

    pub fn times(self, other: Expr) -> Self {
        Expr::Product { factors: vec![self, other] }
    }

    pub fn plus(self, other: Expr) -> Self {
        Expr::Sum { terms: vec![self, other] }
    }

    /// `x_axis - c`.
    pub fn shifted_coord(axis: usize, c: f64) -> Self {
        Expr::coord(axis).plus(Expr::constant(-c))
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.eval(x).0
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: [f64; 3]) -> (f64, Grad) {
        match self {
            Expr::Const { value } => (*value, [0.0; 3]),
            Expr::Coord { axis } => {
                let mut g = [0.0; 3];
                g[*axis] = 1.0;
                (x[*axis], g)
            }
            Expr::Sum { terms } => terms.iter().fold((0.0, [0.0; 3]), |(v, g), t| {
                let (tv, tg) = t.eval(x);
                (v + tv, [g[0] + tg[0], g[1] + tg[1], g[2] + tg[2]])
            }),
            Expr::Product { factors } => factors.iter().fold((1.0, [0.0; 3]), |(v, g), f| {
                let (fv, fg) = f.eval(x);
                (
                    v * fv,
                    [g[0] * fv + v * fg[0], g[1] * fv + v * fg[1], g[2] * fv + v * fg[2]],
                )
            }),
            Expr::Scale { factor, expr } => {
                let (v, g) = expr.eval(x);
                (factor * v, scaled(g, *factor))
            }
            Expr::Gaussian { center, width } => {
                let d = offset(&x, center);
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let w2 = width * width;
                let v = (-r2 / (2.0 * w2)).exp();
                (v, scaled(d, -v / w2))
            }
            Expr::Bump { center, radius, order } => {
                let d = offset(&x, center);
                let s = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (radius * radius);
                if s >= 1.0 {
                    return (0.0, [0.0; 3]);
                }
                let q = 1.0 - s;
                let v = (order * (1.0 - 1.0 / q)).exp();
                // d/dx_i = v * order * (-1/q^2) * 2 d_i / r^2
                let k = -2.0 * order * v / (q * q * radius * radius);
                (v, scaled(d, k))
            }
            Expr::Sin { expr } => {
                let (v, g) = expr.eval(x);
                (v.sin(), scaled(g, v.cos()))
            }
            Expr::Cos { expr } => {
                let (v, g) = expr.eval(x);
                (v.cos(), scaled(g, -v.sin()))
            }
            Expr::Exp { expr } => {
                let (v, g) = expr.eval(x);
                let e = v.exp();
                (e, scaled(g, e))
            }
        }
    }
}

/// A vector field given by one expression per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorExpr {
    pub comps: Vec<Expr>,
}

impl VectorExpr {
    pub fn new(comps: Vec<Expr>) -> Self {
        VectorExpr { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn value(&self, x: [f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, c) in self.comps.iter().enumerate() {
            v[a] = c.value(x);
        }
        v
    }

    /// Value and Jacobian `J[i][j] = d u_i / d x_j`.
    pub fn eval(&self, x: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut v = [0.0; 3];
        let mut j = [[0.0; 3]; 3];
        for (a, c) in self.comps.iter().enumerate() {
            let (cv, cg) = c.eval(x);
            v[a] = cv;
            j[a] = cg;
        }
        (v, j)
    }

    pub fn constant(value: &[f64]) -> Self {
        VectorExpr::new(value.iter().map(|&v| Expr::constant(v)).collect())
    }

    /// `-s (x - c) bump(x)`: compressive near `c` with `grad u = -s I` there.
    pub fn compression(center: &[f64], radius: f64, strength: f64) -> Self {
        let b = Expr::bump(center, radius);
        VectorExpr::new(
            center
                .iter()
                .enumerate()
                .map(|(a, &c)| Expr::shifted_coord(a, c).scale(-strength).times(b.clone()))
                .collect(),
        )
    }

    /// `+s (x - c) bump(x)`.
    pub fn expansion(center: &[f64], radius: f64, strength: f64) -> Self {
        Self::compression(center, radius, -strength)
    }

    /// Plane shear `u = (s (y - c_y), 0, ...)`; the Jacobian is nilpotent
    /// everywhere.
    pub fn shear(center: &[f64], strength: f64) -> Self {
        let dim = center.len();
        let mut comps = vec![Expr::constant(0.0); dim];
        if dim >= 2 {
            comps[0] = Expr::shifted_coord(1, center[1]).scale(strength);
        }
        VectorExpr::new(comps)
    }

    /// Rigid rotation `omega * (-(y - c_y), x - c_x)` in the first two axes.
    pub fn rotation(center: &[f64], omega: f64) -> Self {
        let dim = center.len();
        let mut comps = vec![Expr::constant(0.0); dim];
        if dim >= 2 {
            comps[0] = Expr::shifted_coord(1, center[1]).scale(-omega);
            comps[1] = Expr::shifted_coord(0, center[0]).scale(omega);
        }
        VectorExpr::new(comps)
    }
}
