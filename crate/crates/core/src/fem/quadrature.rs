//! Quadrature on the reference triangle and tetrahedron.
//!
//! Rules are conical (collapsed) products of Gauss-Legendre rules. They have
//! more points than the best symmetric rules but are exact to any requested
//! degree with strictly positive weights, and need no tabulated data.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Triangle,
    Tetrahedron,
}

impl CellKind {
    pub fn dim(self) -> usize {
        match self {
            CellKind::Triangle => 2,
            CellKind::Tetrahedron => 3,
        }
    }

    pub fn from_dim(dim: usize) -> Self {
        match dim {
            2 => CellKind::Triangle,
            3 => CellKind::Tetrahedron,
            _ => panic!("no simplex cell kind of dimension {dim}"),
        }
    }

    /// 1/2 for the triangle, 1/6 for the tetrahedron.
    pub fn reference_measure(self) -> f64 {
        match self {
            CellKind::Triangle => 0.5,
            CellKind::Tetrahedron => 1.0 / 6.0,
        }
    }
}

pub const MAX_EXACTNESS: usize = 8;

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub kind: CellKind,
    pub exactness: usize,
    /// Reference coordinates; unused trailing entries are zero.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integrates `f` over the reference cell.
    pub fn integrate(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre_01(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_m.
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - t);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

pub fn quadrature_rule(kind: CellKind, exactness: usize) -> Result<QuadratureRule> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::UnsupportedDegree(exactness));
    }
    let p = exactness.max(1);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match kind {
        CellKind::Triangle => {
            let (x, w) = gauss_legendre_01((p + 3) / 2);
            for (&u, &wu) in x.iter().zip(&w) {
                for (&v, &wv) in x.iter().zip(&w) {
                    points.push([u, v * (1.0 - u), 0.0]);
                    weights.push(wu * wv * (1.0 - u));
                }
            }
        }
        CellKind::Tetrahedron => {
            let (x, w) = gauss_legendre_01((p + 4) / 2);
            for (&u, &wu) in x.iter().zip(&w) {
                for (&v, &wv) in x.iter().zip(&w) {
                    for (&s, &ws) in x.iter().zip(&w) {
                        points.push([u, v * (1.0 - u), s * (1.0 - u) * (1.0 - v)]);
                        weights.push(wu * wv * ws * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
        }
    }
    Ok(QuadratureRule {
        kind,
        exactness,
        points,
        weights,
    })
}
