//! Lagrange shape functions of degree 1 and 2 on simplices, written in
//! barycentric coordinates.

use super::quadrature::CellKind;

const TRI_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];
const TET_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 3)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceElement {
    pub kind: CellKind,
    pub degree: usize,
}

impl ReferenceElement {
    pub fn new(kind: CellKind, degree: usize) -> Self {
        assert!(degree == 1 || degree == 2, "only P1 and P2 are supported");
        Self { kind, degree }
    }

    pub fn vertex_count(&self) -> usize {
        self.kind.dim() + 1
    }

    /// Local edges as vertex pairs; edge `e` carries node `vertex_count + e`.
    pub fn local_edges(&self) -> &'static [(usize, usize)] {
        match self.kind {
            CellKind::Triangle => &TRI_EDGES,
            CellKind::Tetrahedron => &TET_EDGES,
        }
    }

    pub fn node_count(&self) -> usize {
        match self.degree {
            1 => self.vertex_count(),
            _ => self.vertex_count() + self.local_edges().len(),
        }
    }

    /// Barycentric coordinates of local node `i`.
    pub fn node_barycentric(&self, i: usize) -> [f64; 4] {
        let mut l = [0.0; 4];
        let nv = self.vertex_count();
        if i < nv {
            l[i] = 1.0;
        } else {
            let (a, b) = self.local_edges()[i - nv];
            l[a] = 0.5;
            l[b] = 0.5;
        }
        l
    }

    /// Shape function values at the point with barycentric coordinates `l`.
    pub fn values(&self, l: &[f64; 4], out: &mut [f64]) {
        let nv = self.vertex_count();
        match self.degree {
            1 => out[..nv].copy_from_slice(&l[..nv]),
            _ => {
                for i in 0..nv {
                    out[i] = l[i] * (2.0 * l[i] - 1.0);
                }
                for (e, &(a, b)) in self.local_edges().iter().enumerate() {
                    out[nv + e] = 4.0 * l[a] * l[b];
                }
            }
        }
    }

    /// `out[i][a]` = derivative of shape `i` with respect to `lambda_a`.
    pub fn barycentric_derivatives(&self, l: &[f64; 4], out: &mut [[f64; 4]]) {
        let nv = self.vertex_count();
        for row in out.iter_mut().take(self.node_count()) {
            *row = [0.0; 4];
        }
        match self.degree {
            1 => {
                for (i, row) in out.iter_mut().enumerate().take(nv) {
                    row[i] = 1.0;
                }
            }
            _ => {
                for (i, row) in out.iter_mut().enumerate().take(nv) {
                    row[i] = 4.0 * l[i] - 1.0;
                }
                for (e, &(a, b)) in self.local_edges().iter().enumerate() {
                    out[nv + e][a] = 4.0 * l[b];
                    out[nv + e][b] = 4.0 * l[a];
                }
            }
        }
    }

    /// Gradients with respect to the reference coordinates `xi`, where
    /// `lambda_0 = 1 - sum(xi)` and `lambda_i = xi_{i-1}`.
    pub fn reference_gradients(&self, xi: [f64; 3], out: &mut [[f64; 3]]) {
        let d = self.kind.dim();
        let l = to_barycentric(xi, d);
        let mut db = vec![[0.0; 4]; self.node_count()];
        self.barycentric_derivatives(&l, &mut db);
        for (g, dbi) in out.iter_mut().zip(&db) {
            *g = [0.0; 3];
            for k in 0..d {
                g[k] = dbi[k + 1] - dbi[0];
            }
        }
    }
}

pub fn to_barycentric(xi: [f64; 3], dim: usize) -> [f64; 4] {
    let mut l = [0.0; 4];
    let mut s = 0.0;
    for k in 0..dim {
        l[k + 1] = xi[k];
        s += xi[k];
    }
    l[0] = 1.0 - s;
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elements() -> Vec<ReferenceElement> {
        let mut v = Vec::new();
        for kind in [CellKind::Triangle, CellKind::Tetrahedron] {
            for degree in [1, 2] {
                v.push(ReferenceElement::new(kind, degree));
            }
        }
        v
    }

    // Deterministic pseudo-random points in the reference simplex.
    fn sample_points(dim: usize, count: usize) -> Vec<[f64; 3]> {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..count)
            .map(|_| loop {
                let p = [next(), next(), if dim == 3 { next() } else { 0.0 }];
                if p[0] + p[1] + p[2] <= 1.0 {
                    break p;
                }
            })
            .collect()
    }

    #[test]
    fn kronecker_property() {
        for el in elements() {
            let n = el.node_count();
            let mut vals = vec![0.0; n];
            for j in 0..n {
                el.values(&el.node_barycentric(j), &mut vals);
                for (i, &v) in vals.iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expected).abs() < 1e-15, "{el:?} shape {i} at node {j}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        for el in elements() {
            let d = el.kind.dim();
            let n = el.node_count();
            let mut vals = vec![0.0; n];
            let mut grads = vec![[0.0; 3]; n];
            for p in sample_points(d, 50) {
                el.values(&to_barycentric(p, d), &mut vals);
                assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                el.reference_gradients(p, &mut grads);
                for k in 0..3 {
                    let s: f64 = grads.iter().map(|g| g[k]).sum();
                    assert!(s.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for el in elements() {
            let d = el.kind.dim();
            let n = el.node_count();
            let mut grads = vec![[0.0; 3]; n];
            let (mut vp, mut vm) = (vec![0.0; n], vec![0.0; n]);
            for p in sample_points(d, 5) {
                el.reference_gradients(p, &mut grads);
                for k in 0..d {
                    let h = 1e-6;
                    let mut pp = p;
                    let mut pm = p;
                    pp[k] += h;
                    pm[k] -= h;
                    el.values(&to_barycentric(pp, d), &mut vp);
                    el.values(&to_barycentric(pm, d), &mut vm);
                    for i in 0..n {
                        let fd = (vp[i] - vm[i]) / (2.0 * h);
                        assert!((fd - grads[i][k]).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn p2_tet_has_ten_nodes() {
        assert_eq!(ReferenceElement::new(CellKind::Tetrahedron, 2).node_count(), 10);
        assert_eq!(ReferenceElement::new(CellKind::Triangle, 2).node_count(), 6);
    }
}
