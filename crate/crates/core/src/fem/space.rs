use std::collections::HashMap;
use std::sync::Arc;

use super::quadrature::{CellKind, QuadratureRule};
use super::reference::ReferenceElement;
use crate::error::{Error, Result};
use crate::mesh::{FacetTag, SimplexGeometry, SimplexMesh};

/// What a space discretizes; decides its essential boundary conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceRole {
    /// Fluid velocity: zero on the wall, tangential components zero on the plate.
    Velocity,
    Pressure,
    /// Plate displacement, zero on the plate boundary.
    PlateW,
    /// Auxiliary plate variable `z = -Δw`, zero on the plate boundary.
    PlateZ,
    Multiplier,
}

const ON_WALL: u8 = 1;
const ON_INTERFACE: u8 = 2;

/// Affine map of one simplex.
#[derive(Clone, Copy, Debug)]
pub struct CellMap {
    pub dim: usize,
    pub origin: [f64; 3],
    /// Columns are the edge vectors `x_i - x_0`.
    pub jacobian: [[f64; 3]; 3],
    pub det: f64,
    /// Physical gradients of the barycentric coordinates.
    pub grad_bary: [[f64; 3]; 4],
}

impl CellMap {
    fn new(dim: usize, vertices: &[[f64; 3]]) -> Self {
        let o = vertices[0];
        let mut j = [[0.0; 3]; 3];
        for c in 0..dim {
            for r in 0..dim {
                j[r][c] = vertices[c + 1][r] - o[r];
            }
        }
        let (det, inv) = if dim == 2 {
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let inv = [
                [j[1][1] / det, -j[0][1] / det, 0.0],
                [-j[1][0] / det, j[0][0] / det, 0.0],
                [0.0; 3],
            ];
            (det, inv)
        } else {
            let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
            let mut inv = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                    let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                    inv[r][c] = (j[r1][c1] * j[r2][c2] - j[r1][c2] * j[r2][c1]) / det;
                }
            }
            (det, inv)
        };
        // Row r of J^{-1} is the gradient of lambda_{r+1}.
        let mut grad_bary = [[0.0; 3]; 4];
        for a in 0..dim {
            grad_bary[a + 1] = inv[a];
            for k in 0..3 {
                grad_bary[0][k] -= inv[a][k];
            }
        }
        Self {
            dim,
            origin: o,
            jacobian: j,
            det: det.abs(),
            grad_bary,
        }
    }

    pub fn map(&self, xi: [f64; 3]) -> [f64; 3] {
        let mut x = self.origin;
        for r in 0..self.dim {
            for c in 0..self.dim {
                x[r] += self.jacobian[r][c] * xi[c];
            }
        }
        x
    }

    pub fn barycentric(&self, x: [f64; 3]) -> [f64; 4] {
        let mut l = [0.0; 4];
        let mut s = 0.0;
        for a in 1..=self.dim {
            let mut v = 0.0;
            for k in 0..self.dim {
                v += self.grad_bary[a][k] * (x[k] - self.origin[k]);
            }
            l[a] = v;
            s += v;
        }
        l[0] = 1.0 - s;
        l
    }

    pub fn physical_gradient(&self, dbary: &[f64; 4]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for a in 0..=self.dim {
            for k in 0..3 {
                g[k] += dbary[a] * self.grad_bary[a][k];
            }
        }
        g
    }
}

/// Shape values and barycentric derivatives tabulated at the points of a rule.
#[derive(Clone, Debug)]
pub struct ShapeTable {
    pub rule: QuadratureRule,
    pub values: Vec<Vec<f64>>,
    pub dbary: Vec<Vec<[f64; 4]>>,
}

impl ShapeTable {
    pub fn new(element: &ReferenceElement, rule: QuadratureRule) -> Self {
        let n = element.node_count();
        let d = element.kind.dim();
        let mut values = Vec::with_capacity(rule.len());
        let mut dbary = Vec::with_capacity(rule.len());
        for &p in &rule.points {
            let l = super::reference::to_barycentric(p, d);
            let mut v = vec![0.0; n];
            let mut g = vec![[0.0; 4]; n];
            element.values(&l, &mut v);
            element.barycentric_derivatives(&l, &mut g);
            values.push(v);
            dbary.push(g);
        }
        Self { rule, values, dbary }
    }
}

/// Continuous Lagrange space on a simplicial mesh.
///
/// Scalar nodes are numbered vertices first, then edges (degree 2). Vector
/// DOFs are component-major: DOF `c * node_count + node`.
#[derive(Clone, Debug)]
pub struct FeSpace {
    geometry: Arc<SimplexGeometry>,
    element: ReferenceElement,
    components: usize,
    role: SpaceRole,
    node_coords: Vec<[f64; 3]>,
    cell_nodes: Vec<usize>,
    edges: Vec<[usize; 2]>,
    edge_lookup: HashMap<[usize; 2], usize>,
    node_flags: Vec<u8>,
    fixed: Vec<bool>,
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl FeSpace {
    pub fn new(mesh: &impl SimplexMesh, degree: usize, components: usize, role: SpaceRole) -> Result<Self> {
        Self::on_geometry(mesh.geometry(), degree, components, role)
    }

    pub fn on_geometry(
        geometry: Arc<SimplexGeometry>,
        degree: usize,
        components: usize,
        role: SpaceRole,
    ) -> Result<Self> {
        if degree != 1 && degree != 2 {
            return Err(Error::InvalidArgument(format!("unsupported degree {degree}")));
        }
        if components == 0 {
            return Err(Error::InvalidArgument("space needs at least one component".into()));
        }
        let kind = CellKind::from_dim(geometry.dim);
        let element = ReferenceElement::new(kind, degree);
        let nv = geometry.vertex_count();
        let npc = element.node_count();

        let mut edges = Vec::new();
        let mut edge_lookup = HashMap::new();
        let mut cell_nodes = Vec::with_capacity(geometry.cell_count() * npc);
        for c in 0..geometry.cell_count() {
            let verts = geometry.cell(c);
            cell_nodes.extend_from_slice(verts);
            if degree == 2 {
                for &(a, b) in element.local_edges() {
                    let key = edge_key(verts[a], verts[b]);
                    let id = *edge_lookup.entry(key).or_insert_with(|| {
                        edges.push(key);
                        edges.len() - 1
                    });
                    cell_nodes.push(nv + id);
                }
            }
        }

        let mut node_coords = geometry.points.clone();
        for e in &edges {
            let (p, q) = (geometry.points[e[0]], geometry.points[e[1]]);
            node_coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]);
        }
        let node_count = node_coords.len();

        let mut node_flags = vec![0u8; node_count];
        for (facet, tag) in &geometry.facets {
            let flag = match tag {
                FacetTag::Wall => ON_WALL,
                FacetTag::Interface => ON_INTERFACE,
            };
            for &v in facet {
                node_flags[v] |= flag;
            }
            if degree == 2 {
                for a in 0..facet.len() {
                    for b in a + 1..facet.len() {
                        if let Some(&e) = edge_lookup.get(&edge_key(facet[a], facet[b])) {
                            node_flags[nv + e] |= flag;
                        }
                    }
                }
            }
        }

        let mut fixed = vec![false; components * node_count];
        for (n, &flags) in node_flags.iter().enumerate() {
            for c in 0..components {
                let fix = match role {
                    SpaceRole::Velocity => {
                        flags & ON_WALL != 0 || (flags & ON_INTERFACE != 0 && c < 2)
                    }
                    SpaceRole::PlateW | SpaceRole::PlateZ => flags & ON_WALL != 0,
                    SpaceRole::Pressure | SpaceRole::Multiplier => false,
                };
                fixed[c * node_count + n] = fix;
            }
        }

        Ok(Self {
            geometry,
            element,
            components,
            role,
            node_coords,
            cell_nodes,
            edges,
            edge_lookup,
            node_flags,
            fixed,
        })
    }

    /// Same mesh, different degree, component count or role.
    pub fn sibling(&self, degree: usize, components: usize, role: SpaceRole) -> Result<Self> {
        Self::on_geometry(self.geometry.clone(), degree, components, role)
    }

    pub fn geometry(&self) -> &Arc<SimplexGeometry> {
        &self.geometry
    }

    pub fn element(&self) -> &ReferenceElement {
        &self.element
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim
    }

    pub fn degree(&self) -> usize {
        self.element.degree
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn role(&self) -> SpaceRole {
        self.role
    }

    pub fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    pub fn dof_count(&self) -> usize {
        self.components * self.node_count()
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        component * self.node_count() + node
    }

    pub fn node_coord(&self, node: usize) -> [f64; 3] {
        self.node_coords[node]
    }

    pub fn node_coords(&self) -> &[[f64; 3]] {
        &self.node_coords
    }

    pub fn cell_count(&self) -> usize {
        self.geometry.cell_count()
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.element.node_count()
    }

    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        let n = self.nodes_per_cell();
        &self.cell_nodes[c * n..(c + 1) * n]
    }

    pub fn cell_map(&self, c: usize) -> CellMap {
        let verts: Vec<[f64; 3]> = self.geometry.cell(c).iter().map(|&v| self.geometry.points[v]).collect();
        CellMap::new(self.dim(), &verts)
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Scalar node carried by the mesh edge `(a, b)`, for degree 2 spaces.
    pub fn edge_node(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup
            .get(&edge_key(a, b))
            .map(|&e| self.geometry.vertex_count() + e)
    }

    /// Mesh vertices of a node: one for vertex nodes, two for edge nodes.
    pub fn node_vertices(&self, node: usize) -> (usize, Option<usize>) {
        let nv = self.geometry.vertex_count();
        if node < nv {
            (node, None)
        } else {
            let e = self.edges[node - nv];
            (e[0], Some(e[1]))
        }
    }

    pub fn node_on_wall(&self, node: usize) -> bool {
        self.node_flags[node] & ON_WALL != 0
    }

    pub fn node_on_interface(&self, node: usize) -> bool {
        self.node_flags[node] & ON_INTERFACE != 0
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }

    pub fn constraint_mask(&self) -> &[bool] {
        &self.fixed
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.dof_count()).filter(|&d| !self.fixed[d]).collect()
    }

    pub fn free_dof_count(&self) -> usize {
        self.fixed.iter().filter(|&&f| !f).count()
    }

    pub fn measure(&self) -> f64 {
        self.geometry.measure()
    }

    pub fn shape_table(&self, exactness: usize) -> Result<ShapeTable> {
        let rule = super::quadrature::quadrature_rule(self.element.kind, exactness)?;
        Ok(ShapeTable::new(&self.element, rule))
    }

    /// Nodal interpolation of a scalar function.
    pub fn interpolate_scalar(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        assert_eq!(self.components, 1, "scalar interpolation into a vector space");
        self.node_coords.iter().map(|&x| f(x)).collect()
    }

    /// Nodal interpolation of a vector function; only the first
    /// `components()` entries of `f` are used.
    pub fn interpolate_vector(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let n = self.node_count();
        let mut out = vec![0.0; self.dof_count()];
        for (i, &x) in self.node_coords.iter().enumerate() {
            let v = f(x);
            for c in 0..self.components {
                out[c * n + i] = v[c];
            }
        }
        out
    }

    /// Cell containing `x` with its barycentric coordinates.
    pub fn locate(&self, x: [f64; 3]) -> Result<(usize, [f64; 4])> {
        let tol = 1e-12;
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for c in 0..self.cell_count() {
            let l = self.cell_map(c).barycentric(x);
            let worst = l[..=self.dim()].iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= -tol {
                return Ok((c, l));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((c, l, worst));
            }
        }
        match best {
            Some((c, l, worst)) if worst >= -1e-9 => Ok((c, l)),
            _ => Err(Error::OutOfDomain(x)),
        }
    }

    /// Value of the discrete field at `x`, one entry per component.
    pub fn evaluate(&self, coeffs: &[f64], x: [f64; 3]) -> Result<Vec<f64>> {
        let (c, l) = self.locate(x)?;
        let mut phi = vec![0.0; self.nodes_per_cell()];
        self.element.values(&l, &mut phi);
        let nodes = self.cell_nodes(c);
        Ok((0..self.components)
            .map(|comp| {
                nodes
                    .iter()
                    .zip(&phi)
                    .map(|(&n, &p)| coeffs[self.dof(n, comp)] * p)
                    .sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_fluid_mesh, extract_plate_mesh, BoxBounds};

    fn cube(n: usize) -> crate::mesh::Mesh3D {
        build_box_fluid_mesh(n, n, n, BoxBounds::unit_plate_box(1.0)).unwrap()
    }

    #[test]
    fn dof_counts() {
        let m = cube(2);
        let p1 = FeSpace::new(&m, 1, 1, SpaceRole::Pressure).unwrap();
        assert_eq!(p1.dof_count(), 27);
        let one = build_box_fluid_mesh(1, 1, 1, BoxBounds::unit_plate_box(1.0)).unwrap();
        let single = SimplexGeometry {
            dim: 3,
            points: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            cells: vec![0, 1, 2, 3],
            facets: vec![],
        };
        let p2 = FeSpace::on_geometry(Arc::new(single), 2, 1, SpaceRole::Pressure).unwrap();
        assert_eq!(p2.dof_count(), 10);
        // Kuhn mesh P2 nodes fill the half-step grid.
        let p2 = FeSpace::new(&one, 2, 1, SpaceRole::Pressure).unwrap();
        assert_eq!(p2.node_count(), 27);
    }

    #[test]
    fn velocity_free_dofs_by_enumeration() {
        let m = cube(2);
        let v = FeSpace::new(&m, 2, 3, SpaceRole::Velocity).unwrap();
        // Brute force over the half-step grid: free components at each node.
        let mut expected = 0;
        for x in v.node_coords() {
            let on = |a: f64, b: f64| (a - b).abs() < 1e-12;
            let wall = on(x[0], 0.0) || on(x[0], 1.0) || on(x[1], 0.0) || on(x[1], 1.0) || on(x[2], -1.0);
            let top = on(x[2], 0.0);
            expected += if wall {
                0
            } else if top {
                1
            } else {
                3
            };
        }
        assert_eq!(v.free_dof_count(), expected);
        // Interior nodes of the 5^3 grid plus the 3x3 interior of the top face.
        assert_eq!(expected, 3 * 27 + 9);
    }

    #[test]
    fn plate_spaces_fix_boundary() {
        let m = cube(4);
        let (p, _) = extract_plate_mesh(&m).unwrap();
        let w = FeSpace::new(&p, 2, 1, SpaceRole::PlateW).unwrap();
        assert_eq!(w.node_count(), 81);
        assert_eq!(w.free_dof_count(), 49);
        let g = FeSpace::new(&p, 1, 1, SpaceRole::Multiplier).unwrap();
        assert_eq!(g.free_dof_count(), 25);
    }

    #[test]
    fn shared_nodes_are_continuous() {
        let m = cube(2);
        let v = FeSpace::new(&m, 2, 1, SpaceRole::Pressure).unwrap();
        // Every local node maps to the global node at the same coordinates.
        for c in 0..v.cell_count() {
            let map = v.cell_map(c);
            for (i, &n) in v.cell_nodes(c).iter().enumerate() {
                let l = v.element().node_barycentric(i);
                let xi = [l[1], l[2], l[3]];
                let x = map.map(xi);
                let y = v.node_coord(n);
                for k in 0..3 {
                    assert!((x[k] - y[k]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let m = cube(2);
        let s2 = FeSpace::new(&m, 2, 1, SpaceRole::Pressure).unwrap();
        let c = s2.interpolate_scalar(|x| x[0] * x[0]);
        let v = s2.evaluate(&c, [0.3, 0.3, -0.3]).unwrap();
        assert!((v[0] - 0.09).abs() < 1e-12);

        let s1 = FeSpace::new(&m, 1, 1, SpaceRole::Pressure).unwrap();
        let ones = s1.interpolate_scalar(|_| 1.0);
        assert!(ones.iter().all(|&x| x == 1.0));
        let lin = s1.interpolate_scalar(|x| x[0] + x[1] + x[2]);
        let map = s1.cell_map(5);
        let centroid = map.map([0.25, 0.25, 0.25]);
        let v = s1.evaluate(&lin, centroid).unwrap();
        assert!((v[0] - (centroid[0] + centroid[1] + centroid[2])).abs() < 1e-13);
    }

    #[test]
    fn evaluate_outside_is_an_error() {
        let m = cube(1);
        let s = FeSpace::new(&m, 1, 1, SpaceRole::Pressure).unwrap();
        assert!(matches!(
            s.evaluate(&[0.0; 8], [2.0, 0.0, 0.0]),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn mapped_weights_sum_to_cell_volume() {
        let m = build_box_fluid_mesh(2, 3, 2, BoxBounds::new([0.0, 0.0, -0.5], [1.0, 1.0, 0.0])).unwrap();
        let s = FeSpace::new(&m, 1, 1, SpaceRole::Pressure).unwrap();
        let rule = super::super::quadrature::quadrature_rule(CellKind::Tetrahedron, 2).unwrap();
        for c in 0..s.cell_count() {
            let map = s.cell_map(c);
            let vol: f64 = rule.weights.iter().map(|w| w * map.det).sum();
            let verts = s.geometry().cell(c).to_vec();
            let exact = crate::mesh::tet_signed_volume([0, 1, 2, 3].map(|i| m.vertices[verts[i]]));
            assert!((vol - exact).abs() < 1e-13 * exact.max(1.0));
        }
    }
}
