//! Structured simplicial meshes of the fluid box and the plate square.
//!
//! The fluid box is split into `nx * ny * nz` hexahedral cells, each cut into
//! six tetrahedra sharing the cell's main diagonal (Kuhn/Freudenthal split).
//! Because every cell uses the same diagonal directions, neighbouring cells
//! agree on their shared face diagonals and the mesh is conforming. The plate
//! mesh is the exact trace of the fluid mesh on the top plane.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Which part of the fluid boundary a face belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaceTag {
    /// The no-slip wall `S`.
    Wall,
    /// The top plane, shared with the plate.
    Plate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoxBounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    /// `[0,1] x [0,1] x [-depth, 0]`
    pub fn unit_plate_box(depth: f64) -> Self {
        Self::new([0.0, 0.0, -depth], [1.0, 1.0, 0.0])
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    fn scale(&self) -> f64 {
        let e = self.extent();
        e[0].max(e[1]).max(e[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryFace {
    pub vertices: [usize; 3],
    pub tag: FaceTag,
}

#[derive(Clone, Debug)]
pub struct Mesh3D {
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub boundary_faces: Vec<BoundaryFace>,
    pub divisions: [usize; 3],
    pub bounds: BoxBounds,
}

#[derive(Clone, Debug)]
pub struct Mesh2D {
    pub vertices: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
}

/// Identification of the plate mesh with the `Plate` part of the fluid boundary.
#[derive(Clone, Debug)]
pub struct TraceMap {
    /// `face_to_tri[i] = (boundary face index in the fluid mesh, plate triangle)`.
    pub face_to_tri: Vec<(usize, usize)>,
    /// Plate vertex -> fluid vertex.
    pub vertex_map: Vec<usize>,
    /// Whether the plate triangle's vertex order reverses the fluid face order.
    pub flipped: Vec<bool>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

pub(crate) fn tet_signed_volume(p: [[f64; 3]; 4]) -> f64 {
    let a = sub(p[1], p[0]);
    let b = sub(p[2], p[0]);
    let c = sub(p[3], p[0]);
    (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]))
        / 6.0
}

pub(crate) fn tri_signed_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

/// Builds the Kuhn-split tetrahedral mesh of a box.
pub fn build_box_fluid_mesh(nx: usize, ny: usize, nz: usize, bounds: BoxBounds) -> Result<Mesh3D> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidArgument(format!(
            "subdivision counts must be positive, got ({nx}, {ny}, {nz})"
        )));
    }
    let ext = bounds.extent();
    if !(ext[0] > 0.0 && ext[1] > 0.0 && ext[2] > 0.0) {
        return Err(Error::InvalidArgument(format!("degenerate box {bounds:?}")));
    }

    let idx = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    bounds.min[0] + ext[0] * i as f64 / nx as f64,
                    bounds.min[1] + ext[1] * j as f64 / ny as f64,
                    bounds.min[2] + ext[2] * k as f64 / nz as f64,
                ]);
            }
        }
    }
    // Exact end points so that tagging does not depend on rounding.
    for v in vertices.iter_mut() {
        for d in 0..3 {
            if (v[d] - bounds.max[d]).abs() <= 1e-14 * ext[d] {
                v[d] = bounds.max[d];
            }
        }
    }

    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [idx(c[0], c[1], c[2]); 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[step + 1] = idx(c[0], c[1], c[2]);
                    }
                    let p = tet.map(|v| vertices[v]);
                    if tet_signed_volume(p) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    let mut face_count: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
    for tet in &tets {
        // Faces opposite each vertex, ordered to point outward.
        let faces = [
            [tet[1], tet[2], tet[3]],
            [tet[0], tet[3], tet[2]],
            [tet[0], tet[1], tet[3]],
            [tet[0], tet[2], tet[1]],
        ];
        for f in faces {
            face_count
                .entry(sorted3(f))
                .and_modify(|e| e.0 += 1)
                .or_insert((1, f));
        }
    }
    let top = bounds.max[2];
    let tol = 1e-12 * bounds.scale();
    let mut boundary_faces: Vec<BoundaryFace> = face_count
        .into_iter()
        .filter(|(_, (count, _))| *count == 1)
        .map(|(_, (_, f))| {
            let on_top = f.iter().all(|&v| (vertices[v][2] - top).abs() <= tol);
            BoundaryFace {
                vertices: f,
                tag: if on_top { FaceTag::Plate } else { FaceTag::Wall },
            }
        })
        .collect();
    boundary_faces.sort_by_key(|f| sorted3(f.vertices));

    Ok(Mesh3D {
        vertices,
        tets,
        boundary_faces,
        divisions: [nx, ny, nz],
        bounds,
    })
}

impl Mesh3D {
    /// Uniform mesh of `[0,1]^2 x [-depth, 0]` with `n` cells per unit length
    /// horizontally and `max(1, round(n * depth))` cells vertically.
    pub fn unit_plate_box(n: usize, depth: f64) -> Result<Mesh3D> {
        let nz = ((n as f64 * depth).round() as usize).max(1);
        build_box_fluid_mesh(n, n, nz, BoxBounds::unit_plate_box(depth))
    }

    pub fn volume(&self) -> f64 {
        self.tets
            .iter()
            .map(|t| tet_signed_volume(t.map(|v| self.vertices[v])))
            .sum()
    }

    pub fn plate_faces(&self) -> impl Iterator<Item = (usize, &BoundaryFace)> {
        self.boundary_faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.tag == FaceTag::Plate)
    }

    /// Plain-text dump: vertices, tetrahedra, tagged boundary faces.
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]);
        }
        let _ = writeln!(s, "tets {}", self.tets.len());
        for t in &self.tets {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        let _ = writeln!(s, "faces {}", self.boundary_faces.len());
        for f in &self.boundary_faces {
            let tag = match f.tag {
                FaceTag::Wall => "S",
                FaceTag::Plate => "PLATE",
            };
            let _ = writeln!(s, "{} {} {} {}", f.vertices[0], f.vertices[1], f.vertices[2], tag);
        }
        s
    }
}

impl Mesh2D {
    pub fn area(&self) -> f64 {
        self.tris
            .iter()
            .map(|t| tri_signed_area(t.map(|v| self.vertices[v])))
            .sum()
    }
}

/// Projects the plate-tagged faces of `m` onto the `(x, y)` plane.
pub fn extract_plate_mesh(m: &Mesh3D) -> Result<(Mesh2D, TraceMap)> {
    let plate: Vec<(usize, [usize; 3])> = m.plate_faces().map(|(i, f)| (i, f.vertices)).collect();
    if plate.is_empty() {
        return Err(Error::InvalidMesh("no plate-tagged boundary faces".into()));
    }

    let mut fluid_vertices: Vec<usize> = plate.iter().flat_map(|(_, f)| f.iter().copied()).collect();
    fluid_vertices.sort_unstable();
    fluid_vertices.dedup();
    let local: HashMap<usize, usize> = fluid_vertices
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let vertices: Vec<[f64; 2]> = fluid_vertices
        .iter()
        .map(|&v| [m.vertices[v][0], m.vertices[v][1]])
        .collect();

    let mut tris = Vec::with_capacity(plate.len());
    let mut face_to_tri = Vec::with_capacity(plate.len());
    let mut flipped = Vec::with_capacity(plate.len());
    for (face_idx, f) in &plate {
        let mut t = f.map(|v| local[&v]);
        let area = tri_signed_area(t.map(|v| vertices[v]));
        let flip = area < 0.0;
        if flip {
            t.swap(1, 2);
        }
        face_to_tri.push((*face_idx, tris.len()));
        flipped.push(flip);
        tris.push(t);
    }

    let mut edge_count: HashMap<[usize; 2], (usize, [usize; 2])> = HashMap::new();
    for t in &tris {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = if a < b { [a, b] } else { [b, a] };
            edge_count
                .entry(key)
                .and_modify(|e| e.0 += 1)
                .or_insert((1, [a, b]));
        }
    }
    let mut boundary_edges: Vec<[usize; 2]> = edge_count
        .into_iter()
        .filter(|(_, (c, _))| *c == 1)
        .map(|(_, (_, e))| e)
        .collect();
    boundary_edges.sort_unstable();

    Ok((
        Mesh2D {
            vertices,
            tris,
            boundary_edges,
        },
        TraceMap {
            face_to_tri,
            vertex_map: fluid_vertices,
            flipped,
        },
    ))
}

/// Tag of a boundary facet in the mesh-independent geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FacetTag {
    Wall,
    Interface,
}

/// Dimension-agnostic view of a simplicial mesh, shared by finite element
/// spaces. Two-dimensional meshes are embedded in the `z = 0` plane.
#[derive(Clone, Debug)]
pub struct SimplexGeometry {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    /// `dim + 1` vertex indices per cell, flattened.
    pub cells: Vec<usize>,
    pub facets: Vec<(Vec<usize>, FacetTag)>,
}

impl SimplexGeometry {
    pub fn cell_count(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.cells[c * n..(c + 1) * n]
    }

    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    pub fn measure(&self) -> f64 {
        (0..self.cell_count())
            .map(|c| {
                let v = self.cell(c);
                if self.dim == 3 {
                    tet_signed_volume([0, 1, 2, 3].map(|i| self.points[v[i]]))
                } else {
                    tri_signed_area([0, 1, 2].map(|i| {
                        let p = self.points[v[i]];
                        [p[0], p[1]]
                    }))
                }
            })
            .sum()
    }
}

pub trait SimplexMesh {
    fn geometry(&self) -> Arc<SimplexGeometry>;
}

impl SimplexMesh for Mesh3D {
    fn geometry(&self) -> Arc<SimplexGeometry> {
        Arc::new(SimplexGeometry {
            dim: 3,
            points: self.vertices.clone(),
            cells: self.tets.iter().flatten().copied().collect(),
            facets: self
                .boundary_faces
                .iter()
                .map(|f| {
                    let tag = match f.tag {
                        FaceTag::Wall => FacetTag::Wall,
                        FaceTag::Plate => FacetTag::Interface,
                    };
                    (f.vertices.to_vec(), tag)
                })
                .collect(),
        })
    }
}

impl SimplexMesh for Mesh2D {
    fn geometry(&self) -> Arc<SimplexGeometry> {
        Arc::new(SimplexGeometry {
            dim: 2,
            points: self.vertices.iter().map(|v| [v[0], v[1], 0.0]).collect(),
            cells: self.tris.iter().flatten().copied().collect(),
            facets: self
                .boundary_edges
                .iter()
                .map(|e| (e.to_vec(), FacetTag::Wall))
                .collect(),
        })
    }
}

/// Largest element diameter: max pairwise vertex distance over all cells.
pub fn mesh_size(m: &impl SimplexMesh) -> f64 {
    let g = m.geometry();
    let mut h: f64 = 0.0;
    for c in 0..g.cell_count() {
        let v = g.cell(c);
        for a in 0..v.len() {
            for b in a + 1..v.len() {
                h = h.max(dist(g.points[v[a]], g.points[v[b]]));
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> BoxBounds {
        BoxBounds::unit_plate_box(1.0)
    }

    #[test]
    fn single_cell_counts() {
        let m = build_box_fluid_mesh(1, 1, 1, unit_box()).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.tets.len(), 6);
        assert_eq!(m.boundary_faces.len(), 12);
        assert_eq!(m.plate_faces().count(), 2);
        assert!((mesh_size(&m) - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn two_cell_counts_and_volume() {
        let m = build_box_fluid_mesh(2, 2, 2, unit_box()).unwrap();
        assert_eq!(m.vertices.len(), 27);
        assert_eq!(m.tets.len(), 48);
        assert!((m.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plate_faces_lie_on_top_plane() {
        let m = build_box_fluid_mesh(4, 4, 4, unit_box()).unwrap();
        let plate: Vec<_> = m.plate_faces().collect();
        assert_eq!(plate.len(), 32);
        for (_, f) in plate {
            for v in f.vertices {
                assert_eq!(m.vertices[v][2], 0.0);
            }
        }
        assert!((mesh_size(&m) - 3f64.sqrt() / 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_zero_divisions() {
        assert!(matches!(
            build_box_fluid_mesh(0, 1, 1, unit_box()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn all_tets_positively_oriented() {
        let m = build_box_fluid_mesh(3, 2, 4, BoxBounds::new([-1.0, 0.5, -2.0], [2.0, 1.0, 0.0])).unwrap();
        for t in &m.tets {
            assert!(tet_signed_volume(t.map(|v| m.vertices[v])) > 0.0);
        }
    }

    #[test]
    fn plate_extraction_counts() {
        let m = build_box_fluid_mesh(2, 2, 2, unit_box()).unwrap();
        let (p, trace) = extract_plate_mesh(&m).unwrap();
        assert_eq!(p.tris.len(), 8);
        assert_eq!(p.vertices.len(), 9);
        assert!((p.area() - 1.0).abs() < 1e-12);
        assert_eq!(trace.face_to_tri.len(), p.tris.len());

        let m4 = build_box_fluid_mesh(4, 4, 4, unit_box()).unwrap();
        let (p4, _) = extract_plate_mesh(&m4).unwrap();
        // Four sides with four segments each.
        assert_eq!(p4.boundary_edges.len(), 16);
    }

    #[test]
    fn plate_mesh_size_is_half_diagonal() {
        let m = build_box_fluid_mesh(2, 2, 2, unit_box()).unwrap();
        let (p, _) = extract_plate_mesh(&m).unwrap();
        assert!((mesh_size(&p) - 2f64.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn trace_round_trip() {
        let m = build_box_fluid_mesh(3, 3, 2, unit_box()).unwrap();
        let (p, trace) = extract_plate_mesh(&m).unwrap();
        for (pv, &fv) in trace.vertex_map.iter().enumerate() {
            let f = m.vertices[fv];
            assert_eq!([f[0], f[1]], p.vertices[pv]);
            assert_eq!(f[2], 0.0);
        }
        let mut faces: Vec<_> = trace.face_to_tri.iter().map(|x| x.0).collect();
        let mut tris: Vec<_> = trace.face_to_tri.iter().map(|x| x.1).collect();
        faces.sort_unstable();
        faces.dedup();
        tris.sort_unstable();
        tris.dedup();
        assert_eq!(faces.len(), p.tris.len());
        assert_eq!(tris.len(), p.tris.len());
    }

    #[test]
    fn no_plate_faces_is_an_error() {
        let mut m = build_box_fluid_mesh(1, 1, 1, unit_box()).unwrap();
        for f in m.boundary_faces.iter_mut() {
            f.tag = FaceTag::Wall;
        }
        assert!(matches!(extract_plate_mesh(&m), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn ascii_export_lists_tags() {
        let m = build_box_fluid_mesh(1, 1, 1, unit_box()).unwrap();
        let s = m.to_ascii();
        assert_eq!(s.matches("PLATE").count(), 2);
        assert!(s.starts_with("vertices 8"));
    }
}
