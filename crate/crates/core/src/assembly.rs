//! Element-loop assembly of the mass, stiffness, divergence and interface
//! coupling forms, and of load vectors.
//!
//! All integrals use affine simplices, so the polynomial forms are integrated
//! exactly; loads use a rule of degree `2k + 2`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FeSpace, ShapeTable};
use crate::mesh::TraceMap;
use crate::sparse::SparseMatrix;

fn same_mesh(a: &FeSpace, b: &FeSpace) -> bool {
    Arc::ptr_eq(a.geometry(), b.geometry())
        || (a.geometry().cells == b.geometry().cells && a.geometry().points == b.geometry().points)
}

fn load_exactness(space: &FeSpace) -> usize {
    (2 * space.degree() + 2).min(crate::fem::quadrature::MAX_EXACTNESS)
}

/// `M_ij = coefficient * ∫ φ_j · φ_i`, block diagonal over components.
pub fn assemble_mass(space: &FeSpace, coefficient: f64) -> SparseMatrix {
    let table = space.shape_table(2 * space.degree()).expect("mass rule");
    let npc = space.nodes_per_cell();
    let mut local = vec![0.0; npc * npc];
    let mut entries = Vec::with_capacity(space.cell_count() * npc * npc * space.components());
    for c in 0..space.cell_count() {
        let det = space.cell_map(c).det;
        local.iter_mut().for_each(|x| *x = 0.0);
        for (q, phi) in table.values.iter().enumerate() {
            let w = coefficient * table.rule.weights[q] * det;
            for i in 0..npc {
                for j in 0..npc {
                    local[i * npc + j] += w * phi[i] * phi[j];
                }
            }
        }
        scatter(space, space, c, &local, &mut entries);
    }
    SparseMatrix::from_triplets(space.dof_count(), space.dof_count(), &entries)
}

fn scatter(test: &FeSpace, trial: &FeSpace, c: usize, local: &[f64], entries: &mut Vec<(usize, usize, f64)>) {
    let (ti, tj) = (test.cell_nodes(c), trial.cell_nodes(c));
    for comp in 0..test.components() {
        for (i, &ni) in ti.iter().enumerate() {
            for (j, &nj) in tj.iter().enumerate() {
                entries.push((test.dof(ni, comp), trial.dof(nj, comp), local[i * tj.len() + j]));
            }
        }
    }
}

/// `K_ij = coefficient * ∫ ∇φ_j : ∇φ_i`, block diagonal over components.
pub fn assemble_stiffness(space: &FeSpace, coefficient: f64) -> SparseMatrix {
    let table = space.shape_table((2 * space.degree()).saturating_sub(2)).expect("stiffness rule");
    let npc = space.nodes_per_cell();
    let mut local = vec![0.0; npc * npc];
    let mut grads = vec![[0.0; 3]; npc];
    let mut entries = Vec::with_capacity(space.cell_count() * npc * npc * space.components());
    for c in 0..space.cell_count() {
        let map = space.cell_map(c);
        local.iter_mut().for_each(|x| *x = 0.0);
        for (q, db) in table.dbary.iter().enumerate() {
            let w = coefficient * table.rule.weights[q] * map.det;
            for (g, d) in grads.iter_mut().zip(db) {
                *g = map.physical_gradient(d);
            }
            for i in 0..npc {
                for j in 0..npc {
                    let gi = grads[i];
                    let gj = grads[j];
                    local[i * npc + j] += w * (gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2]);
                }
            }
        }
        scatter(space, space, c, &local, &mut entries);
    }
    SparseMatrix::from_triplets(space.dof_count(), space.dof_count(), &entries)
}

/// `C_ij = coefficient * ∫ ψ_i φ_j` between two scalar spaces on the same mesh.
pub fn assemble_mixed_mass(test: &FeSpace, trial: &FeSpace, coefficient: f64) -> Result<SparseMatrix> {
    if !same_mesh(test, trial) {
        return Err(Error::InvalidArgument("mixed mass needs spaces on one mesh".into()));
    }
    if test.components() != 1 || trial.components() != 1 {
        return Err(Error::InvalidArgument("mixed mass is defined for scalar spaces".into()));
    }
    let exact = test.degree() + trial.degree();
    let tt = test.shape_table(exact)?;
    let tr = ShapeTable::new(trial.element(), tt.rule.clone());
    let (nt, nr) = (test.nodes_per_cell(), trial.nodes_per_cell());
    let mut local = vec![0.0; nt * nr];
    let mut entries = Vec::with_capacity(test.cell_count() * nt * nr);
    for c in 0..test.cell_count() {
        let det = test.cell_map(c).det;
        local.iter_mut().for_each(|x| *x = 0.0);
        for q in 0..tt.rule.len() {
            let w = coefficient * tt.rule.weights[q] * det;
            for i in 0..nt {
                for j in 0..nr {
                    local[i * nr + j] += w * tt.values[q][i] * tr.values[q][j];
                }
            }
        }
        scatter(test, trial, c, &local, &mut entries);
    }
    Ok(SparseMatrix::from_triplets(test.dof_count(), trial.dof_count(), &entries))
}

/// `B_qj = ∫ q ∇·φ_j` for a vector velocity space and a scalar pressure space.
pub fn assemble_divergence(vel: &FeSpace, pres: &FeSpace) -> Result<SparseMatrix> {
    if !same_mesh(vel, pres) {
        return Err(Error::InvalidArgument("velocity and pressure live on different meshes".into()));
    }
    if vel.components() != vel.dim() || pres.components() != 1 {
        return Err(Error::InvalidArgument("divergence needs a vector and a scalar space".into()));
    }
    let tv = vel.shape_table(vel.degree() + pres.degree() - 1)?;
    let tp = ShapeTable::new(pres.element(), tv.rule.clone());
    let (nv, np) = (vel.nodes_per_cell(), pres.nodes_per_cell());
    let dim = vel.dim();
    let mut local = vec![0.0; dim * np * nv];
    let mut entries = Vec::with_capacity(vel.cell_count() * dim * np * nv);
    for c in 0..vel.cell_count() {
        let map = vel.cell_map(c);
        local.iter_mut().for_each(|x| *x = 0.0);
        for q in 0..tv.rule.len() {
            let w = tv.rule.weights[q] * map.det;
            for j in 0..nv {
                let g = map.physical_gradient(&tv.dbary[q][j]);
                for i in 0..np {
                    let wq = w * tp.values[q][i];
                    for k in 0..dim {
                        local[(k * np + i) * nv + j] += wq * g[k];
                    }
                }
            }
        }
        let (pn, vn) = (pres.cell_nodes(c), vel.cell_nodes(c));
        for k in 0..dim {
            for (i, &ni) in pn.iter().enumerate() {
                for (j, &nj) in vn.iter().enumerate() {
                    entries.push((ni, vel.dof(nj, k), local[(k * np + i) * nv + j]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(pres.dof_count(), vel.dof_count(), &entries))
}

/// For each scalar node of `plate` (a space on the plate mesh), the scalar
/// node of `fluid` at the same interface location.
pub fn trace_node_map(fluid: &FeSpace, plate: &FeSpace, trace: &TraceMap) -> Result<Vec<usize>> {
    if fluid.degree() != plate.degree() || fluid.dim() != 3 || plate.dim() != 2 {
        return Err(Error::InvalidArgument(
            "trace map needs a 3D and a 2D space of equal degree".into(),
        ));
    }
    if trace.vertex_map.len() != plate.geometry().vertex_count() {
        return Err(Error::InvalidArgument("trace map does not match the plate mesh".into()));
    }
    let mut map = Vec::with_capacity(plate.node_count());
    for node in 0..plate.node_count() {
        let fluid_node = match plate.node_vertices(node) {
            (v, None) => trace.vertex_map[v],
            (a, Some(b)) => fluid
                .edge_node(trace.vertex_map[a], trace.vertex_map[b])
                .ok_or_else(|| Error::InvalidArgument("plate edge missing from the fluid mesh".into()))?,
        };
        let (p, f) = (plate.node_coord(node), fluid.node_coord(fluid_node));
        if (p[0] - f[0]).abs() > 1e-12 || (p[1] - f[1]).abs() > 1e-12 || !fluid.node_on_interface(fluid_node) {
            return Err(Error::InvalidArgument(format!(
                "non-conforming trace at plate node {node}: {p:?} vs {f:?}"
            )));
        }
        map.push(fluid_node);
    }
    Ok(map)
}

/// `C_gj = ∫_{Ω_p} λ_g (φ_j)_3` between a plate multiplier space and the
/// fluid velocity. Fluid shape functions restricted to the interface are the
/// plate shape functions of the same degree, so the integral is computed on
/// the plate triangles and scattered to the fluid vertical DOFs.
pub fn assemble_interface_velocity_coupling(
    vel: &FeSpace,
    mult: &FeSpace,
    trace: &TraceMap,
) -> Result<SparseMatrix> {
    if vel.components() != 3 {
        return Err(Error::InvalidArgument("velocity space must have three components".into()));
    }
    let plate_trace = mult.sibling(vel.degree(), 1, crate::fem::SpaceRole::PlateW)?;
    let nodes = trace_node_map(vel, &plate_trace, trace)?;
    let c = assemble_mixed_mass(mult, &plate_trace, 1.0)?;
    let entries: Vec<_> = c
        .triplets()
        .map(|(g, j, v)| (g, vel.dof(nodes[j], 2), v))
        .collect();
    Ok(SparseMatrix::from_triplets(mult.dof_count(), vel.dof_count(), &entries))
}

/// `C_gi = ∫_{Ω_p} λ_g η_i` between the multiplier and the plate space.
pub fn assemble_plate_multiplier_coupling(plate: &FeSpace, mult: &FeSpace) -> Result<SparseMatrix> {
    assemble_mixed_mass(mult, plate, 1.0)
}

/// `r_i = ∫_{Ω_p} η_i` and `m_q = ∫_{Ω_f} q`.
pub fn assemble_mean_columns(plate: &FeSpace, pres: &FeSpace) -> (Vec<f64>, Vec<f64>) {
    (
        assemble_load_scalar(plate, |_| 1.0),
        assemble_load_scalar(pres, |_| 1.0),
    )
}

/// `b_i = ∫ f φ_i` for a scalar space.
pub fn assemble_load_scalar(space: &FeSpace, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    assemble_load_with(space, load_exactness(space), |x| [f(x), 0.0, 0.0])
}

/// `b = ∫ f · φ` for a vector space; entries of `f` past the component count are ignored.
pub fn assemble_load_vector(space: &FeSpace, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
    assemble_load_with(space, load_exactness(space), f)
}

pub fn assemble_load_with(space: &FeSpace, exactness: usize, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
    let table = space.shape_table(exactness).expect("load rule");
    let mut b = vec![0.0; space.dof_count()];
    for c in 0..space.cell_count() {
        let map = space.cell_map(c);
        let nodes = space.cell_nodes(c);
        for (q, phi) in table.values.iter().enumerate() {
            let x = map.map(table.rule.points[q]);
            let w = table.rule.weights[q] * map.det;
            let fx = f(x);
            for comp in 0..space.components() {
                let wf = w * fx[comp];
                if wf == 0.0 {
                    continue;
                }
                for (i, &n) in nodes.iter().enumerate() {
                    b[space.dof(n, comp)] += wf * phi[i];
                }
            }
        }
    }
    b
}

/// Operator blocks of the coupled system, assembled once with unit
/// coefficients and combined by the solvers.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    /// Velocity mass `M_u`.
    pub mass_u: SparseMatrix,
    /// Velocity stiffness `K_u`.
    pub stiff_u: SparseMatrix,
    /// Divergence `B` (pressure × velocity).
    pub div: SparseMatrix,
    /// Pressure mass.
    pub mass_p: SparseMatrix,
    /// Plate mass `M_w`.
    pub mass_w: SparseMatrix,
    /// Plate stiffness `K_w`, shared by `w` and `z`.
    pub stiff_w: SparseMatrix,
    /// Interface coupling `C_u` (multiplier × velocity).
    pub coupling_u: SparseMatrix,
    /// Plate coupling `C_w` (multiplier × plate).
    pub coupling_w: SparseMatrix,
    /// `r_i = ∫ η_i` on the plate.
    pub mean_r: Vec<f64>,
    /// `m_q = ∫ q` on the fluid.
    pub mean_m: Vec<f64>,
}

impl BlockSystem {
    pub fn assemble(
        vel: &FeSpace,
        pres: &FeSpace,
        plate: &FeSpace,
        mult: &FeSpace,
        trace: &TraceMap,
    ) -> Result<Self> {
        let (mean_r, mean_m) = assemble_mean_columns(plate, pres);
        Ok(Self {
            mass_u: assemble_mass(vel, 1.0),
            stiff_u: assemble_stiffness(vel, 1.0),
            div: assemble_divergence(vel, pres)?,
            mass_p: assemble_mass(pres, 1.0),
            mass_w: assemble_mass(plate, 1.0),
            stiff_w: assemble_stiffness(plate, 1.0),
            coupling_u: assemble_interface_velocity_coupling(vel, mult, trace)?,
            coupling_w: assemble_plate_multiplier_coupling(plate, mult)?,
            mean_r,
            mean_m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::SpaceRole;
    use crate::mesh::{build_box_fluid_mesh, extract_plate_mesh, BoxBounds, Mesh2D};
    use crate::sparse::dot;
    use std::f64::consts::PI;

    fn reference_triangle() -> Mesh2D {
        Mesh2D {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            tris: vec![[0, 1, 2]],
            boundary_edges: vec![[0, 1], [1, 2], [2, 0]],
        }
    }

    fn fluid(n: usize) -> crate::mesh::Mesh3D {
        build_box_fluid_mesh(n, n, n, BoxBounds::unit_plate_box(1.0)).unwrap()
    }

    #[test]
    fn p1_triangle_mass_closed_form() {
        let s = FeSpace::new(&reference_triangle(), 1, 1, SpaceRole::Pressure).unwrap();
        let m = assemble_mass(&s, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
                assert!((m.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_total_and_linearity() {
        let m = fluid(2);
        let s = FeSpace::new(&m, 2, 3, SpaceRole::Velocity).unwrap();
        let mass = assemble_mass(&s, 1.0);
        let ones = vec![1.0; s.dof_count()];
        assert!((mass.quadratic_form(&ones) - 3.0).abs() < 1e-12);
        let scaled = assemble_mass(&s, 2.7);
        for ((_, _, a), (_, _, b)) in mass.triplets().zip(scaled.triplets()) {
            assert!((2.7 * a - b).abs() <= 1e-14 * b.abs().max(1e-300));
        }
        assert!(mass.relative_asymmetry() < 1e-12);
    }

    #[test]
    fn stiffness_kernel_and_linear_energy() {
        let m = fluid(2);
        let s = FeSpace::new(&m, 2, 1, SpaceRole::Pressure).unwrap();
        let k = assemble_stiffness(&s, 1.0);
        let ones = vec![1.0; s.dof_count()];
        assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
        let x = s.interpolate_scalar(|p| p[0]);
        assert!((k.quadratic_form(&x) - 1.0).abs() < 1e-12);
        assert!(k.relative_asymmetry() < 1e-12);
    }

    #[test]
    fn divergence_of_constant_and_linear() {
        let m = fluid(2);
        let v = FeSpace::new(&m, 2, 3, SpaceRole::Velocity).unwrap();
        let p = FeSpace::new(&m, 1, 1, SpaceRole::Pressure).unwrap();
        let b = assemble_divergence(&v, &p).unwrap();
        let c = v.interpolate_vector(|_| [1.0, -2.0, 0.5]);
        assert!(b.mul_vec(&c).iter().all(|x| x.abs() < 1e-13));
        let u = v.interpolate_vector(|x| [x[0], 0.0, 0.0]);
        let ones = vec![1.0; p.dof_count()];
        assert!((dot(&ones, &b.mul_vec(&u)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_rejects_other_mesh() {
        let v = FeSpace::new(&fluid(2), 2, 3, SpaceRole::Velocity).unwrap();
        let p = FeSpace::new(&fluid(3), 1, 1, SpaceRole::Pressure).unwrap();
        assert!(matches!(assemble_divergence(&v, &p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn interface_coupling_identities() {
        let m = fluid(3);
        let (pm, trace) = extract_plate_mesh(&m).unwrap();
        let v = FeSpace::new(&m, 2, 3, SpaceRole::Velocity).unwrap();
        let g = FeSpace::new(&pm, 1, 1, SpaceRole::Multiplier).unwrap();
        let c = assemble_interface_velocity_coupling(&v, &g, &trace).unwrap();
        let lam = vec![1.0; g.dof_count()];
        let u3 = v.interpolate_vector(|_| [0.0, 0.0, 1.0]);
        assert!((dot(&lam, &c.mul_vec(&u3)) - 1.0).abs() < 1e-12);
        let tangential = v.interpolate_vector(|x| [x[0], x[1], 0.0]);
        assert!(c.mul_vec(&tangential).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn plate_coupling_total_and_single_triangle() {
        let tri = reference_triangle();
        let w = FeSpace::new(&tri, 2, 1, SpaceRole::PlateW).unwrap();
        let g = FeSpace::new(&tri, 1, 1, SpaceRole::Multiplier).unwrap();
        let c = assemble_plate_multiplier_coupling(&w, &g).unwrap();
        let total: f64 = c.values().iter().sum();
        assert!((total - 0.5).abs() < 1e-15);
        // ∫_T λ0^a λ1^b λ2^c = 2|T| a! b! c! / (a + b + c + 2)!
        let f = |a: u32, b: u32, cc: u32| {
            let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
            2.0 * 0.5 * fact(a) * fact(b) * fact(cc) / fact(a + b + cc + 2)
        };
        // λ_0 against vertex shape 0: ∫ λ0 (2λ0² - λ0) = 2∫λ0³ - ∫λ0²
        let v00 = 2.0 * f(3, 0, 0) - f(2, 0, 0);
        // λ_0 against vertex shape 1: 2∫λ0 λ1² - ∫λ0 λ1
        let v01 = 2.0 * f(1, 2, 0) - f(1, 1, 0);
        // λ_0 against edge (0,1): 4∫λ0² λ1
        let v0e = 4.0 * f(2, 1, 0);
        // λ_0 against edge (1,2): 4∫λ0 λ1 λ2
        let v0f = 4.0 * f(1, 1, 1);
        assert!((c.get(0, 0) - v00).abs() < 1e-15);
        assert!((c.get(0, 1) - v01).abs() < 1e-15);
        assert!((c.get(0, 3) - v0e).abs() < 1e-15);
        assert!((c.get(0, 4) - v0f).abs() < 1e-15);
        // Zero function gives a zero product.
        assert!(c.mul_vec(&vec![0.0; w.dof_count()]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mean_columns() {
        let m = fluid(4);
        let (pm, _) = extract_plate_mesh(&m).unwrap();
        let w = FeSpace::new(&pm, 2, 1, SpaceRole::PlateW).unwrap();
        let p = FeSpace::new(&m, 1, 1, SpaceRole::Pressure).unwrap();
        let (r, mcol) = assemble_mean_columns(&w, &p);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let px = p.interpolate_scalar(|x| x[0] - 0.5);
        assert!(dot(&mcol, &px).abs() < 1e-12);
        let s = w.interpolate_scalar(|x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin());
        assert!(dot(&r, &s).abs() < 1e-12);
    }

    #[test]
    fn load_vectors() {
        let m = fluid(2);
        let s = FeSpace::new(&m, 2, 1, SpaceRole::Pressure).unwrap();
        assert!(assemble_load_scalar(&s, |_| 0.0).iter().all(|&x| x == 0.0));
        assert!((assemble_load_scalar(&s, |_| 1.0).iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}
