//! Backward Euler time stepping of the coupled fluid-plate system, either by
//! a partitioned fixed-point iteration or by one monolithic saddle-point solve.

use std::collections::HashSet;

use crate::assembly::{assemble_load_scalar, assemble_load_vector, trace_node_map, BlockSystem};
use crate::error::{Error, Result};
use crate::fem::{FeSpace, SpaceRole};
use crate::linalg::Factorization;
use crate::mesh::{extract_plate_mesh, mesh_size, Mesh2D, Mesh3D, TraceMap};
use crate::mms::{fluid_forcing, plate_forcing, ExactSolution};
use crate::params::{CouplingConfig, CouplingMode, MultiplierSpace, PhysicalParams};
use crate::sparse::{dot, SparseMatrix, TripletBuilder};

/// Meshes, spaces, DOF index sets and operator blocks for one resolution.
#[derive(Debug)]
pub struct Discretization {
    pub fluid_mesh: Mesh3D,
    pub plate_mesh: Mesh2D,
    pub trace: TraceMap,
    /// P2 vector velocity.
    pub velocity: FeSpace,
    /// P1 pressure.
    pub pressure: FeSpace,
    /// P2 plate space shared by `w` and `z`.
    pub plate: FeSpace,
    pub multiplier: FeSpace,
    pub multiplier_space: MultiplierSpace,
    pub blocks: BlockSystem,
    /// Fluid velocity node under each plate P2 node.
    interface_nodes: Vec<usize>,
    /// Free velocity DOFs.
    vel_free: Vec<usize>,
    /// Free velocity DOFs that are not interface vertical components.
    vel_interior: Vec<usize>,
    /// `(plate DOF, velocity DOF)` for every free plate node.
    iface: Vec<(usize, usize)>,
    plate_free: Vec<usize>,
    mult_rows: Vec<usize>,
    fluid_volume: f64,
}

impl Discretization {
    /// Fluid box `[0,1]² × [-depth, 0]` with `n` cells per unit length.
    pub fn unit_plate_box(n: usize, depth: f64, multiplier: MultiplierSpace) -> Result<Self> {
        Self::new(Mesh3D::unit_plate_box(n, depth)?, multiplier)
    }

    pub fn new(fluid_mesh: Mesh3D, multiplier_space: MultiplierSpace) -> Result<Self> {
        let (plate_mesh, trace) = extract_plate_mesh(&fluid_mesh)?;
        let g3 = crate::mesh::SimplexMesh::geometry(&fluid_mesh);
        let g2 = crate::mesh::SimplexMesh::geometry(&plate_mesh);
        let velocity = FeSpace::on_geometry(g3.clone(), 2, 3, SpaceRole::Velocity)?;
        let pressure = FeSpace::on_geometry(g3, 1, 1, SpaceRole::Pressure)?;
        let plate = FeSpace::on_geometry(g2.clone(), 2, 1, SpaceRole::PlateW)?;
        let multiplier = match multiplier_space {
            MultiplierSpace::Plate => plate.clone(),
            MultiplierSpace::Linear => FeSpace::on_geometry(g2, 1, 1, SpaceRole::Multiplier)?,
        };
        let blocks = BlockSystem::assemble(&velocity, &pressure, &plate, &multiplier, &trace)?;
        let interface_nodes = trace_node_map(&velocity, &plate, &trace)?;

        let plate_free = plate.free_dofs();
        let iface: Vec<(usize, usize)> = plate_free
            .iter()
            .map(|&i| (i, velocity.dof(interface_nodes[i], 2)))
            .collect();
        if let Some(&(i, _)) = iface.iter().find(|&&(_, d)| velocity.is_fixed(d)) {
            return Err(Error::InvalidMesh(format!("interior plate node {i} sits on a fluid wall")));
        }
        let iface_set: HashSet<usize> = iface.iter().map(|&(_, d)| d).collect();
        let vel_free = velocity.free_dofs();
        let vel_interior = vel_free.iter().copied().filter(|d| !iface_set.contains(d)).collect();
        let mult_rows = multiplier.free_dofs();
        let fluid_volume = blocks.mean_m.iter().sum();
        Ok(Self {
            fluid_mesh,
            plate_mesh,
            trace,
            velocity,
            pressure,
            plate,
            multiplier,
            multiplier_space,
            blocks,
            interface_nodes,
            vel_free,
            vel_interior,
            iface,
            plate_free,
            mult_rows,
            fluid_volume,
        })
    }

    pub fn mesh_size(&self) -> f64 {
        mesh_size(&self.fluid_mesh)
    }

    pub fn fluid_volume(&self) -> f64 {
        self.fluid_volume
    }

    /// Velocity DOF of the vertical component under plate node `i`.
    pub fn interface_velocity_dof(&self, plate_node: usize) -> usize {
        self.velocity.dof(self.interface_nodes[plate_node], 2)
    }

    /// Vertical fluid velocity sampled at every plate node.
    pub fn interface_velocity(&self, u: &[f64]) -> Vec<f64> {
        (0..self.plate.node_count())
            .map(|i| u[self.interface_velocity_dof(i)])
            .collect()
    }

    /// `∫_{Ω_p} v` for a plate field.
    pub fn plate_integral(&self, v: &[f64]) -> f64 {
        dot(&self.blocks.mean_r, v)
    }

    pub fn plate_l2_norm(&self, v: &[f64]) -> f64 {
        self.blocks.mass_w.quadratic_form(v).max(0.0).sqrt()
    }

    /// Subtracts a constant from the free plate DOFs so that `∫ v = 0`.
    pub fn project_zero_mean(&self, v: &mut [f64]) {
        let r = &self.blocks.mean_r;
        let weight: f64 = self.plate_free.iter().map(|&i| r[i]).sum();
        let c = self.plate_integral(v) / weight;
        for &i in &self.plate_free {
            v[i] -= c;
        }
    }

    /// Number of unknowns in the monolithic system.
    pub fn monolithic_size(&self) -> usize {
        self.vel_free.len() + self.pressure.dof_count() + 2 * self.plate_free.len() + self.mult_rows.len()
    }

    fn plate_free_matrix(&self, m: &SparseMatrix) -> SparseMatrix {
        m.submatrix(&self.plate_free, &self.plate_free)
    }
}

/// Unknowns at the current time level plus the plate history one level back.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub step: usize,
    pub time: f64,
    pub u: Vec<f64>,
    /// Zero-mean pressure.
    pub p0: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// Interface multiplier, the trace of the full pressure `p0 + s`.
    pub g: Vec<f64>,
    /// Pressure mean.
    pub s: f64,
    pub w_prev: Vec<f64>,
    pub z_prev: Vec<f64>,
}

impl CoupledState {
    pub fn rest(disc: &Discretization) -> Self {
        let nw = disc.plate.dof_count();
        Self {
            step: 0,
            time: 0.0,
            u: vec![0.0; disc.velocity.dof_count()],
            p0: vec![0.0; disc.pressure.dof_count()],
            w: vec![0.0; nw],
            z: vec![0.0; nw],
            g: vec![0.0; disc.multiplier.dof_count()],
            s: 0.0,
            w_prev: vec![0.0; nw],
            z_prev: vec![0.0; nw],
        }
    }

    /// `(w − w_prev) / δt`
    pub fn wdot(&self, dt: f64) -> Vec<f64> {
        self.w.iter().zip(&self.w_prev).map(|(a, b)| (a - b) / dt).collect()
    }

    /// Full pressure `p0 + s`.
    pub fn pressure(&self) -> Vec<f64> {
        self.p0.iter().map(|p| p + self.s).collect()
    }

    fn check(&self, disc: &Discretization) -> Result<()> {
        let nw = disc.plate.dof_count();
        let ok = self.u.len() == disc.velocity.dof_count()
            && self.p0.len() == disc.pressure.dof_count()
            && [&self.w, &self.z, &self.w_prev, &self.z_prev].iter().all(|v| v.len() == nw)
            && self.g.len() == disc.multiplier.dof_count();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("state dimensions do not match the discretization".into()))
        }
    }
}

fn plate_poisson(disc: &Discretization, w: &[f64]) -> Result<Vec<f64>> {
    // (z, φ) = (∇w, ∇φ) for free φ; z vanishes on the plate boundary.
    let kw = disc.blocks.stiff_w.mul_vec(w);
    let rhs: Vec<f64> = disc.plate_free.iter().map(|&i| kw[i]).collect();
    let zf = Factorization::new(&disc.plate_free_matrix(&disc.blocks.mass_w))?.solve(&rhs)?;
    let mut z = vec![0.0; w.len()];
    for (k, &i) in disc.plate_free.iter().enumerate() {
        z[i] = zf[k];
    }
    Ok(z)
}

fn constrained_interpolant(space: &FeSpace, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    let mut v = space.interpolate_scalar(f);
    for (d, x) in v.iter_mut().enumerate() {
        if space.is_fixed(d) {
            *x = 0.0;
        }
    }
    v
}

/// Interpolated initial data `(u₀, w₀, w_t0)`; `z` at both history levels
/// solves the discrete identity `(z, φ) = (∇w, ∇φ)`, and
/// `w_prev = w₀ − δt·w_t0`.
pub fn initialize(
    disc: &Discretization,
    u0: impl Fn([f64; 3]) -> [f64; 3],
    w0: impl Fn([f64; 3]) -> f64,
    w_t0: impl Fn([f64; 3]) -> f64,
    dt: f64,
) -> Result<CoupledState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut state = CoupledState::rest(disc);
    state.u = disc.velocity.interpolate_vector(u0);
    for (d, x) in state.u.iter_mut().enumerate() {
        if disc.velocity.is_fixed(d) {
            *x = 0.0;
        }
    }
    state.w = constrained_interpolant(&disc.plate, &w0);
    state.w_prev = constrained_interpolant(&disc.plate, |x| w0(x) - dt * w_t0(x));
    state.z = plate_poisson(disc, &state.w)?;
    state.z_prev = plate_poisson(disc, &state.w_prev)?;
    Ok(state)
}

/// Initial state for the manufactured solution: `u` interpolates the exact
/// velocity at `t = 0`; at `t = 0` and `t = −δt`, `w` is the elliptic
/// projection of the exact displacement and `z` the L² projection of the
/// exact `z` (the two coincide through the discrete Poisson identity).
pub fn initialize_manufactured(disc: &Discretization, exact: &ExactSolution, dt: f64) -> Result<CoupledState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut state = CoupledState::rest(disc);
    state.u = disc.velocity.interpolate_vector(|x| exact.velocity(x, 0.0));
    for (d, x) in state.u.iter_mut().enumerate() {
        if disc.velocity.is_fixed(d) {
            *x = 0.0;
        }
    }
    let stiff = Factorization::new(&disc.plate_free_matrix(&disc.blocks.stiff_w))?;
    let mass = Factorization::new(&disc.plate_free_matrix(&disc.blocks.mass_w))?;
    let project = |t: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let b = assemble_load_scalar(&disc.plate, |x| exact.z(x, t));
        let bf: Vec<f64> = disc.plate_free.iter().map(|&i| b[i]).collect();
        let (wf, zf) = (stiff.solve(&bf)?, mass.solve(&bf)?);
        let (mut w, mut z) = (vec![0.0; b.len()], vec![0.0; b.len()]);
        for (k, &i) in disc.plate_free.iter().enumerate() {
            w[i] = wf[k];
            z[i] = zf[k];
        }
        Ok((w, z))
    };
    (state.w, state.z) = project(0.0)?;
    (state.w_prev, state.z_prev) = project(-dt)?;
    Ok(state)
}

/// Body forces of the fluid and plate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Forcing {
    #[default]
    None,
    Manufactured(ExactSolution),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluidSolution {
    pub u: Vec<f64>,
    pub p0: Vec<f64>,
    /// Multiplier of the pressure-mean constraint; zero for compatible data.
    pub mu: f64,
    /// Residual of the fluid momentum equation at the interface DOFs, one
    /// entry per free plate node: the discrete interface force.
    pub reaction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateSolution {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub s: f64,
}

struct FluidOperator {
    /// `ρ_f M + ν_f δt K` on the whole velocity space.
    a: SparseMatrix,
    factor: Factorization,
    a_lift: SparseMatrix,
    b_lift: SparseMatrix,
}

struct PlateOperator {
    factor: Factorization,
    mass_free: Factorization,
}

/// Time stepper bound to one discretization, time step and parameter set.
/// Factorizations are built once and reused across steps.
pub struct CoupledSolver<'d> {
    disc: &'d Discretization,
    params: PhysicalParams,
    config: CouplingConfig,
    dt: f64,
    forcing: Forcing,
    fluid: Option<FluidOperator>,
    plate: Option<PlateOperator>,
    monolithic: Option<Factorization>,
}

/// Per-step diagnostics handed to observers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub fluid_kinetic: f64,
    pub plate_kinetic: f64,
    pub rotational: f64,
    pub elastic: f64,
    pub total_energy: f64,
    pub max_displacement: f64,
    pub max_wdot: f64,
    /// `‖u₃|Ω_p − ẇ‖_{L²(Ω_p)}`
    pub interface_mismatch: f64,
    /// `∫_{Ω_p} ẇ`
    pub wdot_integral: f64,
    pub iterations: usize,
}

impl<'d> CoupledSolver<'d> {
    pub fn new(
        disc: &'d Discretization,
        params: PhysicalParams,
        config: CouplingConfig,
        dt: f64,
        forcing: Forcing,
    ) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if config.multiplier != disc.multiplier_space {
            return Err(Error::InvalidArgument(
                "coupling config and discretization use different multiplier spaces".into(),
            ));
        }
        Ok(Self {
            disc,
            params,
            config,
            dt,
            forcing,
            fluid: None,
            plate: None,
            monolithic: None,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn discretization(&self) -> &Discretization {
        self.disc
    }

    fn fluid_matrix(&self) -> SparseMatrix {
        let b = &self.disc.blocks;
        b.mass_u
            .scaled(self.params.rho_f)
            .add_scaled(&b.stiff_u, self.params.nu_f * self.dt)
    }

    fn fluid_operator(&mut self) -> Result<&FluidOperator> {
        if self.fluid.is_none() {
            let d = self.disc;
            let a = self.fluid_matrix();
            let all_p: Vec<usize> = (0..d.pressure.dof_count()).collect();
            let iface_dofs: Vec<usize> = d.iface.iter().map(|&(_, v)| v).collect();
            let a_ii = a.submatrix(&d.vel_interior, &d.vel_interior);
            let b_i = d.blocks.div.submatrix(&all_p, &d.vel_interior);
            let (nu, np) = (d.vel_interior.len(), all_p.len());
            let mut t = TripletBuilder::new(nu + np + 1, nu + np + 1);
            t.add_block(0, 0, &a_ii, 1.0);
            t.add_block_transposed(0, nu, &b_i, -self.dt);
            t.add_block(nu, 0, &b_i, -self.dt);
            t.add_column(nu, nu + np, &d.blocks.mean_m, 1.0);
            t.add_row(nu + np, nu, &d.blocks.mean_m, 1.0);
            let factor = Factorization::new(&t.build())?;
            self.fluid = Some(FluidOperator {
                a_lift: a.submatrix(&d.vel_interior, &iface_dofs),
                b_lift: d.blocks.div.submatrix(&all_p, &iface_dofs),
                a,
                factor,
            });
        }
        Ok(self.fluid.as_ref().unwrap())
    }

    fn plate_operator(&mut self) -> Result<&PlateOperator> {
        if self.plate.is_none() {
            let d = self.disc;
            let (p, dt) = (&self.params, self.dt);
            let m = d.plate_free_matrix(&d.blocks.mass_w);
            let k = d.plate_free_matrix(&d.blocks.stiff_w);
            let r: Vec<f64> = d.plate_free.iter().map(|&i| d.blocks.mean_r[i]).collect();
            let nf = d.plate_free.len();
            let mut t = TripletBuilder::new(2 * nf + 1, 2 * nf + 1);
            t.add_block(0, 0, &m, p.omega * p.rho_p / dt);
            t.add_block(0, nf, &m, p.omega * p.rho_rot / dt);
            t.add_block(0, nf, &k, p.d * dt);
            t.add_column(0, 2 * nf, &r, -dt);
            t.add_block(nf, nf, &m, 1.0);
            t.add_block(nf, 0, &k, -1.0);
            t.add_row(2 * nf, 0, &r, 1.0);
            self.plate = Some(PlateOperator {
                factor: Factorization::new(&t.build())?,
                mass_free: Factorization::new(&m)?,
            });
        }
        Ok(self.plate.as_ref().unwrap())
    }

    fn fluid_rhs(&self, state: &CoupledState, t_next: f64) -> Vec<f64> {
        let mut rhs = self.disc.blocks.mass_u.mul_vec(&state.u);
        rhs.iter_mut().for_each(|v| *v *= self.params.rho_f);
        if let Forcing::Manufactured(e) = self.forcing {
            let f = assemble_load_vector(&self.disc.velocity, |x| fluid_forcing(&e, x, t_next, &self.params));
            rhs.iter_mut().zip(&f).for_each(|(r, fi)| *r += self.dt * fi);
        }
        rhs
    }

    /// Plate right-hand side without the interface load.
    fn plate_rhs(&self, state: &CoupledState, t_next: f64) -> Vec<f64> {
        let (p, dt) = (&self.params, self.dt);
        let hw: Vec<f64> = state.w.iter().zip(&state.w_prev).map(|(a, b)| 2.0 * a - b).collect();
        let hz: Vec<f64> = state.z.iter().zip(&state.z_prev).map(|(a, b)| 2.0 * a - b).collect();
        let mw = self.disc.blocks.mass_w.mul_vec(&hw);
        let mz = self.disc.blocks.mass_w.mul_vec(&hz);
        let mut rhs: Vec<f64> = mw
            .iter()
            .zip(&mz)
            .map(|(a, b)| p.omega * (p.rho_p * a + p.rho_rot * b) / dt)
            .collect();
        if let Forcing::Manufactured(e) = self.forcing {
            let f = assemble_load_scalar(&self.disc.plate, |x| plate_forcing(&e, x, t_next, p));
            rhs.iter_mut().zip(&f).for_each(|(r, fi)| *r += dt * fi);
        }
        rhs
    }

    /// Fluid solve with `u₃ = wdot` imposed strongly on the interface.
    pub fn fluid_step(&mut self, state: &CoupledState, wdot: &[f64], t_next: f64) -> Result<FluidSolution> {
        state.check(self.disc)?;
        let rhs = self.fluid_rhs(state, t_next);
        self.fluid_solve(wdot, &rhs)
    }

    fn fluid_solve(&mut self, wdot: &[f64], rhs: &[f64]) -> Result<FluidSolution> {
        let d = self.disc;
        if wdot.len() != d.plate.dof_count() {
            return Err(Error::InvalidArgument("interface velocity has the wrong length".into()));
        }
        let integral = d.plate_integral(wdot);
        let scale: f64 = d.blocks.mean_r.iter().zip(wdot).map(|(r, v)| (r * v).abs()).sum();
        if integral.abs() > 1e-10 * scale {
            return Err(Error::Compatibility { integral });
        }
        let dt = self.dt;
        let op = self.fluid_operator()?;
        let uc: Vec<f64> = d.iface.iter().map(|&(i, _)| wdot[i]).collect();
        let (nu, np) = (d.vel_interior.len(), d.pressure.dof_count());
        let lift = op.a_lift.mul_vec(&uc);
        let blift = op.b_lift.mul_vec(&uc);
        let mut b = vec![0.0; nu + np + 1];
        for (k, &dof) in d.vel_interior.iter().enumerate() {
            b[k] = rhs[dof] - lift[k];
        }
        for q in 0..np {
            b[nu + q] = dt * blift[q];
        }
        let x = op.factor.solve(&b)?;
        let mut u = vec![0.0; d.velocity.dof_count()];
        for (k, &dof) in d.vel_interior.iter().enumerate() {
            u[dof] = x[k];
        }
        for (k, &(_, dof)) in d.iface.iter().enumerate() {
            u[dof] = uc[k];
        }
        let p0 = x[nu..nu + np].to_vec();
        let au = op.a.mul_vec(&u);
        let btp = d.blocks.div.mul_vec_transposed(&p0);
        let reaction = d
            .iface
            .iter()
            .map(|&(_, dof)| au[dof] - dt * btp[dof] - rhs[dof])
            .collect();
        Ok(FluidSolution {
            u,
            p0,
            mu: x[nu + np],
            reaction,
        })
    }

    /// Plate solve with an interface load vector (plate DOF indexed) added to
    /// the right-hand side; `s` enforces `∫ w = ∫ wⁿ`.
    pub fn plate_step(&mut self, state: &CoupledState, load: &[f64], t_next: f64) -> Result<PlateSolution> {
        state.check(self.disc)?;
        let rhs = self.plate_rhs(state, t_next);
        self.plate_solve(state, load, &rhs)
    }

    fn plate_solve(&mut self, state: &CoupledState, load: &[f64], rhs: &[f64]) -> Result<PlateSolution> {
        let d = self.disc;
        if load.len() != d.plate.dof_count() {
            return Err(Error::InvalidArgument("plate load has the wrong length".into()));
        }
        let op = self.plate_operator()?;
        let nf = d.plate_free.len();
        let mut b = vec![0.0; 2 * nf + 1];
        for (k, &i) in d.plate_free.iter().enumerate() {
            b[k] = rhs[i] + load[i];
        }
        b[2 * nf] = d.plate_integral(&state.w);
        let x = op.factor.solve(&b)?;
        let (mut w, mut z) = (vec![0.0; load.len()], vec![0.0; load.len()]);
        for (k, &i) in d.plate_free.iter().enumerate() {
            w[i] = x[k];
            z[i] = x[nf + k];
        }
        Ok(PlateSolution { w, z, s: x[2 * nf] })
    }

    /// Interface load on the plate from a fluid solution and the
    /// corresponding multiplier `g` (trace of `p0 + s` once `s` is known).
    fn interface_load(&self, fluid: &FluidSolution) -> Vec<f64> {
        let d = self.disc;
        let mut load = vec![0.0; d.plate.dof_count()];
        match d.multiplier_space {
            MultiplierSpace::Plate => {
                for (k, &(i, _)) in d.iface.iter().enumerate() {
                    load[i] = -fluid.reaction[k];
                }
            }
            MultiplierSpace::Linear => {
                let g = extract_pressure_trace(d, &fluid.p0);
                let cg = d.blocks.coupling_w.mul_vec_transposed(&g);
                load.iter_mut().zip(&cg).for_each(|(l, c)| *l = self.dt * c);
            }
        }
        load
    }

    fn multiplier_from(&mut self, fluid: &FluidSolution, s: f64) -> Result<Vec<f64>> {
        let d = self.disc;
        match d.multiplier_space {
            MultiplierSpace::Plate => {
                let dt = self.dt;
                let rhs: Vec<f64> = d
                    .iface
                    .iter()
                    .enumerate()
                    .map(|(k, &(i, _))| -(fluid.reaction[k] - dt * s * d.blocks.mean_r[i]) / dt)
                    .collect();
                let gf = self.plate_operator()?.mass_free.solve(&rhs)?;
                let mut g = vec![0.0; d.multiplier.dof_count()];
                for (k, &i) in d.plate_free.iter().enumerate() {
                    g[i] = gf[k];
                }
                Ok(g)
            }
            MultiplierSpace::Linear => Ok(extract_pressure_trace(d, &fluid.p0)
                .into_iter()
                .map(|v| v + s)
                .collect()),
        }
    }

    /// One partitioned step. Returns the new state and the iteration count.
    pub fn fixed_point_step(&mut self, state: &CoupledState) -> Result<(CoupledState, usize)> {
        state.check(self.disc)?;
        let d = self.disc;
        let (dt, theta) = (self.dt, self.config.theta);
        let t_next = (state.step + 1) as f64 * dt;
        let fluid_rhs = self.fluid_rhs(state, t_next);
        let plate_rhs = self.plate_rhs(state, t_next);
        let mut wdot = state.wdot(dt);
        let mut residual = f64::INFINITY;
        for it in 1..=self.config.max_iter {
            d.project_zero_mean(&mut wdot);
            let fluid = self.fluid_solve(&wdot, &fluid_rhs)?;
            let load = self.interface_load(&fluid);
            let plate = self.plate_solve(state, &load, &plate_rhs)?;
            let fresh: Vec<f64> = plate.w.iter().zip(&state.w).map(|(a, b)| (a - b) / dt).collect();
            let relaxed: Vec<f64> = fresh
                .iter()
                .zip(&wdot)
                .map(|(a, b)| theta * a + (1.0 - theta) * b)
                .collect();
            let diff: Vec<f64> = relaxed.iter().zip(&wdot).map(|(a, b)| a - b).collect();
            residual = d.plate_l2_norm(&diff) / d.plate_l2_norm(&relaxed).max(1e-14);
            if residual <= self.config.tol {
                let g = self.multiplier_from(&fluid, plate.s)?;
                let mut u = fluid.u;
                // Interface velocity equals the committed plate velocity exactly.
                for &(i, dof) in &d.iface {
                    u[dof] = fresh[i];
                }
                let next = CoupledState {
                    step: state.step + 1,
                    time: t_next,
                    u,
                    p0: fluid.p0,
                    w: plate.w,
                    z: plate.z,
                    g,
                    s: plate.s,
                    w_prev: state.w.clone(),
                    z_prev: state.z.clone(),
                };
                return Ok((next, it));
            }
            wdot = relaxed;
        }
        Err(Error::NoConvergence {
            iterations: self.config.max_iter,
            residual,
        })
    }

    fn monolithic_operator(&mut self) -> Result<&Factorization> {
        if self.monolithic.is_none() {
            let d = self.disc;
            let (p, dt) = (&self.params, self.dt);
            let b = &d.blocks;
            let all_p: Vec<usize> = (0..d.pressure.dof_count()).collect();
            let a = self.fluid_matrix().submatrix(&d.vel_free, &d.vel_free);
            let div = b.div.submatrix(&all_p, &d.vel_free);
            let cu = b.coupling_u.submatrix(&d.mult_rows, &d.vel_free);
            let cw = b.coupling_w.submatrix(&d.mult_rows, &d.plate_free);
            let m = d.plate_free_matrix(&b.mass_w);
            let k = d.plate_free_matrix(&b.stiff_w);
            let (nu, np, nf, ng) = (d.vel_free.len(), all_p.len(), d.plate_free.len(), d.mult_rows.len());
            let (ou, op, ow, oz, og) = (0, nu, nu + np, nu + np + nf, nu + np + 2 * nf);
            let n = og + ng;
            let mut t = TripletBuilder::new(n, n);
            t.add_block(ou, ou, &a, 1.0);
            t.add_block_transposed(ou, op, &div, -dt);
            t.add_block_transposed(ou, og, &cu, dt);
            t.add_block(op, ou, &div, -dt);
            t.add_block(ow, ow, &m, p.omega * p.rho_p / dt);
            t.add_block(ow, oz, &m, p.omega * p.rho_rot / dt);
            t.add_block(ow, oz, &k, p.d * dt);
            t.add_block_transposed(ow, og, &cw, -dt);
            t.add_block(oz, oz, &m, 1.0);
            t.add_block(oz, ow, &k, -1.0);
            t.add_block(og, ou, &cu, dt);
            t.add_block(og, ow, &cw, -1.0);
            self.monolithic = Some(Factorization::new(&t.build())?);
        }
        Ok(self.monolithic.as_ref().unwrap())
    }

    /// One step of the full saddle-point system in `(u, p, w, z, g)` with the
    /// pressure in the unconstrained space; `p` is split into `p0 + s` afterwards.
    pub fn monolithic_step(&mut self, state: &CoupledState) -> Result<CoupledState> {
        state.check(self.disc)?;
        let d = self.disc;
        let t_next = (state.step + 1) as f64 * self.dt;
        let fluid_rhs = self.fluid_rhs(state, t_next);
        let plate_rhs = self.plate_rhs(state, t_next);
        let cw_wn = d.blocks.coupling_w.mul_vec(&state.w);
        let (nu, np, nf, ng) = (
            d.vel_free.len(),
            d.pressure.dof_count(),
            d.plate_free.len(),
            d.mult_rows.len(),
        );
        let (ow, og) = (nu + np, nu + np + 2 * nf);
        let mut b = vec![0.0; og + ng];
        for (k, &dof) in d.vel_free.iter().enumerate() {
            b[k] = fluid_rhs[dof];
        }
        for (k, &i) in d.plate_free.iter().enumerate() {
            b[ow + k] = plate_rhs[i];
        }
        for (k, &j) in d.mult_rows.iter().enumerate() {
            b[og + k] = -cw_wn[j];
        }
        let x = self.monolithic_operator()?.solve(&b)?;
        let mut next = CoupledState::rest(d);
        for (k, &dof) in d.vel_free.iter().enumerate() {
            next.u[dof] = x[k];
        }
        let p = &x[nu..nu + np];
        let s = dot(&d.blocks.mean_m, p) / d.fluid_volume;
        next.p0 = p.iter().map(|v| v - s).collect();
        next.s = s;
        for (k, &i) in d.plate_free.iter().enumerate() {
            next.w[i] = x[ow + k];
            next.z[i] = x[ow + nf + k];
        }
        for (k, &j) in d.mult_rows.iter().enumerate() {
            next.g[j] = x[og + k];
        }
        next.step = state.step + 1;
        next.time = t_next;
        next.w_prev = state.w.clone();
        next.z_prev = state.z.clone();
        Ok(next)
    }

    /// One step in the configured mode; returns the iteration count (1 for monolithic).
    pub fn step(&mut self, state: &CoupledState) -> Result<(CoupledState, usize)> {
        match self.config.mode {
            CouplingMode::Partitioned => self.fixed_point_step(state),
            CouplingMode::Monolithic => Ok((self.monolithic_step(state)?, 1)),
        }
    }

    pub fn record(&self, state: &CoupledState, iterations: usize) -> StepRecord {
        let d = self.disc;
        let p = &self.params;
        let wdot = state.wdot(self.dt);
        let b = &d.blocks;
        let fluid_kinetic = 0.5 * p.rho_f * b.mass_u.quadratic_form(&state.u);
        let plate_kinetic = 0.5 * p.omega * p.rho_p * b.mass_w.quadratic_form(&wdot);
        let rotational = 0.5 * p.omega * p.rho_rot * b.stiff_w.quadratic_form(&wdot);
        let elastic = 0.5 * p.d * b.mass_w.quadratic_form(&state.z);
        let mismatch: Vec<f64> = d
            .interface_velocity(&state.u)
            .iter()
            .zip(&wdot)
            .map(|(a, b)| a - b)
            .collect();
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        StepRecord {
            step: state.step,
            time: state.time,
            fluid_kinetic,
            plate_kinetic,
            rotational,
            elastic,
            total_energy: fluid_kinetic + plate_kinetic + rotational + elastic,
            max_displacement: max_abs(&state.w),
            max_wdot: max_abs(&wdot),
            interface_mismatch: d.plate_l2_norm(&mismatch),
            wdot_integral: d.plate_integral(&wdot),
            iterations,
        }
    }

    /// Steps until `t_final`, calling `observer` on the initial state and after
    /// every step. Returns the final state and all records.
    pub fn advance(
        &mut self,
        state: CoupledState,
        t_final: f64,
        mut observer: impl FnMut(&StepRecord, &CoupledState),
    ) -> Result<(CoupledState, Vec<StepRecord>)> {
        let steps = (t_final / self.dt).round();
        if !(steps >= 0.0) || (steps * self.dt - t_final).abs() > 1e-9 * t_final.abs().max(self.dt) {
            return Err(Error::InvalidArgument(format!(
                "final time {t_final} is not a multiple of the time step {}",
                self.dt
            )));
        }
        let steps = steps as usize;
        let mut records = Vec::with_capacity(steps + 1);
        let first = self.record(&state, 0);
        observer(&first, &state);
        records.push(first);
        let mut state = state;
        while state.step < steps {
            let (next, iterations) = self.step(&state)?;
            state = next;
            let rec = self.record(&state, iterations);
            observer(&rec, &state);
            records.push(rec);
        }
        Ok((state, records))
    }
}

/// Nodal restriction of a P1 pressure to the plate vertices.
pub fn extract_pressure_trace(disc: &Discretization, p0: &[f64]) -> Vec<f64> {
    disc.trace.vertex_map.iter().map(|&v| p0[v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn disc(n: usize, ms: MultiplierSpace) -> Discretization {
        Discretization::unit_plate_box(n, 1.0, ms).unwrap()
    }

    #[test]
    fn rest_state_stays_at_rest_in_one_iteration() {
        let d = disc(2, MultiplierSpace::Plate);
        let mut solver =
            CoupledSolver::new(&d, PhysicalParams::default(), CouplingConfig::default(), 0.1, Forcing::None).unwrap();
        let (next, its) = solver.fixed_point_step(&CoupledState::rest(&d)).unwrap();
        assert_eq!(its, 1);
        assert!(next.u.iter().chain(&next.w).chain(&next.z).all(|v| *v == 0.0));
        assert_eq!((next.step, next.time), (1, 0.1));
    }

    #[test]
    fn monolithic_zero_data_gives_zero_solution() {
        let d = disc(2, MultiplierSpace::Linear);
        let cfg = CouplingConfig {
            multiplier: MultiplierSpace::Linear,
            ..CouplingConfig::monolithic()
        };
        let mut solver = CoupledSolver::new(&d, PhysicalParams::default(), cfg, 0.1, Forcing::None).unwrap();
        let next = solver.monolithic_step(&CoupledState::rest(&d)).unwrap();
        assert!(next.u.iter().chain(&next.p0).chain(&next.g).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn mismatched_multiplier_is_rejected() {
        let d = disc(2, MultiplierSpace::Plate);
        let cfg = CouplingConfig {
            multiplier: MultiplierSpace::Linear,
            ..Default::default()
        };
        assert!(CoupledSolver::new(&d, PhysicalParams::default(), cfg, 0.1, Forcing::None).is_err());
    }

    #[test]
    fn vibration_initial_z_solves_the_discrete_poisson_identity() {
        // Reference values from an independent P2 assembly on the same mesh.
        // The continuous value 8π²·1e-2 ≈ 0.7896 is approached at O(h^1.5).
        for (n, reference) in [(4, 0.42934873937098067), (8, 0.6134760376044804)] {
            let d = Discretization::unit_plate_box(n, 0.5, MultiplierSpace::Plate).unwrap();
            let w0 = |x: [f64; 3]| 1e-2 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
            let s = initialize(&d, |_| [0.0; 3], w0, |_| 0.0, 1e-3).unwrap();
            let z = d.plate.evaluate(&s.z, [0.25, 0.25, 0.0]).unwrap()[0];
            assert!((z - reference).abs() < 1e-10, "{z} vs {reference}");
            assert!(z < 8.0 * PI * PI * 1e-2);
            assert_eq!(s.w, s.w_prev);
        }
    }

    #[test]
    fn nonzero_mean_interface_data_is_incompatible() {
        let d = disc(2, MultiplierSpace::Plate);
        let mut solver =
            CoupledSolver::new(&d, PhysicalParams::default(), CouplingConfig::default(), 0.1, Forcing::None).unwrap();
        let wdot = d.plate.interpolate_scalar(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        let r = solver.fluid_step(&CoupledState::rest(&d), &wdot, 0.1);
        assert!(matches!(r, Err(Error::Compatibility { .. })), "{r:?}");
    }

    #[test]
    fn pressure_trace_of_affine_field() {
        let d = disc(2, MultiplierSpace::Linear);
        let p = d.pressure.interpolate_scalar(|x| x[2] + 0.5);
        assert!(extract_pressure_trace(&d, &p).iter().all(|v| (v - 0.5).abs() < 1e-15));
        let q = d.pressure.interpolate_scalar(|x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin() * x[2].exp());
        for (k, &v) in d.trace.vertex_map.iter().enumerate() {
            let x = d.pressure.node_coord(v);
            let exact = (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
            assert!((extract_pressure_trace(&d, &q)[k] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn scheme_is_linear_in_the_data() {
        let d = disc(2, MultiplierSpace::Plate);
        let run = |c: f64| {
            let s = initialize(
                &d,
                |_| [0.0; 3],
                |x| c * (PI * x[0]).sin().powi(2) * (2.0 * PI * x[0]).sin() * (PI * x[1]).sin().powi(2),
                |_| 0.0,
                0.05,
            )
            .unwrap();
            let cfg = CouplingConfig {
                tol: 1e-13,
                ..Default::default()
            };
            let mut solver = CoupledSolver::new(&d, PhysicalParams::default(), cfg, 0.05, Forcing::None).unwrap();
            solver.advance(s, 0.1, |_, _| {}).unwrap().0
        };
        let (one, three) = (run(1.0), run(3.0));
        let rel = |a: &[f64], b: &[f64]| {
            let num: f64 = a.iter().zip(b).map(|(x, y)| (3.0 * x - y).powi(2)).sum::<f64>().sqrt();
            num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
        };
        assert!(rel(&one.u, &three.u) < 1e-12);
        assert!(rel(&one.w, &three.w) < 1e-12);
    }

    #[test]
    fn advance_runs_the_requested_step_count() {
        let d = disc(2, MultiplierSpace::Plate);
        let mut solver =
            CoupledSolver::new(&d, PhysicalParams::default(), CouplingConfig::default(), 0.25, Forcing::None).unwrap();
        let mut seen = 0;
        let (s, recs) = solver.advance(CoupledState::rest(&d), 1.0, |_, _| seen += 1).unwrap();
        assert_eq!((s.step, recs.len(), seen), (4, 5, 5));
        assert!(solver.advance(CoupledState::rest(&d), 0.3, |_, _| {}).is_err());
    }
}
