//! Convergence studies against the manufactured solution, the free vibration
//! test, and the inf-sup sweep.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coupled::{initialize, initialize_manufactured, CoupledSolver, Discretization, Forcing, StepRecord};
use crate::error::{Error, Result};
use crate::linalg::{smallest_generalized_singular_value, SymmetricOperator};
use crate::mms::{error_norm, observed_rate, ExactSolution, Norm};
use crate::params::{CouplingConfig, MultiplierSpace, PhysicalParams};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Final-time errors of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSet {
    pub u_l2: f64,
    pub u_h1: f64,
    pub p_l2: f64,
    pub w_l2: f64,
    pub w_h1: f64,
    pub z_l2: f64,
    pub z_h1: f64,
}

impl ErrorSet {
    pub const NAMES: [&'static str; 7] = ["u_l2", "u_h1", "p_l2", "w_l2", "w_h1", "z_l2", "z_h1"];

    pub fn to_array(&self) -> [f64; 7] {
        [self.u_l2, self.u_h1, self.p_l2, self.w_l2, self.w_h1, self.z_l2, self.z_h1]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            u_l2: a[0],
            u_h1: a[1],
            p_l2: a[2],
            w_l2: a[3],
            w_h1: a[4],
            z_l2: a[5],
            z_h1: a[6],
        }
    }
}

/// Which discretization parameter a study refines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refinement {
    Space,
    Time,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub steps: usize,
    pub total: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub refinement: Refinement,
    /// Cells per unit length.
    pub n: usize,
    pub dt: f64,
    /// `1/n` for space studies, `δt` for time studies.
    pub step: f64,
    pub errors: ErrorSet,
    /// Rates against the previous record; absent for the first level.
    pub rates: Option<ErrorSet>,
    pub wall_clock: f64,
    pub iterations: IterationStats,
}

/// Errors of the discrete state against the manufactured solution at `t`.
pub fn manufactured_errors(
    disc: &Discretization,
    state: &crate::coupled::CoupledState,
    exact: &ExactSolution,
    t: f64,
) -> ErrorSet {
    let zero3 = [[0.0; 3]; 3];
    let u = |norm| {
        error_norm(
            &disc.velocity,
            &state.u,
            |x| exact.velocity(x, t),
            |x| exact.velocity_gradient(x, t),
            norm,
        )
    };
    let p = error_norm(&disc.pressure, &state.pressure(), |x| [exact.pressure(x, t), 0.0, 0.0], |_| zero3, Norm::L2);
    let w = |norm| {
        error_norm(
            &disc.plate,
            &state.w,
            |x| [exact.displacement(x, t), 0.0, 0.0],
            |x| [exact.displacement_gradient(x, t), [0.0; 3], [0.0; 3]],
            norm,
        )
    };
    let z = |norm| {
        error_norm(
            &disc.plate,
            &state.z,
            |x| [exact.z(x, t), 0.0, 0.0],
            |x| [exact.z_gradient(x, t), [0.0; 3], [0.0; 3]],
            norm,
        )
    };
    ErrorSet {
        u_l2: u(Norm::L2),
        u_h1: u(Norm::H1),
        p_l2: p,
        w_l2: w(Norm::L2),
        w_h1: w(Norm::H1),
        z_l2: z(Norm::L2),
        z_h1: z(Norm::H1),
    }
}

/// One manufactured-solution run on `[0,1]² × [-1,0]`.
pub fn run_manufactured(
    n: usize,
    dt: f64,
    t_final: f64,
    params: &PhysicalParams,
    coupling: &CouplingConfig,
    exact: &ExactSolution,
) -> Result<(ErrorSet, IterationStats)> {
    let disc = Discretization::unit_plate_box(n, 1.0, coupling.multiplier)?;
    let state = initialize_manufactured(&disc, exact, dt)?;
    let mut solver = CoupledSolver::new(&disc, *params, *coupling, dt, Forcing::Manufactured(*exact))?;
    let (state, records) = solver.advance(state, t_final, |_, _| {})?;
    let its: Vec<usize> = records.iter().skip(1).map(|r| r.iterations).collect();
    let stats = IterationStats {
        steps: its.len(),
        total: its.iter().sum(),
        max: its.iter().copied().max().unwrap_or(0),
    };
    Ok((manufactured_errors(&disc, &state, exact, state.time), stats))
}

/// Fills `rates` from consecutive error columns.
pub fn fill_rates(records: &mut [ExperimentRecord]) -> Result<()> {
    for i in 1..records.len() {
        let (a, b) = (records[i - 1].errors.to_array(), records[i].errors.to_array());
        let steps = [records[i - 1].step, records[i].step];
        let mut r = [0.0; 7];
        for k in 0..7 {
            r[k] = observed_rate(&[a[k], b[k]], &steps)?[0];
        }
        records[i].rates = Some(ErrorSet::from_array(r));
    }
    Ok(())
}

fn finish(mut records: Vec<ExperimentRecord>) -> Result<Vec<ExperimentRecord>> {
    if records.len() > 1 {
        fill_rates(&mut records)?;
    }
    Ok(records)
}

pub fn run_space_convergence(
    levels: &[usize],
    dt: f64,
    t_final: f64,
    params: &PhysicalParams,
    coupling: &CouplingConfig,
    exact: &ExactSolution,
) -> Result<Vec<ExperimentRecord>> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("levels must be non-empty and strictly increasing".into()));
    }
    let mut records = Vec::with_capacity(levels.len());
    for &n in levels {
        let start = Instant::now();
        let (errors, iterations) = run_manufactured(n, dt, t_final, params, coupling, exact)?;
        records.push(ExperimentRecord {
            refinement: Refinement::Space,
            n,
            dt,
            step: 1.0 / n as f64,
            errors,
            rates: None,
            wall_clock: start.elapsed().as_secs_f64(),
            iterations,
        });
    }
    finish(records)
}

/// Fixed mesh, decreasing `δt`; `params.omega` scales the plate inertia.
pub fn run_time_convergence(
    dts: &[f64],
    n: usize,
    t_final: f64,
    params: &PhysicalParams,
    coupling: &CouplingConfig,
    exact: &ExactSolution,
) -> Result<Vec<ExperimentRecord>> {
    if dts.is_empty() || dts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("time steps must be non-empty and strictly decreasing".into()));
    }
    if params.omega < 1.0 {
        return Err(Error::InvalidArgument(format!("omega must be at least 1, got {}", params.omega)));
    }
    let mut records = Vec::with_capacity(dts.len());
    for &dt in dts {
        let start = Instant::now();
        let (errors, iterations) = run_manufactured(n, dt, t_final, params, coupling, exact)?;
        records.push(ExperimentRecord {
            refinement: Refinement::Time,
            n,
            dt,
            step: dt,
            errors,
            rates: None,
            wall_clock: start.elapsed().as_secs_f64(),
            iterations,
        });
    }
    finish(records)
}

/// Relative L² differences between partitioned and monolithic runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub n: usize,
    pub steps: usize,
    pub u: f64,
    pub p0: f64,
    pub w: f64,
    pub z: f64,
    pub g: f64,
    /// Largest fixed-point iteration count over the run.
    pub max_iterations: usize,
}

impl ModeComparison {
    pub fn max(&self) -> f64 {
        [self.u, self.p0, self.w, self.z, self.g].into_iter().fold(0.0, f64::max)
    }
}

/// Runs the manufactured problem in both coupling modes from the same
/// initial state and compares the final states.
pub fn compare_coupling_modes(
    n: usize,
    steps: usize,
    dt: f64,
    params: &PhysicalParams,
    partitioned: &CouplingConfig,
    exact: &ExactSolution,
) -> Result<ModeComparison> {
    let disc = Discretization::unit_plate_box(n, 1.0, partitioned.multiplier)?;
    let start = initialize_manufactured(&disc, exact, dt)?;
    let forcing = Forcing::Manufactured(*exact);
    let part_cfg = CouplingConfig {
        mode: crate::params::CouplingMode::Partitioned,
        ..*partitioned
    };
    let mono_cfg = CouplingConfig {
        mode: crate::params::CouplingMode::Monolithic,
        ..*partitioned
    };
    let t_final = steps as f64 * dt;
    let (a, recs) = CoupledSolver::new(&disc, *params, part_cfg, dt, forcing)?.advance(start.clone(), t_final, |_, _| {})?;
    let (b, _) = CoupledSolver::new(&disc, *params, mono_cfg, dt, forcing)?.advance(start, t_final, |_, _| {})?;
    let blocks = &disc.blocks;
    let g_mass = crate::assembly::assemble_mass(&disc.multiplier, 1.0);
    let rel = |m: &SparseMatrix, x: &[f64], y: &[f64]| {
        let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        let denom = m.quadratic_form(y).sqrt();
        if denom == 0.0 {
            m.quadratic_form(&d).sqrt()
        } else {
            m.quadratic_form(&d).sqrt() / denom
        }
    };
    Ok(ModeComparison {
        n,
        steps,
        u: rel(&blocks.mass_u, &a.u, &b.u),
        p0: rel(&blocks.mass_p, &a.p0, &b.p0),
        w: rel(&blocks.mass_w, &a.w, &b.w),
        z: rel(&blocks.mass_w, &a.z, &b.z),
        g: rel(&g_mass, &a.g, &b.g),
        max_iterations: recs.iter().map(|r| r.iterations).max().unwrap_or(0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VibrationSetup {
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Fluid depth below the plate.
    pub depth: f64,
    /// Initial amplitude of `w₀ = A sin(2πx) sin(2πy)`.
    pub amplitude: f64,
    pub params: PhysicalParams,
}

impl Default for VibrationSetup {
    fn default() -> Self {
        Self {
            n: 8,
            dt: 1e-3,
            t_final: 0.1,
            depth: 0.5,
            amplitude: 1e-2,
            params: PhysicalParams {
                rho_p: 2.7,
                d: 6.4527,
                rho_rot: 0.0,
                ..PhysicalParams::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VibrationRecord {
    pub setup: VibrationSetup,
    /// Initial state first, then one entry per step.
    pub series: Vec<StepRecord>,
    pub wall_clock: f64,
}

impl VibrationRecord {
    /// Largest one-step energy increase, `max(Eⁿ⁺¹ − Eⁿ)` (negative if strictly decaying).
    pub fn max_energy_increase(&self) -> f64 {
        self.series
            .windows(2)
            .map(|w| w[1].total_energy - w[0].total_energy)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn initial_energy(&self) -> f64 {
        self.series[0].total_energy
    }

    pub fn energy_nonincreasing(&self, slack: f64) -> bool {
        self.max_energy_increase() <= slack * self.initial_energy()
    }

    /// Record closest to time `t`.
    pub fn at(&self, t: f64) -> &StepRecord {
        self.series
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .expect("non-empty series")
    }

    pub fn max_wdot_integral(&self) -> f64 {
        self.series.iter().map(|r| r.wdot_integral.abs()).fold(0.0, f64::max)
    }

    pub fn final_record(&self) -> &StepRecord {
        self.series.last().expect("non-empty series")
    }
}

pub fn run_free_vibration(setup: &VibrationSetup, coupling: &CouplingConfig) -> Result<VibrationRecord> {
    let start = Instant::now();
    let disc = Discretization::unit_plate_box(setup.n, setup.depth, coupling.multiplier)?;
    let a = setup.amplitude;
    let state = initialize(
        &disc,
        |_| [0.0; 3],
        |x| a * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
        |_| 0.0,
        setup.dt,
    )?;
    let mut solver = CoupledSolver::new(&disc, setup.params, *coupling, setup.dt, Forcing::None)?;
    let (_, series) = solver.advance(state, setup.t_final, |_, _| {})?;
    Ok(VibrationRecord {
        setup: *setup,
        series,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfSupRecord {
    pub n: usize,
    pub h: f64,
    /// Estimate for the full constraint `(q, g)` against `(v, η)`.
    pub beta: f64,
    /// Estimate for the divergence block alone.
    pub beta_div: f64,
    pub iterations: usize,
}

/// Block-diagonal operator `diag(A, S)` with `S` applied by action.
struct BlockDiagonal<'a> {
    first: &'a SparseMatrix,
    second: crate::linalg::SchurOperator,
}

impl SymmetricOperator for BlockDiagonal<'_> {
    fn dim(&self) -> usize {
        self.first.nrows() + self.second.dim()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n1 = self.first.nrows();
        let mut y = self.first.mul_vec(&x[..n1]);
        y.extend(self.second.apply(&x[n1..]));
        y
    }
}

/// Inf-sup estimates on `[0,1]² × [-1,0]` with the P1 multiplier.
///
/// Primal norm: H¹ on free velocity and free plate DOFs. Dual norm: L² on the
/// pressure and `C (M + K)⁻¹ Cᵀ` on the multiplier, a surrogate for the
/// H^{-1/2} norm built from the plate H¹ inner product.
pub fn run_infsup_sweep(levels: &[usize], dt: f64, tol: f64) -> Result<Vec<InfSupRecord>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(levels.len());
    for &n in levels {
        let d = Discretization::unit_plate_box(n, 1.0, MultiplierSpace::Linear)?;
        let b = &d.blocks;
        let vel_free = d.velocity.free_dofs();
        let plate_free = d.plate.free_dofs();
        let all_p: Vec<usize> = (0..d.pressure.dof_count()).collect();
        let all_g: Vec<usize> = (0..d.multiplier.dof_count()).collect();
        let (nv, nw, np, ng) = (vel_free.len(), plate_free.len(), all_p.len(), all_g.len());

        let h1_u = b.mass_u.add_scaled(&b.stiff_u, 1.0).submatrix(&vel_free, &vel_free);
        let h1_full_w = b.mass_w.add_scaled(&b.stiff_w, 1.0);
        let h1_w = h1_full_w.submatrix(&plate_free, &plate_free);
        let div = b.div.submatrix(&all_p, &vel_free);

        let mut mx = TripletBuilder::new(nv + nw, nv + nw);
        mx.add_block(0, 0, &h1_u, 1.0);
        mx.add_block(nv, nv, &h1_w, 1.0);
        let mx = mx.build();
        let mut bb = TripletBuilder::new(np + ng, nv + nw);
        bb.add_block(0, 0, &div, -dt);
        bb.add_block(np, 0, &b.coupling_u.submatrix(&all_g, &vel_free), dt);
        bb.add_block(np, nv, &b.coupling_w.submatrix(&all_g, &plate_free), -1.0);
        let bb = bb.build();
        let my = BlockDiagonal {
            first: &b.mass_p,
            second: crate::linalg::SchurOperator::new(b.coupling_w.transpose(), &h1_full_w)?,
        };
        let full = smallest_generalized_singular_value(&bb, &mx, &my, tol, 400)?;
        if !full.converged {
            return Err(Error::NoConvergence {
                iterations: full.iterations,
                residual: f64::NAN,
            });
        }
        // Divergence block alone, pressure modulo constants via the border.
        let mut db = TripletBuilder::new(np, nv);
        db.add_block(0, 0, &div, 1.0);
        let div_only = restrict_to_mean_zero(&db.build(), &b.mass_p, &b.mean_m);
        let div_est = smallest_generalized_singular_value(&div_only.0, &h1_u, &div_only.1, tol, 400)?;
        out.push(InfSupRecord {
            n,
            h: 1.0 / n as f64,
            beta: full.value,
            beta_div: div_est.value,
            iterations: full.iterations,
        });
    }
    Ok(out)
}

/// Drops the last pressure DOF after shifting by its value so the constant
/// mode is excluded: `q = P y` with `P` the mean-zero completion.
fn restrict_to_mean_zero(div: &SparseMatrix, mass: &SparseMatrix, mean: &[f64]) -> (SparseMatrix, SparseMatrix) {
    // q_i = y_i for i < n-1 and q_{n-1} = -(Σ m_i y_i) / m_{n-1}.
    let n = mean.len();
    let mut p = TripletBuilder::new(n, n - 1);
    for i in 0..n - 1 {
        p.push(i, i, 1.0);
        p.push(n - 1, i, -mean[i] / mean[n - 1]);
    }
    let p = p.build();
    let pt = p.transpose();
    let reduced_div = mat_mul(&pt, div);
    let reduced_mass = mat_mul(&pt, &mat_mul(mass, &p));
    (reduced_div, reduced_mass)
}

fn mat_mul(a: &SparseMatrix, b: &SparseMatrix) -> SparseMatrix {
    let mut entries = Vec::new();
    let mut acc = vec![0.0; b.ncols()];
    let mut touched = Vec::new();
    for r in 0..a.nrows() {
        for (k, v) in a.row(r) {
            for (c, w) in b.row(k) {
                if acc[c] == 0.0 {
                    touched.push(c);
                }
                acc[c] += v * w;
            }
        }
        for &c in &touched {
            entries.push((r, c, acc[c]));
            acc[c] = 0.0;
        }
        touched.clear();
    }
    SparseMatrix::from_triplets(a.nrows(), b.ncols(), &entries)
}
