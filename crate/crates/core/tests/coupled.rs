use plate_fsi::coupled::{initialize, initialize_manufactured};
use plate_fsi::experiments::compare_coupling_modes;
use plate_fsi::{
    CoupledSolver, CouplingConfig, CouplingMode, Discretization, Error, ExactSolution, Forcing, MultiplierSpace,
    PhysicalParams,
};
use std::f64::consts::PI;

fn vibration_start(d: &Discretization, dt: f64) -> plate_fsi::CoupledState {
    initialize(d, |_| [0.0; 3], |x| 1e-2 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(), |_| 0.0, dt).unwrap()
}

fn vibration_params() -> PhysicalParams {
    PhysicalParams {
        rho_p: 2.7,
        d: 6.4527,
        rho_rot: 0.0,
        ..Default::default()
    }
}

#[test]
fn partitioned_matches_monolithic_with_plate_multiplier() {
    let cfg = CouplingConfig {
        tol: 1e-10,
        ..Default::default()
    };
    let r = compare_coupling_modes(2, 3, 1e-2, &PhysicalParams::default(), &cfg, &ExactSolution::default()).unwrap();
    assert!(r.max() <= 1e-7, "{r:?}");
}

#[test]
fn first_step_velocity_agrees_at_small_time_step() {
    let r = compare_coupling_modes(4, 1, 1e-4, &PhysicalParams::default(), &CouplingConfig::default(), &ExactSolution::default())
        .unwrap();
    assert!(r.u <= 1e-7, "{r:?}");
}

#[test]
fn interface_velocity_equals_plate_velocity_bitwise() {
    let d = Discretization::unit_plate_box(2, 1.0, MultiplierSpace::Plate).unwrap();
    let e = ExactSolution::default();
    let dt = 1e-3;
    let mut solver =
        CoupledSolver::new(&d, PhysicalParams::default(), CouplingConfig::default(), dt, Forcing::Manufactured(e)).unwrap();
    solver
        .advance(initialize_manufactured(&d, &e, dt).unwrap(), 3e-3, |rec, s| {
            if rec.step > 0 {
                assert_eq!(d.interface_velocity(&s.u), s.wdot(dt));
                assert_eq!(rec.interface_mismatch, 0.0);
                assert!(rec.wdot_integral.abs() <= 1e-10);
            }
        })
        .unwrap();
}

#[test]
fn monolithic_enforces_the_weak_interface_condition() {
    let d = Discretization::unit_plate_box(2, 1.0, MultiplierSpace::Linear).unwrap();
    let e = ExactSolution::new(1.0);
    let dt = 1e-2;
    let cfg = CouplingConfig {
        multiplier: MultiplierSpace::Linear,
        mode: CouplingMode::Monolithic,
        ..Default::default()
    };
    let mut solver = CoupledSolver::new(&d, PhysicalParams::default(), cfg, dt, Forcing::Manufactured(e)).unwrap();
    let (s, _) = solver.advance(initialize_manufactured(&d, &e, dt).unwrap(), 2e-2, |_, _| {}).unwrap();
    let cu = d.blocks.coupling_u.mul_vec(&s.u);
    let cw = d.blocks.coupling_w.mul_vec(&s.wdot(dt));
    let scale = cu.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (a, b) in cu.iter().zip(&cw) {
        assert!((a - b).abs() <= 1e-10 * scale.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn vibration_energy_decays_for_either_relaxation() {
    let d = Discretization::unit_plate_box(4, 0.5, MultiplierSpace::Plate).unwrap();
    let dt = 1e-3;
    let mut finals = Vec::new();
    for theta in [1.0, 0.5] {
        let cfg = CouplingConfig {
            theta,
            tol: 1e-12,
            max_iter: 200,
            ..Default::default()
        };
        let mut solver = CoupledSolver::new(&d, vibration_params(), cfg, dt, Forcing::None).unwrap();
        let (s, recs) = solver.advance(vibration_start(&d, dt), 2e-2, |_, _| {}).unwrap();
        let e0 = recs[0].total_energy;
        for w in recs.windows(2) {
            assert!(w[1].total_energy <= w[0].total_energy + 1e-12 * e0);
        }
        finals.push(s.w);
    }
    let diff = finals[0].iter().zip(&finals[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn iteration_cap_is_reported() {
    let d = Discretization::unit_plate_box(2, 0.5, MultiplierSpace::Plate).unwrap();
    let cfg = CouplingConfig {
        max_iter: 1,
        ..Default::default()
    };
    let mut solver = CoupledSolver::new(&d, vibration_params(), cfg, 1e-3, Forcing::None).unwrap();
    match solver.step(&vibration_start(&d, 1e-3)) {
        Err(Error::NoConvergence { iterations, residual }) => {
            assert_eq!(iterations, 1);
            assert!(residual > 0.0);
        }
        other => panic!("{other:?}"),
    }
}
