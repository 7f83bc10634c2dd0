use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use plate_fsi::assembly::assemble_stiffness;
use plate_fsi::coupled::initialize_manufactured;
use plate_fsi::linalg::Factorization;
use plate_fsi::{
    build_box_fluid_mesh, BoxBounds, CoupledSolver, CouplingConfig, CouplingMode, Discretization, ExactSolution, FeSpace,
    Forcing, MultiplierSpace, PhysicalParams, SpaceRole,
};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for n in [2, 4] {
        group.bench_with_input(BenchmarkId::new("discretization", n), &n, |b, &n| {
            b.iter(|| Discretization::unit_plate_box(black_box(n), 1.0, MultiplierSpace::Linear).unwrap())
        });
        let mesh = build_box_fluid_mesh(n, n, n, BoxBounds::unit_plate_box(1.0)).unwrap();
        let v = FeSpace::new(&mesh, 2, 3, SpaceRole::Velocity).unwrap();
        group.bench_with_input(BenchmarkId::new("velocity_stiffness", n), &v, |b, v| {
            b.iter(|| assemble_stiffness(black_box(v), 1.0))
        });
    }
    group.finish();
}

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization");
    group.sample_size(20);
    for n in [4, 8] {
        let mesh = build_box_fluid_mesh(n, n, n, BoxBounds::unit_plate_box(1.0)).unwrap();
        let v = FeSpace::new(&mesh, 2, 3, SpaceRole::Velocity).unwrap();
        let free = v.free_dofs();
        let k = assemble_stiffness(&v, 1.0).submatrix(&free, &free);
        group.bench_with_input(BenchmarkId::new("velocity_laplacian_lu", n), &k, |b, k| {
            b.iter(|| Factorization::new(black_box(k)).unwrap())
        });
    }
    group.finish();
}

fn coupled_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("coupled_step");
    group.sample_size(10);
    let e = ExactSolution::default();
    let dt = 1e-4;
    for mode in [CouplingMode::Partitioned, CouplingMode::Monolithic] {
        let disc = Discretization::unit_plate_box(4, 1.0, MultiplierSpace::Linear).unwrap();
        let cfg = CouplingConfig {
            mode,
            multiplier: MultiplierSpace::Linear,
            ..Default::default()
        };
        let mut solver = CoupledSolver::new(&disc, PhysicalParams::default(), cfg, dt, Forcing::Manufactured(e)).unwrap();
        let state = initialize_manufactured(&disc, &e, dt).unwrap();
        group.bench_function(BenchmarkId::new(format!("{mode:?}").to_lowercase(), 4), |b| {
            b.iter(|| solver.step(black_box(&state)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, factorization, coupled_step);
criterion_main!(benches);
