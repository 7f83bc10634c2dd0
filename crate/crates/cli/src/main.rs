use std::path::{Path, PathBuf};
use std::process::{Command as Process, ExitCode};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plate_fsi::experiments::{
    run_free_vibration, run_infsup_sweep, run_manufactured, run_space_convergence, run_time_convergence,
    IterationStats, Refinement,
};
use plate_fsi::report::{convergence_csv, infsup_csv, rate_table, vibration_csv, write_file, write_manifest};
use plate_fsi::{
    CouplingMode, Error, ExactSolution, ExperimentKind, ExperimentRecord, MultiplierSpace, Result, RunConfig,
    VibrationSetup,
};

/// Stokes flow coupled to a Kirchhoff plate: convergence, vibration and inf-sup studies.
#[derive(Parser, Debug)]
#[command(name = "plate-fsi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Manufactured solution on refined meshes at fixed time step.
    ConvergeSpace,
    /// Manufactured solution with decreasing time steps on a fixed mesh.
    ConvergeTime,
    /// Free vibration of a plate over a fluid at rest.
    Vibrate,
    /// Discrete inf-sup constant of the constraint block.
    Infsup,
    /// One manufactured-solution run.
    Solve,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Self::ConvergeSpace => ExperimentKind::ConvergeSpace,
            Self::ConvergeTime => ExperimentKind::ConvergeTime,
            Self::Vibrate => ExperimentKind::Vibrate,
            Self::Infsup => ExperimentKind::Infsup,
            Self::Solve => ExperimentKind::SingleSolve,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Mode {
    Partitioned,
    Monolithic,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Multiplier {
    Plate,
    Linear,
}

/// Command-line values take precedence over the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Mesh levels, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<usize>>,

    /// Mesh level for single-mesh experiments.
    #[arg(long, global = true)]
    n: Option<usize>,

    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Time steps for temporal studies, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    dts: Option<Vec<f64>>,

    #[arg(long, global = true)]
    t_final: Option<f64>,

    #[arg(long, global = true)]
    omega: Option<f64>,

    #[arg(long, global = true)]
    zeta: Option<f64>,

    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,

    #[arg(long, global = true, value_enum)]
    multiplier: Option<Multiplier>,

    /// Under-relaxation factor of the fixed-point iteration.
    #[arg(long, global = true)]
    theta: Option<f64>,

    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Finest mesh level: replaces the top of `levels` and sets `n`.
    #[arg(long, global = true)]
    max_level_override: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.out {
            cfg.output = v.clone();
        }
        if let Some(v) = &self.levels {
            cfg.levels = v.clone();
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = &self.dts {
            cfg.dts = v.clone();
        }
        if let Some(v) = self.t_final {
            cfg.t_final = v;
        }
        if let Some(v) = self.omega {
            cfg.params.omega = v;
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.mode {
            cfg.coupling.mode = match v {
                Mode::Partitioned => CouplingMode::Partitioned,
                Mode::Monolithic => CouplingMode::Monolithic,
            };
        }
        if let Some(v) = self.multiplier {
            cfg.coupling.multiplier = match v {
                Multiplier::Plate => MultiplierSpace::Plate,
                Multiplier::Linear => MultiplierSpace::Linear,
            };
        }
        if let Some(v) = self.theta {
            cfg.coupling.theta = v;
        }
        if let Some(v) = self.tol {
            cfg.coupling.tol = v;
        }
        if let Some(top) = self.max_level_override {
            cfg.levels.retain(|&l| l < top);
            cfg.levels.push(top);
            cfg.n = top;
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.experiment = cli.command.kind();
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn git_revision() -> String {
    Process::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn convergence(cfg: &RunConfig, records: &[ExperimentRecord], dir: &Path) -> Result<()> {
    write_file(dir, "convergence.csv", &convergence_csv(records))?;
    let table = rate_table(records);
    write_file(dir, "rates.txt", &table)?;
    print!("{table}");
    let its: Vec<String> = records
        .iter()
        .map(|r| format!("{}/{}", r.iterations.max, r.iterations.steps))
        .collect();
    if cfg.coupling.mode == CouplingMode::Partitioned {
        println!("max fixed-point iterations per level (max/steps): {}", its.join(" "));
    }
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.output.as_path();
    let exact = ExactSolution::new(cfg.zeta);
    let started = Instant::now();
    match cfg.experiment {
        ExperimentKind::ConvergeSpace => {
            let recs = run_space_convergence(&cfg.levels, cfg.dt, cfg.t_final, &cfg.params, &cfg.coupling, &exact)?;
            convergence(cfg, &recs, dir)?;
        }
        ExperimentKind::ConvergeTime => {
            let recs = run_time_convergence(&cfg.dts, cfg.n, cfg.t_final, &cfg.params, &cfg.coupling, &exact)?;
            convergence(cfg, &recs, dir)?;
        }
        ExperimentKind::SingleSolve => {
            let (errors, iterations): (_, IterationStats) =
                run_manufactured(cfg.n, cfg.dt, cfg.t_final, &cfg.params, &cfg.coupling, &exact)?;
            let rec = ExperimentRecord {
                refinement: Refinement::Space,
                n: cfg.n,
                dt: cfg.dt,
                step: 1.0 / cfg.n as f64,
                errors,
                rates: None,
                wall_clock: started.elapsed().as_secs_f64(),
                iterations,
            };
            convergence(cfg, &[rec], dir)?;
        }
        ExperimentKind::Vibrate => {
            let setup = VibrationSetup {
                n: cfg.n,
                dt: cfg.dt,
                t_final: cfg.t_final,
                depth: cfg.vibration.depth,
                amplitude: cfg.vibration.amplitude,
                params: cfg.params,
            };
            let rec = run_free_vibration(&setup, &cfg.coupling)?;
            write_file(dir, "vibration.csv", &vibration_csv(&rec))?;
            let last = rec.final_record();
            let summary = format!(
                "initial energy {:.6e}\nfinal energy {:.6e}\nmax one-step energy increase {:.3e}\nfinal max |w| {:.6e}\nmax |int wdot| {:.3e}\nmax interface mismatch {:.3e}\n",
                rec.initial_energy(),
                last.total_energy,
                rec.max_energy_increase(),
                last.max_displacement,
                rec.max_wdot_integral(),
                rec.series.iter().map(|s| s.interface_mismatch).fold(0.0, f64::max),
            );
            write_file(dir, "summary.txt", &summary)?;
            print!("{summary}");
        }
        ExperimentKind::Infsup => {
            let recs = run_infsup_sweep(&cfg.levels, cfg.dt, 1e-8)?;
            let csv = infsup_csv(&recs);
            write_file(dir, "infsup.csv", &csv)?;
            for r in &recs {
                println!("n {:>3}  beta {:.4e}  beta_div {:.4e}", r.n, r.beta, r.beta_div);
            }
        }
    }
    let build = if cfg!(debug_assertions) { "debug" } else { "release" };
    write_manifest(
        dir,
        cfg,
        &[
            ("git_revision", git_revision()),
            ("build_profile", build.into()),
            ("wall_clock_seconds", format!("{:.3}", started.elapsed().as_secs_f64())),
        ],
    )?;
    eprintln!("results written to {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = resolve(&cli).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ Error::Config { .. }) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
