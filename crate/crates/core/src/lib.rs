//! Finite element solver for unsteady Stokes flow in a box coupled to a
//! hinged Kirchhoff plate forming its top wall.

pub mod assembly;
pub mod config;
pub mod coupled;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod params;
pub mod report;
pub mod sparse;

pub use assembly::BlockSystem;
pub use coupled::{CoupledSolver, CoupledState, Discretization, Forcing, StepRecord};
pub use config::{ExperimentKind, RunConfig};
pub use error::{Error, Result};
pub use experiments::{ErrorSet, ExperimentRecord, InfSupRecord, VibrationRecord, VibrationSetup};
pub use fem::{FeSpace, SpaceRole};
pub use mesh::{build_box_fluid_mesh, extract_plate_mesh, BoxBounds, Mesh2D, Mesh3D, TraceMap};
pub use mms::{ExactSolution, Norm};
pub use params::{CouplingConfig, CouplingMode, MultiplierSpace, PhysicalParams};
pub use sparse::SparseMatrix;
