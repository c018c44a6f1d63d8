//! Optimal control of surfaces described by the prescribed mean curvature
//! equation `−div(∇y / √(1 + |∇y|²)) = u`, discretized with P1 finite
//! elements.
//!
//! The control `u` is sought in an `L^p` ball and the state `y` should track
//! a desired surface `y_d` in `L²`. States are computed with a damped Newton
//! method, gradients with the discrete adjoint, and the control with a
//! projected gradient method.

pub mod assembly;
pub mod error;
pub mod fields;
pub mod mesh;
pub mod optimize;
pub mod presets;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod verify;
pub mod vtk;

pub use assembly::{Dofs, P1Function, QuadratureSamples};
pub use error::{Error, Result};
pub use fields::Field;
pub use mesh::{clover_mesh, refine_uniform, unit_square_mesh, Mesh};
pub use optimize::{Control, ControlBasis, ControlProblem, OptimizeReport, ProblemParams};
pub use presets::{MeshSpec, Preset};
pub use solver::{NewtonOptions, NewtonReport};
pub use sparse::{solve_spd, SparseSymMatrix};

/// Seed for randomized checks: `CURVOPT_SEED` when set and valid, otherwise
/// `default`.
pub fn seed_from_env(default: u64) -> u64 {
    std::env::var("CURVOPT_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(default)
}
