//! Obstacle HJB equation: Hamiltonian, finite-difference solver, value
//! surfaces and residuals.

mod grid;
mod hamiltonian;
mod residual;
mod solver;
mod surface;

pub use grid::SpaceTimeGrid;
pub use hamiltonian::{hamiltonian, inf_hamiltonian, HamiltonianQuery, InfHamiltonian, TIE_TOLERANCE};
pub(crate) use hamiltonian::{hamiltonian1, inf_hamiltonian1};
pub use residual::{residual, ResidualField};
pub use solver::{explicit_step_limit, solve_obstacle_hjb, BoundaryRule, HjbOptions, ObstacleMode, Scheme, Substeps};
pub use surface::{Derivatives, Provenance, SurfaceFn, ValueSurface, CANDIDATE_NAMES};
