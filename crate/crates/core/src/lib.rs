//! Numerical toolkit for stochastic control problems whose cost is the
//! initial value of a reflected backward SDE with an upper obstacle.
//!
//! The crate is organised along the pipeline:
//!
//! * [`model`]: problem instances (coefficients, obstacle, control set) and
//!   sampled assumption checks.
//! * [`simulate`]: Euler–Maruyama path ensembles under open-loop controls or
//!   feedback laws.
//! * [`rbsde`]: regression Monte Carlo solvers for the penalized and the
//!   reflected BSDE, the cost functional, and a binomial tree oracle.
//! * [`hjb`]: finite-difference solver for the obstacle HJB variational
//!   inequality, Hamiltonian evaluation and residuals.
//! * [`synthesis`]: feedback laws from Hamiltonian minimisation.
//! * [`verify`]: mechanical checks of the classical and viscosity
//!   verification conditions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hjb;
pub mod model;
pub mod rbsde;
pub mod regression;
pub mod simulate;
pub mod synthesis;
pub mod verify;

mod banded;

pub use error::{Error, Result};
pub use hjb::{
    hamiltonian, inf_hamiltonian, residual, solve_obstacle_hjb, BoundaryRule, HamiltonianQuery, HjbOptions,
    ObstacleMode, ResidualField, Scheme, SpaceTimeGrid, Substeps, ValueSurface,
};
pub use model::{validate_assumptions, AssumptionReport, ControlModel, ControlSet, ExampleConfig, ProbeBox};
pub use rbsde::{
    cost_functional, solve_penalized, solve_reflected, tree_oracle, Estimate, RbsdeSolution, SolverConfig, TreeScheme,
};
pub use regression::Estimator;
pub use simulate::{
    moment_check, simulate_closed_loop, simulate_paths, ConstantLaw, FeedbackPolicy, OpenLoopControl, PathEnsemble,
    TimeGrid,
};
pub use synthesis::{check_law_regularity, evaluate_feedback, extract_feedback, FeedbackLaw};
pub use verify::{
    check_d1_d2, control_battery, verify_classical, verify_feedback_optimality, verify_viscosity_conditions, McConfig,
    TripleFields, Verdict, VerificationReport,
};
