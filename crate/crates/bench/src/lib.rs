//! Shared inputs for the solver benchmarks.

use rfbsde_core::hjb::Substeps;
use rfbsde_core::model::examples::{example_classical, example_viscosity};
use rfbsde_core::{ControlModel, ExampleConfig, HjbOptions, SpaceTimeGrid};

pub fn classical() -> ControlModel {
    example_classical(&ExampleConfig::default()).expect("built-in model")
}

pub fn viscosity() -> ControlModel {
    example_viscosity(&ExampleConfig::default()).expect("built-in model")
}

/// The acceptance grid for the classical example, scaled down by `coarsen`.
pub fn classical_grid(coarsen: usize) -> SpaceTimeGrid {
    SpaceTimeGrid::new(1.0, 4000 / coarsen, 0.1, 5.0, 200 / coarsen).expect("valid grid")
}

pub fn viscosity_grid(coarsen: usize) -> SpaceTimeGrid {
    SpaceTimeGrid::new(1.0, 4000 / coarsen, -5.0, 5.0, 200 / coarsen).expect("valid grid")
}

pub fn hjb_options() -> HjbOptions {
    HjbOptions {
        substeps: Substeps::Auto,
        ..HjbOptions::default()
    }
}
