//! Grid discretization and minimization of the logarithmic-energy rate
//! functionals.

pub mod angelesco;
pub mod grid;
pub mod kernel;
mod qp;
pub mod solver;

pub use angelesco::{minimize_angelesco, minimize_angelesco_kernel, AngelescoKernel};
pub use grid::{truncate_support, Grid, GridMeasure};
pub use kernel::{assemble_kernel, InteractionKernel};
pub use solver::{
    constrained_minimize, directional_derivatives, discretize_cdf, duality_gap, energy, minimize,
    minimize_with, point_mass_energy, RateReport, SolverOptions, DEFAULT_TOLERANCE,
};
