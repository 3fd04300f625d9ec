//! Simulated annealing as a gradient flow of a penalized entropy on a finite
//! state space: stationary profiles, deterministic flows, jump-process
//! representations, particle samplers and functional-inequality checks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod analysis;
pub mod cli;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod generators;
pub mod metropolis;
pub mod model;
pub mod particles;
pub mod stationary;

pub use entropy::{kappa, EntropyFamily, Variant};
pub use error::{Error, Result};
pub use flow::{integrate_annealed, integrate_homogeneous, rhs, Controls, Schedule, SnapshotGrid, Trajectory};
pub use generators::GeneratorKind;
pub use model::{ring20, Density, EnergyLandscape};
pub use stationary::{solve_eta, StationaryProfile};
