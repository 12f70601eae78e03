#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod config;
pub mod control;
pub mod error;
pub mod hamiltonian;
mod hull;
pub mod io;
pub mod scalar;
pub mod solver;
pub mod stratification;
pub mod trajectory;
pub mod verification;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations of the generic types.
pub type Stratification = stratification::Stratification<f64>;
pub type ControlProblem = control::ControlProblem<f64>;
pub type ControlSet = control::ControlSet<f64>;
pub type StratifiedGrid = solver::StratifiedGrid<f64>;
pub type ValueGrid = solver::ValueGrid<f64>;
pub type Trajectory = trajectory::Trajectory<f64>;
