//! Numerical laboratory for the toroidal reduction of the vacuum Einstein
//! equations: deterministic solutions, pulse perturbations, colored Gaussian
//! noise, stochastic averaging and probabilistic growth bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod dynamics;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod geometry;
pub mod numeric;
pub mod pulse;
pub mod randfield;
pub mod stochavg;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{
    CrossSum, GeometryObservables, KasnerExponents, ModuliState, OperatorCoefficients, Radii,
    TimeGrid,
};
