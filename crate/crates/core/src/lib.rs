//! Inference for partially identified moment models through minimax test
//! statistics `T_n = r_n inf_θ sup_t v_n(θ, t)`.
//!
//! The crate is organised around a handful of layers:
//!
//! * [`space`], [`family`], [`moment`], [`data`] and [`tuning`] hold the
//!   domain types: parameter spaces, test-function families, moment models,
//!   datasets and the rate rules for the bootstrap tuning sequences.
//! * [`process`] evaluates `v_n`, the moment averages and the multiplier
//!   bootstrap process.
//! * [`solver`] computes the inner supremum and the outer infimum.
//! * [`geometry`] provides cone projections, polar duality, tangent and
//!   normal cones and the distance-based bounds built on them.
//! * [`derivative`] estimates Jacobians and the derivative-norm penalty.
//! * [`bootstrap`] turns all of the above into critical values and tests.
//! * [`stats`] and [`montecarlo`] support simulation experiments.

pub mod bootstrap;
pub mod data;
pub mod derivative;
pub mod error;
pub mod family;
pub mod geometry;
pub mod linalg;
pub mod moment;
pub mod montecarlo;
pub mod optim;
pub mod process;
pub mod report;
pub mod solver;
pub mod space;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
