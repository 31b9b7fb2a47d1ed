//! Simulation and global-asymptotics analysis for planar cooperative systems
//! with distributed, possibly time-varying delays.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod functions;
pub mod integrator;
pub mod kernels;
pub mod pipeline;
pub mod presets;

pub use error::{Error, Result, Verdict};
