//! Conditional neural field reduced-order model for the 1D viscous Burgers
//! equation: a hypernetwork-conditioned FourierNet decoder driven by
//! parametric neural-ODE latent dynamics, with initial and boundary data
//! imposed exactly through a distance function.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bank;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod geometry;
pub mod model;
pub mod networks;
pub mod oracle;
pub mod report;
pub mod training;

pub use error::{Error, Result};
