//! Model, metrics and tuning core for a cascaded ball-screw feed drive.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and parallel evaluation live in the `servotune` companion crate.
//!
//! Layout follows the data flow of one tuning run:
//! [`plant`] builds the electromechanical model, [`refgen`] the reference
//! trajectory, [`simloop`] closes the three control loops around the plant,
//! [`metrics`] condenses a trace into a scalar cost, and [`tuner`] drives a
//! [`gpr`] surrogate through a gain grid. [`baselines`] holds the classical
//! tuning rules the Bayesian tuner is compared against.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod error;
pub mod gpr;
pub mod linalg;
pub mod metrics;
pub mod nelder_mead;
pub mod oracle;
pub mod plant;
pub mod poly;
pub mod presets;
pub mod refgen;
pub mod simloop;
pub mod tuner;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;
