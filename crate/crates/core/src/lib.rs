//! Rare-event classification toolkit.
//!
//! Modules follow the modeling pipeline: [`dataset`] loading and synthesis,
//! [`preprocess`] scaling and encoding, the classifiers in [`linear`],
//! [`trees`] and [`neural`], autoencoder scoring in [`anomaly`], cross-validated
//! tuning in [`tune`] and evaluation in [`eval`].

pub mod anomaly;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod linear;
pub mod neural;
mod linalg;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod trees;
pub mod tune;
pub mod stats;

pub use error::{Error, Result};
