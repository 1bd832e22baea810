//! Simulation toolkit for early-stopped gradient descent on overparameterized
//! logistic regression under Gaussian design.
//!
//! * [`data_model`] builds covariance spectra, true parameters and samples.
//! * [`risk`] evaluates population risk, zero-one error and calibration error.
//! * [`gd`] runs gradient descent with oracle stopping rules.
//! * [`regpath`] solves the l2-regularized path and pairs it with GD iterates.
//! * [`margin`] decides separability and solves the max-margin dual.
//! * [`experiments`] wires the above into reproducible experiments.

pub mod data_model;
pub mod error;
pub mod experiments;
pub mod loss;
pub mod margin;
pub mod gd;
pub mod regpath;
pub mod risk;

pub use error::{Error, Result};
