//! Robust Kalman filtering for time series contaminated by impulse-noise
//! outliers: observations are either Gaussian-noised measurements of a
//! hidden linear-Gaussian state or draws from an independent outlier
//! distribution, with a Bernoulli indicator selecting the branch.
//!
//! Conditioning on an indicator path makes the model exactly linear-Gaussian,
//! so the posterior over the hidden state is a finite Gaussian mixture with
//! one component per path. The [`filter`] module tracks that mixture exactly
//! or under beam truncation, classifies outliers, and smooths backwards;
//! [`classic`] provides the plain Kalman filter/smoother baseline; [`wow`]
//! builds the Ornstein–Uhlenbeck weight model on irregular timestamps;
//! [`em`] calibrates the free parameters with a closed-form EM; [`sim`] and
//! [`bench`] generate synthetic series and run the benchmark sweeps.
//!
//! The crate is `no_std`-compatible (with `alloc`): disable default features
//! and enable `libm`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod classic;
pub mod em;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod numeric;
pub mod sim;
pub mod wow;

pub use error::{Error, Result};
pub use gaussian::{
    kalman_propagate, kalman_update, log_gaussian_pdf, predictive_obs_params, GaussianBelief,
    OutlierDensity, StepModel,
};

use nalgebra::SVector;

/// Wraps a scalar series as 1-dimensional observation vectors.
pub fn scalar_obs(ys: &[f64]) -> alloc::vec::Vec<SVector<f64, 1>> {
    ys.iter().map(|&y| SVector::<f64, 1>::new(y)).collect()
}
