//! Density estimation for data with values missing at random (MAR).
//!
//! The crate fits a Dirichlet-process mixture of Gaussians with one shared
//! covariance to partially observed rows, using only the observed margin of
//! each row, and then draws fresh complete samples from the fitted law.
//! Around the sampler it provides a MAR mechanism simulator, Monte-Carlo
//! divergences between Gaussian mixtures (including pattern-weighted
//! versions of KL and Hellinger), the energy distance, and a scenario harness.

pub mod config;
pub mod data;
pub mod divergences;
pub mod gaussian;
pub mod harness;
pub mod mdm;
pub mod predictive;
pub mod rng;
pub mod sampler;
