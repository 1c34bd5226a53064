//! Discretization, continuation and limit analysis for the stationary
//! two-species cross-diffusion competition system on an interval.

pub mod banded;
pub mod classifier;
pub mod continuation;
pub mod eigen;
pub mod grid;
pub mod limits;
pub mod model;
pub mod newton;
pub mod spectrum;
