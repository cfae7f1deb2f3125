//! Exact and approximate Wasserstein-1 estimators, geometric k-medians
//! clustering, and small-scale (W)GAN training dynamics, with reproducible
//! experiment protocols comparing learned losses against LP ground truth.

pub mod clustering;
pub mod entropic_ot;
pub mod error;
pub mod gan_lab;
pub mod exact_ot;
pub mod experiments;
pub mod measures;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use rng::RngSeed;
