//! Numerical laboratory for recursive generative retraining under pluralistic
//! Bradley–Terry curation.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: grid distributions, reward fields, preference mixtures and
//!   ε-optimal basin structure.
//! * [`curation`]: finite-K Bradley–Terry weights (convolution, quadrature and
//!   Monte-Carlo), the infinite-K exponential tilt and the per-draw sampler.
//! * [`dynamics`]: one-step updates on exact grid densities and trajectories.
//! * [`analysis`]: leakage intervals, outside domination, decay fits, variance
//!   decomposition, expected-reward limits, Nash bargaining and the finite-K
//!   concentration study.
//! * [`gmm`]: the sample-based loop with a Gaussian-mixture generator refit by EM.

pub mod analysis;
pub mod curation;
pub mod dynamics;
pub mod error;
pub mod gmm;
pub mod model;
mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use model::{BasinAnalysis, Grid, GridDistribution, PreferenceMixture, RewardField};
