//! Bayes-optimal inference for the dual-view rank-one spiked matrix model.
//!
//! Two data matrices `X` (n_X × d) and `Y` (n_Y × d) share the sample axis;
//! their column factors are correlated Gaussians. The crate provides AMP and
//! its linearisation, state evolution, the Bethe free energy, threshold
//! calculators and PLS/CCA/PCA baselines.

pub mod amp;
pub mod baselines;
pub mod denoise;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod linamp;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod scores;
pub mod se;
pub mod thresholds;

pub use error::{Error, Result};
