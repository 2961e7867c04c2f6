//! Couplings between Gaussian regression experiments with known and unknown
//! variance, together with the divergence machinery that bounds them.
//!
//! The crate is organised bottom-up:
//!
//! * [`special`] and [`quadrature`] provide log-gamma, polygamma and adaptive
//!   Gauss–Kronrod integration.
//! * [`wavelet`] and [`fixtures`] hold the Haar cascade, Besov tails and the
//!   catalogue of test functions.
//! * [`samplers`] draws every variate the couplings consume from seeded streams.
//! * [`divergence`] evaluates KL divergences in closed form and by quadrature.
//! * [`experiments`] samples the seven experiments from a [`ModelSpec`].
//! * [`couplings`] maps draws of one experiment onto another.
//! * [`harness`] decomposes divergences term by term, evaluates bounds and runs
//!   rate sweeps.

pub mod couplings;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod harness;
pub mod quadrature;
pub mod samplers;
pub mod special;
pub mod stats;
pub mod wavelet;

pub use error::{Error, Result};

pub use experiments::{ExperimentDraw, Label, ModelConfig, ModelSpec};
pub use samplers::RngStream;
pub use wavelet::HaarLadder;
