//! Joint maximum-likelihood estimation of carrier frequency offset, sampling
//! frequency offset, symbol timing error and a sparse MIMO channel for a
//! single-user MIMO-OFDM link.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] builds the pilot-aided measurement matrices, draws sparse
//!   channels and synthesises received samples.
//! * [`recovery`] holds the channel estimators: subspace pursuit and a
//!   rank-revealing minimum-norm least-squares solver.
//! * [`estimator`] runs the two-stage grid search (MLSP with subspace pursuit,
//!   MLLS with least squares).
//! * [`evaluation`] is the Monte Carlo engine: MSE, probability of timing
//!   failure, a numerical Cramér-Rao bound and complexity timing.
//! * [`config`] and [`report`] back the `mlsync` command-line tool.

pub mod config;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod model;
pub mod recovery;
pub mod report;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
