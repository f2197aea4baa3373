//! Hybrid analog/digital beamforming (HBF) for millimeter-wave MIMO links.
//!
//! The library designs transmit precoders and receive combiners that factor
//! into a frequency-flat analog part (phase shifters, every entry of unit
//! modulus) and small per-subcarrier digital parts, by minimizing the modified
//! mean square error of the link. It covers both narrowband and OFDM
//! (broadband) scenarios and both the plain sum-MSE criterion and a weighted
//! variant that targets spectral efficiency.
//!
//! Solvers for the analog part:
//!
//! - [`driver::Algorithm::Mo`] — Riemannian gradient descent on the product
//!   manifold of unit-modulus matrices, with Armijo backtracking.
//! - [`driver::Algorithm::Gevd`] — column-by-column updates from the dominant
//!   generalized eigenvector of a Hermitian pencil (narrowband only).
//! - [`driver::Algorithm::EvdLb`] / [`driver::Algorithm::EvdUb`] —
//!   eigendecomposition of bound surrogates of the broadband objective.
//! - [`driver::Algorithm::Omp`] — greedy column selection from a dictionary
//!   of transmit array response vectors.
//! - [`driver::Algorithm::FullDigital`] — the unconstrained per-subcarrier
//!   MMSE transceiver, used as oracle, benchmark and initializer.
//!
//! The [`harness`] module runs Monte Carlo link simulations (QPSK, seeded
//! channels) producing MSE/BER/spectral-efficiency sweeps as CSV, and the
//! [`cli`] module exposes them as the `hbf` binary. See the crate `examples/`
//! directory for one runnable example per capability.

pub mod channel;
pub mod cli;
pub mod driver;
pub mod error;
pub mod fixture;
pub mod harness;
pub mod linalg;
pub mod manifold;
pub mod mmse;
pub mod plot;
pub mod rng;
pub mod spectral;

pub use error::{HbfError, Result};
pub use linalg::{CMat, CVec, C64};
