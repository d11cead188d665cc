//! Models and estimators for a spectrally multiplexed atomic-frequency-comb
//! light-matter interface storing time-bin entangled photons.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. It covers:
//!
//! - [`quantum`]: two-qubit states and entanglement metrics,
//! - [`source`]: the double-pulse pair source, analytic and event level,
//! - [`memory`]: the five-channel AFC memory,
//! - [`analyzer`]: interferometer POVMs, detectors and coincidence counting,
//! - [`bell`]: Franson fringes, correlation coefficients and CHSH,
//! - [`tomography`]: maximum-likelihood state reconstruction,
//! - [`pipeline`]: the seeded source → memory → analyzer event chain.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analyzer;
pub mod bell;
pub mod fit;
pub mod linalg;
pub mod memory;
pub mod pipeline;
pub mod quantum;
pub mod rng;
pub mod source;
pub mod tomography;

mod error;

pub use error::Error;
