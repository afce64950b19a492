//! Simulation and analysis toolkit for rectified quantum-heterodyne (Qdyne)
//! detection with a single NV-center sensor and a nuclear memory qubit.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function
//! of its inputs plus an explicit, seedable random stream; IO, threading and
//! the command-line front end live in the `rectdyne` companion crate.
//!
//! Module map:
//!
//! - [`signal_model`]: target RF signal, aliasing, expected photon rate.
//! - [`physics`]: accumulated phase, readout probabilities, DD lineshape, J0/J1.
//! - [`protocols`]: Monte Carlo trace generation for Qdyne, ex situ and in situ rectification.
//! - [`fidelity`]: rectification fidelity integrals and the reduction factor.
//! - [`spectral`]: FFT, coherent/incoherent averaging, PSD and SNR estimation.
//! - [`analysis`]: SNR predictions, power-law and lineshape fits, protocol comparison.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod analysis;
pub mod constants;
mod error;
pub mod fidelity;
pub mod numeric;
pub mod physics;
pub mod protocols;
pub mod signal_model;
pub mod spectral;

pub use error::{Error, Result};
