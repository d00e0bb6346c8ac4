//! Atomic frequency combs prepared by piecewise adiabatic passage (PAP) in a
//! Doppler-broadened three-level vapor, and single-photon storage through
//! the resulting comb.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: gas kinematics and the closed-form comb figures of merit.
//! * [`pulses`]: PAP pulse trains, dark state diagnostics, optical-frequency-comb spectra.
//! * [`bloch`]: Λ-system density-matrix integration and velocity combs.
//! * [`comb`]: detuning-domain comb measurement (peaks, widths, envelope fit).
//! * [`memory`]: Raman storage and backward retrieval of a photon envelope.
//! * [`stirapoz`]: STIRAP optimal-zone curves and width relations.
//! * [`config`], [`experiment`], [`io`]: configuration, orchestration and artifacts.

pub mod bloch;
pub mod comb;
pub mod config;
pub mod constants;
mod error;
pub mod experiment;
pub mod io;
pub mod memory;
pub mod model;
pub mod pulses;
pub mod stirapoz;

pub use error::{Error, Result};

/// Multiply an ordinary frequency (Hz) by 2π.
#[inline]
pub fn hz(f: f64) -> f64 {
    std::f64::consts::TAU * f
}

/// Convert an angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / std::f64::consts::TAU
}
