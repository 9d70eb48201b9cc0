//! Modeling toolkit for single-radio spatial multiplexing over a three-port
//! reconfigurable radiator.
//!
//! The crate is organized around the signal path of such a transmitter:
//!
//! * [`network`] — scattering/impedance algebra for the three-port radiator and
//!   its terminated input reflection,
//! * [`loads`] — synthesis of the reactive load pairs that steer each symbol
//!   combination onto the far-field basis,
//! * [`farfield`] — far-field pattern storage, quadrature, basis construction
//!   and reconstruction-error maps,
//! * [`channel`] — geometric and stochastic 2×2 channel synthesis plus ensemble
//!   statistics (filtering, normalization, correlation, ellipticity),
//! * [`baseband`] — frame construction, pulse shaping, synchronization, channel
//!   estimation, equalization and the end-to-end link simulator,
//! * [`evaluation`] — finite-alphabet mutual information, ergodic capacity and
//!   symbol-error-rate sweeps over channel ensembles.

pub mod baseband;
pub mod channel;
pub mod evaluation;
pub mod farfield;
pub mod loads;
pub mod network;
pub mod util;

/// Shorthand used throughout the crate for double-precision complex samples.
pub type C64 = num_complex::Complex64;
