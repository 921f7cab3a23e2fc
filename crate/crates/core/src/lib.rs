//! Forward model, photon-counting simulation and reconstruction for
//! interaction-free, single-pixel quantum imaging with undetected photons.
//!
//! An idler photon from a double-pass SPDC source is routed through a
//! single-photon Michelson interferometer (the interaction-free measurement
//! module) before it can return to the crystal. Whether it returns, and
//! with what amplitude, is imprinted on the first-order interference of the
//! signal photon. The crate computes exact expected signal count rates for
//! any phase setting, samples photon-counting noise, and rebuilds images
//! either pixelwise (array detector) or from Hadamard-mask single-pixel
//! measurements.
//!
//! Modules:
//!
//! - [`interferometer`]: complex amplitudes and expected count rates
//! - [`calibration`]: least-squares fit of imperfection factors to visibilities
//! - [`scene`]: object and emission maps, PGM input/output, glyph plates
//! - [`optics`]: edge-spread resolution model, blur, SPDC mode function
//! - [`spi`]: Hadamard masks, four-setting acquisition, reconstruction
//! - [`sensing`]: counting statistics, two-class fit, threshold and confidence
//! - [`experiment`]: end-to-end runs that tie the above together

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod experiment;
pub mod interferometer;
pub mod optics;
pub mod rng;
pub mod scene;
pub mod sensing;
pub mod spi;

pub use error::{Error, Result};
