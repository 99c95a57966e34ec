//! Target-free reflectance calibration for hyperspectral cameras.
//!
//! A point spectrometer looking at a white tile gives a continuous estimate of
//! the illumination. Per-pixel models learned offline map that reading to the
//! white-reference response of each camera pixel, which then serves as the
//! denominator of the usual dark/white reflectance ratio. Terrain products
//! (vegetation masks, a soil-moisture index) are computed on the result.

pub mod calibration;
pub mod error;
pub mod indices;
pub mod io;
pub mod spectral;
pub mod synth;
pub mod whiteref;

pub use error::{Error, Result};
