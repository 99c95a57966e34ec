//! Spectral domain types and the deterministic signal conditioning steps:
//! count normalization, dark subtraction, wavelength alignment and
//! integration-time scaling.

pub mod device;
pub mod grid;
pub mod signal;

pub use device::{presets, DarkReference, DeviceKind, DeviceSpec, SpectralRange};
pub use grid::{build_band_mapping, BandMapping, WavelengthGrid};
pub use signal::{
    downsample_spectrum, integration_scale, normalize_counts, scale_values, stack_cubes,
    subtract_dark, DataCube, Measurement, Spectrum, Unit,
};
