use serde::{Deserialize, Serialize};

use super::device::{DarkReference, DeviceSpec};
use super::grid::{ensure_same_grid, BandMapping, WavelengthGrid};
use crate::error::{Error, Result};

/// Physical meaning of the values held by a spectrum or cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    DigitalCounts,
    Normalized,
    Reflectance,
}

impl Unit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::DigitalCounts => "digital_counts",
            Unit::Normalized => "normalized",
            Unit::Reflectance => "reflectance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "digital_counts" => Some(Unit::DigitalCounts),
            "normalized" => Some(Unit::Normalized),
            "reflectance" => Some(Unit::Reflectance),
            _ => None,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "integration time must be positive, got {t} ms"
        )))
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        None => Ok(()),
        Some(i) => Err(Error::Domain(format!(
            "value {} at position {i} is not a non-negative finite number",
            values[i]
        ))),
    }
}

/// A point-spectrometer reading.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: WavelengthGrid,
    values: Vec<f64>,
    integration_time: f64,
    unit: Unit,
}

impl Spectrum {
    pub fn new(
        grid: WavelengthGrid,
        values: Vec<f64>,
        integration_time: f64,
        unit: Unit,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "spectrum has {} values for {} wavelengths",
                values.len(),
                grid.len()
            )));
        }
        check_values(&values)?;
        check_time(integration_time)?;
        Ok(Self {
            grid,
            values,
            integration_time,
            unit,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integration_time(&self) -> f64 {
        self.integration_time
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn set_integration_time(&mut self, t: f64) {
        self.integration_time = t;
    }
}

/// An `H x W x bands` hyperspectral datacube stored band-interleaved-by-pixel.
///
/// `values[(row * width + col) * bands + band]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    height: usize,
    width: usize,
    grid: WavelengthGrid,
    values: Vec<f64>,
    integration_time: f64,
    unit: Unit,
}

impl DataCube {
    pub fn new(
        height: usize,
        width: usize,
        grid: WavelengthGrid,
        values: Vec<f64>,
        integration_time: f64,
        unit: Unit,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "cube dimensions {height}x{width} must be non-zero"
            )));
        }
        let expected = height * width * grid.len();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "cube {height}x{width}x{} needs {expected} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_values(&values)?;
        check_time(integration_time)?;
        Ok(Self {
            height,
            width,
            grid,
            values,
            integration_time,
            unit,
        })
    }

    /// Cube whose every pixel is `value`.
    pub fn filled(
        height: usize,
        width: usize,
        grid: WavelengthGrid,
        value: f64,
        integration_time: f64,
        unit: Unit,
    ) -> Result<Self> {
        let n = height * width * grid.len();
        Self::new(height, width, grid, vec![value; n], integration_time, unit)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.grid.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integration_time(&self) -> f64 {
        self.integration_time
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let b = self.bands();
        let start = (row * self.width + col) * b;
        &self.values[start..start + b]
    }

    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.values[(row * self.width + col) * self.bands() + band]
    }

    /// Iterator over per-pixel spectra in row-major order.
    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.bands())
    }

    /// One band as a row-major `H x W` plane.
    pub fn band_plane(&self, band: usize) -> Vec<f64> {
        self.pixels().map(|px| px[band]).collect()
    }

    pub(crate) fn set_integration_time(&mut self, t: f64) {
        self.integration_time = t;
    }

    pub(crate) fn with_values(&self, values: Vec<f64>, unit: Unit) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            height: self.height,
            width: self.width,
            grid: self.grid.clone(),
            values,
            integration_time: self.integration_time,
            unit,
        }
    }

    pub(crate) fn same_shape(&self, other: &DataCube) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch(format!(
                "cube {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        ensure_same_grid(&self.grid, &other.grid)
    }
}

/// Values on a wavelength grid that can be conditioned against a device.
pub trait Measurement: Sized {
    fn grid(&self) -> &WavelengthGrid;
    fn values(&self) -> &[f64];
    fn unit(&self) -> Unit;
    fn replace_values(&self, values: Vec<f64>, unit: Unit) -> Self;
    /// Dark level per stored value, in raw counts.
    fn dark_counts<'a>(&self, dark: &'a DarkReference) -> Result<std::borrow::Cow<'a, [f64]>>;
}

impl Measurement for Spectrum {
    fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn unit(&self) -> Unit {
        self.unit
    }

    fn replace_values(&self, values: Vec<f64>, unit: Unit) -> Self {
        Spectrum {
            grid: self.grid.clone(),
            values,
            integration_time: self.integration_time,
            unit,
        }
    }

    fn dark_counts<'a>(&self, dark: &'a DarkReference) -> Result<std::borrow::Cow<'a, [f64]>> {
        match dark {
            DarkReference::PerChannel(v) => Ok(std::borrow::Cow::Borrowed(v)),
            DarkReference::PerPixel { .. } => Err(Error::Config(
                "spectrum conditioning needs a per-channel dark reference".into(),
            )),
        }
    }
}

impl Measurement for DataCube {
    fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn unit(&self) -> Unit {
        self.unit
    }

    fn replace_values(&self, values: Vec<f64>, unit: Unit) -> Self {
        self.with_values(values, unit)
    }

    fn dark_counts<'a>(&self, dark: &'a DarkReference) -> Result<std::borrow::Cow<'a, [f64]>> {
        match dark {
            DarkReference::PerPixel {
                height,
                width,
                values,
            } => {
                if *height != self.height || *width != self.width {
                    return Err(Error::ShapeMismatch(format!(
                        "dark cube {height}x{width} vs data cube {}x{}",
                        self.height, self.width
                    )));
                }
                Ok(std::borrow::Cow::Borrowed(values))
            }
            DarkReference::PerChannel(v) => {
                // broadcast a per-band dark across every pixel
                let mut out = Vec::with_capacity(self.values.len());
                for _ in 0..self.pixel_count() {
                    out.extend_from_slice(v);
                }
                Ok(std::borrow::Cow::Owned(out))
            }
        }
    }
}

const MAX_REPORTED_POSITIONS: usize = 16;

/// Divides raw counts by the device saturation count.
pub fn normalize_counts<M: Measurement>(raw: &M, device: &DeviceSpec) -> Result<M> {
    if raw.unit() != Unit::DigitalCounts {
        return Err(Error::Unit {
            expected: Unit::DigitalCounts.as_str().into(),
            found: raw.unit().as_str().into(),
        });
    }
    ensure_same_grid(device.grid(), raw.grid())?;
    let d = device.saturation();
    let over: Vec<usize> = raw
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > d)
        .map(|(i, _)| i)
        .collect();
    if !over.is_empty() {
        return Err(Error::Saturation {
            saturation: d,
            count: over.len(),
            positions: over.into_iter().take(MAX_REPORTED_POSITIONS).collect(),
        });
    }
    Ok(raw.replace_values(
        raw.values().iter().map(|v| v / d).collect(),
        Unit::Normalized,
    ))
}

/// `max(0, x - dark / D)` elementwise on normalized data.
pub fn subtract_dark<M: Measurement>(norm: &M, device: &DeviceSpec) -> Result<M> {
    if norm.unit() != Unit::Normalized {
        return Err(Error::Unit {
            expected: Unit::Normalized.as_str().into(),
            found: norm.unit().as_str().into(),
        });
    }
    ensure_same_grid(device.grid(), norm.grid())?;
    let dark = device.dark_reference().ok_or_else(|| {
        Error::Config(format!("device '{}' has no dark reference", device.name()))
    })?;
    let dark = norm.dark_counts(dark)?;
    let d = device.saturation();
    let values = norm
        .values()
        .iter()
        .zip(dark.iter())
        .map(|(x, k)| (x - k / d).max(0.0))
        .collect();
    Ok(norm.replace_values(values, Unit::Normalized))
}

/// Gathers the mapped channels of a spectrometer reading onto the calibration grid.
pub fn downsample_spectrum(s: &Spectrum, mapping: &BandMapping) -> Result<Spectrum> {
    ensure_same_grid(mapping.source_grid(), &s.grid)?;
    let grid = WavelengthGrid::new(mapping.calibration_wavelengths()).map_err(|_| {
        Error::InvalidGrid(
            "source grid too coarse: two target bands share one source channel".into(),
        )
    })?;
    let values = mapping.indices().iter().map(|&i| s.values[i]).collect();
    Ok(Spectrum {
        grid,
        values,
        integration_time: s.integration_time,
        unit: s.unit,
    })
}

/// Ratio `t_base / t_new` that rescales counts to the base exposure.
pub fn integration_scale(t_base: f64, t_new: f64) -> Result<f64> {
    check_time(t_base)?;
    check_time(t_new)?;
    Ok(t_base / t_new)
}

/// Multiplies every value by `factor`.
pub fn scale_values<M: Measurement>(m: &M, factor: f64) -> M {
    m.replace_values(m.values().iter().map(|v| v * factor).collect(), m.unit())
}

/// Concatenates two co-registered cubes along the band axis, ordered by wavelength.
pub fn stack_cubes(a: &DataCube, b: &DataCube) -> Result<DataCube> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::ShapeMismatch(format!(
            "cannot stack {}x{} with {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    if a.unit != b.unit {
        return Err(Error::Unit {
            expected: a.unit.as_str().into(),
            found: b.unit.as_str().into(),
        });
    }
    if a.integration_time != b.integration_time {
        log::debug!(
            "stacking cubes with different integration times ({} vs {} ms); keeping the first",
            a.integration_time,
            b.integration_time
        );
    }
    let (lo, hi) = if a.grid.min() <= b.grid.min() {
        (a, b)
    } else {
        (b, a)
    };
    if lo.grid.max() >= hi.grid.min() {
        return Err(Error::InvalidGrid(format!(
            "wavelength ranges overlap: [{}, {}] and [{}, {}]",
            lo.grid.min(),
            lo.grid.max(),
            hi.grid.min(),
            hi.grid.max()
        )));
    }
    let mut centers = lo.grid.centers().to_vec();
    centers.extend_from_slice(hi.grid.centers());
    let grid = WavelengthGrid::new(centers)?;
    let mut values = Vec::with_capacity(a.values.len() + b.values.len());
    for (pl, ph) in lo.pixels().zip(hi.pixels()) {
        values.extend_from_slice(pl);
        values.extend_from_slice(ph);
    }
    DataCube::new(a.height, a.width, grid, values, a.integration_time, a.unit)
}
