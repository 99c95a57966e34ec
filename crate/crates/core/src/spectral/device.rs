use serde::{Deserialize, Serialize};

use super::grid::WavelengthGrid;
use super::signal::{DataCube, Spectrum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Spectrometer,
    HsiCamera,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralRange {
    Vnir,
    Swir,
}

/// Minimum dark counts, per channel (spectrometers) or per pixel and band (cameras).
#[derive(Debug, Clone, PartialEq)]
pub enum DarkReference {
    PerChannel(Vec<f64>),
    PerPixel {
        height: usize,
        width: usize,
        values: Vec<f64>,
    },
}

impl DarkReference {
    pub fn values(&self) -> &[f64] {
        match self {
            DarkReference::PerChannel(v) => v,
            DarkReference::PerPixel { values, .. } => values,
        }
    }

    /// Elementwise minimum over a set of capped-aperture spectrometer frames.
    pub fn from_spectrum_frames(frames: &[Spectrum]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InsufficientData("no dark frames supplied".into()))?;
        let mut min = first.values().to_vec();
        for f in &frames[1..] {
            super::grid::ensure_same_grid(first.grid(), f.grid())?;
            for (m, v) in min.iter_mut().zip(f.values()) {
                *m = m.min(*v);
            }
        }
        Ok(DarkReference::PerChannel(min))
    }

    /// Elementwise minimum over a set of capped-lens camera frames.
    pub fn from_cube_frames(frames: &[DataCube]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InsufficientData("no dark frames supplied".into()))?;
        let mut min = first.values().to_vec();
        for f in &frames[1..] {
            first.same_shape(f)?;
            for (m, v) in min.iter_mut().zip(f.values()) {
                *m = m.min(*v);
            }
        }
        Ok(DarkReference::PerPixel {
            height: first.height(),
            width: first.width(),
            values: min,
        })
    }
}

/// Static description of a spectrometer or hyperspectral camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    name: String,
    kind: DeviceKind,
    range: SpectralRange,
    grid: WavelengthGrid,
    saturation: f64,
    base_integration_time: f64,
    frame_rate_hz: Option<f64>,
    dark: Option<DarkReference>,
}

impl DeviceSpec {
    pub fn new(
        name: impl Into<String>,
        kind: DeviceKind,
        range: SpectralRange,
        grid: WavelengthGrid,
        saturation: f64,
        base_integration_time: f64,
    ) -> Result<Self> {
        if !(saturation.is_finite()
            && saturation > 0.0
            && saturation.fract() == 0.0
            && saturation <= u32::MAX as f64)
        {
            return Err(Error::Config(format!(
                "saturation count must be a positive integer up to 2^32-1, got {saturation}"
            )));
        }
        if !(base_integration_time.is_finite() && base_integration_time > 0.0) {
            return Err(Error::Config(format!(
                "base integration time must be positive, got {base_integration_time} ms"
            )));
        }
        Ok(Self {
            name: name.into(),
            kind,
            range,
            grid,
            saturation,
            base_integration_time,
            frame_rate_hz: None,
            dark: None,
        })
    }

    pub fn with_frame_rate(mut self, hz: f64) -> Self {
        self.frame_rate_hz = Some(hz);
        self
    }

    /// Attaches a dark reference after validating its size and range.
    pub fn with_dark(mut self, dark: DarkReference) -> Result<Self> {
        match (&dark, self.kind) {
            (DarkReference::PerChannel(v), _) if v.len() != self.grid.len() => {
                return Err(Error::ShapeMismatch(format!(
                    "dark reference has {} channels, device grid has {}",
                    v.len(),
                    self.grid.len()
                )))
            }
            (
                DarkReference::PerPixel {
                    height,
                    width,
                    values,
                },
                DeviceKind::HsiCamera,
            ) => {
                if values.len() != height * width * self.grid.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "dark cube {height}x{width} has {} values for {} bands",
                        values.len(),
                        self.grid.len()
                    )));
                }
            }
            (DarkReference::PerPixel { .. }, DeviceKind::Spectrometer) => {
                return Err(Error::Config(
                    "spectrometer dark reference must be per channel".into(),
                ))
            }
            _ => {}
        }
        if let Some(bad) = dark
            .values()
            .iter()
            .find(|v| !(**v >= 0.0 && **v <= self.saturation))
        {
            return Err(Error::Config(format!(
                "dark count {bad} outside [0, {}] for device '{}'",
                self.saturation, self.name
            )));
        }
        self.dark = Some(dark);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> DeviceKind {
        self.kind
    }

    pub fn range(&self) -> SpectralRange {
        self.range
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    /// Maximum digital count `D`.
    pub fn saturation(&self) -> f64 {
        self.saturation
    }

    pub fn base_integration_time(&self) -> f64 {
        self.base_integration_time
    }

    pub fn frame_rate_hz(&self) -> Option<f64> {
        self.frame_rate_hz
    }

    pub fn dark_reference(&self) -> Option<&DarkReference> {
        self.dark.as_ref()
    }
}

/// Default devices of the reference rig. Bit depths are not part of the
/// published parameter table; 12-bit cameras and 16-bit spectrometers are assumed.
pub mod presets {
    use super::*;

    pub const CAMERA_SATURATION: f64 = 4095.0;
    pub const SPECTROMETER_SATURATION: f64 = 65535.0;

    /// SWIR snapshot camera band centers (nm).
    pub const SWIR_CAMERA_CENTERS: [f64; 9] = [
        1119.0, 1195.0, 1245.0, 1300.0, 1370.0, 1435.0, 1510.0, 1590.0, 1670.0,
    ];

    pub fn vnir_camera_grid() -> WavelengthGrid {
        WavelengthGrid::linspace(660.0, 900.0, 24).expect("static grid")
    }

    pub fn swir_camera_grid() -> WavelengthGrid {
        WavelengthGrid::new(SWIR_CAMERA_CENTERS.to_vec()).expect("static grid")
    }

    pub fn vnir_spectrometer_grid() -> WavelengthGrid {
        WavelengthGrid::linspace(500.0, 1100.0, 256).expect("static grid")
    }

    pub fn swir_spectrometer_grid() -> WavelengthGrid {
        WavelengthGrid::linspace(950.0, 1700.0, 128).expect("static grid")
    }

    pub fn vnir_camera() -> DeviceSpec {
        DeviceSpec::new(
            "vnir_hsi",
            DeviceKind::HsiCamera,
            SpectralRange::Vnir,
            vnir_camera_grid(),
            CAMERA_SATURATION,
            0.5,
        )
        .expect("static device")
        .with_frame_rate(10.0)
    }

    pub fn swir_camera() -> DeviceSpec {
        DeviceSpec::new(
            "swir_hsi",
            DeviceKind::HsiCamera,
            SpectralRange::Swir,
            swir_camera_grid(),
            CAMERA_SATURATION,
            1.0,
        )
        .expect("static device")
        .with_frame_rate(10.0)
    }

    pub fn vnir_spectrometer() -> DeviceSpec {
        DeviceSpec::new(
            "vnir_spectrometer",
            DeviceKind::Spectrometer,
            SpectralRange::Vnir,
            vnir_spectrometer_grid(),
            SPECTROMETER_SATURATION,
            0.5,
        )
        .expect("static device")
    }

    pub fn swir_spectrometer() -> DeviceSpec {
        DeviceSpec::new(
            "swir_spectrometer",
            DeviceKind::Spectrometer,
            SpectralRange::Swir,
            swir_spectrometer_grid(),
            SPECTROMETER_SATURATION,
            50.0,
        )
        .expect("static device")
    }

    /// Camera and spectrometer pair for one spectral range.
    pub fn pair(range: SpectralRange) -> (DeviceSpec, DeviceSpec) {
        match range {
            SpectralRange::Vnir => (vnir_camera(), vnir_spectrometer()),
            SpectralRange::Swir => (swir_camera(), swir_spectrometer()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Unit;

    #[test]
    fn presets_mirror_rig() {
        assert_eq!(presets::vnir_camera().grid().len(), 24);
        assert_eq!(presets::swir_camera().grid().len(), 9);
        assert_eq!(presets::vnir_spectrometer().grid().len(), 256);
        assert_eq!(presets::swir_spectrometer().grid().len(), 128);
        assert_eq!(presets::vnir_camera().base_integration_time(), 0.5);
        assert_eq!(presets::swir_camera().base_integration_time(), 1.0);
        assert_eq!(presets::vnir_spectrometer().base_integration_time(), 0.5);
        assert_eq!(presets::swir_spectrometer().base_integration_time(), 50.0);
        assert_eq!(presets::vnir_camera().frame_rate_hz(), Some(10.0));
    }

    #[test]
    fn dark_is_channel_minimum() {
        let g = WavelengthGrid::new(vec![500.0, 510.0]).unwrap();
        let frames = vec![
            Spectrum::new(g.clone(), vec![5.0, 9.0], 1.0, Unit::DigitalCounts).unwrap(),
            Spectrum::new(g.clone(), vec![7.0, 3.0], 1.0, Unit::DigitalCounts).unwrap(),
        ];
        let dark = DarkReference::from_spectrum_frames(&frames).unwrap();
        assert_eq!(dark.values(), &[5.0, 3.0]);
        assert!(DarkReference::from_spectrum_frames(&[]).is_err());
    }

    #[test]
    fn dark_validation() {
        let dev = presets::vnir_spectrometer();
        assert!(dev
            .clone()
            .with_dark(DarkReference::PerChannel(vec![0.0; 3]))
            .is_err());
        assert!(dev
            .clone()
            .with_dark(DarkReference::PerChannel(vec![70000.0; 256]))
            .is_err());
        assert!(dev
            .with_dark(DarkReference::PerChannel(vec![100.0; 256]))
            .is_ok());
        assert!(DeviceSpec::new(
            "x",
            DeviceKind::HsiCamera,
            SpectralRange::Vnir,
            presets::vnir_camera_grid(),
            0.0,
            1.0
        )
        .is_err());
        assert!(DeviceSpec::new(
            "x",
            DeviceKind::HsiCamera,
            SpectralRange::Vnir,
            presets::vnir_camera_grid(),
            10.0,
            0.0
        )
        .is_err());
    }
}
