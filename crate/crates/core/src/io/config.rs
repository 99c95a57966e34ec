//! TOML configuration: device descriptions and the project file that ties
//! devices, training data and processing options together. Relative paths are
//! resolved against the directory of the file that names them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::envi::read_cube;
use super::spectrum::read_spectrum;
use crate::calibration::CalibrationPolicy;
use crate::error::{Error, Result};
use crate::indices::{PairScoring, NDVI_BANDS, OTSU_BINS, SMC_BANDS};
use crate::spectral::{DarkReference, DeviceKind, DeviceSpec, SpectralRange, WavelengthGrid};
use crate::whiteref::{MlpHyper, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    pub name: String,
    pub kind: DeviceKind,
    pub range: SpectralRange,
    pub saturation: f64,
    pub base_integration_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_rate_hz: Option<f64>,
    /// Explicit band centers; alternative to `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Capped-lens frames: ENVI cubes for cameras, spectrum CSVs for spectrometers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dark_frames: Vec<PathBuf>,
}

impl DeviceFile {
    pub fn from_spec(spec: &DeviceSpec) -> Self {
        Self {
            name: spec.name().to_string(),
            kind: spec.kind(),
            range: spec.range(),
            saturation: spec.saturation(),
            base_integration_time_ms: spec.base_integration_time(),
            frame_rate_hz: spec.frame_rate_hz(),
            wavelengths: Some(spec.grid().centers().to_vec()),
            grid: None,
            dark_frames: Vec::new(),
        }
    }

    fn wavelength_grid(&self) -> Result<WavelengthGrid> {
        match (&self.wavelengths, &self.grid) {
            (Some(w), None) => WavelengthGrid::new(w.clone()),
            (None, Some(g)) => WavelengthGrid::linspace(g.start, g.end, g.count),
            _ => Err(Error::Config(format!(
                "device '{}' needs exactly one of 'wavelengths' or 'grid'",
                self.name
            ))),
        }
    }

    /// Builds the device, taking the elementwise minimum of any dark frames.
    pub fn into_spec(&self, base_dir: &Path) -> Result<DeviceSpec> {
        let mut spec = DeviceSpec::new(
            self.name.clone(),
            self.kind,
            self.range,
            self.wavelength_grid()?,
            self.saturation,
            self.base_integration_time_ms,
        )?;
        if let Some(hz) = self.frame_rate_hz {
            spec = spec.with_frame_rate(hz);
        }
        if self.dark_frames.is_empty() {
            return Ok(spec);
        }
        let paths: Vec<PathBuf> = self
            .dark_frames
            .iter()
            .map(|p| existing(base_dir, p, "dark frame"))
            .collect::<Result<_>>()?;
        let dark = match self.kind {
            DeviceKind::HsiCamera => {
                let frames = paths
                    .iter()
                    .map(|p| read_cube(p))
                    .collect::<Result<Vec<_>>>()?;
                for f in &frames {
                    crate::spectral::grid::ensure_same_grid(spec.grid(), f.grid())?;
                }
                DarkReference::from_cube_frames(&frames)?
            }
            DeviceKind::Spectrometer => {
                let frames = paths
                    .iter()
                    .map(|p| read_spectrum(p))
                    .collect::<Result<Vec<_>>>()?;
                for f in &frames {
                    crate::spectral::grid::ensure_same_grid(spec.grid(), f.grid())?;
                }
                DarkReference::from_spectrum_frames(&frames)?
            }
        };
        spec.with_dark(dark)
    }
}

pub fn load_device(path: &Path) -> Result<DeviceSpec> {
    let file: DeviceFile = read_toml(path)?;
    file.into_spec(parent_dir(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub model: ModelKind,
    pub augment: bool,
    pub mlp: MlpHyper,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Mlr,
            augment: true,
            mlp: MlpHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexSection {
    pub ndvi_pair: (f64, f64),
    pub smc_pair: (f64, f64),
    pub otsu_bins: usize,
    pub pair_scoring: PairScoring,
}

impl Default for IndexSection {
    fn default() -> Self {
        Self {
            ndvi_pair: NDVI_BANDS,
            smc_pair: SMC_BANDS,
            otsu_bins: OTSU_BINS,
            pair_scoring: PairScoring::MeanSpectrum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub seed: u64,
    pub camera: PathBuf,
    pub spectrometer: PathBuf,
    /// Index of white-reference captures (see [`read_sample_index`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub calibration: CalibrationPolicy,
    #[serde(default)]
    pub indices: IndexSection,
}

/// A project file with its paths resolved and devices loaded.
#[derive(Debug, Clone)]
pub struct Project {
    pub config: ProjectConfig,
    pub root: PathBuf,
    pub camera: DeviceSpec,
    pub spectrometer: DeviceSpec,
}

impl Project {
    pub fn load(path: &Path) -> Result<Self> {
        let config: ProjectConfig = read_toml(path)?;
        let root = parent_dir(path).to_path_buf();
        config.calibration.validate()?;
        if config.indices.otsu_bins < 2 {
            return Err(Error::Config("indices.otsu_bins must be at least 2".into()));
        }
        let camera = load_device(&existing(&root, &config.camera, "camera")?)?;
        let spectrometer = load_device(&existing(&root, &config.spectrometer, "spectrometer")?)?;
        if camera.kind() != DeviceKind::HsiCamera || spectrometer.kind() != DeviceKind::Spectrometer
        {
            return Err(Error::Config(
                "'camera' must be an hsi_camera and 'spectrometer' a spectrometer".into(),
            ));
        }
        if camera.range() != spectrometer.range() {
            return Err(Error::Config(
                "camera and spectrometer cover different spectral ranges".into(),
            ));
        }
        if let Some(s) = &config.samples {
            existing(&root, s, "samples")?;
        }
        Ok(Self {
            config,
            root,
            camera,
            spectrometer,
        })
    }

    pub fn samples_path(&self) -> Option<PathBuf> {
        self.config.samples.as_ref().map(|p| self.root.join(p))
    }
}

/// One white-reference capture: a raw camera cube and the spectrometer reading
/// taken at the same time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    pub timestamp: f64,
    pub cube: PathBuf,
    pub spectrum: PathBuf,
}

/// Reads a `timestamp,cube,spectrum` CSV; paths are relative to the index file.
pub fn read_sample_index(path: &Path) -> Result<Vec<SampleEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = parent_dir(path);
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    if lines.next().map(|l| l.replace(' ', "")) != Some("timestamp,cube,spectrum".into()) {
        return Err(Error::format(
            path,
            "expected header 'timestamp,cube,spectrum'",
        ));
    }
    let mut out = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let [t, cube, spec] = cols[..] else {
            return Err(Error::format(
                path,
                format!("expected three columns in '{line}'"),
            ));
        };
        let timestamp = t
            .parse()
            .map_err(|_| Error::format(path, format!("bad timestamp '{t}'")))?;
        out.push(SampleEntry {
            timestamp,
            cube: base.join(cube),
            spectrum: base.join(spec),
        });
    }
    if out.is_empty() {
        return Err(Error::format(path, "sample index lists no captures"));
    }
    Ok(out)
}

pub fn write_sample_index(path: &Path, entries: &[(f64, &str, &str)]) -> Result<()> {
    let mut text = String::from("timestamp,cube,spectrum\n");
    for (t, c, s) in entries {
        text.push_str(&format!("{t},{c},{s}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn existing(base: &Path, p: &Path, what: &str) -> Result<PathBuf> {
    let full = base.join(p);
    if full.exists() {
        Ok(full)
    } else {
        Err(Error::Config(format!(
            "{what} path '{}' does not exist",
            full.display()
        )))
    }
}
