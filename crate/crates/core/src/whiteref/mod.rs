//! Per-pixel white-reference models.
//!
//! Each camera pixel gets its own mapping from the (downsampled, conditioned)
//! spectrometer reading to that pixel's white-reference response. Two model
//! families are provided: an affine least-squares map and a small ReLU
//! perceptron trained on a combined MSE + spectral-angle objective.

pub mod bank;
pub mod eval;
pub mod loss;
pub mod mlp;
pub mod mlr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::{DataCube, Spectrum, Unit};

pub use bank::{ModelKind, PixelModelBank, TrainingMeta};
pub use eval::{evaluate, MetricSummary, ReconstructionReport};
pub use loss::{loss_mse, loss_sam, spectral_angle, SpectralAngle};
pub use mlp::{fit_mlp, EarlyStopping, Mlp, MlpHyper};
pub use mlr::{fit_mlr, RIDGE_LAMBDA};

/// One time-synchronized training record: a conditioned spectrometer vector on
/// the calibration grid and the conditioned white-reference cube it explains.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    spectrometer: Spectrum,
    cube: DataCube,
    timestamp: f64,
}

impl CalibrationSample {
    pub fn new(spectrometer: Spectrum, cube: DataCube, timestamp: f64) -> Result<Self> {
        if spectrometer.len() != cube.bands() {
            return Err(Error::ShapeMismatch(format!(
                "spectrometer has {} channels, cube has {} bands",
                spectrometer.len(),
                cube.bands()
            )));
        }
        for (what, unit) in [("spectrometer", spectrometer.unit()), ("cube", cube.unit())] {
            if unit != Unit::Normalized {
                return Err(Error::Unit {
                    expected: format!("{} for {what}", Unit::Normalized.as_str()),
                    found: unit.as_str().into(),
                });
            }
        }
        Ok(Self {
            spectrometer,
            cube,
            timestamp,
        })
    }

    pub fn spectrometer(&self) -> &Spectrum {
        &self.spectrometer
    }

    pub fn cube(&self) -> &DataCube {
        &self.cube
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn bands(&self) -> usize {
        self.cube.bands()
    }
}

pub const AUGMENT_REPLICAS: usize = 3;
pub const AUGMENT_SCALE: f64 = 0.1;
pub const AUGMENT_ZERO_PROBABILITY: f64 = 0.1;

/// Augmentation knobs; [`Default`] gives the standard protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub replicas: usize,
    pub max_scale: f64,
    pub zero_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            replicas: AUGMENT_REPLICAS,
            max_scale: AUGMENT_SCALE,
            zero_probability: AUGMENT_ZERO_PROBABILITY,
        }
    }
}

/// Replicates each sample three times with matched random gain and channel dropout.
pub fn augment(samples: &[CalibrationSample], seed: u64) -> Result<Vec<CalibrationSample>> {
    augment_with(samples, seed, AugmentConfig::default())
}

pub fn augment_with(
    samples: &[CalibrationSample],
    seed: u64,
    cfg: AugmentConfig,
) -> Result<Vec<CalibrationSample>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "cannot augment an empty sample set".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples.len() * cfg.replicas);
    for sample in samples {
        let bands = sample.bands();
        for _ in 0..cfg.replicas {
            let gain = 1.0 + rng.random_range(-cfg.max_scale..=cfg.max_scale);
            let dropped: Vec<bool> = (0..bands)
                .map(|_| rng.random_bool(cfg.zero_probability))
                .collect();

            let spec: Vec<f64> = sample
                .spectrometer
                .values()
                .iter()
                .zip(&dropped)
                .map(|(v, &z)| if z { 0.0 } else { (v * gain).max(0.0) })
                .collect();
            let mut cube = Vec::with_capacity(sample.cube.values().len());
            for px in sample.cube.pixels() {
                cube.extend(
                    px.iter()
                        .zip(&dropped)
                        .map(|(v, &z)| if z { 0.0 } else { (v * gain).max(0.0) }),
                );
            }
            out.push(CalibrationSample {
                spectrometer: Spectrum::new(
                    sample.spectrometer.grid().clone(),
                    spec,
                    sample.spectrometer.integration_time(),
                    Unit::Normalized,
                )?,
                cube: sample.cube.with_values(cube, Unit::Normalized),
                timestamp: sample.timestamp,
            });
        }
    }
    Ok(out)
}

/// Shuffled 80/10/10 partition: `floor(0.8 n)`, `floor(0.1 n)`, remainder.
pub fn split<T>(items: Vec<T>, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let n = items.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 samples to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_val = n / 10;

    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<T> {
        idx.iter()
            .map(|&i| slots[i].take().expect("index used once"))
            .collect()
    };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok((train, val, test))
}

/// Deterministic per-pixel seed derived from a global seed.
pub fn pixel_seed(global: u64, row: usize, col: usize) -> u64 {
    // splitmix64 finalizer over the packed coordinates
    let mut z = ((row as u64) << 32 | col as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    global ^ (z ^ (z >> 31))
}

/// Training data rearranged for per-pixel fitting: a shared input matrix and
/// one target matrix per pixel, both row-major `n x bands`.
pub(crate) struct PixelDataset {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub n: usize,
    pub inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl PixelDataset {
    pub fn from_samples(samples: &[CalibrationSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InsufficientData("no training samples".into()))?;
        let (height, width, bands) = (first.cube.height(), first.cube.width(), first.bands());
        let n = samples.len();
        let pixels = height * width;
        let mut inputs = Vec::with_capacity(n * bands);
        // pixel-major: targets[(pixel * n + sample) * bands + band]
        let mut targets = vec![0.0; pixels * n * bands];
        for (s, sample) in samples.iter().enumerate() {
            if sample.cube.height() != height
                || sample.cube.width() != width
                || sample.bands() != bands
            {
                return Err(Error::ShapeMismatch(format!(
                    "sample {s} is {}x{}x{}, expected {height}x{width}x{bands}",
                    sample.cube.height(),
                    sample.cube.width(),
                    sample.bands()
                )));
            }
            if sample.cube.grid() != first.cube.grid() {
                return Err(Error::GridMismatch {
                    expected: first.cube.grid().to_string(),
                    found: sample.cube.grid().to_string(),
                });
            }
            inputs.extend_from_slice(sample.spectrometer.values());
            for (p, px) in sample.cube.pixels().enumerate() {
                let at = (p * n + s) * bands;
                targets[at..at + bands].copy_from_slice(px);
            }
        }
        Ok(Self {
            height,
            width,
            bands,
            n,
            inputs,
            targets,
        })
    }

    pub fn pixel_targets(&self, pixel: usize) -> &[f64] {
        let len = self.n * self.bands;
        &self.targets[pixel * len..(pixel + 1) * len]
    }
}
