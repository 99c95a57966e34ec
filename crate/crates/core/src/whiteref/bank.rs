use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{self, MlpHyper};
use crate::error::{Error, Result};
use crate::spectral::{DataCube, Spectrum, Unit, WavelengthGrid};

pub const MAGIC: &[u8; 4] = b"HCAL";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 + 2;

/// Floor applied to perceptron outputs so downstream ratios never divide by zero.
pub const MLP_OUTPUT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlr,
    Mlp,
}

impl ModelKind {
    fn code(self) -> u8 {
        match self {
            ModelKind::Mlr => 0,
            ModelKind::Mlp => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Mlr),
            1 => Some(ModelKind::Mlp),
            _ => None,
        }
    }

    /// Number of reals stored per pixel for `bands` channels.
    pub fn block_len(self, bands: usize) -> usize {
        match self {
            ModelKind::Mlr => bands * bands + bands,
            ModelKind::Mlp => mlp::param_count(bands),
        }
    }
}

/// Training provenance, written as a JSON sidecar next to the binary bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub model_kind: ModelKind,
    /// Camera band centers the bank predicts onto.
    pub target_grid: WavelengthGrid,
    pub seed: u64,
    /// Whether the training captures were augmented before splitting.
    #[serde(default)]
    pub augmented: bool,
    pub train_samples: usize,
    pub val_samples: usize,
    /// MLR only: whether the design was rank deficient and ridge was applied.
    #[serde(default)]
    pub ridge_applied: bool,
    #[serde(default)]
    pub hyper: Option<MlpHyper>,
    /// Mean validation loss per epoch across pixels (pixels that stopped early
    /// hold their final value).
    #[serde(default)]
    pub loss_history: Vec<f64>,
    #[serde(default)]
    pub epochs_run: Vec<usize>,
    #[serde(default)]
    pub restarts: usize,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Per-pixel validation loss per epoch; kept in memory only.
    #[serde(skip)]
    pub pixel_loss_history: Vec<Vec<f64>>,
}

impl TrainingMeta {
    pub(crate) fn new(model_kind: ModelKind, target_grid: WavelengthGrid, seed: u64) -> Self {
        Self {
            model_kind,
            target_grid,
            seed,
            augmented: false,
            train_samples: 0,
            val_samples: 0,
            ridge_applied: false,
            hyper: None,
            loss_history: Vec::new(),
            epochs_run: Vec::new(),
            restarts: 0,
            notes: Vec::new(),
            pixel_loss_history: Vec::new(),
        }
    }
}

/// One independent model per camera pixel, stored as fixed-size parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelModelBank {
    kind: ModelKind,
    height: usize,
    width: usize,
    bands: usize,
    params: Vec<f64>,
    meta: TrainingMeta,
}

impl PixelModelBank {
    pub fn from_params(
        kind: ModelKind,
        height: usize,
        width: usize,
        bands: usize,
        params: Vec<f64>,
        meta: TrainingMeta,
    ) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::ShapeMismatch(format!(
                "bank dimensions {height}x{width}x{bands} must be non-zero"
            )));
        }
        let expected = height * width * kind.block_len(bands);
        if params.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "bank needs {expected} parameters, got {}",
                params.len()
            )));
        }
        if meta.target_grid.len() != bands {
            return Err(Error::ShapeMismatch(format!(
                "target grid has {} bands, bank has {bands}",
                meta.target_grid.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            kind,
            height,
            width,
            bands,
            params,
            meta,
        })
    }

    /// MLR bank where every pixel applies the same affine map.
    pub fn uniform_linear(
        height: usize,
        width: usize,
        weights: &[f64],
        intercept: &[f64],
        target_grid: WavelengthGrid,
    ) -> Result<Self> {
        let bands = intercept.len();
        if weights.len() != bands * bands {
            return Err(Error::ShapeMismatch(format!(
                "weights must be {bands}x{bands}"
            )));
        }
        let mut block = weights.to_vec();
        block.extend_from_slice(intercept);
        let params = block.repeat(height * width);
        Self::from_params(
            ModelKind::Mlr,
            height,
            width,
            bands,
            params,
            TrainingMeta::new(ModelKind::Mlr, target_grid, 0),
        )
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut TrainingMeta {
        &mut self.meta
    }

    pub fn target_grid(&self) -> &WavelengthGrid {
        &self.meta.target_grid
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn pixel_params(&self, row: usize, col: usize) -> &[f64] {
        let len = self.kind.block_len(self.bands);
        let p = row * self.width + col;
        &self.params[p * len..(p + 1) * len]
    }

    /// Bytes of parameter storage per pixel.
    pub fn bytes_per_pixel(&self) -> usize {
        self.kind.block_len(self.bands) * std::mem::size_of::<f64>()
    }

    /// Evaluates one pixel model on `input`, writing `bands` outputs.
    pub fn predict_pixel(&self, row: usize, col: usize, input: &[f64], out: &mut [f64]) {
        predict_block(
            self.kind,
            self.bands,
            self.pixel_params(row, col),
            input,
            out,
        );
    }

    /// White-reference cube predicted from a conditioned, downsampled spectrometer reading.
    pub fn predict(&self, s: &Spectrum) -> Result<DataCube> {
        if s.len() != self.bands {
            return Err(Error::ShapeMismatch(format!(
                "spectrum has {} channels, bank expects {}",
                s.len(),
                self.bands
            )));
        }
        self.predict_values(s.values())
    }

    pub(crate) fn predict_values(&self, input: &[f64]) -> Result<DataCube> {
        let bands = self.bands;
        let len = self.kind.block_len(bands);
        let mut values = vec![0.0; self.height * self.width * bands];
        values
            .par_chunks_mut(bands)
            .zip(self.params.par_chunks(len))
            .for_each(|(out, block)| predict_block(self.kind, bands, block, input, out));
        DataCube::new(
            self.height,
            self.width,
            self.meta.target_grid.clone(),
            values,
            1.0,
            Unit::Normalized,
        )
    }

    /// Writes the binary bank to `path` and its metadata to `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.params.len() * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(self.kind.code());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.bands as u16).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))?;

        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::format(&sidecar, e.to_string()))?;
        fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        if buf.len() < HEADER_LEN || &buf[..4] != MAGIC {
            return Err(Error::format(path, "not a model bank (bad magic)"));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported bank version {version}"),
            ));
        }
        let kind = ModelKind::from_code(buf[6])
            .ok_or_else(|| Error::format(path, format!("unknown model kind {}", buf[6])))?;
        let height = u32::from_le_bytes(buf[7..11].try_into().expect("4 bytes")) as usize;
        let width = u32::from_le_bytes(buf[11..15].try_into().expect("4 bytes")) as usize;
        let bands = u16::from_le_bytes([buf[15], buf[16]]) as usize;
        let body = &buf[HEADER_LEN..];
        let expected = height * width * kind.block_len(bands) * 8;
        if body.len() != expected {
            return Err(Error::format(
                path,
                format!("body holds {} bytes, header implies {expected}", body.len()),
            ));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let sidecar = sidecar_path(path);
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: TrainingMeta =
            serde_json::from_str(&text).map_err(|e| Error::format(&sidecar, e.to_string()))?;
        if meta.model_kind != kind {
            return Err(Error::format(
                &sidecar,
                "model kind disagrees with binary header",
            ));
        }
        Self::from_params(kind, height, width, bands, params, meta)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn predict_block(
    kind: ModelKind,
    bands: usize,
    block: &[f64],
    input: &[f64],
    out: &mut [f64],
) {
    match kind {
        ModelKind::Mlr => {
            let (weights, intercept) = block.split_at(bands * bands);
            for (o, (row, b)) in out
                .iter_mut()
                .zip(weights.chunks_exact(bands).zip(intercept))
            {
                let y: f64 = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                // a white reference is non-negative; NaN also maps to 0 here
                *o = y.max(0.0);
            }
        }
        ModelKind::Mlp => {
            mlp::forward(block, bands, input, out);
            for o in out.iter_mut() {
                *o = o.max(MLP_OUTPUT_FLOOR);
            }
        }
    }
}
