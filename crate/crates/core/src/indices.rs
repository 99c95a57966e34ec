//! Terrain products computed from reflectance cubes: normalized-difference
//! indices, Otsu masks, band-pair search and a linear soil-moisture model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{DataCube, Unit, WavelengthGrid};

/// NIR and red bands for NDVI, in nanometers.
pub const NDVI_BANDS: (f64, f64) = (901.0, 661.0);
/// Default soil-moisture band pair, in nanometers.
pub const SMC_BANDS: (f64, f64) = (1300.0, 1119.0);
pub const OTSU_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Ndvi,
    /// Soil-moisture index, or relative humidity in percent once a regression is applied.
    Smc,
    CustomPair,
}

/// Per-pixel scalar map.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    pub height: usize,
    pub width: usize,
    /// Row-major.
    pub values: Vec<f64>,
    pub kind: IndexKind,
    /// Band centers actually used, in nanometers.
    pub band_pair: (f64, f64),
    /// Pixels whose two bands were both zero; their value is 0.
    pub flagged: usize,
}

impl IndexMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

#[inline]
fn nd(a: f64, b: f64) -> Option<f64> {
    let s = a + b;
    if s == 0.0 {
        None
    } else {
        Some((a - b) / s)
    }
}

/// `(p_i - p_j) / (p_i + p_j)` per pixel, using the bands nearest `lambda_i`
/// and `lambda_j`.
pub fn normalized_difference(cube: &DataCube, lambda_i: f64, lambda_j: f64) -> Result<IndexMap> {
    if cube.unit() != Unit::Reflectance {
        return Err(Error::Unit {
            expected: Unit::Reflectance.as_str().into(),
            found: cube.unit().as_str().into(),
        });
    }
    let bi = cube.grid().lookup_band(lambda_i)?;
    let bj = cube.grid().lookup_band(lambda_j)?;
    let bands = cube.bands();
    let raw: Vec<Option<f64>> = cube
        .values()
        .par_chunks(bands)
        .map(|px| nd(px[bi], px[bj]))
        .collect();
    let flagged = raw.iter().filter(|v| v.is_none()).count();
    let c = cube.grid().centers();
    Ok(IndexMap {
        height: cube.height(),
        width: cube.width(),
        values: raw.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
        kind: IndexKind::CustomPair,
        band_pair: (c[bi], c[bj]),
        flagged,
    })
}

pub fn ndvi(cube: &DataCube) -> Result<IndexMap> {
    let mut m = normalized_difference(cube, NDVI_BANDS.0, NDVI_BANDS.1)?;
    m.kind = IndexKind::Ndvi;
    Ok(m)
}

pub fn smc_index(cube: &DataCube, pair: (f64, f64)) -> Result<IndexMap> {
    let mut m = normalized_difference(cube, pair.0, pair.1)?;
    m.kind = IndexKind::Smc;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    /// Row-major; `true` where the value exceeds the threshold.
    pub mask: Vec<bool>,
    pub threshold: f64,
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Histogram of `values` over `[min, max]`, returning bin indices and the range.
fn bin_indices(values: &[f64], bins: usize) -> Result<(Vec<usize>, f64, f64)> {
    if bins < 2 {
        return Err(Error::Config("Otsu needs at least 2 bins".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("value {i} is not finite")));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() || lo == hi {
        return Err(Error::Domain(
            "Otsu threshold needs at least two distinct values".into(),
        ));
    }
    let width = hi - lo;
    let idx = values
        .iter()
        .map(|v| (((v - lo) / width * bins as f64) as usize).min(bins - 1))
        .collect();
    Ok((idx, lo, hi))
}

/// First bin of the upper class maximizing the between-class variance of a
/// histogram. Bins are represented by their index, which is affine in the
/// bin center.
fn otsu_split(hist: &[usize]) -> usize {
    let total: usize = hist.iter().sum();
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();
    let (mut w0, mut sum0) = (0usize, 0.0);
    let (mut best_k, mut best) = (0, -1.0);
    for k in 1..hist.len() {
        w0 += hist[k - 1];
        sum0 += (k - 1) as f64 * hist[k - 1] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    best_k
}

/// Binary Otsu mask with `bins` histogram bins spanning the value range.
///
/// The reported threshold sits halfway between the largest value of the lower
/// class and the smallest value of the upper class.
pub fn otsu_with_bins(
    values: &[f64],
    height: usize,
    width: usize,
    bins: usize,
) -> Result<BinaryMask> {
    if values.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {height}x{width} map",
            values.len()
        )));
    }
    let (idx, _, _) = bin_indices(values, bins)?;
    let mut hist = vec![0usize; bins];
    for &i in &idx {
        hist[i] += 1;
    }
    let k = otsu_split(&hist);
    let (mut below, mut above) = (f64::NEG_INFINITY, f64::INFINITY);
    for (v, &i) in values.iter().zip(&idx) {
        if i < k {
            below = below.max(*v);
        } else {
            above = above.min(*v);
        }
    }
    let threshold = below + (above - below) / 2.0;
    Ok(BinaryMask {
        height,
        width,
        mask: idx.iter().map(|&i| i >= k).collect(),
        threshold,
    })
}

pub fn otsu_threshold(map: &IndexMap) -> Result<BinaryMask> {
    otsu_with_bins(&map.values, map.height, map.width, OTSU_BINS)
}

/// How wet and dry pixels are compared when scoring a band pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScoring {
    /// Compare the normalized differences of the two mean spectra.
    #[default]
    MeanSpectrum,
    /// Pair pixels by position and take the L2 norm of per-pixel differences.
    PerPixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPair {
    pub i: usize,
    pub j: usize,
    pub lambda_i: f64,
    pub lambda_j: f64,
    pub score: f64,
}

fn mean_spectrum(pixels: &[Vec<f64>], bands: usize) -> Vec<f64> {
    let mut m = vec![0.0; bands];
    for p in pixels {
        for (a, v) in m.iter_mut().zip(p) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= pixels.len() as f64);
    m
}

/// Exhaustive search over ordered band pairs for the normalized difference
/// that best separates wet from dry pixels. Ties keep the first pair visited
/// (row-major over `(i, j)`).
pub fn optimize_band_pair(
    wet: &[Vec<f64>],
    dry: &[Vec<f64>],
    grid: &WavelengthGrid,
    scoring: PairScoring,
) -> Result<BandPair> {
    let bands = grid.len();
    if bands < 2 {
        return Err(Error::InvalidGrid(
            "band-pair search needs at least 2 bands".into(),
        ));
    }
    if wet.is_empty() || dry.is_empty() {
        return Err(Error::InsufficientData(
            "band-pair search needs wet and dry pixels".into(),
        ));
    }
    if let Some(p) = wet.iter().chain(dry).find(|p| p.len() != bands) {
        return Err(Error::ShapeMismatch(format!(
            "spectrum with {} values on a {bands}-band grid",
            p.len()
        )));
    }
    let score: Box<dyn Fn(usize, usize) -> f64 + Sync> = match scoring {
        PairScoring::MeanSpectrum => {
            let (mw, md) = (mean_spectrum(wet, bands), mean_spectrum(dry, bands));
            Box::new(move |i, j| {
                (nd(mw[i], mw[j]).unwrap_or(0.0) - nd(md[i], md[j]).unwrap_or(0.0)).abs()
            })
        }
        PairScoring::PerPixel => {
            if wet.len() != dry.len() {
                return Err(Error::ShapeMismatch(format!(
                    "per-pixel scoring pairs pixels by position: {} wet vs {} dry",
                    wet.len(),
                    dry.len()
                )));
            }
            Box::new(move |i, j| {
                wet.iter()
                    .zip(dry)
                    .map(|(w, d)| {
                        let diff = nd(w[i], w[j]).unwrap_or(0.0) - nd(d[i], d[j]).unwrap_or(0.0);
                        diff * diff
                    })
                    .sum::<f64>()
                    .sqrt()
            })
        }
    };
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..bands {
        for j in 0..bands {
            if i == j {
                continue;
            }
            let s = score(i, j);
            if best.is_none_or(|(_, _, b)| s > b) {
                best = Some((i, j, s));
            }
        }
    }
    let (i, j, score) = best.expect("at least one pair");
    let c = grid.centers();
    Ok(BandPair {
        i,
        j,
        lambda_i: c[i],
        lambda_j: c[j],
        score,
    })
}

/// Linear map from soil-moisture index to relative humidity in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmcRegression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `sqrt(SSE / (n - 2))`; zero for two points.
    pub residual_std: f64,
    /// Bands (nm) the index is computed from.
    pub band_pair: (f64, f64),
}

impl SmcRegression {
    pub fn predict(&self, index: f64) -> f64 {
        (self.slope * index + self.intercept).clamp(0.0, 100.0)
    }
}

/// Ordinary least squares of relative humidity on index value.
pub fn fit_smc(points: &[(f64, f64)], band_pair: (f64, f64)) -> Result<SmcRegression> {
    if let Some(p) = points
        .iter()
        .find(|(x, y)| !x.is_finite() || !y.is_finite())
    {
        return Err(Error::Domain(format!("non-finite regression point {p:?}")));
    }
    let n = points.len() as f64;
    let first = points.first().map(|p| p.0);
    if points.len() < 2 || points.iter().all(|p| Some(p.0) == first) {
        return Err(Error::InsufficientData(
            "SMC regression needs at least two distinct index values".into(),
        ));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let residual_std = if points.len() > 2 {
        (sse / (n - 2.0)).sqrt()
    } else {
        0.0
    };
    Ok(SmcRegression {
        slope,
        intercept,
        r2,
        residual_std,
        band_pair,
    })
}

/// Relative-humidity map (percent, clamped to `[0, 100]`).
pub fn predict_smc(reg: &SmcRegression, cube: &DataCube) -> Result<IndexMap> {
    let mut m = smc_index(cube, reg.band_pair)?;
    m.values.iter_mut().for_each(|v| *v = reg.predict(*v));
    Ok(m)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::ShapeMismatch(
            "rank correlation needs two equal-length series of 2+ values".into(),
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain(
            "rank correlation of a constant series".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}
