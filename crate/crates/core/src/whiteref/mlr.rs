//! Per-pixel affine least squares.
//!
//! Every pixel shares the same design (the spectrometer vectors), so the
//! centered design is factored once and the resulting solve operator is
//! applied to each pixel's targets.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::bank::{ModelKind, PixelModelBank, TrainingMeta};
use super::{CalibrationSample, PixelDataset};
use crate::error::Result;

/// Ridge strength used when the design is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Singular values below `RANK_TOLERANCE * sigma_max` count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares solve operator `P` (bands x n) for the centered design, so
/// that `B = P * Y_centered` gives the input-by-output coefficient matrix.
struct SolveOperator {
    op: DMatrix<f64>,
    mean_input: Vec<f64>,
    ridge: bool,
}

impl SolveOperator {
    fn new(inputs: &[f64], n: usize, bands: usize) -> Self {
        let mut mean_input = vec![0.0; bands];
        for row in inputs.chunks_exact(bands) {
            for (m, x) in mean_input.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean_input.iter_mut().for_each(|m| *m /= n as f64);

        let centered = DMatrix::from_fn(n, bands, |i, j| inputs[i * bands + j] - mean_input[j]);
        let svd = centered.svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        let sigma = &svd.singular_values;
        let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
        let rank = sigma
            .iter()
            .filter(|s| **s > RANK_TOLERANCE * sigma_max)
            .count();
        let ridge = rank < bands;

        // P = V diag(f(s)) U^T, with f(s) = 1/s (full rank) or s/(s^2 + lambda)
        let k = sigma.len();
        let mut scaled_ut = u.transpose();
        for i in 0..k {
            let s = sigma[i];
            let f = if ridge {
                s / (s * s + RIDGE_LAMBDA)
            } else {
                1.0 / s
            };
            scaled_ut.row_mut(i).scale_mut(f);
        }
        let op = v_t.transpose() * scaled_ut;
        Self {
            op,
            mean_input,
            ridge,
        }
    }

    /// Returns the pixel's `bands x bands` output-by-input weights followed by intercepts.
    fn solve(&self, targets: &[f64], n: usize, bands: usize) -> Vec<f64> {
        let mut mean_target = vec![0.0; bands];
        for row in targets.chunks_exact(bands) {
            for (m, y) in mean_target.iter_mut().zip(row) {
                *m += y;
            }
        }
        mean_target.iter_mut().for_each(|m| *m /= n as f64);
        let y = DMatrix::from_fn(n, bands, |i, j| targets[i * bands + j] - mean_target[j]);
        // coef[(input, output)]
        let coef = &self.op * y;

        let mut block = Vec::with_capacity(bands * bands + bands);
        for o in 0..bands {
            for i in 0..bands {
                block.push(coef[(i, o)]);
            }
        }
        for o in 0..bands {
            let shift: f64 = (0..bands).map(|i| coef[(i, o)] * self.mean_input[i]).sum();
            block.push(mean_target[o] - shift);
        }
        block
    }
}

/// Fits an independent affine map from spectrometer vector to pixel response
/// for every pixel of the training cubes.
///
/// A rank-deficient design (fewer distinct samples than bands, or collinear
/// spectra) falls back to ridge regression with a logged warning.
pub fn fit_mlr(train: &[CalibrationSample]) -> Result<PixelModelBank> {
    let data = PixelDataset::from_samples(train)?;
    let (n, bands) = (data.n, data.bands);
    let solver = SolveOperator::new(&data.inputs, n, bands);
    if solver.ridge {
        log::warn!(
            "MLR design is rank deficient ({n} samples, {bands} bands); applying ridge lambda = {RIDGE_LAMBDA}"
        );
    }

    let blocks: Vec<Vec<f64>> = (0..data.height * data.width)
        .into_par_iter()
        .map(|p| solver.solve(data.pixel_targets(p), n, bands))
        .collect();

    let mut meta = TrainingMeta::new(ModelKind::Mlr, train[0].cube().grid().clone(), 0);
    meta.train_samples = n;
    meta.ridge_applied = solver.ridge;
    PixelModelBank::from_params(
        ModelKind::Mlr,
        data.height,
        data.width,
        bands,
        blocks.concat(),
        meta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{DataCube, Spectrum, Unit, WavelengthGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Truth {
        weights: Vec<Vec<f64>>, // per pixel, out x in
        intercepts: Vec<Vec<f64>>,
    }

    fn linear_samples(
        h: usize,
        w: usize,
        bands: usize,
        n: usize,
        seed: u64,
    ) -> (Vec<CalibrationSample>, Truth) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = WavelengthGrid::linspace(660.0, 900.0, bands).unwrap();
        let pixels = h * w;
        let weights: Vec<Vec<f64>> = (0..pixels)
            .map(|_| {
                (0..bands * bands)
                    .map(|_| rng.random_range(0.0..0.2))
                    .collect()
            })
            .collect();
        let intercepts: Vec<Vec<f64>> = (0..pixels)
            .map(|_| (0..bands).map(|_| rng.random_range(0.0..0.1)).collect())
            .collect();
        let samples = (0..n)
            .map(|_| {
                let s: Vec<f64> = (0..bands).map(|_| rng.random_range(0.0..1.0)).collect();
                let mut values = Vec::with_capacity(pixels * bands);
                for p in 0..pixels {
                    for o in 0..bands {
                        let y: f64 = intercepts[p][o]
                            + (0..bands)
                                .map(|i| weights[p][o * bands + i] * s[i])
                                .sum::<f64>();
                        values.push(y);
                    }
                }
                CalibrationSample::new(
                    Spectrum::new(grid.clone(), s, 1.0, Unit::Normalized).unwrap(),
                    DataCube::new(h, w, grid.clone(), values, 1.0, Unit::Normalized).unwrap(),
                    0.0,
                )
                .unwrap()
            })
            .collect();
        (
            samples,
            Truth {
                weights,
                intercepts,
            },
        )
    }

    #[test]
    fn recovers_exact_affine_maps() {
        let (bands, h, w) = (6, 3, 2);
        let (samples, truth) = linear_samples(h, w, bands, 200, 1);
        let bank = fit_mlr(&samples).unwrap();
        assert!(!bank.meta().ridge_applied);
        let mut worst: f64 = 0.0;
        for p in 0..h * w {
            let block = bank.pixel_params(p / w, p % w);
            for (a, b) in block[..bands * bands].iter().zip(&truth.weights[p]) {
                worst = worst.max((a - b).abs());
            }
            for (a, b) in block[bands * bands..].iter().zip(&truth.intercepts[p]) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-8, "max parameter error {worst}");
    }

    #[test]
    fn recovers_24_band_map_with_ten_times_bands_samples() {
        let bands = 24;
        let (samples, truth) = linear_samples(2, 2, bands, 10 * bands, 7);
        let bank = fit_mlr(&samples).unwrap();
        for p in 0..4 {
            let block = bank.pixel_params(p / 2, p % 2);
            let err = block[..bands * bands]
                .iter()
                .zip(&truth.weights[p])
                .chain(block[bands * bands..].iter().zip(&truth.intercepts[p]))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "pixel {p}: {err}");
        }
    }

    #[test]
    fn single_sample_uses_ridge_and_returns_target_as_intercept() {
        // one sample: the centered design is zero, so the ridge solution has
        // zero weights and the intercept is the (only) target
        let grid = WavelengthGrid::linspace(660.0, 700.0, 5).unwrap();
        let target = [0.31, 0.42, 0.27, 0.55, 0.12];
        let mut values = Vec::new();
        for _ in 0..4 {
            values.extend_from_slice(&target);
        }
        let sample = CalibrationSample::new(
            Spectrum::new(
                grid.clone(),
                vec![0.5, 0.4, 0.3, 0.2, 0.1],
                1.0,
                Unit::Normalized,
            )
            .unwrap(),
            DataCube::new(2, 2, grid, values, 1.0, Unit::Normalized).unwrap(),
            0.0,
        )
        .unwrap();
        let bank = fit_mlr(&[sample]).unwrap();
        assert!(bank.meta().ridge_applied);
        let block = bank.pixel_params(1, 1);
        assert!(block[..25].iter().all(|w| w.abs() < 1e-12));
        for (b, t) in block[25..].iter().zip(&target) {
            assert!((b - t).abs() < 1e-12);
        }
    }

    #[test]
    fn storage_per_pixel_for_24_bands() {
        let (samples, _) = linear_samples(1, 1, 24, 30, 3);
        let bank = fit_mlr(&samples).unwrap();
        // 24x24 weights + 24 intercepts as 8-byte reals
        assert_eq!(bank.bytes_per_pixel(), 4800);
    }
}
