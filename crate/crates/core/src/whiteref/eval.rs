//! Reconstruction metrics for a trained bank on held-out samples.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bank::PixelModelBank;
use super::loss::{angle_unchecked, mae_unchecked, mse_unchecked};
use super::CalibrationSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub height: usize,
    pub width: usize,
    pub samples: usize,
    /// Aggregates over every (sample, pixel) pair.
    pub mse: MetricSummary,
    pub mae: MetricSummary,
    /// Radians.
    pub sam: MetricSummary,
    /// Pairs where prediction or target had zero norm (angle taken as pi/2).
    pub sam_degenerate: usize,
    pub model_size_bytes_per_pixel: usize,
    /// Wall time spent in prediction across all test samples.
    pub inference_seconds: f64,
    /// Row-major `height x width` maps, each averaged over samples.
    pub pixel_mse: Vec<f64>,
    pub pixel_mae: Vec<f64>,
    pub pixel_sam: Vec<f64>,
}

impl ReconstructionReport {
    /// One row per metric: `metric,mean,std`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,mean,std\n");
        for (name, m) in [("mse", self.mse), ("mae", self.mae), ("sam", self.sam)] {
            s.push_str(&format!("{name},{},{}\n", m.mean, m.std));
        }
        s
    }

    /// One row per pixel: `row,col,mse,mae,sam`.
    pub fn pixel_csv(&self) -> String {
        let mut s = String::from("row,col,mse,mae,sam\n");
        for r in 0..self.height {
            for c in 0..self.width {
                let p = r * self.width + c;
                s.push_str(&format!(
                    "{r},{c},{},{},{}\n",
                    self.pixel_mse[p], self.pixel_mae[p], self.pixel_sam[p]
                ));
            }
        }
        s
    }

    pub fn human_summary(&self) -> String {
        format!(
            "samples: {}  pixels: {}x{}\nMSE  {:.6} +/- {:.6}\nMAE  {:.6} +/- {:.6}\nSAM  {:.6} +/- {:.6} rad ({} degenerate)\nmodel size: {} B/pixel  inference: {:.3} s\n",
            self.samples,
            self.height,
            self.width,
            self.mse.mean,
            self.mse.std,
            self.mae.mean,
            self.mae.std,
            self.sam.mean,
            self.sam.std,
            self.sam_degenerate,
            self.model_size_bytes_per_pixel,
            self.inference_seconds
        )
    }
}

pub fn evaluate(bank: &PixelModelBank, test: &[CalibrationSample]) -> Result<ReconstructionReport> {
    if test.is_empty() {
        return Err(Error::InsufficientData(
            "evaluation needs at least one test sample".into(),
        ));
    }
    let (h, w, bands) = (bank.height(), bank.width(), bank.bands());
    let pixels = h * w;
    for (i, s) in test.iter().enumerate() {
        let c = s.cube();
        if (c.height(), c.width(), c.bands()) != (h, w, bands) {
            return Err(Error::ShapeMismatch(format!(
                "test sample {i} is {}x{}x{}, bank is {h}x{w}x{bands}",
                c.height(),
                c.width(),
                c.bands()
            )));
        }
    }

    let mut inference_seconds = 0.0;
    let (mut mse, mut mae, mut sam) = (
        Vec::with_capacity(pixels * test.len()),
        Vec::with_capacity(pixels * test.len()),
        Vec::with_capacity(pixels * test.len()),
    );
    let mut degenerate = 0;
    for s in test {
        let t0 = Instant::now();
        let pred = bank.predict(s.spectrometer())?;
        inference_seconds += t0.elapsed().as_secs_f64();
        for (p, t) in pred.pixels().zip(s.cube().pixels()) {
            mse.push(mse_unchecked(p, t));
            mae.push(mae_unchecked(p, t));
            let a = angle_unchecked(p, t);
            degenerate += usize::from(a.degenerate);
            sam.push(a.radians);
        }
    }
    if degenerate > 0 {
        log::warn!("{degenerate} zero-norm spectra during evaluation; their angle counts as pi/2");
    }

    let n = test.len() as f64;
    let pixel_map = |v: &[f64]| -> Vec<f64> {
        (0..pixels)
            .map(|p| (0..test.len()).map(|s| v[s * pixels + p]).sum::<f64>() / n)
            .collect()
    };
    Ok(ReconstructionReport {
        height: h,
        width: w,
        samples: test.len(),
        mse: MetricSummary::of(&mse),
        mae: MetricSummary::of(&mae),
        sam: MetricSummary::of(&sam),
        sam_degenerate: degenerate,
        model_size_bytes_per_pixel: bank.bytes_per_pixel(),
        inference_seconds,
        pixel_mse: pixel_map(&mse),
        pixel_mae: pixel_map(&mae),
        pixel_sam: pixel_map(&sam),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{DataCube, Spectrum, Unit, WavelengthGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_bank(h: usize, w: usize, bands: usize) -> PixelModelBank {
        let mut m = vec![0.0; bands * bands];
        for i in 0..bands {
            m[i * bands + i] = 1.0;
        }
        let grid = WavelengthGrid::linspace(660.0, 900.0, bands).unwrap();
        PixelModelBank::uniform_linear(h, w, &m, &vec![0.0; bands], grid).unwrap()
    }

    fn sample_with(
        grid: &WavelengthGrid,
        s: Vec<f64>,
        cube: Vec<f64>,
        h: usize,
        w: usize,
    ) -> CalibrationSample {
        CalibrationSample::new(
            Spectrum::new(grid.clone(), s, 1.0, Unit::Normalized).unwrap(),
            DataCube::new(h, w, grid.clone(), cube, 1.0, Unit::Normalized).unwrap(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let (h, w, bands) = (3, 2, 4);
        let bank = identity_bank(h, w, bands);
        let grid = bank.target_grid().clone();
        let test: Vec<_> = (0..5)
            .map(|i| {
                let s: Vec<f64> = (0..bands).map(|b| 0.1 + 0.05 * (i + b) as f64).collect();
                sample_with(&grid, s.clone(), s.repeat(h * w), h, w)
            })
            .collect();
        let r = evaluate(&bank, &test).unwrap();
        assert_eq!(r.mse.mean, 0.0);
        assert_eq!(r.mae.mean, 0.0);
        assert!(r.sam.mean < 1e-15);
        assert_eq!(r.model_size_bytes_per_pixel, (bands * bands + bands) * 8);
    }

    #[test]
    fn matches_brute_force_recomputation() {
        let (h, w, bands, n) = (2, 3, 5, 7);
        let bank = identity_bank(h, w, bands);
        let grid = bank.target_grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let test: Vec<_> = (0..n)
            .map(|_| {
                let s: Vec<f64> = (0..bands).map(|_| rng.random_range(0.05..1.0)).collect();
                let cube: Vec<f64> = (0..h * w * bands)
                    .map(|_| rng.random_range(0.05..1.0))
                    .collect();
                sample_with(&grid, s, cube, h, w)
            })
            .collect();
        let r = evaluate(&bank, &test).unwrap();

        // the identity bank predicts the spectrometer vector at every pixel
        let mut all = (Vec::new(), Vec::new(), Vec::new());
        let mut per_pixel = vec![(0.0, 0.0, 0.0); h * w];
        for t in &test {
            let s = t.spectrometer().values();
            for p in 0..h * w {
                let y = &t.cube().values()[p * bands..(p + 1) * bands];
                let mut se = 0.0;
                let mut ae = 0.0;
                let (mut dot, mut ss, mut yy) = (0.0, 0.0, 0.0);
                for b in 0..bands {
                    se += (s[b] - y[b]).powi(2);
                    ae += (s[b] - y[b]).abs();
                    dot += s[b] * y[b];
                    ss += s[b] * s[b];
                    yy += y[b] * y[b];
                }
                let angle = (dot / (ss.sqrt() * yy.sqrt())).clamp(-1.0, 1.0).acos();
                all.0.push(se / bands as f64);
                all.1.push(ae / bands as f64);
                all.2.push(angle);
                per_pixel[p].0 += se / bands as f64 / n as f64;
                per_pixel[p].2 += angle / n as f64;
            }
        }
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
            (m, sd)
        };
        for (got, want) in [
            (r.mse, stats(&all.0)),
            (r.mae, stats(&all.1)),
            (r.sam, stats(&all.2)),
        ] {
            assert!((got.mean - want.0).abs() < 1e-12);
            assert!((got.std - want.1).abs() < 1e-12);
        }
        for p in 0..h * w {
            assert!((r.pixel_mse[p] - per_pixel[p].0).abs() < 1e-12);
            assert!((r.pixel_sam[p] - per_pixel[p].2).abs() < 1e-9);
        }
        assert!(r.sam.mean >= 0.0 && r.sam.mean <= std::f64::consts::PI);
    }

    #[test]
    fn empty_and_mismatched_tests_are_rejected() {
        let bank = identity_bank(2, 2, 3);
        assert!(evaluate(&bank, &[]).is_err());
        let grid = bank.target_grid().clone();
        let bad = sample_with(&grid, vec![0.1; 3], vec![0.1; 3 * 3 * 2], 3, 2);
        assert!(evaluate(&bank, &[bad]).is_err());
    }
}
