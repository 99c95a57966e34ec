//! Reconstruction losses: mean squared error and spectral angle.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} values, target has {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("empty vectors".into()));
    }
    Ok(())
}

/// Mean of squared differences.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(mse_unchecked(pred, target))
}

pub(crate) fn mse_unchecked(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    sum / pred.len() as f64
}

pub(crate) fn mae_unchecked(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    sum / pred.len() as f64
}

/// Spectral angle in radians, with a flag set when either vector has zero norm.
///
/// A zero-norm input has no direction; it is assigned `pi/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralAngle {
    pub radians: f64,
    pub degenerate: bool,
}

pub fn spectral_angle(pred: &[f64], target: &[f64]) -> Result<SpectralAngle> {
    check_lengths(pred, target)?;
    Ok(angle_unchecked(pred, target))
}

pub(crate) fn angle_unchecked(pred: &[f64], target: &[f64]) -> SpectralAngle {
    let np = pred.iter().map(|p| p * p).sum::<f64>().sqrt();
    let nt = target.iter().map(|t| t * t).sum::<f64>().sqrt();
    if np == 0.0 || nt == 0.0 {
        return SpectralAngle {
            radians: FRAC_PI_2,
            degenerate: true,
        };
    }
    // half-angle form: exact zero for parallel vectors, where acos(dot) loses
    // about eight digits
    let (mut diff, mut sum) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        let (a, b) = (p / np, t / nt);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    SpectralAngle {
        radians: 2.0 * diff.sqrt().atan2(sum.sqrt()),
        degenerate: false,
    }
}

/// Arc-cosine of the cosine similarity across wavelengths, in `[0, pi]`.
pub fn loss_sam(pred: &[f64], target: &[f64]) -> Result<f64> {
    let angle = spectral_angle(pred, target)?;
    if angle.degenerate {
        log::warn!("spectral angle of a zero-norm vector; using pi/2");
    }
    Ok(angle.radians)
}

/// Adds `scale * d(angle)/d(pred)` into `grad`.
///
/// The derivative is undefined at zero norm and at exactly parallel or
/// antiparallel vectors; those points contribute nothing.
pub(crate) fn accumulate_angle_gradient(
    pred: &[f64],
    target: &[f64],
    scale: f64,
    grad: &mut [f64],
) {
    let (mut dot, mut pp, mut tt) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        dot += p * t;
        pp += p * p;
        tt += t * t;
    }
    if pp == 0.0 || tt == 0.0 {
        return;
    }
    let np = pp.sqrt();
    let nt = tt.sqrt();
    let cos = dot / (np * nt);
    let sin2 = 1.0 - cos * cos;
    if !(sin2 > 1e-24) || cos.abs() >= 1.0 {
        return;
    }
    // d acos(c) = -dc / sqrt(1 - c^2);  dc/dp = t/(|p||t|) - c p/|p|^2
    let k = -scale / sin2.sqrt();
    let inv = 1.0 / (np * nt);
    let cp = cos / pp;
    for ((g, p), t) in grad.iter_mut().zip(pred).zip(target) {
        *g += k * (t * inv - cp * p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert!(loss_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_matches_two_loop_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut expected = 0.0;
            for i in 0..n {
                let mut d = a[i];
                d -= b[i];
                expected += d * d;
            }
            expected /= n as f64;
            assert!((loss_mse(&a, &b).unwrap() - expected).abs() <= 1e-15 * expected.max(1.0));
        }
    }

    #[test]
    fn sam_examples() {
        let v = [0.2, 0.5, 0.1];
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!(loss_sam(&v, &v2).unwrap() < 1e-15);
        assert!((loss_sam(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((loss_sam(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn sam_zero_norm_is_flagged() {
        let a = spectral_angle(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.radians, PI / 2.0);
    }

    #[test]
    fn sam_matches_extended_precision_reference() {
        // reference: compensated (double-double) dot products, then a
        // Newton-refined angle, independent of the library path
        fn two_sum(a: f64, b: f64) -> (f64, f64) {
            let s = a + b;
            let bb = s - a;
            (s, (a - (s - bb)) + (b - bb))
        }
        fn two_prod(a: f64, b: f64) -> (f64, f64) {
            let p = a * b;
            (p, a.mul_add(b, -p))
        }
        fn dot_dd(x: &[f64], y: &[f64]) -> f64 {
            let (mut hi, mut lo) = (0.0, 0.0);
            for (a, b) in x.iter().zip(y) {
                let (p, pe) = two_prod(*a, *b);
                let (s, se) = two_sum(hi, p);
                hi = s;
                lo += se + pe;
            }
            hi + lo
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(2..33);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let cos = dot_dd(&a, &b) / (dot_dd(&a, &a).sqrt() * dot_dd(&b, &b).sqrt());
            let mut theta = cos.clamp(-1.0, 1.0).acos();
            // one Newton step on cos(theta) - c = 0
            theta += (theta.cos() - cos) / theta.sin();
            assert!((loss_sam(&a, &b).unwrap() - theta).abs() < 1e-12);
        }
    }

    #[test]
    fn angle_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..10);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let mut g = vec![0.0; n];
            accumulate_angle_gradient(&p, &t, 1.0, &mut g);
            for i in 0..n {
                let h = 1e-6;
                let mut up = p.clone();
                up[i] += h;
                let mut dn = p.clone();
                dn[i] -= h;
                let fd = (loss_sam(&up, &t).unwrap() - loss_sam(&dn, &t).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn sam_scale_invariant_and_symmetric(
            v in prop::collection::vec(0.01f64..10.0, 1..40),
            w in prop::collection::vec(0.01f64..10.0, 40),
            k in 1e-3f64..1e3,
        ) {
            let kv: Vec<f64> = v.iter().map(|x| k * x).collect();
            prop_assert!(loss_sam(&v, &kv).unwrap() < 1e-12);
            let w = &w[..v.len()];
            let ab = loss_sam(&v, w).unwrap();
            prop_assert_eq!(ab, loss_sam(w, &v).unwrap());
            prop_assert!((0.0..=PI).contains(&ab));
        }
    }
}
