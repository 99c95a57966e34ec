//! Per-pixel `[bands, 10, 10, bands]` ReLU perceptron trained with Adam on
//! `MSE + alpha * SAM`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bank::{ModelKind, PixelModelBank, TrainingMeta};
use super::loss::{accumulate_angle_gradient, angle_unchecked};
use super::{pixel_seed, CalibrationSample, PixelDataset};
use crate::error::{Error, Result};

/// Hidden layer widths.
pub const HIDDEN: [usize; 2] = [10, 10];
const H1: usize = HIDDEN[0];
const H2: usize = HIDDEN[1];

/// Parameter offsets inside a flat block: W1 (H1 x B), b1, W2 (H2 x H1), b2, W3 (B x H2), b3.
#[derive(Debug, Clone, Copy)]
struct Layout {
    bands: usize,
}

impl Layout {
    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        H1 * self.bands
    }
    fn w2(&self) -> usize {
        self.b1() + H1
    }
    fn b2(&self) -> usize {
        self.w2() + H2 * H1
    }
    fn w3(&self) -> usize {
        self.b2() + H2
    }
    fn b3(&self) -> usize {
        self.w3() + self.bands * H2
    }
    fn len(&self) -> usize {
        self.b3() + self.bands
    }
}

pub fn param_count(bands: usize) -> usize {
    Layout { bands }.len()
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Activations of one forward pass, kept for backpropagation.
struct Trace {
    z1: [f64; H1],
    a1: [f64; H1],
    z2: [f64; H2],
    a2: [f64; H2],
    z3: Vec<f64>,
    y: Vec<f64>,
}

impl Trace {
    fn new(bands: usize) -> Self {
        Self {
            z1: [0.0; H1],
            a1: [0.0; H1],
            z2: [0.0; H2],
            a2: [0.0; H2],
            z3: vec![0.0; bands],
            y: vec![0.0; bands],
        }
    }
}

fn forward_trace(params: &[f64], bands: usize, x: &[f64], t: &mut Trace) {
    let l = Layout { bands };
    let w1 = &params[l.w1()..l.b1()];
    let b1 = &params[l.b1()..l.w2()];
    let w2 = &params[l.w2()..l.b2()];
    let b2 = &params[l.b2()..l.w3()];
    let w3 = &params[l.w3()..l.b3()];
    let b3 = &params[l.b3()..l.len()];
    for j in 0..H1 {
        let row = &w1[j * bands..(j + 1) * bands];
        t.z1[j] = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        t.a1[j] = relu(t.z1[j]);
    }
    for k in 0..H2 {
        let row = &w2[k * H1..(k + 1) * H1];
        t.z2[k] = b2[k] + row.iter().zip(&t.a1).map(|(w, v)| w * v).sum::<f64>();
        t.a2[k] = relu(t.z2[k]);
    }
    for o in 0..bands {
        let row = &w3[o * H2..(o + 1) * H2];
        t.z3[o] = b3[o] + row.iter().zip(&t.a2).map(|(w, v)| w * v).sum::<f64>();
        t.y[o] = relu(t.z3[o]);
    }
}

/// Raw network output (no floor) for one input vector.
pub(crate) fn forward(params: &[f64], bands: usize, x: &[f64], out: &mut [f64]) {
    let mut t = Trace::new(bands);
    forward_trace(params, bands, x, &mut t);
    out.copy_from_slice(&t.y);
}

/// Accumulates the parameter gradient for one sample given `dy = dL/dy`.
fn backward(params: &[f64], bands: usize, x: &[f64], t: &Trace, dy: &[f64], grad: &mut [f64]) {
    let l = Layout { bands };
    let w2 = &params[l.w2()..l.b2()];
    let w3 = &params[l.w3()..l.b3()];

    let mut dh2 = [0.0; H2];
    for o in 0..bands {
        if t.z3[o] <= 0.0 {
            continue;
        }
        let dz = dy[o];
        grad[l.b3() + o] += dz;
        let gw = &mut grad[l.w3() + o * H2..l.w3() + (o + 1) * H2];
        for k in 0..H2 {
            gw[k] += dz * t.a2[k];
            dh2[k] += w3[o * H2 + k] * dz;
        }
    }
    let mut dh1 = [0.0; H1];
    for k in 0..H2 {
        if t.z2[k] <= 0.0 {
            continue;
        }
        let dz = dh2[k];
        grad[l.b2() + k] += dz;
        for j in 0..H1 {
            grad[l.w2() + k * H1 + j] += dz * t.a1[j];
            dh1[j] += w2[k * H1 + j] * dz;
        }
    }
    for j in 0..H1 {
        if t.z1[j] <= 0.0 {
            continue;
        }
        let dz = dh1[j];
        grad[l.b1() + j] += dz;
        let gw = &mut grad[l.w1() + j * bands..l.w1() + (j + 1) * bands];
        for (g, v) in gw.iter_mut().zip(x) {
            *g += dz * v;
        }
    }
}

/// A single pixel's perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    bands: usize,
    params: Vec<f64>,
}

impl Mlp {
    pub fn from_params(bands: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != param_count(bands) {
            return Err(Error::ShapeMismatch(format!(
                "perceptron with {bands} bands needs {} parameters, got {}",
                param_count(bands),
                params.len()
            )));
        }
        Ok(Self { bands, params })
    }

    /// Glorot-uniform weights and biases; output biases start at `output_bias`.
    pub fn init(bands: usize, output_bias: &[f64], rng: &mut impl Rng) -> Self {
        let l = Layout { bands };
        let mut params = vec![0.0; l.len()];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-bound..bound);
            }
        };
        fill(l.w1()..l.b1(), bands, H1);
        fill(l.b1()..l.w2(), bands, H1);
        fill(l.w2()..l.b2(), H1, H2);
        fill(l.b2()..l.w3(), H1, H2);
        fill(l.w3()..l.b3(), H2, bands);
        params[l.b3()..].copy_from_slice(output_bias);
        Self { bands, params }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.bands];
        forward(&self.params, self.bands, x, &mut out);
        out
    }

    /// `L_total = MSE + alpha * mean spectral angle` over a batch of row-major
    /// `n x bands` inputs and targets.
    pub fn loss(&self, inputs: &[f64], targets: &[f64], alpha: f64) -> f64 {
        let b = self.bands;
        let n = inputs.len() / b;
        let mut t = Trace::new(b);
        let (mut se, mut angle) = (0.0, 0.0);
        for (x, y) in inputs.chunks_exact(b).zip(targets.chunks_exact(b)) {
            forward_trace(&self.params, b, x, &mut t);
            se +=
                t.y.iter()
                    .zip(y)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>();
            if alpha != 0.0 {
                angle += angle_unchecked(&t.y, y).radians;
            }
        }
        se / (n * b) as f64 + alpha * angle / n as f64
    }

    /// Loss and its analytic gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        inputs: &[f64],
        targets: &[f64],
        alpha: f64,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(inputs, targets, alpha, &mut grad);
        (loss, grad)
    }

    fn accumulate(&self, inputs: &[f64], targets: &[f64], alpha: f64, grad: &mut [f64]) -> f64 {
        let b = self.bands;
        let n = inputs.len() / b;
        let mse_scale = 2.0 / (n * b) as f64;
        let sam_scale = alpha / n as f64;
        let mut t = Trace::new(b);
        let mut dy = vec![0.0; b];
        let (mut se, mut angle) = (0.0, 0.0);
        for (x, y) in inputs.chunks_exact(b).zip(targets.chunks_exact(b)) {
            forward_trace(&self.params, b, x, &mut t);
            for o in 0..b {
                let d = t.y[o] - y[o];
                se += d * d;
                dy[o] = mse_scale * d;
            }
            if alpha != 0.0 {
                angle += angle_unchecked(&t.y, y).radians;
                accumulate_angle_gradient(&t.y, y, sam_scale, &mut dy);
            }
            backward(&self.params, b, x, &t, &dy, grad);
        }
        se / (n * b) as f64 + alpha * angle / n as f64
    }
}

/// Training hyperparameters. Adam settings beyond the optimizer choice are
/// library defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpHyper {
    pub alpha: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// `None` trains on the full batch each epoch.
    pub batch_size: Option<usize>,
    pub max_restarts: usize,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            max_epochs: 1000,
            patience: 10,
            min_delta: 1e-4,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: None,
            max_restarts: 3,
        }
    }
}

/// Stops once `patience` consecutive epochs fail to beat the best loss by `min_delta`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    wait: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
            epoch: 0,
        }
    }

    /// Records one epoch's loss; returns `true` when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.epoch += 1;
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = self.epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }

    pub fn improved_last(&self) -> bool {
        self.best_epoch == self.epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn epochs(&self) -> usize {
        self.epoch
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize, lr: f64, h: &MlpHyper) -> Self {
        Self {
            lr,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Per-band input standardization shared by every pixel.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct InputScaling {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl InputScaling {
    pub(crate) fn fit(inputs: &[f64], bands: usize) -> Self {
        let n = (inputs.len() / bands) as f64;
        let mut mean = vec![0.0; bands];
        for row in inputs.chunks_exact(bands) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; bands];
        for row in inputs.chunks_exact(bands) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let scale = var
            .iter()
            .map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub(crate) fn apply(&self, inputs: &[f64]) -> Vec<f64> {
        let bands = self.mean.len();
        inputs
            .iter()
            .enumerate()
            .map(|(i, x)| (x - self.mean[i % bands]) / self.scale[i % bands])
            .collect()
    }

    /// Rewrites the first layer so the network accepts unscaled inputs.
    pub(crate) fn fold_into(&self, params: &mut [f64], bands: usize) {
        let l = Layout { bands };
        for j in 0..H1 {
            let mut shift = 0.0;
            for b in 0..bands {
                let w = &mut params[l.w1() + j * bands + b];
                *w /= self.scale[b];
                shift += *w * self.mean[b];
            }
            params[l.b1() + j] -= shift;
        }
    }
}

/// Outcome of training one pixel.
#[derive(Debug, Clone)]
pub struct PixelFit {
    pub params: Vec<f64>,
    /// Validation `L_total` after each epoch.
    pub history: Vec<f64>,
    pub restarts: usize,
}

/// Trains one pixel; inputs and targets are row-major `n x bands`.
pub fn train_pixel(
    bands: usize,
    train_inputs: &[f64],
    train_targets: &[f64],
    val_inputs: &[f64],
    val_targets: &[f64],
    hyper: &MlpHyper,
    seed: u64,
) -> Result<PixelFit> {
    let n = train_inputs.len() / bands;
    if n == 0 || val_inputs.is_empty() {
        return Err(Error::InsufficientData(
            "perceptron training needs non-empty train and validation sets".into(),
        ));
    }
    let mut mean_target = vec![0.0; bands];
    for row in train_targets.chunks_exact(bands) {
        for (m, y) in mean_target.iter_mut().zip(row) {
            *m += y / n as f64;
        }
    }

    let mut lr = hyper.learning_rate;
    for restart in 0..=hyper.max_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        match train_attempt(
            bands,
            train_inputs,
            train_targets,
            val_inputs,
            val_targets,
            hyper,
            lr,
            &mean_target,
            &mut rng,
        ) {
            Some((params, history)) => {
                return Ok(PixelFit {
                    params,
                    history,
                    restarts: restart,
                })
            }
            None => {
                log::debug!("non-finite loss at learning rate {lr}; restarting");
                lr /= 10.0;
            }
        }
    }
    Err(Error::Diverged(format!(
        "loss stayed non-finite after {} restarts",
        hyper.max_restarts
    )))
}

#[allow(clippy::too_many_arguments)]
fn train_attempt(
    bands: usize,
    train_inputs: &[f64],
    train_targets: &[f64],
    val_inputs: &[f64],
    val_targets: &[f64],
    hyper: &MlpHyper,
    lr: f64,
    output_bias: &[f64],
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut net = Mlp::init(bands, output_bias, rng);
    let mut adam = Adam::new(net.params.len(), lr, hyper);
    let mut stopper = EarlyStopping::new(hyper.patience, hyper.min_delta);
    let mut best = net.params.clone();
    let mut history = Vec::new();
    let mut grad = vec![0.0; net.params.len()];
    let n = train_inputs.len() / bands;
    let mut order: Vec<usize> = (0..n).collect();
    let (mut xb, mut yb) = (Vec::new(), Vec::new());

    for _ in 0..hyper.max_epochs {
        match hyper.batch_size {
            None => {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let loss = net.accumulate(train_inputs, train_targets, hyper.alpha, &mut grad);
                if !loss.is_finite() {
                    return None;
                }
                adam.update(&mut net.params, &grad);
            }
            Some(size) => {
                order.shuffle(rng);
                for chunk in order.chunks(size.max(1)) {
                    xb.clear();
                    yb.clear();
                    for &i in chunk {
                        xb.extend_from_slice(&train_inputs[i * bands..(i + 1) * bands]);
                        yb.extend_from_slice(&train_targets[i * bands..(i + 1) * bands]);
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let loss = net.accumulate(&xb, &yb, hyper.alpha, &mut grad);
                    if !loss.is_finite() {
                        return None;
                    }
                    adam.update(&mut net.params, &grad);
                }
            }
        }
        let val = net.loss(val_inputs, val_targets, hyper.alpha);
        if !val.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
            return None;
        }
        history.push(val);
        let stop = stopper.observe(val);
        if stopper.improved_last() {
            best.copy_from_slice(&net.params);
        }
        if stop {
            break;
        }
    }
    Some((best, history))
}

/// Trains one perceptron per pixel, in parallel. Results do not depend on
/// scheduling: every pixel draws from its own seeded stream.
pub fn fit_mlp(
    train: &[CalibrationSample],
    val: &[CalibrationSample],
    hyper: &MlpHyper,
    seed: u64,
) -> Result<PixelModelBank> {
    let tr = PixelDataset::from_samples(train)?;
    let va = PixelDataset::from_samples(val)?;
    if (va.height, va.width, va.bands) != (tr.height, tr.width, tr.bands) {
        return Err(Error::ShapeMismatch(
            "validation cubes differ in shape from training cubes".into(),
        ));
    }
    let bands = tr.bands;
    let width = tr.width;

    // train on standardized inputs, then fold the scaling into the first layer
    let scaling = InputScaling::fit(&tr.inputs, bands);
    let (train_x, val_x) = (scaling.apply(&tr.inputs), scaling.apply(&va.inputs));
    let mut fits: Vec<PixelFit> = (0..tr.height * tr.width)
        .into_par_iter()
        .map(|p| {
            train_pixel(
                bands,
                &train_x,
                tr.pixel_targets(p),
                &val_x,
                va.pixel_targets(p),
                hyper,
                pixel_seed(seed, p / width, p % width),
            )
        })
        .collect::<Result<_>>()?;
    for f in &mut fits {
        scaling.fold_into(&mut f.params, bands);
    }

    let mut meta = TrainingMeta::new(ModelKind::Mlp, train[0].cube().grid().clone(), seed);
    meta.train_samples = tr.n;
    meta.val_samples = va.n;
    meta.hyper = Some(*hyper);
    meta.notes.push(format!(
        "adam lr={} beta1={} beta2={} eps={} (defaults, not tuned)",
        hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.epsilon
    ));
    meta.epochs_run = fits.iter().map(|f| f.history.len()).collect();
    meta.restarts = fits.iter().map(|f| f.restarts).sum();
    let longest = meta.epochs_run.iter().copied().max().unwrap_or(0);
    meta.loss_history = (0..longest)
        .map(|e| {
            let sum: f64 = fits
                .iter()
                .map(|f| f.history[e.min(f.history.len() - 1)])
                .sum();
            sum / fits.len() as f64
        })
        .collect();

    let mut params = Vec::with_capacity(fits.len() * param_count(bands));
    for f in &fits {
        params.extend_from_slice(&f.params);
    }
    meta.pixel_loss_history = fits.into_iter().map(|f| f.history).collect();
    PixelModelBank::from_params(ModelKind::Mlp, tr.height, tr.width, bands, params, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folded_scaling_matches_scaled_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let bands = 5;
        let x: Vec<f64> = (0..40 * bands)
            .map(|_| rng.random_range(0.0..0.3))
            .collect();
        let scaling = InputScaling::fit(&x, bands);
        let z = scaling.apply(&x);
        let net = Mlp::init(bands, &[0.2; 5], &mut rng);
        let mut folded = net.clone();
        scaling.fold_into(&mut folded.params, bands);
        for (xr, zr) in x.chunks(bands).zip(z.chunks(bands)) {
            for (a, b) in net.predict(zr).iter().zip(folded.predict(xr)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layout_sizes() {
        // 24*10 + 10 + 10*10 + 10 + 10*24 + 24
        assert_eq!(param_count(24), 624);
        assert_eq!(param_count(9), 9 * 10 + 10 + 100 + 10 + 90 + 9);
    }

    #[test]
    fn early_stopping_on_constant_stream_stops_at_epoch_11() {
        let mut s = EarlyStopping::new(10, 1e-4);
        let mut stopped_at = None;
        for epoch in 1..=100 {
            if s.observe(0.5) {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(11));
    }

    #[test]
    fn early_stopping_resets_on_improvement() {
        let mut s = EarlyStopping::new(3, 0.1);
        assert!(!s.observe(1.0));
        assert!(!s.observe(0.95));
        assert!(!s.observe(0.85));
        assert!(!s.observe(0.84));
        assert!(!s.observe(0.80));
        assert!(s.observe(0.79));
        assert_eq!(s.best(), 0.85);
    }

    fn finite_difference_check(alpha: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bands = rng.random_range(2..7);
        let n = rng.random_range(1..6);
        let bias: Vec<f64> = (0..bands).map(|_| rng.random_range(0.05..0.3)).collect();
        let net = Mlp::init(bands, &bias, &mut rng);
        let x: Vec<f64> = (0..n * bands).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..n * bands).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, g) = net.loss_and_gradient(&x, &y, alpha);
        let h = 1e-6;
        let mut fd = vec![0.0; g.len()];
        for i in 0..g.len() {
            let mut up = net.clone();
            up.params[i] += h;
            let mut dn = net.clone();
            dn.params[i] -= h;
            fd[i] = (up.loss(&x, &y, alpha) - dn.loss(&x, &y, alpha)) / (2.0 * h);
        }
        let num: f64 = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt()
            + fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let rel = finite_difference_check(0.1, seed);
            assert!(rel < 1e-4, "seed {seed}: relative error {rel}");
        }
    }

    #[test]
    fn zero_alpha_gradient_is_pure_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bands = 4;
        let net = Mlp::init(bands, &[0.2; 4], &mut rng);
        let x: Vec<f64> = (0..3 * bands).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..3 * bands).map(|_| rng.random_range(0.0..1.0)).collect();
        let (l0, g0) = net.loss_and_gradient(&x, &y, 0.0);
        let pred: Vec<f64> = x.chunks(bands).flat_map(|xi| net.predict(xi)).collect();
        let mse = super::super::loss::loss_mse(&pred, &y).unwrap();
        assert!((l0 - mse).abs() < 1e-15);
        // finite differences of the plain MSE agree with the alpha = 0 gradient
        let h = 1e-6;
        for i in 0..g0.len() {
            let mut up = net.clone();
            up.params[i] += h;
            let mut dn = net.clone();
            dn.params[i] -= h;
            let f = |m: &Mlp| {
                let p: Vec<f64> = x.chunks(bands).flat_map(|xi| m.predict(xi)).collect();
                super::super::loss::loss_mse(&p, &y).unwrap()
            };
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - g0[i]).abs() < 1e-7, "param {i}: {fd} vs {}", g0[i]);
        }
    }

    #[test]
    fn diverging_learning_rate_restarts_then_errors() {
        let bands = 3;
        let x = vec![0.5; 3 * bands];
        let y = vec![0.4; 3 * bands];
        let hyper = MlpHyper {
            learning_rate: f64::INFINITY,
            max_epochs: 5,
            ..MlpHyper::default()
        };
        // inf / 10 stays inf, so every restart diverges
        let err = train_pixel(bands, &x, &y, &x, &y, &hyper, 1).unwrap_err();
        assert!(matches!(err, Error::Diverged(_)));

        let hyper = MlpHyper {
            max_epochs: 5,
            ..MlpHyper::default()
        };
        let fit = train_pixel(bands, &x, &y, &x, &y, &hyper, 1).unwrap();
        assert_eq!(fit.restarts, 0);
        assert!(fit.params.iter().all(|p| p.is_finite()));
    }
}
