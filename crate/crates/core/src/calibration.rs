//! Raw datacube + synchronized spectrometer reading to reflectance.
//!
//! Both inputs are conditioned the same way: divided by the device
//! saturation count, dark-subtracted with a floor at zero, and rescaled to the
//! device's base integration time. The spectrometer vector is then gathered
//! onto the camera bands and fed to the per-pixel bank, whose output is the
//! white-reference cube used as denominator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    build_band_mapping, downsample_spectrum, integration_scale, normalize_counts, scale_values,
    subtract_dark, BandMapping, DataCube, DeviceSpec, Measurement, Spectrum, Unit,
};
use crate::whiteref::{CalibrationSample, PixelModelBank};

pub const DEFAULT_CLIP_MAX: f64 = 1.5;
pub const DEFAULT_EPSILON_DENOM: f64 = 1e-6;

/// How the dark level enters the white-reference denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkTerm {
    /// The bank already predicts a dark-free white at base exposure; the
    /// denominator is used as predicted.
    #[default]
    Conditioned,
    /// Additionally subtracts the cube's time-scaled dark from the predicted
    /// white. Integration-time invariance then only holds for a zero dark.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationPolicy {
    pub clip_max: f64,
    pub epsilon_denom: f64,
    pub dark_term: DarkTerm,
}

impl Default for CalibrationPolicy {
    fn default() -> Self {
        Self {
            clip_max: DEFAULT_CLIP_MAX,
            epsilon_denom: DEFAULT_EPSILON_DENOM,
            dark_term: DarkTerm::Conditioned,
        }
    }
}

impl CalibrationPolicy {
    /// Clips reflectance to `[0, 1]`.
    pub fn strict() -> Self {
        Self {
            clip_max: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_max > 0.0 && self.clip_max.is_finite()) {
            return Err(Error::Config(format!(
                "clip_max must be positive and finite, got {}",
                self.clip_max
            )));
        }
        if !(self.epsilon_denom > 0.0 && self.epsilon_denom.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon_denom must be positive and finite, got {}",
                self.epsilon_denom
            )));
        }
        Ok(())
    }

    #[inline]
    fn ratio(&self, num: f64, den: f64) -> f64 {
        let r = num.max(0.0) / den.max(self.epsilon_denom);
        if r.is_nan() {
            0.0
        } else {
            r.min(self.clip_max)
        }
    }
}

/// Refuses a spectrometer reading with any channel at or above saturation.
pub fn check_spectrometer_saturation(device: &DeviceSpec, raw: &Spectrum) -> Result<()> {
    let d = device.saturation();
    let hits: Vec<usize> = raw
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= d)
        .map(|(i, _)| i)
        .collect();
    if hits.is_empty() {
        Ok(())
    } else {
        Err(Error::Saturation {
            saturation: d,
            count: hits.len(),
            positions: hits.into_iter().take(16).collect(),
        })
    }
}

/// Normalize, subtract dark, and rescale to base exposure.
pub fn condition<M: Measurement + Timed>(raw: &M, device: &DeviceSpec) -> Result<M> {
    let t_scale = integration_scale(device.base_integration_time(), raw.integration_time())?;
    let dark_free = subtract_dark(&normalize_counts(raw, device)?, device)?;
    let mut out = scale_values(&dark_free, t_scale);
    out.set_time(device.base_integration_time());
    Ok(out)
}

/// Access to the recorded exposure of a measurement.
pub trait Timed {
    fn integration_time(&self) -> f64;
    #[doc(hidden)]
    fn set_time(&mut self, t: f64);
}

impl Timed for Spectrum {
    fn integration_time(&self) -> f64 {
        Spectrum::integration_time(self)
    }
    fn set_time(&mut self, t: f64) {
        self.set_integration_time(t)
    }
}

impl Timed for DataCube {
    fn integration_time(&self) -> f64 {
        DataCube::integration_time(self)
    }
    fn set_time(&mut self, t: f64) {
        self.set_integration_time(t)
    }
}

/// Conditioned spectrometer vector on the camera bands.
pub fn spectrometer_input(
    spectrometer: &DeviceSpec,
    mapping: &BandMapping,
    raw: &Spectrum,
) -> Result<Spectrum> {
    check_spectrometer_saturation(spectrometer, raw)?;
    downsample_spectrum(&condition(raw, spectrometer)?, mapping)
}

/// Builds a training record from a raw white-reference cube and the raw
/// spectrometer reading taken at the same moment.
pub fn calibration_sample(
    camera: &DeviceSpec,
    spectrometer: &DeviceSpec,
    mapping: &BandMapping,
    raw_white: &DataCube,
    raw_spec: &Spectrum,
    timestamp: f64,
) -> Result<CalibrationSample> {
    let s = spectrometer_input(spectrometer, mapping, raw_spec)?;
    let cube = condition(raw_white, camera)?;
    CalibrationSample::new(s, cube, timestamp)
}

/// Everything needed to turn raw camera frames into reflectance.
#[derive(Debug, Clone)]
pub struct CalibrationContext {
    camera: DeviceSpec,
    spectrometer: DeviceSpec,
    mapping: BandMapping,
    bank: PixelModelBank,
    policy: CalibrationPolicy,
}

impl CalibrationContext {
    pub fn new(camera: DeviceSpec, spectrometer: DeviceSpec, bank: PixelModelBank) -> Result<Self> {
        let mapping = build_band_mapping(spectrometer.grid(), camera.grid())?;
        Self::with_mapping(
            camera,
            spectrometer,
            mapping,
            bank,
            CalibrationPolicy::default(),
        )
    }

    pub fn with_mapping(
        camera: DeviceSpec,
        spectrometer: DeviceSpec,
        mapping: BandMapping,
        bank: PixelModelBank,
        policy: CalibrationPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        if bank.bands() != camera.grid().len() {
            return Err(Error::Config(format!(
                "bank predicts {} bands, camera '{}' has {}",
                bank.bands(),
                camera.name(),
                camera.grid().len()
            )));
        }
        if bank.target_grid() != camera.grid() {
            return Err(Error::GridMismatch {
                expected: camera.grid().to_string(),
                found: bank.target_grid().to_string(),
            });
        }
        if mapping.target_grid() != camera.grid() || mapping.source_grid() != spectrometer.grid() {
            return Err(Error::Config(
                "band mapping does not connect the spectrometer grid to the camera grid".into(),
            ));
        }
        for d in [&camera, &spectrometer] {
            if d.dark_reference().is_none() {
                return Err(Error::Config(format!(
                    "device '{}' has no dark reference",
                    d.name()
                )));
            }
        }
        Ok(Self {
            camera,
            spectrometer,
            mapping,
            bank,
            policy,
        })
    }

    pub fn set_policy(&mut self, policy: CalibrationPolicy) -> Result<()> {
        policy.validate()?;
        self.policy = policy;
        Ok(())
    }

    pub fn policy(&self) -> &CalibrationPolicy {
        &self.policy
    }

    pub fn camera(&self) -> &DeviceSpec {
        &self.camera
    }

    pub fn spectrometer(&self) -> &DeviceSpec {
        &self.spectrometer
    }

    pub fn mapping(&self) -> &BandMapping {
        &self.mapping
    }

    pub fn bank(&self) -> &PixelModelBank {
        &self.bank
    }

    /// White-reference cube predicted from a raw spectrometer reading.
    pub fn predict_white(&self, raw_spec: &Spectrum) -> Result<DataCube> {
        self.bank.predict(&spectrometer_input(
            &self.spectrometer,
            &self.mapping,
            raw_spec,
        )?)
    }

    pub fn calibrate(&self, raw_cube: &DataCube, raw_spec: &Spectrum) -> Result<DataCube> {
        if (raw_cube.height(), raw_cube.width()) != (self.bank.height(), self.bank.width()) {
            return Err(Error::ShapeMismatch(format!(
                "cube is {}x{}, bank covers {}x{}",
                raw_cube.height(),
                raw_cube.width(),
                self.bank.height(),
                self.bank.width()
            )));
        }
        let white = self.predict_white(raw_spec)?;
        let signal = condition(raw_cube, &self.camera)?;

        let policy = self.policy;
        let bands = raw_cube.bands();
        let dark_shift: Option<Vec<f64>> = match policy.dark_term {
            DarkTerm::Conditioned => None,
            DarkTerm::Literal => {
                let t_scale = integration_scale(
                    self.camera.base_integration_time(),
                    raw_cube.integration_time(),
                )?;
                let dark = raw_cube.dark_counts(
                    self.camera
                        .dark_reference()
                        .expect("checked at construction"),
                )?;
                let d = self.camera.saturation();
                Some(dark.iter().map(|k| k / d * t_scale).collect())
            }
        };

        let mut out = vec![0.0; signal.values().len()];
        out.par_chunks_mut(bands)
            .zip(signal.values().par_chunks(bands))
            .zip(white.values().par_chunks(bands))
            .enumerate()
            .for_each(|(p, ((o, s), w))| {
                for b in 0..bands {
                    let den = match &dark_shift {
                        None => w[b],
                        Some(shift) => w[b] - shift[p * bands + b],
                    };
                    o[b] = policy.ratio(s[b], den);
                }
            });
        let mut cube = raw_cube.with_values(out, Unit::Reflectance);
        cube.set_integration_time(self.camera.base_integration_time());
        Ok(cube)
    }
}

/// Classic two-reference normalization `(signal - dark) / (white - dark)`
/// with the same floor and clipping as [`CalibrationContext::calibrate`].
pub fn calibrate_min_max(
    signal: &DataCube,
    white: &DataCube,
    dark: &DataCube,
    policy: &CalibrationPolicy,
) -> Result<DataCube> {
    policy.validate()?;
    signal.same_shape(white)?;
    signal.same_shape(dark)?;
    for c in [white, dark] {
        if c.unit() != signal.unit() {
            return Err(Error::Unit {
                expected: signal.unit().as_str().into(),
                found: c.unit().as_str().into(),
            });
        }
    }
    let out = signal
        .values()
        .par_iter()
        .zip(white.values().par_iter())
        .zip(dark.values().par_iter())
        .map(|((s, w), d)| policy.ratio(s - d, w - d))
        .collect();
    Ok(signal.with_values(out, Unit::Reflectance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{DarkReference, DeviceKind, SpectralRange, WavelengthGrid};
    use proptest::prelude::*;

    const D_CAM: f64 = 4095.0;
    const D_SPEC: f64 = 65535.0;

    fn cam_grid() -> WavelengthGrid {
        WavelengthGrid::linspace(660.0, 900.0, 6).unwrap()
    }

    fn devices(cam_dark: f64, spec_dark: f64) -> (DeviceSpec, DeviceSpec) {
        let g = cam_grid();
        let camera = DeviceSpec::new(
            "cam",
            DeviceKind::HsiCamera,
            SpectralRange::Vnir,
            g.clone(),
            D_CAM,
            0.5,
        )
        .unwrap()
        .with_dark(DarkReference::PerChannel(vec![cam_dark; g.len()]))
        .unwrap();
        // spectrometer sampled exactly at the camera bands
        let spec = DeviceSpec::new(
            "spec",
            DeviceKind::Spectrometer,
            SpectralRange::Vnir,
            g.clone(),
            D_SPEC,
            0.5,
        )
        .unwrap()
        .with_dark(DarkReference::PerChannel(vec![spec_dark; g.len()]))
        .unwrap();
        (camera, spec)
    }

    fn identity_context(h: usize, w: usize, cam_dark: f64, spec_dark: f64) -> CalibrationContext {
        let (camera, spec) = devices(cam_dark, spec_dark);
        let n = camera.grid().len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        let bank =
            PixelModelBank::uniform_linear(h, w, &m, &vec![0.0; n], camera.grid().clone()).unwrap();
        CalibrationContext::new(camera, spec, bank).unwrap()
    }

    fn spec_counts(levels: &[f64], t: f64) -> Spectrum {
        Spectrum::new(
            cam_grid(),
            levels.iter().map(|v| v * D_SPEC).collect(),
            t,
            Unit::DigitalCounts,
        )
        .unwrap()
    }

    /// Raw camera counts whose conditioned value is `level * white`.
    fn cube_counts(h: usize, w: usize, white: &[f64], level: f64, dark: f64, t: f64) -> DataCube {
        let t_gain = t / 0.5;
        let mut v = Vec::new();
        for _ in 0..h * w {
            v.extend(white.iter().map(|x| level * x * D_CAM * t_gain + dark));
        }
        DataCube::new(h, w, cam_grid(), v, t, Unit::DigitalCounts).unwrap()
    }

    const WHITE: [f64; 6] = [0.2, 0.3, 0.4, 0.5, 0.45, 0.35];

    #[test]
    fn white_level_gives_unit_reflectance() {
        let ctx = identity_context(3, 4, 0.0, 0.0);
        let r = ctx
            .calibrate(
                &cube_counts(3, 4, &WHITE, 1.0, 0.0, 0.5),
                &spec_counts(&WHITE, 0.5),
            )
            .unwrap();
        assert_eq!(r.unit(), Unit::Reflectance);
        assert!(r.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let r = ctx
            .calibrate(
                &cube_counts(3, 4, &WHITE, 0.5, 0.0, 0.5),
                &spec_counts(&WHITE, 0.5),
            )
            .unwrap();
        assert!(r.values().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn dark_is_removed_from_the_signal() {
        let ctx = identity_context(2, 2, 100.0, 0.0);
        let r = ctx
            .calibrate(
                &cube_counts(2, 2, &WHITE, 0.7, 100.0, 0.5),
                &spec_counts(&WHITE, 0.5),
            )
            .unwrap();
        assert!(r.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn doubling_exposure_leaves_reflectance_unchanged() {
        for dark in [0.0, 80.0] {
            let ctx = identity_context(2, 3, dark, 0.0);
            let s = spec_counts(&WHITE, 0.5);
            // signal doubles with exposure, the dark offset does not
            let a = ctx
                .calibrate(&cube_counts(2, 3, &WHITE, 0.6, dark, 0.5), &s)
                .unwrap();
            let b = ctx
                .calibrate(&cube_counts(2, 3, &WHITE, 0.6, dark, 1.0), &s)
                .unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn literal_dark_term_matches_default_without_dark() {
        let mut ctx = identity_context(2, 2, 0.0, 0.0);
        let cube = cube_counts(2, 2, &WHITE, 0.4, 0.0, 1.0);
        let s = spec_counts(&WHITE, 0.5);
        let a = ctx.calibrate(&cube, &s).unwrap();
        ctx.set_policy(CalibrationPolicy {
            dark_term: DarkTerm::Literal,
            ..CalibrationPolicy::default()
        })
        .unwrap();
        assert_eq!(a, ctx.calibrate(&cube, &s).unwrap());
    }

    #[test]
    fn saturated_spectrometer_is_refused() {
        let ctx = identity_context(2, 2, 0.0, 0.0);
        let mut levels = WHITE.to_vec();
        levels[2] = 1.0;
        let err = ctx
            .calibrate(
                &cube_counts(2, 2, &WHITE, 0.5, 0.0, 0.5),
                &spec_counts(&levels, 0.5),
            )
            .unwrap_err();
        assert!(matches!(err, Error::Saturation { count: 1, .. }));
    }

    #[test]
    fn context_requires_dark_and_matching_bank() {
        let (camera, spec) = devices(0.0, 0.0);
        let other = WavelengthGrid::linspace(600.0, 900.0, 6).unwrap();
        let bank = PixelModelBank::uniform_linear(1, 1, &[0.0; 36], &[0.0; 6], other).unwrap();
        assert!(CalibrationContext::new(camera.clone(), spec.clone(), bank).is_err());

        let bare = DeviceSpec::new(
            "cam",
            DeviceKind::HsiCamera,
            SpectralRange::Vnir,
            cam_grid(),
            D_CAM,
            0.5,
        )
        .unwrap();
        let bank = PixelModelBank::uniform_linear(1, 1, &[0.0; 36], &[0.0; 6], cam_grid()).unwrap();
        assert!(matches!(
            CalibrationContext::new(bare, spec, bank),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn min_max_examples() {
        let g = cam_grid();
        let mk = |v: f64| DataCube::filled(2, 2, g.clone(), v, 1.0, Unit::Normalized).unwrap();
        let p = CalibrationPolicy::default();
        let (white, dark) = (mk(0.8), mk(0.1));
        assert!(calibrate_min_max(&white, &white, &dark, &p)
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 1.0));
        assert!(calibrate_min_max(&dark, &white, &dark, &p)
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
        let small = DataCube::filled(1, 2, g.clone(), 0.3, 1.0, Unit::Normalized).unwrap();
        assert!(calibrate_min_max(&small, &white, &dark, &p).is_err());
    }

    #[test]
    fn min_max_agrees_with_bank_path() {
        let cam_dark = 60.0;
        let ctx = identity_context(2, 3, cam_dark, 0.0);
        let s = spec_counts(&WHITE, 0.5);
        let cube = cube_counts(2, 3, &WHITE, 0.55, cam_dark, 0.5);
        let via_bank = ctx.calibrate(&cube, &s).unwrap();

        let dark_norm = cam_dark / D_CAM;
        let white = ctx.predict_white(&s).unwrap();
        let white = DataCube::new(
            2,
            3,
            cam_grid(),
            white.values().iter().map(|w| w + dark_norm).collect(),
            0.5,
            Unit::Normalized,
        )
        .unwrap();
        let dark = DataCube::filled(2, 3, cam_grid(), dark_norm, 0.5, Unit::Normalized).unwrap();
        let signal = normalize_counts(&cube, ctx.camera()).unwrap();
        let baseline = calibrate_min_max(&signal, &white, &dark, ctx.policy()).unwrap();
        for (a, b) in via_bank.values().iter().zip(baseline.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn output_is_bounded_and_finite(
            raw in prop::collection::vec(prop_oneof![Just(0.0), Just(D_CAM), Just(D_CAM - 1.0), 0.0..D_CAM], 24),
            spec in prop::collection::vec(prop_oneof![Just(0.0), Just(D_SPEC - 1.0), 0.0..D_SPEC - 1.0], 6),
            cam_dark in prop_oneof![Just(0.0), Just(D_CAM), 0.0..D_CAM],
            t in prop_oneof![Just(1e-6), 0.01f64..100.0],
        ) {
            let ctx = identity_context(2, 2, cam_dark, 0.0);
            let cube = DataCube::new(2, 2, cam_grid(), raw, t, Unit::DigitalCounts).unwrap();
            let s = Spectrum::new(cam_grid(), spec, 0.5, Unit::DigitalCounts).unwrap();
            let r = ctx.calibrate(&cube, &s).unwrap();
            prop_assert!(r.values().iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= DEFAULT_CLIP_MAX));
        }

        #[test]
        fn scaling_counts_scales_reflectance(level in 0.01f64..0.2, k in 0.1f64..4.0) {
            let mut ctx = identity_context(1, 2, 0.0, 0.0);
            ctx.set_policy(CalibrationPolicy { clip_max: 1e9, ..CalibrationPolicy::default() }).unwrap();
            let s = spec_counts(&WHITE, 0.5);
            let base = cube_counts(1, 2, &WHITE, level, 0.0, 0.5);
            let scaled = DataCube::new(1, 2, cam_grid(), base.values().iter().map(|v| v * k).collect(), 0.5, Unit::DigitalCounts).unwrap();
            let a = ctx.calibrate(&base, &s).unwrap();
            let b = ctx.calibrate(&scaled, &s).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((k * x - y).abs() <= 1e-12 * y.max(1.0));
            }
        }

        #[test]
        fn raising_one_value_never_lowers_its_reflectance(idx in 0usize..12, bump in 0.0f64..500.0, level in 0.0f64..1.2) {
            let ctx = identity_context(1, 2, 30.0, 0.0);
            let s = spec_counts(&WHITE, 0.5);
            let base = cube_counts(1, 2, &WHITE, level, 30.0, 0.5);
            let mut v = base.values().to_vec();
            v[idx] = (v[idx] + bump).min(D_CAM);
            let raised = DataCube::new(1, 2, cam_grid(), v, 0.5, Unit::DigitalCounts).unwrap();
            let a = ctx.calibrate(&base, &s).unwrap();
            let b = ctx.calibrate(&raised, &s).unwrap();
            prop_assert!(b.values()[idx] >= a.values()[idx]);
        }
    }
}
