//! Synthetic rig, scenes and renders with known ground truth.
//!
//! Illumination lives on a fine wavelength grid and is sampled at band
//! centers by linear interpolation. Natural illumination is drawn from a
//! five-parameter linear family (level, spectral tilt, absorption depth,
//! diffuse sky), so a per-pixel affine map from spectrometer to camera exists
//! exactly and noiseless data can be used as an oracle for the regression.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    presets, DarkReference, DataCube, DeviceSpec, SpectralRange, Spectrum, Unit, WavelengthGrid,
};

/// Fine grid the illumination is defined on: 350 to 1800 nm in 2 nm steps.
pub fn illumination_grid() -> WavelengthGrid {
    WavelengthGrid::linspace(350.0, 1800.0, 726).expect("static grid")
}

/// Water-absorption notches (center nm, width nm, depth at full strength).
const NOTCHES: [(f64, f64, f64); 3] = [
    (940.0, 20.0, 0.45),
    (1195.0, 14.0, 0.86),
    (1400.0, 30.0, 0.92),
];

fn planck_shape(lambda_nm: f64) -> f64 {
    // 5778 K blackbody, normalized to its peak
    const C2: f64 = 1.4388e7; // nm K
    const T: f64 = 5778.0;
    let peak = 2.8978e6 / T;
    let b = |l: f64| l.powi(-5) / ((C2 / (l * T)).exp() - 1.0);
    b(lambda_nm) / b(peak)
}

fn absorption(lambda_nm: f64) -> f64 {
    NOTCHES
        .iter()
        .map(|(c, w, d)| d * (-0.5 * ((lambda_nm - c) / w).powi(2)).exp())
        .sum()
}

fn sky_shape(lambda_nm: f64) -> f64 {
    (450.0 / lambda_nm).powi(4)
}

/// Parameters of one natural illumination condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationState {
    /// Overall irradiance relative to full sun.
    pub level: f64,
    /// Linear spectral tilt across 350 to 1800 nm.
    pub tilt: f64,
    /// Scales the depth of every absorption notch.
    pub absorption: f64,
    /// Diffuse-sky component added on top of the direct beam.
    pub sky: f64,
}

impl Default for IlluminationState {
    fn default() -> Self {
        Self {
            level: 1.0,
            tilt: 0.0,
            absorption: 1.0,
            sky: 0.05,
        }
    }
}

impl IlluminationState {
    /// Conditions from overcast to full sun.
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            level: rng.random_range(0.1..1.0),
            tilt: rng.random_range(-0.3..0.3),
            absorption: rng.random_range(0.6..1.0),
            sky: rng.random_range(0.0..0.15),
        }
    }

    pub fn power(&self, lambda_nm: f64) -> f64 {
        let x = (lambda_nm - 1075.0) / 725.0;
        let direct = planck_shape(lambda_nm)
            * (1.0 + self.tilt * x)
            * (1.0 - self.absorption * absorption(lambda_nm));
        self.level * (direct + self.sky * sky_shape(lambda_nm))
    }

    pub fn spectrum(&self) -> Spectrum {
        let grid = illumination_grid();
        let values = grid
            .centers()
            .iter()
            .map(|&l| self.power(l).max(0.0))
            .collect();
        Spectrum::new(grid, values, 1.0, Unit::Normalized)
            .expect("illumination is finite and positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlluminationKind {
    Flat,
    SolarLike,
    /// Solar-like at 8% of the level.
    Dim,
}

pub const DIM_FACTOR: f64 = 0.08;

/// Relative spectral power on [`illumination_grid`]. The seed jitters the
/// solar-like conditions slightly; flat illumination ignores it.
pub fn make_illumination(kind: IlluminationKind, seed: u64) -> Spectrum {
    let state = solar_state(seed);
    match kind {
        IlluminationKind::Flat => {
            let grid = illumination_grid();
            let n = grid.len();
            Spectrum::new(grid, vec![1.0; n], 1.0, Unit::Normalized).expect("static")
        }
        IlluminationKind::SolarLike => state.spectrum(),
        IlluminationKind::Dim => IlluminationState {
            level: state.level * DIM_FACTOR,
            ..state
        }
        .spectrum(),
    }
}

fn solar_state(seed: u64) -> IlluminationState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0050_11A4);
    IlluminationState {
        level: 1.0,
        tilt: rng.random_range(-0.05..0.05),
        absorption: rng.random_range(0.9..1.0),
        sky: rng.random_range(0.03..0.07),
    }
}

/// Linear interpolation of `s` at `lambda_nm`; the spectrum's grid must cover it.
pub fn sample_at(s: &Spectrum, lambda_nm: f64) -> Result<f64> {
    let c = s.grid().centers();
    if lambda_nm < c[0] || lambda_nm > c[c.len() - 1] {
        return Err(Error::SpanViolation {
            source_min: c[0],
            source_max: c[c.len() - 1],
            uncovered: vec![lambda_nm],
        });
    }
    let hi = c.partition_point(|&x| x < lambda_nm).min(c.len() - 1);
    if hi == 0 || c[hi] == lambda_nm {
        return Ok(s.values()[hi]);
    }
    let lo = hi - 1;
    let f = (lambda_nm - c[lo]) / (c[hi] - c[lo]);
    Ok(s.values()[lo] * (1.0 - f) + s.values()[hi] * f)
}

fn sample_grid(s: &Spectrum, grid: &WavelengthGrid) -> Result<Vec<f64>> {
    grid.centers().iter().map(|&l| sample_at(s, l)).collect()
}

/// Detector quantum efficiency of a camera (`true`) or spectrometer.
pub fn quantum_efficiency(range: SpectralRange, camera: bool, lambda_nm: f64) -> f64 {
    let g = |c: f64, w: f64| (-0.5 * ((lambda_nm - c) / w).powi(2)).exp();
    match (range, camera) {
        (SpectralRange::Vnir, true) => 0.35 + 0.45 * g(760.0, 140.0),
        (SpectralRange::Vnir, false) => 0.25 + 0.55 * g(650.0, 200.0),
        (SpectralRange::Swir, true) => 0.55 + 0.3 * g(1350.0, 250.0),
        (SpectralRange::Swir, false) => 0.5 + 0.35 * g(1300.0, 300.0),
    }
}

/// Radial falloff `1 - 0.35 (r / r_max)^2`, with `r_max` the center-to-corner distance.
pub fn vignette(height: usize, width: usize) -> Vec<f64> {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let rmax2 = (cy * cy + cx * cx).max(f64::MIN_POSITIVE);
    let mut v = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
            v.push(1.0 - 0.35 * d2 / rmax2);
        }
    }
    v
}

pub const DEVICE_GAIN: f64 = 0.7;

/// A camera and spectrometer pair with the hidden responses used to render data.
#[derive(Debug, Clone)]
pub struct SyntheticRig {
    pub range: SpectralRange,
    pub height: usize,
    pub width: usize,
    /// Device descriptions as a user would see them; dark references are
    /// attached by [`SyntheticRig::attach_darks`].
    pub camera: DeviceSpec,
    pub spectrometer: DeviceSpec,
    pub camera_qe: Vec<f64>,
    pub spectrometer_qe: Vec<f64>,
    /// True dark counts, `H x W x bands`.
    pub camera_dark: Vec<f64>,
    /// True dark counts per spectrometer channel.
    pub spectrometer_dark: Vec<f64>,
    pub vignette: Vec<f64>,
    pub gain: f64,
}

impl SyntheticRig {
    /// Preset devices for `range` with a seeded fixed-pattern dark.
    pub fn new(range: SpectralRange, height: usize, width: usize, seed: u64) -> Result<Self> {
        let (camera, spectrometer) = presets::pair(range);
        Self::from_devices(camera, spectrometer, height, width, seed)
    }

    pub fn from_devices(
        camera: DeviceSpec,
        spectrometer: DeviceSpec,
        height: usize,
        width: usize,
        seed: u64,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ShapeMismatch("rig needs a non-empty sensor".into()));
        }
        let range = camera.range();
        let ill = illumination_grid();
        for d in [&camera, &spectrometer] {
            if d.grid().min() < ill.min() || d.grid().max() > ill.max() {
                return Err(Error::SpanViolation {
                    source_min: ill.min(),
                    source_max: ill.max(),
                    uncovered: vec![d.grid().min(), d.grid().max()],
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDA4C);
        let (dc, ds) = (camera.saturation(), spectrometer.saturation());
        let bands = camera.grid().len();
        let camera_dark = (0..height * width * bands)
            .map(|_| dc * (0.015 + rng.random_range(-0.003..0.003)))
            .collect();
        let spectrometer_dark = (0..spectrometer.grid().len())
            .map(|_| ds * (0.01 + rng.random_range(-0.002..0.002)))
            .collect();
        Ok(Self {
            range,
            height,
            width,
            camera_qe: camera
                .grid()
                .centers()
                .iter()
                .map(|&l| quantum_efficiency(range, true, l))
                .collect(),
            spectrometer_qe: spectrometer
                .grid()
                .centers()
                .iter()
                .map(|&l| quantum_efficiency(range, false, l))
                .collect(),
            camera,
            spectrometer,
            camera_dark,
            spectrometer_dark,
            vignette: vignette(height, width),
            gain: DEVICE_GAIN,
        })
    }

    /// Removes the dark offset entirely; useful for exact algebraic checks.
    pub fn without_dark(mut self) -> Self {
        self.camera_dark.iter_mut().for_each(|d| *d = 0.0);
        self.spectrometer_dark.iter_mut().for_each(|d| *d = 0.0);
        self
    }

    pub fn bands(&self) -> usize {
        self.camera.grid().len()
    }

    /// Capped-aperture frames: true dark plus read noise, clipped to `[0, D]`.
    pub fn dark_frames(
        &self,
        frames: usize,
        sigma: f64,
        seed: u64,
    ) -> Result<(Vec<DataCube>, Vec<Spectrum>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam_sigma = sigma;
        let spec_sigma = self.spectrometer_sigma(sigma);
        let (dc, ds) = (self.camera.saturation(), self.spectrometer.saturation());
        let mut cubes = Vec::with_capacity(frames);
        let mut spectra = Vec::with_capacity(frames);
        for _ in 0..frames {
            let v = self
                .camera_dark
                .iter()
                .map(|d| (d + gaussian(&mut rng, cam_sigma)).clamp(0.0, dc))
                .collect();
            cubes.push(DataCube::new(
                self.height,
                self.width,
                self.camera.grid().clone(),
                v,
                self.camera.base_integration_time(),
                Unit::DigitalCounts,
            )?);
            let v = self
                .spectrometer_dark
                .iter()
                .map(|d| (d + gaussian(&mut rng, spec_sigma)).clamp(0.0, ds))
                .collect();
            spectra.push(Spectrum::new(
                self.spectrometer.grid().clone(),
                v,
                self.spectrometer.base_integration_time(),
                Unit::DigitalCounts,
            )?);
        }
        Ok((cubes, spectra))
    }

    /// Stores minimum-over-frames dark references on both devices.
    pub fn attach_darks(&mut self, cubes: &[DataCube], spectra: &[Spectrum]) -> Result<()> {
        self.camera = self
            .camera
            .clone()
            .with_dark(DarkReference::from_cube_frames(cubes)?)?;
        self.spectrometer = self
            .spectrometer
            .clone()
            .with_dark(DarkReference::from_spectrum_frames(spectra)?)?;
        Ok(())
    }

    /// Spectrometer read noise at the same relative level as camera noise `sigma`.
    pub fn spectrometer_sigma(&self, sigma: f64) -> f64 {
        sigma * self.spectrometer.saturation() / self.camera.saturation()
    }

    /// Mean noiseless dark-free camera counts of the white tile under `illumination`
    /// at base exposure.
    pub fn mean_white_counts(&self, illumination: &Spectrum) -> Result<f64> {
        let e = sample_grid(illumination, self.camera.grid())?;
        let band_mean: f64 = e
            .iter()
            .zip(&self.camera_qe)
            .map(|(e, q)| e * q)
            .sum::<f64>()
            / e.len() as f64;
        let v_mean = self.vignette.iter().sum::<f64>() / self.vignette.len() as f64;
        Ok(self.camera.saturation() * self.gain * v_mean * band_mean)
    }

    /// Camera read noise (counts) giving `snr_db` against the mean white signal
    /// under full solar-like illumination.
    pub fn sigma_for_snr(&self, snr_db: f64) -> Result<f64> {
        let reference =
            self.mean_white_counts(&make_illumination(IlluminationKind::SolarLike, 0))?;
        Ok(reference / 10f64.powf(snr_db / 20.0))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Vegetation,
    Soil,
    Water,
    Gray,
    WhiteTile,
}

impl Material {
    pub fn reflectance(self, lambda_nm: f64) -> f64 {
        let l = lambda_nm;
        let g = |c: f64, w: f64| (-0.5 * ((l - c) / w).powi(2)).exp();
        match self {
            Material::Vegetation => {
                let edge = 1.0 / (1.0 + (-(l - 715.0) / 12.0).exp());
                let visible = 0.04 + 0.06 * g(550.0, 30.0);
                let nir = 0.5 - 0.12 * ((l - 900.0) / 800.0).max(0.0);
                let water = 1.0 - 0.45 * g(1450.0, 60.0) - 0.2 * g(1200.0, 40.0);
                (visible + (nir - visible) * edge) * water
            }
            Material::Soil => {
                (0.14 + 0.22 * ((l - 400.0) / 1400.0).clamp(0.0, 1.0))
                    * (1.0 - 0.1 * g(1420.0, 50.0))
            }
            Material::Water => 0.02 + 0.04 * (-(l - 450.0) / 150.0).exp().min(1.0),
            Material::Gray => 0.5,
            Material::WhiteTile => 1.0,
        }
    }
}

/// Ground truth for one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub height: usize,
    pub width: usize,
    /// Camera band centers the reflectance is sampled at.
    pub grid: WavelengthGrid,
    /// `H x W x bands`, in `[0, 1]`.
    pub reflectance: Vec<f64>,
    pub illumination: Spectrum,
    pub vignette: Vec<f64>,
    /// Camera read noise in counts.
    pub noise_sigma: f64,
    pub labels: Vec<Material>,
    /// Relative humidity in percent, for moisture testbeds.
    pub moisture: Option<Vec<f64>>,
}

impl SyntheticScene {
    pub fn reflectance_cube(&self) -> DataCube {
        DataCube::new(
            self.height,
            self.width,
            self.grid.clone(),
            self.reflectance.clone(),
            1.0,
            Unit::Reflectance,
        )
        .expect("scene reflectance is valid")
    }

    fn check(&self) -> Result<()> {
        if self.reflectance.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Domain("scene reflectance outside [0, 1]".into()));
        }
        if self.vignette.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(Error::Domain("vignette outside (0, 1]".into()));
        }
        Ok(())
    }
}

fn uniform_scene(
    rig: &SyntheticRig,
    material: Material,
    illumination: Spectrum,
    noise_sigma: f64,
) -> SyntheticScene {
    let r: Vec<f64> = rig
        .camera
        .grid()
        .centers()
        .iter()
        .map(|&l| material.reflectance(l))
        .collect();
    SyntheticScene {
        height: rig.height,
        width: rig.width,
        grid: rig.camera.grid().clone(),
        reflectance: r.repeat(rig.height * rig.width),
        illumination,
        vignette: rig.vignette.clone(),
        noise_sigma,
        labels: vec![material; rig.height * rig.width],
        moisture: None,
    }
}

/// The white tile filling the field of view.
pub fn white_scene(rig: &SyntheticRig, illumination: Spectrum, noise_sigma: f64) -> SyntheticScene {
    uniform_scene(rig, Material::WhiteTile, illumination, noise_sigma)
}

/// Field scene: soil background with vegetation patches and a pond, plus a
/// few percent of per-pixel texture.
pub fn make_scene(
    rig: &SyntheticRig,
    illumination: Spectrum,
    noise_sigma: f64,
    seed: u64,
) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (rig.height as f64, rig.width as f64);
    let size = h.min(w);
    let patches: Vec<(f64, f64, f64)> = (0..rng.random_range(3..6))
        .map(|_| {
            (
                rng.random_range(0.0..h),
                rng.random_range(0.0..w),
                rng.random_range(0.15..0.3) * size,
            )
        })
        .collect();
    let pond = (
        h * rng.random_range(0.6..0.85),
        w * rng.random_range(0.05..0.3),
        0.18 * size,
    );

    let centers = rig.camera.grid().centers();
    let mut reflectance = Vec::with_capacity(rig.height * rig.width * centers.len());
    let mut labels = Vec::with_capacity(rig.height * rig.width);
    for r in 0..rig.height {
        for c in 0..rig.width {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let inside =
                |(py, px, pr): (f64, f64, f64)| (y - py).powi(2) + (x - px).powi(2) <= pr * pr;
            let m = if inside(pond) {
                Material::Water
            } else if patches.iter().any(|p| inside(*p)) {
                Material::Vegetation
            } else {
                Material::Soil
            };
            let texture = 1.0 + rng.random_range(-0.03..0.03);
            reflectance.extend(
                centers
                    .iter()
                    .map(|&l| (m.reflectance(l) * texture).clamp(0.0, 1.0)),
            );
            labels.push(m);
        }
    }
    SyntheticScene {
        height: rig.height,
        width: rig.width,
        grid: rig.camera.grid().clone(),
        reflectance,
        illumination,
        vignette: rig.vignette.clone(),
        noise_sigma,
        labels,
        moisture: None,
    }
}

pub const TESTBED_MAX_RH: f64 = 48.1;
/// Wavelength of the moisture absorption built into the testbed sand.
pub const MOISTURE_DIP_NM: f64 = 1300.0;

/// Relative reflectance drop at the dip center per percent humidity.
const DIP_PER_RH: f64 = 0.45 / TESTBED_MAX_RH;
/// Broadband albedo loss per percent humidity.
const ALBEDO_PER_RH: f64 = 0.05 / TESTBED_MAX_RH;

/// Sand reflectance at `lambda_nm` for relative humidity `rh` (percent).
pub fn wet_sand(lambda_nm: f64, rh: f64) -> f64 {
    let dip = (-0.5 * ((lambda_nm - MOISTURE_DIP_NM) / 22.0).powi(2)).exp();
    let dry = 0.3 + 0.12 * ((lambda_nm - 1000.0) / 700.0).clamp(0.0, 1.0);
    dry * (1.0 - ALBEDO_PER_RH * rh) * (1.0 - DIP_PER_RH * rh * dip)
}

/// A 3 x 3 grid of sand boxes, each `cell_px` pixels square, watered to the
/// given relative humidities (row-major).
pub fn make_moisture_testbed(
    grid: &WavelengthGrid,
    rh_levels: &[f64],
    cell_px: usize,
    illumination: Spectrum,
    noise_sigma: f64,
) -> Result<SyntheticScene> {
    if rh_levels.len() != 9 {
        return Err(Error::Config(format!(
            "testbed needs 9 humidity levels, got {}",
            rh_levels.len()
        )));
    }
    if let Some(rh) = rh_levels
        .iter()
        .find(|rh| !(0.0..=TESTBED_MAX_RH).contains(*rh))
    {
        return Err(Error::Domain(format!(
            "humidity {rh}% outside [0, {TESTBED_MAX_RH}]"
        )));
    }
    if cell_px == 0 {
        return Err(Error::Config(
            "testbed cells need at least one pixel".into(),
        ));
    }
    let side = 3 * cell_px;
    let mut reflectance = Vec::with_capacity(side * side * grid.len());
    let mut moisture = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let rh = rh_levels[(r / cell_px) * 3 + c / cell_px];
            reflectance.extend(grid.centers().iter().map(|&l| wet_sand(l, rh)));
            moisture.push(rh);
        }
    }
    let scene = SyntheticScene {
        height: side,
        width: side,
        grid: grid.clone(),
        reflectance,
        illumination,
        vignette: vec![1.0; side * side],
        noise_sigma,
        labels: vec![Material::Soil; side * side],
        moisture: Some(moisture),
    };
    scene.check()?;
    Ok(scene)
}

/// Evenly spaced humidities from dry to the testbed maximum.
pub fn default_rh_levels() -> Vec<f64> {
    (0..9).map(|i| TESTBED_MAX_RH * i as f64 / 8.0).collect()
}

/// Raw device outputs of one render plus the noiseless white reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    /// Camera digital counts.
    pub cube: DataCube,
    /// Spectrometer digital counts (viewing the white tile).
    pub spectrum: Spectrum,
    /// Dark-free white-tile response at base exposure, normalized by `D`.
    pub white_truth: DataCube,
}

/// Renders `scene` through `rig` at the given exposures.
pub fn render(
    scene: &SyntheticScene,
    rig: &SyntheticRig,
    t_cam: f64,
    t_spec: f64,
    seed: u64,
) -> Result<Render> {
    scene.check()?;
    if (scene.height, scene.width) != (rig.height, rig.width) || &scene.grid != rig.camera.grid() {
        return Err(Error::ShapeMismatch(
            "scene does not match the rig's camera".into(),
        ));
    }
    if !(t_cam > 0.0 && t_spec > 0.0) {
        return Err(Error::Domain("integration times must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = rig.bands();
    let dc = rig.camera.saturation();
    let e_cam = sample_grid(&scene.illumination, rig.camera.grid())?;
    let e_spec = sample_grid(&scene.illumination, rig.spectrometer.grid())?;
    let cam_exposure = t_cam / rig.camera.base_integration_time();

    let mut white = Vec::with_capacity(scene.reflectance.len());
    let mut counts = Vec::with_capacity(scene.reflectance.len());
    for p in 0..scene.height * scene.width {
        for b in 0..bands {
            let i = p * bands + b;
            let w = rig.gain * scene.vignette[p] * e_cam[b] * rig.camera_qe[b];
            white.push(w);
            let x = dc * w * scene.reflectance[i] * cam_exposure
                + rig.camera_dark[i]
                + gaussian(&mut rng, scene.noise_sigma);
            counts.push(x.clamp(0.0, dc));
        }
    }

    let ds = rig.spectrometer.saturation();
    let spec_exposure = t_spec / rig.spectrometer.base_integration_time();
    let spec_sigma = rig.spectrometer_sigma(scene.noise_sigma);
    let spec: Vec<f64> = e_spec
        .iter()
        .zip(&rig.spectrometer_qe)
        .zip(&rig.spectrometer_dark)
        .map(|((e, q), d)| {
            (ds * rig.gain * e * q * spec_exposure + d + gaussian(&mut rng, spec_sigma))
                .clamp(0.0, ds)
        })
        .collect();

    Ok(Render {
        cube: DataCube::new(
            scene.height,
            scene.width,
            scene.grid.clone(),
            counts,
            t_cam,
            Unit::DigitalCounts,
        )?,
        spectrum: Spectrum::new(
            rig.spectrometer.grid().clone(),
            spec,
            t_spec,
            Unit::DigitalCounts,
        )?,
        white_truth: DataCube::new(
            scene.height,
            scene.width,
            scene.grid.clone(),
            white,
            rig.camera.base_integration_time(),
            Unit::Normalized,
        )?,
    })
}

/// One simultaneous white-tile capture for training.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteCapture {
    pub state: IlluminationState,
    pub render: Render,
}

/// Camera exposure that keeps the brightest white pixel below ~85% of full scale.
fn safe_exposure(rig: &SyntheticRig, illumination: &Spectrum) -> Result<f64> {
    let e = sample_grid(illumination, rig.camera.grid())?;
    let peak = e
        .iter()
        .zip(&rig.camera_qe)
        .map(|(e, q)| e * q)
        .fold(0.0, f64::max)
        * rig.gain;
    let base = rig.camera.base_integration_time();
    // longer exposures in dim light, in whole multiples of the base time
    let factor = (0.85 / peak.max(1e-12)).floor().clamp(1.0, 4.0);
    Ok(base * factor)
}

/// White-tile captures under `n` random illumination conditions.
pub fn make_training_set(
    rig: &SyntheticRig,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<WhiteCapture>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let state = IlluminationState::random(&mut rng);
            let ill = state.spectrum();
            let t_cam = safe_exposure(rig, &ill)?;
            let scene = white_scene(rig, ill, noise_sigma);
            let render = render(
                &scene,
                rig,
                t_cam,
                rig.spectrometer.base_integration_time(),
                rng.random(),
            )?;
            Ok(WhiteCapture { state, render })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::condition;

    #[test]
    fn flat_is_flat_and_dim_is_scaled() {
        let f = make_illumination(IlluminationKind::Flat, 3);
        assert!(f.values().iter().all(|v| *v == f.values()[0]));
        assert!(f.len() >= 128);
        let s = make_illumination(IlluminationKind::SolarLike, 3);
        let d = make_illumination(IlluminationKind::Dim, 3);
        for (a, b) in s.values().iter().zip(d.values()) {
            assert!((b - DIM_FACTOR * a).abs() <= 1e-15 * a.max(1.0));
        }
        assert!(s.values().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn solar_notch_at_1195() {
        for seed in 0..5 {
            let s = make_illumination(IlluminationKind::SolarLike, seed);
            let at = sample_at(&s, 1195.0).unwrap();
            let neighbours =
                (sample_at(&s, 1145.0).unwrap() + sample_at(&s, 1245.0).unwrap()) / 2.0;
            assert!(at < 0.3 * neighbours, "{at} vs {neighbours}");
            let at = sample_at(&s, 1400.0).unwrap();
            let neighbours =
                (sample_at(&s, 1300.0).unwrap() + sample_at(&s, 1500.0).unwrap()) / 2.0;
            assert!(at < 0.3 * neighbours);
        }
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linear_between() {
        let g = WavelengthGrid::new(vec![400.0, 402.0, 404.0]).unwrap();
        let s = Spectrum::new(g, vec![1.0, 3.0, 2.0], 1.0, Unit::Normalized).unwrap();
        assert_eq!(sample_at(&s, 402.0).unwrap(), 3.0);
        assert_eq!(sample_at(&s, 401.0).unwrap(), 2.0);
        assert_eq!(sample_at(&s, 404.0).unwrap(), 2.0);
        assert!(sample_at(&s, 405.0).is_err());
    }

    #[test]
    fn vignette_range() {
        let v = vignette(16, 16);
        assert!(v.iter().all(|x| *x > 0.64 && *x <= 1.0));
        assert!((v[0] - 0.65).abs() < 1e-12);
        assert_eq!(vignette(1, 1), vec![1.0]);
    }

    fn flat_rig() -> SyntheticRig {
        SyntheticRig::new(SpectralRange::Vnir, 4, 5, 1).unwrap()
    }

    #[test]
    fn noiseless_white_render_equals_truth() {
        let mut rig = flat_rig().without_dark();
        rig.vignette = vec![1.0; 20];
        let scene = white_scene(&rig, make_illumination(IlluminationKind::Flat, 0), 0.0);
        let r = render(&scene, &rig, 0.5, 0.5, 9).unwrap();
        for (c, w) in r.cube.values().iter().zip(r.white_truth.values()) {
            assert_eq!(c / 4095.0, *w);
        }
    }

    #[test]
    fn white_truth_matches_closed_form() {
        let rig = flat_rig();
        let ill = make_illumination(IlluminationKind::SolarLike, 2);
        let r = render(&white_scene(&rig, ill.clone(), 0.0), &rig, 0.5, 0.5, 1).unwrap();
        let centers = rig.camera.grid().centers();
        for p in 0..20 {
            for (b, &l) in centers.iter().enumerate() {
                let expected = 0.7
                    * rig.vignette[p]
                    * sample_at(&ill, l).unwrap()
                    * quantum_efficiency(SpectralRange::Vnir, true, l);
                assert!((r.white_truth.values()[p * 24 + b] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn halving_exposure_halves_dark_free_counts() {
        let rig = flat_rig();
        let scene = make_scene(
            &rig,
            make_illumination(IlluminationKind::SolarLike, 0),
            0.0,
            4,
        );
        let a = render(&scene, &rig, 0.5, 0.5, 1).unwrap();
        let b = render(&scene, &rig, 0.25, 0.5, 1).unwrap();
        for ((x, y), d) in a
            .cube
            .values()
            .iter()
            .zip(b.cube.values())
            .zip(&rig.camera_dark)
        {
            assert!(((x - d) / 2.0 - (y - d)).abs() < 1e-9);
        }
    }

    #[test]
    fn render_is_seeded_and_bounded() {
        let rig = flat_rig();
        let scene = make_scene(
            &rig,
            make_illumination(IlluminationKind::SolarLike, 0),
            400.0,
            4,
        );
        let a = render(&scene, &rig, 0.5, 0.5, 11).unwrap();
        assert_eq!(a, render(&scene, &rig, 0.5, 0.5, 11).unwrap());
        assert_ne!(a.cube, render(&scene, &rig, 0.5, 0.5, 12).unwrap().cube);
        assert!(a.cube.values().iter().all(|v| (0.0..=4095.0).contains(v)));
        assert!(a
            .spectrum
            .values()
            .iter()
            .all(|v| (0.0..=65535.0).contains(v)));
    }

    #[test]
    fn conditioned_white_capture_recovers_truth() {
        let mut rig = flat_rig();
        let (cubes, spectra) = rig.dark_frames(3, 0.0, 5).unwrap();
        rig.attach_darks(&cubes, &spectra).unwrap();
        for cap in make_training_set(&rig, 5, 0.0, 3).unwrap() {
            let c = condition(&cap.render.cube, &rig.camera).unwrap();
            for (a, b) in c.values().iter().zip(cap.render.white_truth.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_scene_has_all_materials() {
        let rig = SyntheticRig::new(SpectralRange::Vnir, 32, 32, 1).unwrap();
        let s = make_scene(
            &rig,
            make_illumination(IlluminationKind::SolarLike, 0),
            0.0,
            8,
        );
        for m in [Material::Vegetation, Material::Soil, Material::Water] {
            assert!(s.labels.contains(&m), "{m:?} missing");
        }
        assert!(s.reflectance.iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn testbed_dips_with_humidity() {
        let grid = presets::swir_camera_grid();
        let ill = make_illumination(IlluminationKind::SolarLike, 0);
        let bed = make_moisture_testbed(&grid, &default_rh_levels(), 2, ill.clone(), 0.0).unwrap();
        let b1300 = grid.lookup_band(1300.0).unwrap();
        let dry = bed.reflectance_cube().get(0, 0, b1300);
        let wet = bed.reflectance_cube().get(5, 5, b1300);
        assert!(dry > wet);
        let flat = make_moisture_testbed(&grid, &[0.0; 9], 2, ill.clone(), 0.0).unwrap();
        let first = flat.reflectance_cube().pixel(0, 0).to_vec();
        assert!(flat
            .reflectance_cube()
            .pixels()
            .all(|p| p == first.as_slice()));
        assert!(make_moisture_testbed(&grid, &[50.0; 9], 2, ill.clone(), 0.0).is_err());
        assert!(make_moisture_testbed(&grid, &[1.0; 8], 2, ill, 0.0).is_err());
    }

    #[test]
    fn materials_have_expected_ndvi_signs() {
        let nd = |m: Material| {
            let (n, r) = (m.reflectance(901.0), m.reflectance(661.0));
            (n - r) / (n + r)
        };
        assert!(nd(Material::Vegetation) > 0.7);
        assert!(nd(Material::Soil).abs() < 0.2);
        assert!(nd(Material::Water) < 0.0);
    }
}
