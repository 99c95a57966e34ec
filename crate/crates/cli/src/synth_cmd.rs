//! `hypercal synth`: writes a self-contained synthetic project per spectral range.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hypercal::io::config::{write_sample_index, write_toml, DeviceFile, ProjectConfig};
use hypercal::io::{write_cube, write_grid_csv, write_spectrum};
use hypercal::spectral::SpectralRange;
use hypercal::synth::{
    default_rh_levels, make_illumination, make_moisture_testbed, make_scene, make_training_set,
    render, IlluminationKind, Material, SyntheticRig,
};
use serde::Serialize;

pub struct SynthArgs {
    pub seed: u64,
    pub size: usize,
    pub samples: usize,
    pub snr_db: f64,
    pub dark_frames: usize,
    pub ranges: Vec<SpectralRange>,
}

#[derive(Serialize)]
struct RangeManifest {
    range: SpectralRange,
    project: String,
    bands: usize,
    noise_sigma_counts: f64,
    captures: usize,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    height: usize,
    width: usize,
    snr_db: f64,
    ranges: Vec<RangeManifest>,
}

fn range_name(r: SpectralRange) -> &'static str {
    match r {
        SpectralRange::Vnir => "vnir",
        SpectralRange::Swir => "swir",
    }
}

fn material_code(m: Material) -> u8 {
    match m {
        Material::Vegetation => 1,
        Material::Soil => 2,
        Material::Water => 3,
        Material::Gray => 4,
        Material::WhiteTile => 5,
    }
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

pub fn run(out: &Path, args: &SynthArgs) -> Result<()> {
    anyhow::ensure!(
        args.size >= 3 && args.size.is_multiple_of(3),
        "--size must be a positive multiple of 3"
    );
    anyhow::ensure!(args.samples >= 10, "--samples must be at least 10");
    anyhow::ensure!(args.dark_frames >= 1, "--dark-frames must be at least 1");
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut ranges = Vec::new();
    for (k, &range) in args.ranges.iter().enumerate() {
        let seed = args.seed.wrapping_mul(31).wrapping_add(k as u64 * 1000);
        ranges.push(write_range(out, range, args, seed)?);
    }
    let manifest = Manifest {
        seed: args.seed,
        height: args.size,
        width: args.size,
        snr_db: args.snr_db,
        ranges,
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_range(
    out: &Path,
    range: SpectralRange,
    args: &SynthArgs,
    seed: u64,
) -> Result<RangeManifest> {
    let dir = out.join(range_name(range));
    for sub in ["devices", "darks", "samples", "scene"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut files: Vec<PathBuf> = Vec::new();
    let mut rig = SyntheticRig::new(range, args.size, args.size, seed)?;
    let sigma = rig.sigma_for_snr(args.snr_db)?;

    let (dark_cubes, dark_spectra) = rig.dark_frames(args.dark_frames, sigma, seed + 1)?;
    let mut cam_file = DeviceFile::from_spec(&rig.camera);
    let mut spec_file = DeviceFile::from_spec(&rig.spectrometer);
    for (i, (c, s)) in dark_cubes.iter().zip(&dark_spectra).enumerate() {
        let cp = dir.join(format!("darks/camera_{i:02}.raw"));
        let sp = dir.join(format!("darks/spectrometer_{i:02}.csv"));
        write_cube(&cp, c)?;
        write_spectrum(&sp, s)?;
        cam_file
            .dark_frames
            .push(PathBuf::from(format!("../darks/camera_{i:02}.raw")));
        spec_file
            .dark_frames
            .push(PathBuf::from(format!("../darks/spectrometer_{i:02}.csv")));
        files.extend([cp.with_extension("hdr"), cp, sp]);
    }
    rig.attach_darks(&dark_cubes, &dark_spectra)?;
    for (name, f) in [("camera", &cam_file), ("spectrometer", &spec_file)] {
        let p = dir.join(format!("devices/{name}.toml"));
        write_toml(&p, f)?;
        files.push(p);
    }

    let captures = make_training_set(&rig, args.samples, sigma, seed + 2)?;
    let names: Vec<(String, String)> = (0..captures.len())
        .map(|i| (format!("capture_{i:04}.raw"), format!("capture_{i:04}.csv")))
        .collect();
    for (cap, (c, s)) in captures.iter().zip(&names) {
        write_cube(&dir.join("samples").join(c), &cap.render.cube)?;
        write_spectrum(&dir.join("samples").join(s), &cap.render.spectrum)?;
    }
    let frame_period = 1.0 / rig.camera.frame_rate_hz().unwrap_or(10.0);
    let index: Vec<(f64, &str, &str)> = names
        .iter()
        .enumerate()
        .map(|(i, (c, s))| (i as f64 * frame_period, c.as_str(), s.as_str()))
        .collect();
    write_sample_index(&dir.join("samples/index.csv"), &index)?;
    files.push(dir.join("samples/index.csv"));

    let field = make_scene(
        &rig,
        make_illumination(IlluminationKind::SolarLike, seed + 3),
        sigma,
        seed + 4,
    );
    let r = render(
        &field,
        &rig,
        rig.camera.base_integration_time(),
        rig.spectrometer.base_integration_time(),
        seed + 5,
    )?;
    write_cube(&dir.join("scene/field.raw"), &r.cube)?;
    write_spectrum(&dir.join("scene/field.csv"), &r.spectrum)?;
    write_cube(
        &dir.join("scene/field_truth.raw"),
        &field.reflectance_cube(),
    )?;
    let labels: Vec<u8> = field.labels.iter().map(|m| material_code(*m)).collect();
    write_grid_csv(&dir.join("scene/labels.csv"), &labels, field.width)?;
    for f in [
        "field.hdr",
        "field.raw",
        "field.csv",
        "field_truth.hdr",
        "field_truth.raw",
        "labels.csv",
    ] {
        files.push(dir.join("scene").join(f));
    }

    if range == SpectralRange::Swir {
        fs::create_dir_all(dir.join("testbed"))?;
        let mut bed = make_moisture_testbed(
            rig.camera.grid(),
            &default_rh_levels(),
            args.size / 3,
            make_illumination(IlluminationKind::SolarLike, seed + 6),
            sigma,
        )?;
        bed.vignette = rig.vignette.clone();
        let r = render(
            &bed,
            &rig,
            rig.camera.base_integration_time(),
            rig.spectrometer.base_integration_time(),
            seed + 7,
        )?;
        write_cube(&dir.join("testbed/testbed.raw"), &r.cube)?;
        write_spectrum(&dir.join("testbed/testbed.csv"), &r.spectrum)?;
        write_grid_csv(
            &dir.join("testbed/moisture.csv"),
            bed.moisture.as_deref().unwrap_or_default(),
            bed.width,
        )?;
        for f in ["testbed.hdr", "testbed.raw", "testbed.csv", "moisture.csv"] {
            files.push(dir.join("testbed").join(f));
        }
    }

    let project = ProjectConfig {
        seed,
        camera: "devices/camera.toml".into(),
        spectrometer: "devices/spectrometer.toml".into(),
        samples: Some("samples/index.csv".into()),
        training: Default::default(),
        calibration: Default::default(),
        indices: Default::default(),
    };
    let pp = dir.join("project.toml");
    write_toml(&pp, &project)?;
    files.push(pp.clone());

    Ok(RangeManifest {
        range,
        project: rel(out, &pp),
        bands: rig.bands(),
        noise_sigma_counts: sigma,
        captures: captures.len(),
        files: files.iter().map(|f| rel(out, f)).collect(),
    })
}
