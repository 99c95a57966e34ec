mod synth_cmd;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hypercal::calibration::{calibration_sample, CalibrationContext};
use hypercal::indices::{
    fit_smc, ndvi, normalized_difference, optimize_band_pair, otsu_with_bins, predict_smc,
    smc_index, PairScoring, SmcRegression,
};
use hypercal::io::config::Project;
use hypercal::io::image::{to_gray, write_png_gray};
use hypercal::io::{
    read_cube, read_grid_csv, read_sample_index, read_spectrum, write_cube, write_grid_csv,
    write_index_png, write_mask_png,
};
use hypercal::spectral::{build_band_mapping, DataCube, SpectralRange};
use hypercal::whiteref::{
    augment, evaluate, fit_mlp, fit_mlr, split, CalibrationSample, ModelKind, PixelModelBank,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "hypercal",
    version,
    about = "Target-free reflectance calibration for hyperspectral cameras"
)]
struct Cli {
    /// Project TOML (devices, training data, options).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the project seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rig, training captures, a field scene and a moisture testbed.
    Synth {
        /// Sensor height and width in pixels (multiple of 3).
        #[arg(long, default_value_t = 18)]
        size: usize,
        /// White-reference captures per range.
        #[arg(long, default_value_t = 150)]
        samples: usize,
        #[arg(long, default_value_t = 40.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 4)]
        dark_frames: usize,
        #[arg(long, value_enum, default_value_t = RangeArg::Both)]
        range: RangeArg,
    },
    /// Fit a per-pixel white-reference bank from the project's captures.
    Train {
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Skip augmentation even if the project enables it.
        #[arg(long)]
        no_augment: bool,
    },
    /// Score a bank on the held-out split (or on every capture with --all).
    Eval {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        all: bool,
    },
    /// Convert a raw cube to reflectance using a bank and a spectrometer reading.
    Calibrate {
        #[arg(long)]
        bank: PathBuf,
        #[command(flatten)]
        input: RawInput,
    },
    /// NDVI map and Otsu vegetation mask from a reflectance cube.
    Ndvi {
        #[arg(long)]
        cube: PathBuf,
    },
    /// Soil-moisture index, optionally fitted to or mapped through a regression.
    Smc {
        #[arg(long)]
        cube: PathBuf,
        /// Per-pixel humidity grid (CSV) to fit the regression on.
        #[arg(long, conflicts_with = "regression")]
        truth: Option<PathBuf>,
        /// Previously fitted regression (JSON).
        #[arg(long)]
        regression: Option<PathBuf>,
        /// Band pair in nm, e.g. `1300,1119`.
        #[arg(long, value_parser = parse_pair)]
        pair: Option<(f64, f64)>,
    },
    /// Exhaustive search for the band pair that best separates wet from dry.
    BandOpt {
        #[arg(long)]
        cube: PathBuf,
        /// Per-pixel humidity grid; the wettest and driest pixels form the two groups.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum)]
        scoring: Option<ScoringArg>,
    },
}

#[derive(Args)]
struct RawInput {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    spectrum: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RangeArg {
    Vnir,
    Swir,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Mlr,
    Mlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoringArg {
    MeanSpectrum,
    PerPixel,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or("expected two comma-separated wavelengths")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((p(a)?, p(b)?))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("{}", json!({"code": "usage", "error": first}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<hypercal::Error>())
                .map_or("error", |h| h.code());
            eprintln!("{}", json!({"code": code, "error": format!("{e:#}")}));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Ok(n) = std::env::var("HYPERCAL_THREADS") {
        let n: usize = n
            .parse()
            .context("HYPERCAL_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::Synth {
            size,
            samples,
            snr_db,
            dark_frames,
            range,
        } => {
            let ranges = match range {
                RangeArg::Vnir => vec![SpectralRange::Vnir],
                RangeArg::Swir => vec![SpectralRange::Swir],
                RangeArg::Both => vec![SpectralRange::Vnir, SpectralRange::Swir],
            };
            let args = synth_cmd::SynthArgs {
                seed: cli.seed.unwrap_or(0),
                size,
                samples,
                snr_db,
                dark_frames,
                ranges,
            };
            synth_cmd::run(out, &args)?;
            println!("wrote {}", out.join("manifest.json").display());
            Ok(())
        }
        Command::Train { model, no_augment } => {
            let project = load_project(cli.config.as_deref())?;
            let seed = cli.seed.unwrap_or(project.config.seed);
            train(
                &project,
                model,
                !no_augment && project.config.training.augment,
                seed,
                out,
            )
        }
        Command::Eval { bank, all } => {
            let project = load_project(cli.config.as_deref())?;
            let bank = PixelModelBank::load(&bank)?;
            let seed = cli.seed.unwrap_or(bank.meta().seed);
            eval(&project, &bank, all, seed, out)
        }
        Command::Calibrate { bank, input } => {
            let project = load_project(cli.config.as_deref())?;
            let bank = PixelModelBank::load(&bank)?;
            let mut ctx = CalibrationContext::new(
                project.camera.clone(),
                project.spectrometer.clone(),
                bank,
            )?;
            ctx.set_policy(project.config.calibration)?;
            let raw = read_cube(&input.cube)?;
            let spec = read_spectrum(&input.spectrum)?;
            let refl = ctx.calibrate(&raw, &spec)?;
            ensure_dir(out)?;
            let path = out.join("reflectance.raw");
            write_cube(&path, &refl)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Ndvi { cube } => {
            let project = optional_project(cli.config.as_deref())?;
            let bins = project
                .as_ref()
                .map_or(hypercal::indices::OTSU_BINS, |p| p.config.indices.otsu_bins);
            let cube = read_cube(&cube)?;
            let mut map = match project.as_ref().map(|p| p.config.indices.ndvi_pair) {
                Some(pair) => normalized_difference(&cube, pair.0, pair.1)?,
                None => ndvi(&cube)?,
            };
            map.kind = hypercal::indices::IndexKind::Ndvi;
            let mask = otsu_with_bins(&map.values, map.height, map.width, bins)?;
            ensure_dir(out)?;
            write_index_png(&out.join("ndvi.png"), &map.values, map.height, map.width)?;
            write_grid_csv(&out.join("ndvi.csv"), &map.values, map.width)?;
            write_mask_png(
                &out.join("vegetation_mask.png"),
                &mask.mask,
                map.height,
                map.width,
            )?;
            let m: Vec<u8> = mask.mask.iter().map(|b| *b as u8).collect();
            write_grid_csv(&out.join("vegetation_mask.csv"), &m, map.width)?;
            let summary = json!({
                "band_pair_nm": [map.band_pair.0, map.band_pair.1],
                "threshold": mask.threshold,
                "vegetation_pixels": mask.count(),
                "pixels": map.values.len(),
                "flagged_zero_pixels": map.flagged,
            });
            write_json(&out.join("ndvi.json"), &summary)?;
            println!("{summary}");
            Ok(())
        }
        Command::Smc {
            cube,
            truth,
            regression,
            pair,
        } => {
            let project = optional_project(cli.config.as_deref())?;
            let pair = pair
                .or_else(|| project.as_ref().map(|p| p.config.indices.smc_pair))
                .unwrap_or(hypercal::indices::SMC_BANDS);
            smc(
                &read_cube(&cube)?,
                truth.as_deref(),
                regression.as_deref(),
                pair,
                out,
            )
        }
        Command::BandOpt {
            cube,
            truth,
            scoring,
        } => {
            let project = optional_project(cli.config.as_deref())?;
            let scoring = match scoring {
                Some(ScoringArg::MeanSpectrum) => PairScoring::MeanSpectrum,
                Some(ScoringArg::PerPixel) => PairScoring::PerPixel,
                None => {
                    project.map_or(PairScoring::MeanSpectrum, |p| p.config.indices.pair_scoring)
                }
            };
            band_opt(&read_cube(&cube)?, &truth, scoring, out)
        }
    }
}

fn load_project(path: Option<&Path>) -> Result<Project> {
    let path = path.context("this command needs --config <project.toml>")?;
    Ok(Project::load(path)?)
}

fn optional_project(path: Option<&Path>) -> Result<Option<Project>> {
    path.map(|p| Project::load(p).map_err(Into::into))
        .transpose()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn load_samples(project: &Project) -> Result<Vec<CalibrationSample>> {
    let index = project
        .samples_path()
        .context("project has no 'samples' index")?;
    let mapping = build_band_mapping(project.spectrometer.grid(), project.camera.grid())?;
    read_sample_index(&index)?
        .iter()
        .map(|e| {
            let cube = read_cube(&e.cube)?;
            let spec = read_spectrum(&e.spectrum)?;
            calibration_sample(
                &project.camera,
                &project.spectrometer,
                &mapping,
                &cube,
                &spec,
                e.timestamp,
            )
            .with_context(|| format!("capture {}", e.cube.display()))
        })
        .collect()
}

/// Augments (optionally) and splits the project's captures.
fn dataset(
    project: &Project,
    augmented: bool,
    seed: u64,
) -> Result<(
    Vec<CalibrationSample>,
    Vec<CalibrationSample>,
    Vec<CalibrationSample>,
)> {
    let mut samples = load_samples(project)?;
    if augmented {
        samples = augment(&samples, seed)?;
    }
    Ok(split(samples, seed.wrapping_add(1))?)
}

fn train(
    project: &Project,
    model: Option<ModelArg>,
    augmented: bool,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let kind = match model {
        Some(ModelArg::Mlr) => ModelKind::Mlr,
        Some(ModelArg::Mlp) => ModelKind::Mlp,
        None => project.config.training.model,
    };
    let (train, val, test) = dataset(project, augmented, seed)?;
    let t0 = Instant::now();
    let mut bank = match kind {
        ModelKind::Mlr => fit_mlr(&train)?,
        ModelKind::Mlp => fit_mlp(
            &train,
            &val,
            &project.config.training.mlp,
            seed.wrapping_add(2),
        )?,
    };
    let fit_seconds = t0.elapsed().as_secs_f64();
    bank.meta_mut().seed = seed;
    bank.meta_mut().augmented = augmented;
    ensure_dir(out)?;
    let bank_path = out.join("bank.hcal");
    bank.save(&bank_path)?;
    let report = evaluate(&bank, &test)?;
    write_json(&out.join("report.json"), &report)?;
    fs::write(out.join("report_summary.csv"), report.summary_csv())?;
    fs::write(out.join("report_pixels.csv"), report.pixel_csv())?;
    println!(
        "{} bank: {} train / {} val / {} test samples, fit {:.2} s",
        match kind {
            ModelKind::Mlr => "mlr",
            ModelKind::Mlp => "mlp",
        },
        train.len(),
        val.len(),
        test.len(),
        fit_seconds
    );
    println!("{}", report.human_summary());
    println!("wrote {}", bank_path.display());
    Ok(())
}

fn eval(project: &Project, bank: &PixelModelBank, all: bool, seed: u64, out: &Path) -> Result<()> {
    let test = if all {
        load_samples(project)?
    } else {
        dataset(project, bank.meta().augmented, seed)?.2
    };
    let report = evaluate(bank, &test)?;
    ensure_dir(out)?;
    write_json(&out.join("eval.json"), &report)?;
    fs::write(out.join("eval_summary.csv"), report.summary_csv())?;
    fs::write(out.join("eval_pixels.csv"), report.pixel_csv())?;
    println!("{}", report.human_summary());
    Ok(())
}

fn read_truth(path: &Path, cube: &DataCube) -> Result<Vec<f64>> {
    let (values, h, w) = read_grid_csv(path)?;
    if (h, w) != (cube.height(), cube.width()) {
        bail!(hypercal::Error::ShapeMismatch(format!(
            "truth grid is {h}x{w}, cube is {}x{}",
            cube.height(),
            cube.width()
        )));
    }
    Ok(values)
}

fn smc(
    cube: &DataCube,
    truth: Option<&Path>,
    regression: Option<&Path>,
    pair: (f64, f64),
    out: &Path,
) -> Result<()> {
    ensure_dir(out)?;
    let index = smc_index(cube, pair)?;
    write_grid_csv(&out.join("smc_index.csv"), &index.values, index.width)?;
    let reg: Option<SmcRegression> = match (truth, regression) {
        (Some(t), _) => {
            let rh = read_truth(t, cube)?;
            let points: Vec<(f64, f64)> = index.values.iter().copied().zip(rh).collect();
            let reg = fit_smc(&points, index.band_pair)?;
            write_json(&out.join("regression.json"), &reg)?;
            Some(reg)
        }
        (None, Some(r)) => {
            let text = fs::read_to_string(r).with_context(|| format!("reading {}", r.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", r.display()))?)
        }
        (None, None) => None,
    };
    match reg {
        Some(reg) => {
            let rh = predict_smc(&reg, cube)?;
            write_grid_csv(&out.join("rh.csv"), &rh.values, rh.width)?;
            write_png_gray(
                &out.join("rh.png"),
                &to_gray(&rh.values, 0.0, 100.0),
                rh.height,
                rh.width,
            )?;
            println!("{}", serde_json::to_string(&reg)?);
        }
        None => {
            write_index_png(
                &out.join("smc_index.png"),
                &index.values,
                index.height,
                index.width,
            )?;
            println!(
                "{}",
                json!({"band_pair_nm": [index.band_pair.0, index.band_pair.1]})
            );
        }
    }
    Ok(())
}

fn band_opt(cube: &DataCube, truth: &Path, scoring: PairScoring, out: &Path) -> Result<()> {
    let rh = read_truth(truth, cube)?;
    let (lo, hi) = rh
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if lo == hi {
        bail!(hypercal::Error::InsufficientData(
            "truth grid has a single humidity level".into()
        ));
    }
    let pick = |target: f64| -> Vec<Vec<f64>> {
        cube.pixels()
            .zip(&rh)
            .filter(|(_, v)| **v == target)
            .map(|(p, _)| p.to_vec())
            .collect()
    };
    let (wet, dry) = (pick(hi), pick(lo));
    let best = optimize_band_pair(&wet, &dry, cube.grid(), scoring)?;
    ensure_dir(out)?;
    write_json(&out.join("band_pair.json"), &best)?;
    println!("{}", serde_json::to_string(&best)?);
    Ok(())
}
