use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use ifspi::calibration::{calibrate_model, CalibrationTargets};
use ifspi::experiment::{
    run_curves, run_iccd, run_phase_sim, run_resolution, run_sense, run_spi, to_raster16, Mode,
    PhaseImagingConfig, RunConfig,
};
use ifspi::scene::Raster;
use ifspi::spi::{hadamard_masks, sequency};

use crate::{
    CalibrateArgs, Cli, Command, CurvesArgs, Failure, ImageArgs, ImageMode, MasksArgs, PhaseArgs, PhasePreset,
    ResolutionArgs, SenseArgs, OUT_ROOT_ENV,
};

type Outcome<T> = Result<T, Failure>;

/// Runs the selected subcommand and returns the output directory.
pub fn dispatch(cli: &Cli) -> Outcome<PathBuf> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("cannot start worker pool: {e}")))?;
    }
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.noiseless {
        config.noiseless = true;
    }
    let out = out_dir(cli.out.as_deref(), cli.command.name())?;
    let start = Instant::now();

    let results = match &cli.command {
        Command::Sense(a) => sense(&mut config, a, &out)?,
        Command::Image(a) => image(&mut config, a, &out)?,
        Command::Curves(a) => curves(&mut config, a, &out)?,
        Command::Resolution(a) => resolution(&mut config, a, &out)?,
        Command::Masks(a) => masks(&mut config, a, &out)?,
        Command::PhaseSim(a) => phase_sim(&mut config, a, cli.seed, &out)?,
        Command::Calibrate(a) => calibrate(&mut config, a, &out)?,
    };

    let summary = json!({
        "command": cli.command.name(),
        "seed": config.seed,
        "config": config,
        "results": results,
        "wall_clock_s": start.elapsed().as_secs_f64(),
    });
    write(&out.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializable").as_bytes())?;
    let resolved = toml::to_string(&config).map_err(|e| Failure::Runtime(format!("cannot encode config: {e}")))?;
    write(&out.join("config.toml"), resolved.as_bytes())?;
    Ok(out)
}

fn load_config(path: Option<&Path>) -> Outcome<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.to_string().replace('\n', " ");
        Failure::Config(format!("invalid config {}: {}", path.display(), msg.trim()))
    })
}

fn out_dir(out: Option<&Path>, command: &str) -> Outcome<PathBuf> {
    let rel = out.map(Path::to_path_buf).unwrap_or_else(|| Path::new("out").join(command));
    let dir = match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if rel.is_relative() => PathBuf::from(root).join(rel),
        _ => rel,
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, bytes: &[u8]) -> Outcome<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> ifspi::Result<()>) -> Outcome<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write(path, &buf)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn sense(config: &mut RunConfig, a: &SenseArgs, out: &Path) -> Outcome<Value> {
    config.mode = Mode::Sense;
    let s = &mut config.sense;
    set(&mut s.trials, a.trials);
    set(&mut s.present_rate, a.present_rate);
    set(&mut s.absent_rate, a.absent_rate);
    set(&mut s.excess_noise, a.excess_noise);
    set(&mut s.k_sigma, a.k_sigma);
    set(&mut s.bin_width, a.bin_width);
    if a.from_model {
        s.rates_from_model = true;
    }
    set(&mut config.integration_s, a.integration);

    let run = run_sense(config)?;
    write_csv(&out.join("present_hist.csv"), |w| run.present.write_csv(w))?;
    write_csv(&out.join("absent_hist.csv"), |w| run.absent.write_csv(w))?;
    Ok(json!({
        "confidence": run.confidence,
        "threshold": run.threshold,
        "fit": run.fit,
        "present_rate": run.present_rate,
        "absent_rate": run.absent_rate,
        "empirical_error": run.empirical_error,
        "binomial_sigma": run.binomial_sigma,
        "trials": run.trials,
    }))
}

fn image(config: &mut RunConfig, a: &ImageArgs, out: &Path) -> Outcome<Value> {
    let mode = match a.mode {
        Some(ImageMode::Iccd) => Mode::Iccd,
        Some(ImageMode::Spi) => Mode::Spi,
        None if config.mode == Mode::Spi => Mode::Spi,
        None => Mode::Iccd,
    };
    if mode == Mode::Iccd && (a.masks.is_some() || a.scale.is_some() || a.ordering.is_some()) {
        return Err(Failure::Usage("--masks, --scale and --ordering need --mode spi".into()));
    }
    config.mode = mode;
    let o = &mut config.object;
    if let Some(path) = &a.object {
        o.path = Some(path.clone());
        o.phase_path = a.phase.clone();
    }
    if let Some(g) = &a.glyph {
        o.glyph = g.clone();
        o.path = None;
        o.phase_path = None;
    }
    if let Some(size) = a.size {
        o.width = size;
        o.height = size;
    }
    set(&mut o.threshold, a.threshold.map(Some));
    if a.invert {
        o.invert = true;
    }
    if a.blur {
        config.blur = true;
    }
    set(&mut config.emission.rate, a.rate);
    set(&mut config.integration_s, a.integration);
    set(&mut config.spi.masks, a.masks);
    set(&mut config.spi.scale, a.scale);
    set(&mut config.spi.ordering, a.ordering.map(Into::into));

    if let (Some(path), Some(size)) = (&config.object.path, a.size) {
        let bytes = std::fs::read(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let raster = Raster::parse(&bytes)?;
        if (raster.width, raster.height) != (size, size) {
            return Err(Failure::Config(format!(
                "{} is {}x{}, not {size}x{size}",
                path.display(),
                raster.width,
                raster.height
            )));
        }
    }

    match mode {
        Mode::Spi => {
            let run = run_spi(config)?;
            write_csv(&out.join("spectrum.csv"), |w| run.spectrum.write_csv(w))?;
            write(&out.join("recon.pgm"), &to_raster16(&run.image).to_p5())?;
            write(&out.join("truth.pgm"), &to_raster16(&run.truth).to_p5())?;
            Ok(json!({
                "mode": "spi",
                "masks": run.spectrum.len(),
                "side": run.image.nrows(),
                "pearson": run.pearson,
            }))
        }
        _ => {
            let run = run_iccd(config)?;
            write(&out.join("frame_theta0_phipi.pgm"), &to_raster16(&run.frames[0]).to_p5())?;
            write(&out.join("frame_thetapi_phi0.pgm"), &to_raster16(&run.frames[1]).to_p5())?;
            write(&out.join("difference.pgm"), &to_raster16(&run.difference).to_p5())?;
            let range = |m: &[f64]| {
                let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                json!([lo, hi])
            };
            Ok(json!({
                "mode": "iccd",
                "width": run.difference.ncols(),
                "height": run.difference.nrows(),
                "blur_sigma_um": run.blur_sigma_um,
                "frame_ranges": [range(run.frames[0].as_slice().unwrap()), range(run.frames[1].as_slice().unwrap())],
                "difference_range": range(run.difference.as_slice().unwrap()),
            }))
        }
    }
}

fn curves(config: &mut RunConfig, a: &CurvesArgs, out: &Path) -> Outcome<Value> {
    config.mode = Mode::Curves;
    set(&mut config.curves.samples, a.samples);
    set(&mut config.curves.channels, a.channels.clone());
    let calibration = a.calibrated.then(|| calibrate_model(&CalibrationTargets::REFERENCE));
    if let Some(c) = &calibration {
        config.model = c.model;
    }
    config.validate()?;
    let table = run_curves(config, config.curves.samples, &config.curves.channels)?;
    write_csv(&out.join("curves.csv"), |w| table.write_csv(w))?;
    let visibilities: serde_json::Map<String, Value> = table
        .series
        .iter()
        .map(|s| (format!("{}_{}", s.case, s.channel), json!(s.visibility)))
        .collect();
    Ok(json!({ "visibilities": visibilities, "calibration": calibration.map(|c| to_value(&c)) }))
}

fn resolution(config: &mut RunConfig, a: &ResolutionArgs, _out: &Path) -> Outcome<Value> {
    config.mode = Mode::Resolution;
    let r = &mut config.resolution;
    set(&mut r.width, a.width);
    set(&mut r.rows, a.rows);
    set(&mut r.edge_col, a.edge_col);
    set(&mut r.counts, a.counts);
    let run = run_resolution(config)?;
    Ok(json!({
        "sigma_um": run.sigma_um,
        "expected_sigma_um": run.expected_sigma_um,
        "relative_error": run.relative_error,
        "fit": run.fit,
    }))
}

fn masks(config: &mut RunConfig, a: &MasksArgs, out: &Path) -> Outcome<Value> {
    config.mode = Mode::Spi;
    set(&mut config.spi.scale, a.scale);
    set(&mut config.spi.ordering, a.ordering.map(Into::into));
    let set_ = hadamard_masks(config.spi.scale, config.spi.ordering)?;
    let count = a.count.unwrap_or(config.spi.masks.min(set_.order()));
    if count > set_.order() {
        return Err(Failure::Config(format!("{count} masks requested but the set has {}", set_.order())));
    }
    let side = set_.side();
    let mut index = String::from("order,natural_index,row_sequency,col_sequency,file\n");
    for i in 0..count {
        let m = set_.mask(i);
        let name = format!("mask_{i:05}.pgm");
        write(&out.join(&name), &m.to_raster().to_p5())?;
        let n = m.natural_index;
        index.push_str(&format!("{i},{n},{},{},{name}\n", sequency(n / side, side), sequency(n % side, side)));
    }
    write(&out.join("masks.csv"), index.as_bytes())?;
    Ok(json!({ "side": side, "written": count, "ordering": config.spi.ordering.to_string() }))
}

fn phase_sim(config: &mut RunConfig, a: &PhaseArgs, seed_flag: Option<u64>, out: &Path) -> Outcome<Value> {
    config.mode = Mode::PhaseSim;
    let p = &mut config.phase_sim;
    match a.preset {
        Some(PhasePreset::Unit) => p.regions = PhaseImagingConfig::unit_amplitude().regions,
        Some(PhasePreset::Attenuated) => p.regions = PhaseImagingConfig::attenuated().regions,
        None => {}
    }
    set(&mut p.mean_counts, a.mean_counts);
    if let Some(s) = a.size {
        p.width = s;
        p.height = s;
    }
    set(&mut p.width, a.width);
    set(&mut p.height, a.height);
    if config.noiseless {
        p.seed = None;
    } else if let Some(seed) = seed_flag {
        p.seed = Some(seed);
    }
    config.validate()?;
    let run = run_phase_sim(&config.phase_sim)?;
    write(&out.join("theta0.pgm"), &to_raster16(&run.images[0]).to_p5())?;
    write(&out.join("thetapi.pgm"), &to_raster16(&run.images[1]).to_p5())?;
    write(&out.join("difference.pgm"), &to_raster16(&run.difference).to_p5())?;
    let mut region_means = Vec::new();
    for label in 0..4u8 {
        let (sum, n) = run
            .labels
            .iter()
            .zip(run.difference.iter())
            .filter(|(l, _)| **l == label)
            .fold((0.0, 0usize), |(s, n), (_, d)| (s + d, n + 1));
        region_means.push(if n > 0 { json!(sum / n as f64) } else { Value::Null });
    }
    Ok(json!({
        "difference_region_means": {
            "background": region_means[0],
            "N": region_means[1],
            "J": region_means[2],
            "U": region_means[3],
        },
        "poisson": config.phase_sim.seed.is_some(),
    }))
}

fn calibrate(config: &mut RunConfig, a: &CalibrateArgs, out: &Path) -> Outcome<Value> {
    let mut targets = CalibrationTargets::REFERENCE;
    set(&mut targets.constructive, a.constructive);
    set(&mut targets.residual, a.residual);
    set(&mut targets.object_present, a.object_present);
    for v in [targets.constructive, targets.residual, targets.object_present] {
        if !v.is_finite() {
            return Err(Failure::Config("visibility targets must be finite".into()));
        }
    }
    let cal = calibrate_model(&targets);
    if cal.infeasible {
        log::warn!("targets are not reachable by a physical model; reporting the closest fit");
    }
    config.model = cal.model;
    #[derive(Serialize)]
    struct ModelSection<'a> {
        model: &'a ifspi::interferometer::InterferometerModel,
    }
    let section = toml::to_string(&ModelSection { model: &cal.model })
        .map_err(|e| Failure::Runtime(format!("cannot encode model: {e}")))?;
    write(&out.join("model.toml"), section.as_bytes())?;
    Ok(json!({ "targets": targets, "calibration": cal }))
}
