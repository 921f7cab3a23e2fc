//! End-to-end runs: array-detector and single-pixel imaging, sensing,
//! interference-curve scans, knife-edge resolution and phase imaging
//! without the IFM module.
//!
//! Every run is a pure function of its configuration. Photon-counting noise
//! comes from seeded streams keyed by frame row, mask or trial block, so
//! results do not depend on the rayon pool size.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use log::{debug, info};
use ndarray::{Array2, Axis, Zip};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{
    direct_return_amplitude, interference_curve, signal_rate, theta_grid, visibility, Channel,
    InterferometerModel, PhaseSettings, PixelTransmission, ICCD_SETTINGS,
};
use crate::optics::{blur, edge_sigma, fit_esf, EsfFit, ImagingGeometry};
use crate::rng::{self, StreamRng};
use crate::scene::{
    gaussian_emission, load_object, make_glyph_plate, make_knife_edge, nju_labels, uniform_emission,
    AmplitudeMapping, EmissionMap, Glyph, ObjectMap, Raster, ICCD_PITCH_UM, SLM_PITCH_UM,
};
use crate::sensing::{self, CountHistogram, GaussianPair};
use crate::spi::{hadamard_masks, reconstruct, setting_rate_maps, HadamardSpectrum, MaskOrdering, SpiScene};

const ICCD_DOMAIN: u16 = 0x4943;
const RESOLUTION_DOMAIN: u16 = 0x5245;
const PHASE_DOMAIN: u16 = 0x5048;
const SENSE_DOMAIN: u16 = 0x5345;
const SENSE_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Iccd,
    Spi,
    Sense,
    Curves,
    PhaseSim,
    Resolution,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Iccd => "iccd",
            Mode::Spi => "spi",
            Mode::Sense => "sense",
            Mode::Curves => "curves",
            Mode::PhaseSim => "phase-sim",
            Mode::Resolution => "resolution",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iccd" => Ok(Mode::Iccd),
            "spi" => Ok(Mode::Spi),
            "sense" => Ok(Mode::Sense),
            "curves" => Ok(Mode::Curves),
            "phase-sim" => Ok(Mode::PhaseSim),
            "resolution" => Ok(Mode::Resolution),
            other => Err(Error::config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Where the object comes from. A raster file takes precedence over a
/// glyph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectSpec {
    /// Shipped glyph (`N`, `J` or `U`) drawn on a `width × height` canvas.
    pub glyph: String,
    /// PGM amplitude raster. Its own size overrides `width` and `height`.
    pub path: Option<PathBuf>,
    /// PGM phase raster of the same size.
    pub phase_path: Option<PathBuf>,
    /// Binarization level for `path`; samples map linearly when unset.
    pub threshold: Option<u16>,
    pub width: usize,
    pub height: usize,
    /// Object pixel pitch in μm; the detector pitch of the mode when unset.
    pub pixel_pitch_um: Option<f64>,
    /// Swap transparent and opaque regions.
    pub invert: bool,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self {
            glyph: "U".into(),
            path: None,
            phase_path: None,
            threshold: None,
            width: 64,
            height: 64,
            pixel_pitch_um: None,
            invert: false,
        }
    }
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

impl ObjectSpec {
    pub fn build(&self, default_pitch_um: f64) -> Result<ObjectMap> {
        let pitch = self.pixel_pitch_um.unwrap_or(default_pitch_um);
        let object = match &self.path {
            Some(path) => {
                let bytes = read_file(path)?;
                let phase = self.phase_path.as_ref().map(read_file).transpose()?;
                let mapping = self.threshold.map_or(AmplitudeMapping::Linear, AmplitudeMapping::Threshold);
                load_object(&bytes, mapping, phase.as_deref(), pitch)?
            }
            None => make_glyph_plate(&Glyph::parse(&self.glyph)?, self.width, self.height)?.with_pitch(pitch),
        };
        Ok(if self.invert { object.inverted() } else { object })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionProfile {
    #[default]
    Uniform,
    Gaussian,
}

/// Pair-emission rate across the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmissionSpec {
    pub profile: EmissionProfile,
    /// Per-pixel rate (peak rate for a Gaussian profile), counts/s.
    pub rate: f64,
    /// 1/e² radius of the Gaussian profile in pixels; half the shorter
    /// side when unset.
    pub waist_px: Option<f64>,
}

impl Default for EmissionSpec {
    fn default() -> Self {
        Self {
            profile: EmissionProfile::Uniform,
            rate: 1000.0,
            waist_px: None,
        }
    }
}

impl EmissionSpec {
    pub fn build(&self, width: usize, height: usize) -> Result<EmissionMap> {
        match self.profile {
            EmissionProfile::Uniform => uniform_emission(width, height, self.rate),
            EmissionProfile::Gaussian => {
                let waist = self.waist_px.unwrap_or(width.min(height) as f64 / 2.0);
                gaussian_emission(width, height, self.rate, waist)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiParams {
    /// Masks are `2^scale` pixels on a side.
    pub scale: u32,
    /// Number of masks measured, taken in `ordering` order.
    pub masks: usize,
    pub ordering: MaskOrdering,
}

impl Default for SpiParams {
    fn default() -> Self {
        Self {
            scale: 6,
            masks: 1024,
            ordering: MaskOrdering::Sequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenseParams {
    /// Trials per class, both for the fit and for the held-out error count.
    pub trials: usize,
    /// Object-present rate, counts/s.
    pub present_rate: f64,
    /// Object-absent rate, counts/s.
    pub absent_rate: f64,
    /// Take both rates from the model and emission rate instead.
    pub rates_from_model: bool,
    /// Relative jitter of the underlying rate on top of Poisson noise.
    pub excess_noise: f64,
    pub k_sigma: f64,
    pub bin_width: f64,
}

impl Default for SenseParams {
    fn default() -> Self {
        Self {
            trials: 100_000,
            present_rate: 3500.0,
            absent_rate: 2950.0,
            rates_from_model: false,
            excess_noise: 0.0175,
            k_sigma: 3.4,
            bin_width: sensing::DEFAULT_BIN_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveParams {
    pub samples: usize,
    pub channels: Vec<Channel>,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            samples: 180,
            channels: Channel::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolutionParams {
    pub width: usize,
    pub rows: usize,
    pub edge_col: usize,
    /// Incoherent counts per pixel, `P·τ`.
    pub counts: f64,
}

impl Default for ResolutionParams {
    fn default() -> Self {
        Self {
            width: 64,
            rows: 8,
            edge_col: 32,
            counts: 1e4,
        }
    }
}

/// Phase imaging without the IFM: each pixel returns `t²·e^{2iδ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseImagingConfig {
    /// Mean counts per pixel with induced coherence inhibited.
    pub mean_counts: f64,
    pub width: usize,
    pub height: usize,
    /// Transmission of the `N`, `J` and `U` regions; the rest is opaque.
    pub regions: [PixelTransmission; 3],
    /// Poisson sampling with this seed; expected counts when unset.
    pub seed: Option<u64>,
}

impl PhaseImagingConfig {
    /// Unit amplitude with phases 0, π/8 and π/4.
    pub fn unit_amplitude() -> Self {
        Self {
            mean_counts: 50.0,
            width: 512,
            height: 512,
            regions: [
                PixelTransmission { amplitude: 1.0, phase: 0.0 },
                PixelTransmission { amplitude: 1.0, phase: FRAC_PI_8 },
                PixelTransmission { amplitude: 1.0, phase: FRAC_PI_4 },
            ],
            seed: None,
        }
    }

    /// Same phases with amplitude 1/√2.
    pub fn attenuated() -> Self {
        let mut c = Self::unit_amplitude();
        for r in c.regions.iter_mut() {
            r.amplitude = FRAC_1_SQRT_2;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_counts >= 0.0) || !self.mean_counts.is_finite() {
            return Err(Error::config(format!("mean counts must be >= 0, got {}", self.mean_counts)));
        }
        for r in &self.regions {
            PixelTransmission::new(r.amplitude, r.phase)?;
        }
        Ok(())
    }
}

impl Default for PhaseImagingConfig {
    fn default() -> Self {
        Self::unit_amplitude()
    }
}

/// Full configuration of one run. Every section has working defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub model: InterferometerModel,
    pub geometry: ImagingGeometry,
    pub object: ObjectSpec,
    pub emission: EmissionSpec,
    /// Exposure per phase setting, s.
    pub integration_s: f64,
    pub seed: u64,
    /// Expected counts instead of Poisson draws.
    pub noiseless: bool,
    /// Blur rate maps with the edge-spread width of `geometry`.
    pub blur: bool,
    pub spi: SpiParams,
    pub sense: SenseParams,
    pub curves: CurveParams,
    pub resolution: ResolutionParams,
    pub phase_sim: PhaseImagingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Iccd,
            model: InterferometerModel::ideal(),
            geometry: ImagingGeometry::REFERENCE,
            object: ObjectSpec::default(),
            emission: EmissionSpec::default(),
            integration_s: 1.0,
            seed: 0,
            noiseless: false,
            blur: false,
            spi: SpiParams::default(),
            sense: SenseParams::default(),
            curves: CurveParams::default(),
            resolution: ResolutionParams::default(),
            phase_sim: PhaseImagingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.geometry.validate()?;
        if !(self.integration_s >= 0.0) || !self.integration_s.is_finite() {
            return Err(Error::config(format!("integration_s must be >= 0, got {}", self.integration_s)));
        }
        if !(self.emission.rate >= 0.0) || !self.emission.rate.is_finite() {
            return Err(Error::config(format!("emission rate must be >= 0, got {}", self.emission.rate)));
        }
        match self.mode {
            Mode::Iccd => {}
            Mode::Spi => {
                let s = &self.spi;
                if s.scale == 0 || s.scale > 12 {
                    return Err(Error::config(format!("spi.scale must be in 1..=12, got {}", s.scale)));
                }
                let order = 1usize << (2 * s.scale);
                if s.masks > order {
                    return Err(Error::config(format!(
                        "spi.masks = {} exceeds the {order} masks of scale {}",
                        s.masks, s.scale
                    )));
                }
            }
            Mode::Sense => {
                let s = &self.sense;
                if s.trials < 100 {
                    return Err(Error::config(format!("sense.trials must be >= 100, got {}", s.trials)));
                }
                if !(s.present_rate >= 0.0) || !(s.absent_rate >= 0.0) {
                    return Err(Error::config("sense rates must be >= 0"));
                }
                if !(s.excess_noise >= 0.0) || !s.excess_noise.is_finite() {
                    return Err(Error::config("sense.excess_noise must be >= 0"));
                }
                if !(s.k_sigma > 0.0) {
                    return Err(Error::config("sense.k_sigma must be positive"));
                }
                if !(s.bin_width > 0.0) {
                    return Err(Error::config("sense.bin_width must be positive"));
                }
            }
            Mode::Curves => {
                if self.curves.samples < 2 {
                    return Err(Error::config("curves.samples must be >= 2"));
                }
                if self.curves.channels.is_empty() {
                    return Err(Error::config("curves.channels is empty"));
                }
            }
            Mode::Resolution => {
                let r = &self.resolution;
                if r.width < 8 || r.rows == 0 {
                    return Err(Error::config("resolution needs width >= 8 and rows >= 1"));
                }
                if r.edge_col == 0 || r.edge_col >= r.width {
                    return Err(Error::config(format!(
                        "resolution.edge_col must lie inside 1..{}, got {}",
                        r.width, r.edge_col
                    )));
                }
                if !(r.counts > 0.0) || !r.counts.is_finite() {
                    return Err(Error::config("resolution.counts must be positive"));
                }
            }
            Mode::PhaseSim => self.phase_sim.validate()?,
        }
        Ok(())
    }

    fn noise_seed(&self) -> Option<u64> {
        (!self.noiseless).then_some(self.seed)
    }
}

fn check_mode(config: &RunConfig, mode: Mode) -> Result<()> {
    if config.mode != mode {
        return Err(Error::config(format!("run needs mode `{mode}`, config has `{}`", config.mode)));
    }
    config.validate()
}

/// Rate maps of `object` at each setting.
fn rate_maps(
    model: &InterferometerModel,
    object: &ObjectMap,
    emission: &EmissionMap,
    settings: &[PhaseSettings],
) -> Vec<Array2<f64>> {
    settings
        .iter()
        .map(|&s| {
            Zip::from(&object.pixels)
                .and(&emission.rates)
                .map_collect(|&px, &p| model.signal(p, s, px))
        })
        .collect()
}

/// Counts for an exposure of `integration_s`; Poisson per row stream of
/// `domain` when `seed` is set.
fn expose(rates: &Array2<f64>, integration_s: f64, seed: Option<u64>, domain: u16) -> Array2<f64> {
    let mut out = rates.mapv(|r| r * integration_s);
    if let Some(seed) = seed {
        out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(r, mut row)| {
            let mut rng = rng::stream(seed, rng::stream_id(domain, r as u64));
            for v in row.iter_mut() {
                *v = rng::poisson(*v, &mut rng) as f64;
            }
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IccdRun {
    /// Counts at `(θ=0, φ=π)` and `(θ=π, φ=0)`.
    pub frames: [Array2<f64>; 2],
    /// First frame minus second; the transparent-zone emission map.
    pub difference: Array2<f64>,
    pub blur_sigma_um: Option<f64>,
}

/// Array-detector imaging at the two settings whose difference isolates
/// the transparent zone.
pub fn run_iccd(config: &RunConfig) -> Result<IccdRun> {
    check_mode(config, Mode::Iccd)?;
    let object = config.object.build(ICCD_PITCH_UM)?;
    let emission = config.emission.build(object.width(), object.height())?;
    let mut maps = rate_maps(&config.model, &object, &emission, &ICCD_SETTINGS);
    let blur_sigma_um = config.blur.then(|| edge_sigma(&config.geometry));
    if let Some(sigma) = blur_sigma_um {
        for m in maps.iter_mut() {
            *m = blur(m, sigma, object.pixel_pitch_um)?;
        }
    }
    let seed = config.noise_seed();
    let f0 = expose(&maps[0], config.integration_s, seed, ICCD_DOMAIN);
    let f1 = expose(&maps[1], config.integration_s, seed, ICCD_DOMAIN + 1);
    let difference = &f0 - &f1;
    info!("iccd: {}x{} frames", object.width(), object.height());
    Ok(IccdRun {
        frames: [f0, f1],
        difference,
        blur_sigma_um,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpiRun {
    pub spectrum: HadamardSpectrum,
    pub image: Array2<f64>,
    /// Expected reconstruction with the full mask set: twice the
    /// transparent-zone emission counts on the mask grid.
    pub truth: Array2<f64>,
    /// Correlation of `image` with `truth`; unset when either is constant.
    pub pearson: Option<f64>,
}

/// Single-pixel imaging: four-setting acquisition of the first
/// `spi.masks` masks, then the weighted mask sum.
pub fn run_spi(config: &RunConfig) -> Result<SpiRun> {
    check_mode(config, Mode::Spi)?;
    let object = config.object.build(SLM_PITCH_UM)?;
    if object.width() != object.height() {
        return Err(Error::DimensionMismatch(format!(
            "single-pixel imaging needs a square object, got {}x{}",
            object.width(),
            object.height()
        )));
    }
    let emission = config.emission.build(object.width(), object.height())?;
    let mut maps = setting_rate_maps(&config.model, &object, &emission)?;
    if config.blur {
        let sigma = edge_sigma(&config.geometry);
        for m in maps.iter_mut() {
            *m = blur(m, sigma, object.pixel_pitch_um)?;
        }
    }
    let masks = hadamard_masks(config.spi.scale, config.spi.ordering)?;
    let scene = SpiScene::new(maps, masks.side())?;
    let spectrum = scene.acquire(&masks, config.spi.masks, config.integration_s, config.noise_seed())?;
    let image = reconstruct(&masks, &spectrum)?;
    let truth = scene.combined() * config.integration_s;
    let pearson = pearson(&image, &truth);
    info!("spi: {} of {} masks, r = {:?}", spectrum.len(), masks.order(), pearson);
    Ok(SpiRun {
        spectrum,
        image,
        truth,
        pearson,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SenseRun {
    pub present_rate: f64,
    pub absent_rate: f64,
    pub present: CountHistogram,
    pub absent: CountHistogram,
    pub fit: GaussianPair,
    pub threshold: f64,
    pub confidence: f64,
    /// Misclassified fraction of a fresh set of trials of each class.
    pub empirical_error: f64,
    /// Binomial standard deviation of `empirical_error` at `1 − confidence`.
    pub binomial_sigma: f64,
    pub trials: usize,
}

/// Count trials of one class: Poisson counts of a rate jittered by
/// `excess` relative Gaussian noise.
fn class_trials(rate: f64, integration_s: f64, excess: f64, trials: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mean = rate * integration_s;
    let blocks = trials.div_ceil(SENSE_BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng: StreamRng = rng::stream(seed, rng::stream_id(SENSE_DOMAIN, (stream << 32) | b as u64));
            let n = SENSE_BLOCK.min(trials - b * SENSE_BLOCK);
            (0..n)
                .map(|_| {
                    let m = if excess > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (mean * (1.0 + excess * z)).max(0.0)
                    } else {
                        mean
                    };
                    rng::poisson(m, &mut rng) as f64
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Object-present and object-absent counting trials, two-Gaussian fit,
/// balanced threshold, analytic confidence and held-out error rate.
pub fn run_sense(config: &RunConfig) -> Result<SenseRun> {
    check_mode(config, Mode::Sense)?;
    let s = &config.sense;
    let (present_rate, absent_rate) = if s.rates_from_model {
        let p = config.emission.rate;
        let on = config.model.signal(p, PhaseSettings::new(PI, 0.0), PixelTransmission::OPAQUE);
        (on, p + config.model.background)
    } else {
        (s.present_rate, s.absent_rate)
    };
    let tau = config.integration_s;
    let trials = |rate, stream| class_trials(rate, tau, s.excess_noise, s.trials, config.seed, stream);
    let present = trials(present_rate, 0);
    let absent = trials(absent_rate, 1);
    let fit = sensing::fit_two_gaussians(&present, &absent).map_err(|e| match e {
        Error::ClassesNotSeparated { .. } => Error::InfeasibleThreshold {
            requested: s.k_sigma,
            achievable: 0.0,
        },
        other => other,
    })?;
    let threshold = sensing::choose_threshold(&fit, s.k_sigma)?;
    let confidence = sensing::confidence(&fit, threshold);

    let held_present = trials(present_rate, 2);
    let held_absent = trials(absent_rate, 3);
    let wrong = held_present
        .iter()
        .filter(|&&c| sensing::decide(c, threshold) == sensing::Detection::Absent)
        .count()
        + held_absent
            .iter()
            .filter(|&&c| sensing::decide(c, threshold) == sensing::Detection::Present)
            .count();
    let n = 2 * s.trials;
    let empirical_error = wrong as f64 / n as f64;
    let p = 1.0 - confidence;
    let binomial_sigma = (p * (1.0 - p) / n as f64).sqrt();
    debug!("sense: threshold {threshold:.2}, {wrong} of {n} held-out trials misclassified");
    Ok(SenseRun {
        present_rate,
        absent_rate,
        present: CountHistogram::from_samples(&present, s.bin_width)?,
        absent: CountHistogram::from_samples(&absent, s.bin_width)?,
        fit,
        threshold,
        confidence,
        empirical_error,
        binomial_sigma,
        trials: s.trials,
    })
}

/// One interference curve of a uniform pixel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSeries {
    pub case: String,
    pub channel: Channel,
    pub phi: f64,
    pub values: Vec<f64>,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTable {
    pub theta: Vec<f64>,
    pub series: Vec<CurveSeries>,
}

impl CurveTable {
    pub fn find(&self, case: &str, channel: Channel) -> Option<&CurveSeries> {
        self.series.iter().find(|s| s.case == case && s.channel == channel)
    }

    /// CSV with a `theta` column followed by one `<case>_<channel>` column
    /// per series.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let err = |e: csv::Error| Error::Parse(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["theta".to_string()];
        header.extend(self.series.iter().map(|s| format!("{}_{}", s.case, s.channel)));
        w.write_record(&header).map_err(err)?;
        for (i, theta) in self.theta.iter().enumerate() {
            let mut row = vec![theta.to_string()];
            row.extend(self.series.iter().map(|s| s.values[i].to_string()));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// Cases scanned by [`run_curves`]: label, IFM phase and object pixel.
pub const CURVE_CASES: [(&str, f64, PixelTransmission); 3] = [
    ("open_phi_pi", PI, PixelTransmission::TRANSPARENT),
    ("open_phi_0", 0.0, PixelTransmission::TRANSPARENT),
    ("blocked_phi_0", 0.0, PixelTransmission::OPAQUE),
];

/// Fringes over `theta_samples` phases for an empty IFM at `φ = π` and
/// `φ = 0` and for an opaque object at `φ = 0`.
pub fn run_curves(config: &RunConfig, theta_samples: usize, channels: &[Channel]) -> Result<CurveTable> {
    config.model.validate()?;
    if theta_samples == 0 {
        return Err(Error::config("theta sample count must be positive"));
    }
    if channels.is_empty() {
        return Err(Error::config("no channels requested"));
    }
    let theta = theta_grid(theta_samples);
    let mut series = Vec::new();
    for (case, phi, px) in CURVE_CASES {
        for &channel in channels {
            let values = interference_curve(&config.model, config.emission.rate, phi, px, &theta, channel)?;
            let visibility = visibility(&values)?;
            series.push(CurveSeries {
                case: case.to_string(),
                channel,
                phi,
                values,
                visibility,
            });
        }
    }
    Ok(CurveTable { theta, series })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionRun {
    /// Edge width predicted by the imaging geometry, μm.
    pub expected_sigma_um: f64,
    pub fit: EsfFit,
    /// Fitted edge width, μm.
    pub sigma_um: f64,
    pub relative_error: f64,
}

/// Knife edge imaged at `(θ=0, φ=π)` with the geometry's blur, then an
/// edge-spread fit over all rows. `x = 0` sits on the edge.
pub fn run_resolution(config: &RunConfig) -> Result<ResolutionRun> {
    check_mode(config, Mode::Resolution)?;
    if !(config.integration_s > 0.0) {
        return Err(Error::config("resolution needs a positive integration time"));
    }
    let r = &config.resolution;
    let object = make_knife_edge(r.width, r.rows, r.edge_col)?;
    let emission = uniform_emission(r.width, r.rows, r.counts / config.integration_s)?;
    let expected = edge_sigma(&config.geometry);
    let rates = rate_maps(&config.model, &object, &emission, &ICCD_SETTINGS[..1]).remove(0);
    let blurred = blur(&rates, expected, object.pixel_pitch_um)?;
    let frame = expose(&blurred, config.integration_s, config.noise_seed(), RESOLUTION_DOMAIN);
    let pitch = object.pixel_pitch_um;
    let samples: Vec<(f64, f64)> = frame
        .indexed_iter()
        .map(|((_, c), &v)| ((c as f64 + 0.5 - r.edge_col as f64) * pitch, v))
        .collect();
    let fit = fit_esf(&samples)?;
    let sigma_um = fit.sigma.abs();
    Ok(ResolutionRun {
        expected_sigma_um: expected,
        fit,
        sigma_um,
        relative_error: sigma_um / expected - 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRun {
    /// Images at `θ = 0` and `θ = π`.
    pub images: [Array2<f64>; 2],
    pub difference: Array2<f64>,
    /// Region of each pixel: 0 background, 1..=3 the letters.
    pub labels: Array2<u8>,
}

/// Images `2⟨N⟩[1 + t²cos(θ + 2δ)]` of the three-letter logo and their
/// difference `4⟨N⟩t²cos 2δ`.
pub fn run_phase_sim(pconfig: &PhaseImagingConfig) -> Result<PhaseRun> {
    pconfig.validate()?;
    let labels = nju_labels(pconfig.width, pconfig.height)?;
    let rates: Vec<Array2<f64>> = [0.0, PI]
        .iter()
        .map(|&theta| {
            labels.mapv(|l| {
                let px = match l {
                    0 => PixelTransmission::OPAQUE,
                    k => pconfig.regions[k as usize - 1],
                };
                signal_rate(2.0 * pconfig.mean_counts, theta, direct_return_amplitude(px), 1.0, 0.0)
                    .expect("validated inputs")
            })
        })
        .collect();
    let i0 = expose(&rates[0], 1.0, pconfig.seed, PHASE_DOMAIN);
    let i1 = expose(&rates[1], 1.0, pconfig.seed, PHASE_DOMAIN + 1);
    let difference = &i0 - &i1;
    Ok(PhaseRun {
        images: [i0, i1],
        difference,
        labels,
    })
}

/// Pearson correlation of two equally shaped maps.
pub fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> Option<f64> {
    if a.dim() != b.dim() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// 16-bit raster with the map's range stretched onto `[0, 65535]`. A
/// constant map becomes all zeros.
pub fn to_raster16(map: &Array2<f64>) -> Raster {
    let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = map
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    Raster::new(map.ncols(), map.nrows(), u16::MAX, data).expect("shape matches")
}
