//! Complex-amplitude model of the folded induced-coherence interferometer
//! with an embedded interaction-free measurement (IFM) module.
//!
//! The forward-generated idler enters a Michelson interferometer whose
//! beam splitter has transmissivity `T` and reflectivity `R`. The object
//! sits in the transmitted arm and is traversed twice (out and back), so a
//! pixel with field transmission `t·e^{iδ}` contributes `t²·e^{2iδ}`. The
//! reflected arm carries the relative phase `φ` and a mode-overlap
//! amplitude `γ` that models imperfect alignment. Two amplitudes leave the
//! module:
//!
//! - the amplitude `r` returned to the crystal, which sets the visibility of
//!   the signal fringe, and
//! - the amplitude leaking out of the vacuum port.
//!
//! Expected signal rates follow `C = P·[1 + v·Re(e^{iθ}·r)] + b` in the
//! low-gain (single pair) limit.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signal-arm phase `theta` and IFM relative phase `phi`, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSettings {
    pub theta: f64,
    pub phi: f64,
}

impl PhaseSettings {
    pub const fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Both phases reduced to `[0, 2π)`.
    pub fn reduced(self) -> Self {
        Self {
            theta: self.theta.rem_euclid(TAU),
            phi: self.phi.rem_euclid(TAU),
        }
    }

    /// Compares two settings modulo 2π.
    pub fn same_as(self, other: Self, tol: f64) -> bool {
        let d = |a: f64, b: f64| {
            let x = (a - b).rem_euclid(TAU);
            x.min(TAU - x)
        };
        d(self.theta, other.theta) <= tol && d(self.phi, other.phi) <= tol
    }
}

/// The four settings of the single-pixel differencing rule, paired with
/// their sign: `C(0,π) − C(π,π) − C(π,0) + C(0,0)`.
pub const SPI_SETTINGS: [(PhaseSettings, f64); 4] = [
    (PhaseSettings::new(0.0, PI), 1.0),
    (PhaseSettings::new(PI, PI), -1.0),
    (PhaseSettings::new(PI, 0.0), -1.0),
    (PhaseSettings::new(0.0, 0.0), 1.0),
];

/// The two array-detector settings: constructive `(θ=0, φ=π)` minus
/// `(θ=π, φ=0)`.
pub const ICCD_SETTINGS: [PhaseSettings; 2] = [PhaseSettings::new(0.0, PI), PhaseSettings::new(PI, 0.0)];

/// Beam splitter and alignment of the IFM Michelson.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfmConfig {
    pub transmissivity: f64,
    pub reflectivity: f64,
    /// Mode-overlap amplitude of the reflected arm, 1 when perfectly aligned.
    pub mode_overlap: f64,
}

impl IfmConfig {
    pub fn new(transmissivity: f64, reflectivity: f64, mode_overlap: f64) -> Result<Self> {
        let cfg = Self {
            transmissivity,
            reflectivity,
            mode_overlap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lossless 50:50 splitter with perfect overlap.
    pub const fn balanced() -> Self {
        Self {
            transmissivity: 0.5,
            reflectivity: 0.5,
            mode_overlap: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("transmissivity", self.transmissivity)?;
        check_unit("reflectivity", self.reflectivity)?;
        check_unit("mode_overlap", self.mode_overlap)?;
        if self.transmissivity + self.reflectivity > 1.0 + 1e-12 {
            return Err(Error::config(format!(
                "T + R = {} exceeds 1",
                self.transmissivity + self.reflectivity
            )));
        }
        Ok(())
    }
}

impl Default for IfmConfig {
    fn default() -> Self {
        Self::balanced()
    }
}

/// Single-pass field transmission `t·e^{iδ}` of one object pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelTransmission {
    pub amplitude: f64,
    pub phase: f64,
}

impl PixelTransmission {
    pub const OPAQUE: Self = Self {
        amplitude: 0.0,
        phase: 0.0,
    };
    pub const TRANSPARENT: Self = Self {
        amplitude: 1.0,
        phase: 0.0,
    };

    pub fn new(amplitude: f64, phase: f64) -> Result<Self> {
        check_unit("pixel amplitude", amplitude)?;
        if !phase.is_finite() {
            return Err(Error::config("pixel phase must be finite"));
        }
        Ok(Self { amplitude, phase })
    }

    /// Round-trip factor `t²·e^{2iδ}` for an object that is passed twice.
    pub fn double_pass(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude * self.amplitude, 2.0 * self.phase)
    }
}

impl Default for PixelTransmission {
    fn default() -> Self {
        Self::TRANSPARENT
    }
}

/// Detection channel of an interference curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal,
    Idler,
    Coincidence,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Signal, Channel::Idler, Channel::Coincidence];

    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Signal => "signal",
            Channel::Idler => "idler",
            Channel::Coincidence => "coincidence",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "signal" | "s" => Ok(Channel::Signal),
            "idler" | "i" => Ok(Channel::Idler),
            "coincidence" | "coinc" | "c" => Ok(Channel::Coincidence),
            other => Err(Error::config(format!("unknown channel `{other}`"))),
        }
    }
}

/// All physical parameters of the interferometer needed to turn a pixel's
/// emission rate into expected detector rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferometerModel {
    pub ifm: IfmConfig,
    pub signal_vis: f64,
    pub idler_vis: f64,
    pub coinc_vis: f64,
    /// Additive background per pixel, counts/s.
    pub background: f64,
}

impl InterferometerModel {
    pub const fn ideal() -> Self {
        Self {
            ifm: IfmConfig::balanced(),
            signal_vis: 1.0,
            idler_vis: 1.0,
            coinc_vis: 1.0,
            background: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ifm.validate()?;
        check_unit("signal_vis", self.signal_vis)?;
        check_unit("idler_vis", self.idler_vis)?;
        check_unit("coinc_vis", self.coinc_vis)?;
        if !(self.background >= 0.0) || !self.background.is_finite() {
            return Err(Error::config("background rate must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn vis_factor(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Signal => self.signal_vis,
            Channel::Idler => self.idler_vis,
            Channel::Coincidence => self.coinc_vis,
        }
    }

    /// Expected rate for one pixel on the given channel. The model and the
    /// emission rate are assumed valid.
    pub fn rate(&self, channel: Channel, emission: f64, settings: PhaseSettings, px: PixelTransmission) -> f64 {
        let r = idler_return_amplitude(&self.ifm, settings.phi, px);
        rate_expr(emission, settings.theta, r, self.vis_factor(channel), self.background)
    }

    /// Expected signal rate for one pixel.
    pub fn signal(&self, emission: f64, settings: PhaseSettings, px: PixelTransmission) -> f64 {
        self.rate(Channel::Signal, emission, settings, px)
    }
}

impl Default for InterferometerModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Amplitude of the idler returned from the IFM to the crystal:
/// `r = T·t²·e^{2iδ} − γ·R·e^{iφ}`.
pub fn idler_return_amplitude(ifm: &IfmConfig, phi: f64, px: PixelTransmission) -> Complex64 {
    ifm.transmissivity * px.double_pass() - ifm.mode_overlap * ifm.reflectivity * Complex64::cis(phi)
}

/// Amplitude leaving the vacuum port: `i·√(TR)·(t²·e^{2iδ} + γ·e^{iφ})`.
pub fn vac_leak_amplitude(ifm: &IfmConfig, phi: f64, px: PixelTransmission) -> Complex64 {
    let scale = (ifm.transmissivity * ifm.reflectivity).sqrt();
    Complex64::i() * scale * (px.double_pass() + ifm.mode_overlap * Complex64::cis(phi))
}

/// Return amplitude with no IFM module in the idler arm: the idler crosses
/// the object twice and always comes back, `r = t²·e^{2iδ}`.
pub fn direct_return_amplitude(px: PixelTransmission) -> Complex64 {
    px.double_pass()
}

/// Normalized intensity at the IFM vacuum-port detector, `|vac_leak|²`.
pub fn ifm_detector_rate(ifm: &IfmConfig, phi: f64, px: PixelTransmission) -> f64 {
    vac_leak_amplitude(ifm, phi, px).norm_sqr()
}

/// Expected single-channel rate `P·[1 + v·Re(e^{iθ}·r)] + b`.
pub fn signal_rate(emission: f64, theta: f64, r: Complex64, vis: f64, background: f64) -> Result<f64> {
    if !(emission >= 0.0) || !emission.is_finite() {
        return Err(Error::config(format!("emission rate must be >= 0, got {emission}")));
    }
    if !(background >= 0.0) || !background.is_finite() {
        return Err(Error::config(format!("background rate must be >= 0, got {background}")));
    }
    check_unit("visibility factor", vis)?;
    Ok(rate_expr(emission, theta, r, vis, background))
}

#[inline]
fn rate_expr(emission: f64, theta: f64, r: Complex64, vis: f64, background: f64) -> f64 {
    emission * (1.0 + vis * (Complex64::cis(theta) * r).re) + background
}

/// Rates at each `theta` for one pixel on one channel.
pub fn interference_curve(
    model: &InterferometerModel,
    emission: f64,
    phi: f64,
    px: PixelTransmission,
    thetas: &[f64],
    channel: Channel,
) -> Result<Vec<f64>> {
    if thetas.is_empty() {
        return Err(Error::config("theta sample list is empty"));
    }
    model.validate()?;
    let r = idler_return_amplitude(&model.ifm, phi, px);
    let v = model.vis_factor(channel);
    thetas
        .iter()
        .map(|&theta| signal_rate(emission, theta, r, v, model.background))
        .collect()
}

/// Fringe visibility `(max − min) / (max + min)`.
pub fn visibility(curve: &[f64]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::config("visibility of an empty curve"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &c in curve {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::config(format!("curve value {c} is negative or not finite")));
        }
        lo = lo.min(c);
        hi = hi.max(c);
    }
    if hi + lo <= 0.0 {
        return Err(Error::UndefinedVisibility);
    }
    Ok((hi - lo) / (hi + lo))
}

/// Evenly spaced phases over `[0, 2π)`.
pub fn theta_grid(samples: usize) -> Vec<f64> {
    (0..samples).map(|i| TAU * i as f64 / samples as f64).collect()
}

/// Two-photon state after the second pass through the crystal, kept for
/// normalization checks.
///
/// The pair component is `β·{|1_s 1_i⟩ + e^{iθ}|1_s⟩[r|1_i⟩ + leak|1_i0⟩]}`
/// plus the probability absorbed by the object, `T·(1 − t⁴)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub vacuum_amplitude: Complex64,
    pub pair_amplitude: Complex64,
    pub idler_return: Complex64,
    pub vac_leak: Complex64,
    pub absorbed_weight: f64,
    pub theta: f64,
}

impl JointState {
    pub fn new(ifm: &IfmConfig, settings: PhaseSettings, px: PixelTransmission, pair_amplitude: Complex64) -> Self {
        let idler_return = idler_return_amplitude(ifm, settings.phi, px);
        let vac_leak = vac_leak_amplitude(ifm, settings.phi, px);
        let t4 = px.amplitude.powi(4);
        let absorbed_weight = ifm.transmissivity * (1.0 - t4);
        let mut state = Self {
            vacuum_amplitude: Complex64::new(1.0, 0.0),
            pair_amplitude,
            idler_return,
            vac_leak,
            absorbed_weight,
            theta: settings.theta,
        };
        state.vacuum_amplitude = Complex64::new((1.0 - state.pair_probability()).max(0.0).sqrt(), 0.0);
        state
    }

    /// Total weight of the IFM outputs, `|r|² + |leak|² + absorbed`.
    pub fn ifm_weight(&self) -> f64 {
        self.idler_return.norm_sqr() + self.vac_leak.norm_sqr() + self.absorbed_weight
    }

    /// Probability that a pair was emitted in either pass. The `|1_s 1_i⟩`
    /// terms from both passes add coherently.
    pub fn pair_probability(&self) -> f64 {
        let coherent = Complex64::new(1.0, 0.0) + Complex64::cis(self.theta) * self.idler_return;
        self.pair_amplitude.norm_sqr() * (coherent.norm_sqr() + self.vac_leak.norm_sqr() + self.absorbed_weight)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.vacuum_amplitude.norm_sqr() + self.pair_probability()
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1], got {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    const IDEAL: IfmConfig = IfmConfig::balanced();

    fn px(t: f64, d: f64) -> PixelTransmission {
        PixelTransmission::new(t, d).unwrap()
    }

    #[test]
    fn idler_return_examples() {
        let r = idler_return_amplitude(&IDEAL, 0.0, px(1.0, 0.0));
        assert_abs_diff_eq!(r.norm(), 0.0, epsilon = 1e-15);

        let r = idler_return_amplitude(&IDEAL, 0.0, PixelTransmission::OPAQUE);
        assert_abs_diff_eq!(r.re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.norm_sqr(), 0.25, epsilon = 1e-15);

        let r = idler_return_amplitude(&IDEAL, PI, px(1.0, 0.0));
        assert_abs_diff_eq!(r.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.im, 0.0, epsilon = 1e-15);

        // 0.5·e^{iπ/2} − 0.5·e^{iπ} computed by hand
        let r = idler_return_amplitude(&IDEAL, PI, px(1.0, FRAC_PI_4));
        assert_abs_diff_eq!(r.re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.im, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn vac_leak_examples() {
        let l = vac_leak_amplitude(&IDEAL, 0.0, px(1.0, 0.0));
        assert_abs_diff_eq!(l.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.im, 1.0, epsilon = 1e-15);

        let l = vac_leak_amplitude(&IDEAL, PI, px(1.0, 0.0));
        assert_abs_diff_eq!(l.norm(), 0.0, epsilon = 1e-15);

        let l = vac_leak_amplitude(&IDEAL, 0.0, PixelTransmission::OPAQUE);
        assert_abs_diff_eq!(l.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.im, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn signal_rate_examples() {
        let r0 = idler_return_amplitude(&IDEAL, 0.0, PixelTransmission::OPAQUE);
        assert_abs_diff_eq!(signal_rate(1.0, 0.0, r0, 1.0, 0.0).unwrap(), 0.5, epsilon = 1e-15);

        let r1 = idler_return_amplitude(&IDEAL, PI, PixelTransmission::TRANSPARENT);
        assert_abs_diff_eq!(signal_rate(1.0, 0.0, r1, 1.0, 0.0).unwrap(), 2.0, epsilon = 1e-15);

        for theta in theta_grid(7) {
            assert_eq!(signal_rate(3.0, theta, r1, 0.0, 0.25).unwrap(), 3.25);
        }
    }

    #[test]
    fn signal_rate_rejects_negative_inputs() {
        let r = Complex64::new(0.0, 0.0);
        assert!(matches!(signal_rate(-1.0, 0.0, r, 1.0, 0.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(signal_rate(1.0, 0.0, r, 1.0, -0.1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn ifm_detector_examples() {
        let thetas = theta_grid(720);
        let curve = |g: f64, t: f64| -> Vec<f64> {
            let cfg = IfmConfig::new(0.5, 0.5, g).unwrap();
            thetas.iter().map(|&phi| ifm_detector_rate(&cfg, phi, px(t, 0.0))).collect()
        };
        assert_abs_diff_eq!(visibility(&curve(1.0, 1.0)).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(visibility(&curve(0.699, 1.0)).unwrap(), 0.939, epsilon = 1e-3);
        for v in curve(0.8, 0.0) {
            assert_abs_diff_eq!(v, 0.25 * 0.64, epsilon = 1e-15);
        }
    }

    #[test]
    fn interference_curve_examples() {
        let model = InterferometerModel::ideal();
        let thetas = theta_grid(360);
        let c = interference_curve(&model, 1.0, PI, PixelTransmission::TRANSPARENT, &thetas, Channel::Signal).unwrap();
        assert_abs_diff_eq!(visibility(&c).unwrap(), 1.0, epsilon = 1e-12);
        let c = interference_curve(&model, 1.0, 0.0, PixelTransmission::TRANSPARENT, &thetas, Channel::Idler).unwrap();
        assert_abs_diff_eq!(visibility(&c).unwrap(), 0.0, epsilon = 1e-12);

        // v_s·γR = 0.5·0.5
        let half = InterferometerModel {
            signal_vis: 0.5,
            ..model
        };
        let c = interference_curve(&half, 1.0, 0.0, PixelTransmission::OPAQUE, &thetas, Channel::Signal).unwrap();
        assert_abs_diff_eq!(visibility(&c).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn channel_tags() {
        assert_eq!("Coincidence".parse::<Channel>().unwrap(), Channel::Coincidence);
        assert!("pump".parse::<Channel>().is_err());
        assert!(interference_curve(&InterferometerModel::ideal(), 1.0, 0.0, PixelTransmission::OPAQUE, &[], Channel::Signal).is_err());
    }

    #[test]
    fn visibility_examples() {
        assert_abs_diff_eq!(visibility(&[1.5, 0.5]).unwrap(), 0.5);
        assert_eq!(visibility(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(visibility(&[2.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(visibility(&[0.0, 0.0]), Err(Error::UndefinedVisibility)));
        assert!(visibility(&[]).is_err());
        assert!(visibility(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn ifm_config_validation() {
        assert!(IfmConfig::new(0.6, 0.5, 1.0).is_err());
        assert!(IfmConfig::new(0.5, 0.5, 1.2).is_err());
        assert!(IfmConfig::new(0.4, 0.5, 0.0).is_ok());
        assert!(PixelTransmission::new(1.1, 0.0).is_err());
    }

    #[test]
    fn phase_settings_compare_mod_two_pi() {
        let a = PhaseSettings::new(-PI, 3.0 * PI);
        assert!(a.same_as(PhaseSettings::new(PI, PI), 1e-12));
        let r = a.reduced();
        assert!((r.theta - PI).abs() < 1e-12 && (r.phi - PI).abs() < 1e-12);
    }

    #[test]
    fn zone_visibilities_at_ifm_phases() {
        let model = InterferometerModel::ideal();
        let thetas = theta_grid(256);
        let vis = |phi| {
            let c = interference_curve(&model, 1.0, phi, PixelTransmission::TRANSPARENT, &thetas, Channel::Signal).unwrap();
            visibility(&c).unwrap()
        };
        assert_abs_diff_eq!(vis(PI), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vis(0.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_state_pair_probability_tracks_signal_rate() {
        let beta = Complex64::new(0.01, 0.002);
        for &(t, d, theta, phi) in &[(0.0, 0.0, 0.3, 1.1), (1.0, 0.0, 2.0, 0.4), (0.7, 0.9, 4.0, 5.5)] {
            let s = JointState::new(&IDEAL, PhaseSettings::new(theta, phi), px(t, d), beta);
            assert_abs_diff_eq!(s.ifm_weight(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-12);
            let rate = InterferometerModel::ideal().signal(1.0, PhaseSettings::new(theta, phi), px(t, d));
            assert_abs_diff_eq!(s.pair_probability(), 2.0 * beta.norm_sqr() * rate, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn normalization_holds(t in 0.0f64..=1.0, d in 0.0..TAU, phi in 0.0..TAU, tr in 0.0f64..=1.0) {
            let ifm = IfmConfig::new(tr, 1.0 - tr, 1.0).unwrap();
            let p = px(t, d);
            let total = idler_return_amplitude(&ifm, phi, p).norm_sqr() + vac_leak_amplitude(&ifm, phi, p).norm_sqr();
            prop_assert!((total - (tr * t.powi(4) + 1.0 - tr)).abs() < 1e-12);
            let s = JointState::new(&ifm, PhaseSettings::new(0.0, phi), p, Complex64::new(1e-3, 0.0));
            prop_assert!((s.ifm_weight() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn zone_closed_forms(theta in 0.0..TAU, phi in 0.0..TAU, p in 0.0f64..1e4) {
            let m = InterferometerModel::ideal();
            let s = PhaseSettings::new(theta, phi);
            let zone1 = p * (1.0 - 0.5 * (theta + phi).cos());
            let zone2 = p * (1.0 + 0.5 * (theta.cos() - (theta + phi).cos()));
            prop_assert!((m.signal(p, s, PixelTransmission::OPAQUE) - zone1).abs() <= 1e-12 * p.max(1.0));
            prop_assert!((m.signal(p, s, PixelTransmission::TRANSPARENT) - zone2).abs() <= 1e-12 * p.max(1.0));
        }

        #[test]
        fn rate_is_two_pi_periodic(theta in -10.0f64..10.0, re in -0.7f64..0.7, im in -0.7f64..0.7, v in 0.0f64..=1.0) {
            let r = Complex64::new(re, im);
            let a = signal_rate(5.0, theta, r, v, 0.1).unwrap();
            let b = signal_rate(5.0, theta + TAU, r, v, 0.1).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn opaque_return_magnitude_is_phase_free(phi in 0.0..TAU, g in 0.0f64..=1.0, rr in 0.0f64..=1.0) {
            let ifm = IfmConfig::new(1.0 - rr, rr, g).unwrap();
            let r = idler_return_amplitude(&ifm, phi, PixelTransmission::OPAQUE);
            prop_assert!((r.norm() - g * rr).abs() < 1e-15);
        }
    }
}
