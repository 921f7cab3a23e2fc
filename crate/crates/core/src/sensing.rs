//! Photon-counting statistics for deciding whether an object sits in the
//! IFM arm.
//!
//! Object-present trials are recorded at the signal fringe maximum and
//! object-absent trials at the mean of the residual fringe. Each class is
//! fitted by its own Gaussian (the trials are labeled). The decision
//! threshold sits the same number of class standard deviations from both
//! means, and the confidence is the weighted probability of classifying a
//! trial correctly.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub const DEFAULT_BIN_WIDTH: f64 = 20.0;
const MIN_CLASS_SAMPLES: usize = 30;

/// One Poisson-distributed count with mean `rate · integration_s`.
pub fn sample_counts(rate: f64, integration_s: f64, rng: &mut StreamRng) -> Result<u64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::config(format!("count rate must be >= 0, got {rate}")));
    }
    if !(integration_s >= 0.0) || !integration_s.is_finite() {
        return Err(Error::config(format!("integration time must be >= 0, got {integration_s}")));
    }
    Ok(rng::poisson(rate * integration_s, rng))
}

/// Contiguous fixed-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bin_width: f64,
    /// `(lower edge, frequency)`, ascending and contiguous.
    pub bins: Vec<(f64, u64)>,
}

impl CountHistogram {
    /// Bins aligned to multiples of `bin_width`, spanning all samples.
    pub fn from_samples(samples: &[f64], bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::config(format!("bin width must be positive, got {bin_width}")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("histogram samples must be finite"));
        }
        if samples.is_empty() {
            return Ok(Self {
                bin_width,
                bins: Vec::new(),
            });
        }
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = (lo / bin_width).floor() as i64;
        let last = (hi / bin_width).floor() as i64;
        let mut freq = vec![0u64; (last - first + 1) as usize];
        for &s in samples {
            let idx = ((s / bin_width).floor() as i64 - first) as usize;
            freq[idx] += 1;
        }
        let bins = freq
            .into_iter()
            .enumerate()
            .map(|(i, f)| ((first + i as i64) as f64 * bin_width, f))
            .collect();
        Ok(Self { bin_width, bins })
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.1).sum()
    }

    /// CSV with header `lower_edge,frequency`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["lower_edge", "frequency"]).map_err(err)?;
        for (edge, f) in &self.bins {
            w.write_record([edge.to_string(), f.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// Gaussian fits of the object-absent (`low`) and object-present (`high`)
/// count distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub mu_low: f64,
    pub sigma_low: f64,
    pub mu_high: f64,
    pub sigma_high: f64,
    pub weight_low: f64,
    pub weight_high: f64,
}

impl GaussianPair {
    pub fn new(mu_low: f64, sigma_low: f64, mu_high: f64, sigma_high: f64) -> Result<Self> {
        let pair = Self {
            mu_low,
            sigma_low,
            mu_high,
            sigma_high,
            weight_low: 0.5,
            weight_high: 0.5,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_low > 0.0) || !(self.sigma_high > 0.0) {
            return Err(Error::DegenerateClass("standard deviations must be positive".into()));
        }
        if !(self.mu_low < self.mu_high) {
            return Err(Error::ClassesNotSeparated {
                present: self.mu_high,
                absent: self.mu_low,
            });
        }
        let w = self.weight_low + self.weight_high;
        if !(self.weight_low >= 0.0 && self.weight_high >= 0.0) || (w - 1.0).abs() > 1e-9 {
            return Err(Error::config("class weights must be nonnegative and sum to 1"));
        }
        Ok(())
    }

    /// `(μ_high − μ_low) / (σ_low + σ_high)`: how many class standard
    /// deviations separate each mean from the balanced threshold.
    pub fn separation(&self) -> f64 {
        (self.mu_high - self.mu_low) / (self.sigma_low + self.sigma_high)
    }

    /// Applies `x ↦ scale·x + offset` to both classes (`scale > 0`).
    pub fn rescaled(&self, scale: f64, offset: f64) -> Self {
        Self {
            mu_low: scale * self.mu_low + offset,
            sigma_low: scale * self.sigma_low,
            mu_high: scale * self.mu_high + offset,
            sigma_high: scale * self.sigma_high,
            ..*self
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-class sample mean and standard deviation. Weights follow the class
/// sample counts.
pub fn fit_two_gaussians(present: &[f64], absent: &[f64]) -> Result<GaussianPair> {
    for (name, xs) in [("present", present), ("absent", absent)] {
        if xs.len() < MIN_CLASS_SAMPLES {
            return Err(Error::DegenerateClass(format!(
                "{name} class has {} samples; at least {MIN_CLASS_SAMPLES} needed",
                xs.len()
            )));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateClass(format!("{name} class has non-finite samples")));
        }
    }
    let (mu_high, sigma_high) = mean_std(present);
    let (mu_low, sigma_low) = mean_std(absent);
    if sigma_high == 0.0 || sigma_low == 0.0 {
        return Err(Error::DegenerateClass("a class has zero variance".into()));
    }
    let total = (present.len() + absent.len()) as f64;
    let pair = GaussianPair {
        mu_low,
        sigma_low,
        mu_high,
        sigma_high,
        weight_low: absent.len() as f64 / total,
        weight_high: present.len() as f64 / total,
    };
    pair.validate()?;
    Ok(pair)
}

/// Threshold `x*` with `(x* − μ_low)/σ_low = (μ_high − x*)/σ_high`. Fails
/// when that common distance is below `k_sigma`.
pub fn choose_threshold(pair: &GaussianPair, k_sigma: f64) -> Result<f64> {
    if !(k_sigma > 0.0) {
        return Err(Error::config(format!("k_sigma must be positive, got {k_sigma}")));
    }
    pair.validate()?;
    let achievable = pair.separation();
    if achievable < k_sigma {
        return Err(Error::InfeasibleThreshold {
            requested: k_sigma,
            achievable,
        });
    }
    Ok((pair.mu_low * pair.sigma_high + pair.mu_high * pair.sigma_low) / (pair.sigma_low + pair.sigma_high))
}

/// Weighted probability of a correct decision at `threshold`.
pub fn confidence(pair: &GaussianPair, threshold: f64) -> f64 {
    let std = Normal::standard();
    pair.weight_low * std.cdf((threshold - pair.mu_low) / pair.sigma_low)
        + pair.weight_high * std.cdf((pair.mu_high - threshold) / pair.sigma_high)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detection {
    Present,
    Absent,
}

/// Strictly above the threshold counts as present; a tie is absent.
pub fn decide(count: f64, threshold: f64) -> Detection {
    if count > threshold {
        Detection::Present
    } else {
        Detection::Absent
    }
}
