//! Levenberg–Marquardt fit of the edge-spread function
//! `I(x) = a − b·erf[(x − x_c)/σ]`.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 500;
const MIN_SAMPLES: usize = 8;
/// erf(z) = 0.5 at this z.
const ERF_HALF: f64 = 0.476_936_276_204_469_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsfFit {
    pub a: f64,
    pub b: f64,
    pub x_c: f64,
    pub sigma: f64,
    pub iterations: usize,
    /// Sum of squared residuals at the optimum.
    pub cost: f64,
}

impl EsfFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a - self.b * erf((x - self.x_c) / self.sigma)
    }
}

fn cost(p: &Vector4<f64>, samples: &[(f64, f64)]) -> f64 {
    samples
        .iter()
        .map(|&(x, y)| {
            let m = p[0] - p[1] * erf((x - p[2]) / p[3]);
            (m - y).powi(2)
        })
        .sum()
}

/// Averages samples sharing an abscissa, sorted by `x`.
fn profile(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for (x, y) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += y;
                last.2 += 1;
            }
            _ => out.push((x, y, 1)),
        }
    }
    out.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect()
}

/// First `x` at which the normalized profile crosses `level`.
fn crossing(prof: &[(f64, f64)], level: f64) -> Option<f64> {
    prof.windows(2).find_map(|w| {
        let ((x0, u0), (x1, u1)) = (w[0], w[1]);
        if (u0 - level) * (u1 - level) <= 0.0 && u0 != u1 {
            Some(x0 + (level - u0) * (x1 - x0) / (u1 - u0))
        } else {
            None
        }
    })
}

fn initial_guess(samples: &[(f64, f64)]) -> Result<Vector4<f64>> {
    let prof = profile(samples);
    let n = prof.len();
    if n < 2 {
        return Err(Error::FitFailure {
            reason: "samples must cover at least two positions".into(),
            iterations: 0,
            cost: f64::NAN,
        });
    }
    let quarter = (n / 4).max(1);
    let left = prof[..quarter].iter().map(|p| p.1).sum::<f64>() / quarter as f64;
    let right = prof[n - quarter..].iter().map(|p| p.1).sum::<f64>() / quarter as f64;
    let a = 0.5 * (left + right);
    let b = 0.5 * (left - right);
    let span = prof[n - 1].0 - prof[0].0;
    let (lo, hi) = prof.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) || b == 0.0 || span <= 0.0 {
        return Err(Error::FitFailure {
            reason: "samples are flat; edge amplitude is degenerate".into(),
            iterations: 0,
            cost: 0.0,
        });
    }
    // u runs from −1 on the left plateau to +1 on the right
    let norm: Vec<(f64, f64)> = prof.iter().map(|&(x, y)| (x, (a - y) / b)).collect();
    let x_c = crossing(&norm, 0.0).unwrap_or(prof[n / 2].0);
    let sigma = match (crossing(&norm, -0.5), crossing(&norm, 0.5)) {
        (Some(x0), Some(x1)) if x1 > x0 => (x1 - x0) / (2.0 * ERF_HALF),
        _ => span / 10.0,
    };
    Ok(Vector4::new(a, b, x_c, sigma.max(span * 1e-4)))
}

/// Nonlinear least-squares fit of `(a, b, x_c, σ)` to `(x, counts)` samples.
pub fn fit_esf(samples: &[(f64, f64)]) -> Result<EsfFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::FitFailure {
            reason: format!("need at least {MIN_SAMPLES} samples, got {}", samples.len()),
            iterations: 0,
            cost: f64::NAN,
        });
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::FitFailure {
            reason: "samples contain non-finite values".into(),
            iterations: 0,
            cost: f64::NAN,
        });
    }
    let mut p = initial_guess(samples)?;
    let mut c = cost(&p, samples);
    let mut lambda = 1e-3;
    let two_over_sqrt_pi = 2.0 / PI.sqrt();

    for it in 1..=MAX_ITERATIONS {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for &(x, y) in samples {
            let z = (x - p[2]) / p[3];
            let e = erf(z);
            let g = two_over_sqrt_pi * (-z * z).exp();
            let r = p[0] - p[1] * e - y;
            let j = Vector4::new(1.0, -e, p[1] * g / p[3], p[1] * g * z / p[3]);
            jtj += j * j.transpose();
            jtr += j * r;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            if trial[3] > 0.0 && trial.iter().all(|v| v.is_finite()) {
                let ct = cost(&trial, samples);
                if ct <= c {
                    let small_step = (0..4).all(|i| step[i].abs() <= 1e-12 * (p[i].abs() + 1e-12));
                    let small_gain = c - ct <= 1e-15 * c.max(1e-300);
                    p = trial;
                    c = ct;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if small_step || small_gain {
                        return finish(p, c, it);
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step exists at any damping: stationary point
            return finish(p, c, it);
        }
    }
    Err(Error::FitFailure {
        reason: "did not converge".into(),
        iterations: MAX_ITERATIONS,
        cost: c,
    })
}

fn finish(p: Vector4<f64>, cost: f64, iterations: usize) -> Result<EsfFit> {
    if p[1].abs() <= 1e-9 * (p[0].abs() + 1.0) {
        return Err(Error::FitFailure {
            reason: "edge amplitude collapsed to zero".into(),
            iterations,
            cost,
        });
    }
    Ok(EsfFit {
        a: p[0],
        b: p[1],
        x_c: p[2],
        sigma: p[3],
        iterations,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn synthetic(a: f64, b: f64, x_c: f64, sigma: f64) -> Vec<(f64, f64)> {
        (-40..=40)
            .map(|i| {
                let x = i as f64 * 6.5;
                (x, a - b * erf((x - x_c) / sigma))
            })
            .collect()
    }

    #[test]
    fn recovers_noiseless_edge() {
        let fit = fit_esf(&synthetic(1000.0, 500.0, 0.0, 43.0)).unwrap();
        assert!((42.1..=43.9).contains(&fit.sigma), "{fit:?}");
        assert!((fit.sigma - 43.0).abs() < 1e-6);
        assert!((fit.a - 1000.0).abs() < 1e-6 && (fit.b - 500.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_rising_offset_edge() {
        let fit = fit_esf(&synthetic(300.0, -120.0, 37.0, 20.0)).unwrap();
        assert!((fit.sigma - 20.0).abs() < 1e-6 && (fit.x_c - 37.0).abs() < 1e-6);
        assert!((fit.eval(37.0) - 300.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_noisy_edge() {
        let mut r = rng::stream(2024, 0);
        let samples: Vec<(f64, f64)> = synthetic(1e4, 5e3, 0.0, 43.0)
            .into_iter()
            .map(|(x, y)| (x, rng::poisson(y, &mut r) as f64))
            .collect();
        let fit = fit_esf(&samples).unwrap();
        assert!((fit.sigma / 43.0 - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn flat_and_short_inputs_fail() {
        let flat: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 7.0)).collect();
        assert!(matches!(fit_esf(&flat), Err(Error::FitFailure { .. })));
        assert!(matches!(fit_esf(&flat[..5]), Err(Error::FitFailure { .. })));
        let bad = vec![(0.0, f64::NAN); 10];
        assert!(fit_esf(&bad).is_err());
    }
}
