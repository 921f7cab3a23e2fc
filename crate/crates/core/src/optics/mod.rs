//! Resolution model of the signal arm, a blur consistent with it, and the
//! spatial properties of the photon pairs.
//!
//! The edge-spread function of the system is `I(x) = a − b·erf[(x − x_c)/σ]`.
//! A step convolved with a Gaussian of standard deviation `s` gives
//! `½·(1 + erf[x/(s√2)])`, so the point-spread function that reproduces the
//! edge model exactly has `s = σ/√2`. [`blur`] uses that kernel, integrated
//! over each pixel so that a pixelated step yields the erf profile exactly
//! at the pixel centres.

mod esf;

pub use esf::{fit_esf, EsfFit};

use std::f64::consts::{PI, SQRT_2};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Lenses, wavelengths and pump waist of the imaging setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingGeometry {
    pub f_signal_mm: f64,
    pub f_idler_mm: f64,
    pub lambda_pump_nm: f64,
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
    /// Magnification of the relay onto the camera.
    pub magnification: f64,
    pub pump_waist_um: f64,
}

impl ImagingGeometry {
    /// 532 nm pump, 810/1550 nm pairs, f = 100 mm, M = 0.4, ω_p = 171 μm.
    pub const REFERENCE: Self = Self {
        f_signal_mm: 100.0,
        f_idler_mm: 100.0,
        lambda_pump_nm: 532.0,
        lambda_signal_nm: 810.0,
        lambda_idler_nm: 1550.0,
        magnification: 0.4,
        pump_waist_um: 171.0,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("f_signal_mm", self.f_signal_mm),
            ("f_idler_mm", self.f_idler_mm),
            ("lambda_pump_nm", self.lambda_pump_nm),
            ("lambda_signal_nm", self.lambda_signal_nm),
            ("lambda_idler_nm", self.lambda_idler_nm),
            ("magnification", self.magnification),
            ("pump_waist_um", self.pump_waist_um),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for ImagingGeometry {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// `f·λ / (√2·π·ω_p)` in μm, from mm, nm and μm inputs.
fn resolution_cell_um(f_mm: f64, lambda_nm: f64, waist_um: f64) -> f64 {
    (f_mm * 1e3) * (lambda_nm * 1e-3) / (SQRT_2 * PI * waist_um)
}

/// Edge width `σ = f_s·λ_s·M / (√2·π·ω_p)` at the camera, μm.
pub fn edge_sigma(geom: &ImagingGeometry) -> f64 {
    resolution_cell_um(geom.f_signal_mm, geom.lambda_signal_nm, geom.pump_waist_um) * geom.magnification
}

/// Resolution cell `σ_i = f_i·λ_i / (√2·π·ω_p)` in the idler object plane, μm.
pub fn fov_sigma_i(f_idler_mm: f64, lambda_idler_nm: f64, pump_waist_um: f64) -> f64 {
    resolution_cell_um(f_idler_mm, lambda_idler_nm, pump_waist_um)
}

/// Number of resolvable spatial modes, `(FoV / σ_i)²`.
pub fn spatial_mode_count(fov_um: f64, sigma_i_um: f64) -> Result<f64> {
    if !(fov_um > 0.0) || !(sigma_i_um > 0.0) {
        return Err(Error::config("field of view and sigma_i must be positive"));
    }
    Ok((fov_um / sigma_i_um).powi(2))
}

/// Pixel-integrated Gaussian weights with standard deviation `s` pixels.
fn kernel(s: f64) -> Vec<f64> {
    let radius = (8.0 * s).ceil() as i64 + 1;
    let scale = 1.0 / (s * SQRT_2);
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|d| 0.5 * (erf((d as f64 + 0.5) * scale) - erf((d as f64 - 0.5) * scale)))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Half-sample symmetric reflection of index `i` into `[0, n)`.
fn mirror(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn convolve_line(src: &[f64], w: &[f64], dst: &mut [f64]) {
    let n = src.len();
    let radius = (w.len() / 2) as i64;
    for (j, out) in dst.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let d = k as i64 - radius;
            acc += wk * src[mirror(j as i64 - d, n)];
        }
        *out = acc;
    }
}

/// Separable Gaussian blur matching the edge model of width `sigma_um`,
/// with mirrored borders. Flux is conserved.
pub fn blur(image: &Array2<f64>, sigma_um: f64, pitch_um: f64) -> Result<Array2<f64>> {
    if !(sigma_um >= 0.0) || !sigma_um.is_finite() {
        return Err(Error::config(format!("blur sigma must be >= 0, got {sigma_um}")));
    }
    if !(pitch_um > 0.0) {
        return Err(Error::config(format!("pixel pitch must be positive, got {pitch_um}")));
    }
    if sigma_um == 0.0 || image.is_empty() {
        return Ok(image.clone());
    }
    let w = kernel(sigma_um / (SQRT_2 * pitch_um));

    let mut rows = Array2::zeros(image.raw_dim());
    rows.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(image.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, src)| {
            let src = src.to_vec();
            let mut buf = vec![0.0; src.len()];
            convolve_line(&src, &w, &mut buf);
            out.iter_mut().zip(buf).for_each(|(o, v)| *o = v);
        });

    let mut cols = Array2::zeros(image.raw_dim());
    cols.axis_iter_mut(Axis(1))
        .into_par_iter()
        .zip(rows.axis_iter(Axis(1)).into_par_iter())
        .for_each(|(mut out, src)| {
            let src = src.to_vec();
            let mut buf = vec![0.0; src.len()];
            convolve_line(&src, &w, &mut buf);
            out.iter_mut().zip(buf).for_each(|(o, v)| *o = v);
        });
    Ok(cols)
}

/// `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Crystal and momentum settings at which the pair mode function is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchingParams {
    pub crystal_length_mm: f64,
    /// Longitudinal momentum mismatch, rad/m.
    pub delta_k: f64,
    /// Transverse signal momentum, rad/m.
    pub k_signal: [f64; 2],
    /// Transverse idler momentum, rad/m.
    pub k_idler: [f64; 2],
}

impl PhaseMatchingParams {
    pub fn mode_function(&self, pump_waist_um: f64) -> f64 {
        mode_function(self.k_signal, self.k_idler, pump_waist_um, self.delta_k, self.crystal_length_mm)
    }
}

/// Unnormalized pair mode function
/// `exp(−|k_s + k_i|²·ω_p²/4) · sinc(−Δk·L/2)`, equal to 1 at perfect
/// anti-correlation and phase matching.
pub fn mode_function(k_signal: [f64; 2], k_idler: [f64; 2], pump_waist_um: f64, delta_k: f64, crystal_length_mm: f64) -> f64 {
    let w = pump_waist_um * 1e-6;
    let sx = k_signal[0] + k_idler[0];
    let sy = k_signal[1] + k_idler[1];
    let pump = (-(sx * sx + sy * sy) * w * w / 4.0).exp();
    pump * sinc(-delta_k * crystal_length_mm * 1e-3 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use proptest::prelude::*;

    #[test]
    fn reference_edge_sigma() {
        let s = edge_sigma(&ImagingGeometry::REFERENCE);
        assert!((s - 43.0).abs() <= 0.5, "{s}");
        let wide = ImagingGeometry {
            pump_waist_um: 342.0,
            ..ImagingGeometry::REFERENCE
        };
        assert_relative_eq!(edge_sigma(&wide), s / 2.0, max_relative = 1e-14);
        let flat = ImagingGeometry {
            magnification: 0.0,
            ..ImagingGeometry::REFERENCE
        };
        assert_eq!(edge_sigma(&flat), 0.0);
        assert!(flat.validate().is_err());
    }

    #[test]
    fn idler_resolution_cell() {
        // 1e5 μm · 1.55 μm / (√2 π · 171 μm)
        assert_relative_eq!(fov_sigma_i(100.0, 1550.0, 171.0), 204.019_048, max_relative = 1e-6);
        assert_relative_eq!(fov_sigma_i(100.0, 810.0, 171.0), 106.616_406, max_relative = 1e-6);
        assert!(fov_sigma_i(100.0, 1550.0, 1e12) < 1e-6);
    }

    #[test]
    fn mode_counts() {
        let s = 204.0;
        assert_relative_eq!(spatial_mode_count(s * 948f64.sqrt(), s).unwrap(), 948.0, max_relative = 1e-12);
        assert_eq!(spatial_mode_count(s, s).unwrap(), 1.0);
        assert_eq!(spatial_mode_count(2.0 * s, s).unwrap(), 4.0);
        assert!(spatial_mode_count(0.0, s).is_err());
    }

    #[test]
    fn blur_identity_and_constant() {
        let img = Array2::from_shape_fn((5, 7), |(r, c)| (r * 7 + c) as f64);
        assert_eq!(blur(&img, 0.0, 13.0).unwrap(), img);
        let flat = Array2::from_elem((6, 9), 3.5);
        let out = blur(&flat, 43.0, 13.0).unwrap();
        assert!(out.iter().all(|&v| (v - 3.5).abs() < 1e-12));
        assert!(blur(&img, -1.0, 13.0).is_err());
        assert!(blur(&img, 1.0, 0.0).is_err());
    }

    #[test]
    fn blurred_step_is_erf_profile() {
        let (w, edge, pitch, sigma) = (96usize, 48usize, 13.0, 43.0);
        let img = Array2::from_shape_fn((4, w), |(_, c)| if c >= edge { 2.0 } else { 1.0 });
        let out = blur(&img, sigma, pitch).unwrap();
        // edge sits on the boundary between pixels edge-1 and edge
        let x_edge = (edge as f64 - 0.5) * pitch;
        for c in 16..w - 16 {
            let x = c as f64 * pitch;
            let expect = 1.5 + 0.5 * erf((x - x_edge) / sigma);
            assert_relative_eq!(out[[1, c]], expect, max_relative = 1e-6);
        }
    }

    #[test]
    fn blur_conserves_flux_for_wide_kernels() {
        let img = Array2::from_shape_fn((5, 3), |(r, c)| ((r * 3 + c) % 4) as f64 + 0.25);
        let out = blur(&img, 300.0, 13.0).unwrap();
        assert_relative_eq!(out.sum(), img.sum(), max_relative = 1e-12);
    }

    #[test]
    fn mode_function_examples() {
        let k = [1.2e4, -3.0e3];
        let neg = [-k[0], -k[1]];
        assert_relative_eq!(mode_function(k, neg, 171.0, 0.0, 2.0), 1.0);
        // Δk·L/2 = π
        let dk = 2.0 * PI / 2e-3;
        assert!(mode_function(k, neg, 171.0, dk, 2.0).abs() < 1e-15);
        // |k_s + k_i| = 2/ω_p
        let w = 171e-6;
        assert_relative_eq!(mode_function([2.0 / w, 0.0], [0.0, 0.0], 171.0, 0.0, 2.0), (-1f64).exp(), max_relative = 1e-14);
        let pm = PhaseMatchingParams {
            crystal_length_mm: 2.0,
            delta_k: 0.0,
            k_signal: k,
            k_idler: neg,
        };
        assert_relative_eq!(pm.mode_function(171.0), 1.0);
    }

    proptest! {
        #[test]
        fn blur_is_linear(seed in any::<u32>(), a in -3.0f64..3.0, b in -3.0f64..3.0, sigma in 0.0f64..80.0) {
            let f = |k: u32| Array2::from_shape_fn((6, 11), |(r, c)| (((r * 31 + c * 17) as u32 ^ seed ^ k) % 97) as f64);
            let x = f(1);
            let y = f(2);
            let lhs = blur(&(&x * a + &y * b), sigma, 13.0).unwrap();
            let rhs = &blur(&x, sigma, 13.0).unwrap() * a + &blur(&y, sigma, 13.0).unwrap() * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() <= 1e-9 * (1.0 + r.abs()));
            }
        }

        #[test]
        fn blur_conserves_flux(seed in any::<u32>(), sigma in 0.0f64..200.0, h in 1usize..9, w in 1usize..9) {
            let x = Array2::from_shape_fn((h, w), |(r, c)| (((r * 13 + c * 7) as u32 ^ seed) % 101) as f64);
            let out = blur(&x, sigma, 13.0).unwrap();
            prop_assert!((out.sum() - x.sum()).abs() <= 1e-9 * x.sum().max(1.0));
        }

        #[test]
        fn edge_sigma_scaling(f in 1.0f64..500.0, l in 100.0f64..3000.0, m in 0.01f64..5.0, w in 10.0f64..1000.0, k in 0.1f64..10.0) {
            let g = ImagingGeometry { f_signal_mm: f, lambda_signal_nm: l, magnification: m, pump_waist_um: w, ..ImagingGeometry::REFERENCE };
            let s = edge_sigma(&g);
            let tol = 1e-12 * s * k.max(1.0 / k);
            let scaled = [
                (ImagingGeometry { f_signal_mm: f * k, ..g }, k * s),
                (ImagingGeometry { lambda_signal_nm: l * k, ..g }, k * s),
                (ImagingGeometry { magnification: m * k, ..g }, k * s),
                (ImagingGeometry { pump_waist_um: w * k, ..g }, s / k),
            ];
            for (geom, expected) in scaled {
                prop_assert!((edge_sigma(&geom) - expected).abs() <= tol * 4.0);
            }
        }

        #[test]
        fn mode_function_symmetric(a in -1e5f64..1e5, b in -1e5f64..1e5, c in -1e5f64..1e5, d in -1e5f64..1e5, dk in -1e4f64..1e4) {
            let x = mode_function([a, b], [c, d], 171.0, dk, 2.0);
            let y = mode_function([c, d], [a, b], 171.0, dk, 2.0);
            prop_assert_eq!(x, y);
            prop_assert!(x.abs() <= 1.0);
        }
    }
}
