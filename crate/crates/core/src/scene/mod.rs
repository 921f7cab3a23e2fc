//! Object transmission maps, emission maps and test patterns.

mod glyph;
pub mod pgm;

pub use glyph::{Bitmap, Glyph, GLYPH_CELLS};
pub use pgm::Raster;

use std::f64::consts::TAU;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::PixelTransmission;

/// Pixel pitch of the array detector, μm.
pub const ICCD_PITCH_UM: f64 = 13.0;
/// Pixel pitch of the spatial light modulator, μm.
pub const SLM_PITCH_UM: f64 = 32.4;

/// Per-pixel complex transmission of the object. Indexed `[row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMap {
    pub pixel_pitch_um: f64,
    pub pixels: Array2<PixelTransmission>,
}

impl ObjectMap {
    pub fn from_pixels(pixels: Array2<PixelTransmission>, pixel_pitch_um: f64) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::config("object map must be at least 1x1"));
        }
        if !(pixel_pitch_um > 0.0) {
            return Err(Error::config("pixel pitch must be positive"));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(&p.amplitude)) {
            return Err(Error::config(format!("transmission {} outside [0, 1]", p.amplitude)));
        }
        Ok(Self {
            pixel_pitch_um,
            pixels,
        })
    }

    /// Binary map: `true` = transparent.
    pub fn from_mask(mask: &Array2<bool>, pixel_pitch_um: f64) -> Result<Self> {
        Self::from_pixels(
            mask.mapv(|b| {
                if b {
                    PixelTransmission::TRANSPARENT
                } else {
                    PixelTransmission::OPAQUE
                }
            }),
            pixel_pitch_um,
        )
    }

    pub fn uniform(width: usize, height: usize, px: PixelTransmission) -> Self {
        Self {
            pixel_pitch_um: ICCD_PITCH_UM,
            pixels: Array2::from_elem((height, width), px),
        }
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn with_pitch(mut self, pixel_pitch_um: f64) -> Self {
        self.pixel_pitch_um = pixel_pitch_um;
        self
    }

    pub fn amplitudes(&self) -> Array2<f64> {
        self.pixels.mapv(|p| p.amplitude)
    }

    /// `t ↦ 1 − t`, phases kept.
    pub fn inverted(&self) -> Self {
        Self {
            pixel_pitch_um: self.pixel_pitch_um,
            pixels: self.pixels.mapv(|p| PixelTransmission {
                amplitude: 1.0 - p.amplitude,
                phase: p.phase,
            }),
        }
    }

    pub fn transparent_fraction(&self) -> f64 {
        self.pixels.iter().filter(|p| p.amplitude >= 0.5).count() as f64 / self.pixels.len() as f64
    }

    /// Amplitudes written as `round(t · maxval)`.
    pub fn to_raster(&self, maxval: u16) -> Raster {
        let data = self
            .pixels
            .iter()
            .map(|p| (p.amplitude * maxval as f64).round() as u16)
            .collect();
        Raster::new(self.width(), self.height(), maxval, data).expect("dimensions come from a valid map")
    }
}

/// How raster samples become amplitude transmissions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "level")]
pub enum AmplitudeMapping {
    /// `sample ≥ level` is transparent, everything else opaque.
    Threshold(u16),
    /// `t = sample / maxval`.
    Linear,
}

/// Builds an object from a PGM raster, optionally with a phase raster that
/// maps `[0, maxval]` linearly onto `[0, 2π)`.
pub fn load_object(
    image_bytes: &[u8],
    mapping: AmplitudeMapping,
    phase_map: Option<&[u8]>,
    pixel_pitch_um: f64,
) -> Result<ObjectMap> {
    let amp = Raster::parse(image_bytes)?;
    if let AmplitudeMapping::Threshold(level) = mapping {
        if level > amp.maxval {
            return Err(Error::config(format!(
                "threshold {level} exceeds raster maxval {}",
                amp.maxval
            )));
        }
    }
    let phase = phase_map.map(Raster::parse).transpose()?;
    if let Some(ph) = &phase {
        if (ph.width, ph.height) != (amp.width, amp.height) {
            return Err(Error::config(format!(
                "phase raster is {}x{} but amplitude raster is {}x{}",
                ph.width, ph.height, amp.width, amp.height
            )));
        }
    }
    let pixels = Array2::from_shape_fn((amp.height, amp.width), |(r, c)| {
        let s = amp.get(r, c);
        let amplitude = match mapping {
            AmplitudeMapping::Threshold(level) => {
                if s >= level {
                    1.0
                } else {
                    0.0
                }
            }
            AmplitudeMapping::Linear => s as f64 / amp.maxval as f64,
        };
        let phase = phase
            .as_ref()
            .map(|ph| TAU * ph.get(r, c) as f64 / (ph.maxval as f64 + 1.0))
            .unwrap_or(0.0);
        PixelTransmission { amplitude, phase }
    });
    ObjectMap::from_pixels(pixels, pixel_pitch_um)
}

/// Columns left of `edge_col` opaque, the rest transparent.
pub fn make_knife_edge(width: usize, height: usize, edge_col: usize) -> Result<ObjectMap> {
    if width == 0 || height == 0 {
        return Err(Error::config("knife edge canvas must be at least 1x1"));
    }
    if edge_col > width {
        return Err(Error::config(format!("edge column {edge_col} beyond width {width}")));
    }
    let mask = Array2::from_shape_fn((height, width), |(_, c)| c >= edge_col);
    ObjectMap::from_mask(&mask, ICCD_PITCH_UM)
}

/// Scale factor at which a shipped glyph fills about three quarters of the
/// shorter canvas side.
fn builtin_scale(width: usize, height: usize) -> usize {
    ((width.min(height) * 3 / 4) / GLYPH_CELLS).max(1)
}

fn place(bitmap: &Bitmap, width: usize, height: usize) -> Result<Array2<bool>> {
    if bitmap.width > width || bitmap.height > height {
        return Err(Error::config(format!(
            "bitmap {}x{} does not fit the {width}x{height} canvas",
            bitmap.width, bitmap.height
        )));
    }
    let r0 = (height - bitmap.height) / 2;
    let c0 = (width - bitmap.width) / 2;
    Ok(Array2::from_shape_fn((height, width), |(r, c)| {
        r >= r0 && c >= c0 && r < r0 + bitmap.height && c < c0 + bitmap.width && bitmap.get(r - r0, c - c0)
    }))
}

/// Binary plate with transparent glyph pixels on an opaque field. Shipped
/// glyphs are upscaled to the canvas; custom bitmaps keep their size. Both
/// are centered.
pub fn make_glyph_plate(glyph: &Glyph, width: usize, height: usize) -> Result<ObjectMap> {
    let bitmap = if glyph.is_builtin() {
        glyph.bitmap().upscale(builtin_scale(width, height))
    } else {
        glyph.bitmap()
    };
    ObjectMap::from_mask(&place(&bitmap, width, height)?, ICCD_PITCH_UM)
}

/// Region labels of the three-letter `N J U` logo: 0 background, 1 `N`,
/// 2 `J`, 3 `U`. The letters sit side by side, one glyph cell apart,
/// filling about 90 % of the limiting canvas side.
pub fn nju_labels(width: usize, height: usize) -> Result<Array2<u8>> {
    let cells_w = 3 * GLYPH_CELLS + 2;
    let scale = ((width * 9 / 10) / cells_w).min((height * 9 / 10) / GLYPH_CELLS);
    if scale == 0 {
        return Err(Error::config(format!("canvas {width}x{height} too small for the logo")));
    }
    let logo_w = cells_w * scale;
    let logo_h = GLYPH_CELLS * scale;
    let r0 = (height - logo_h) / 2;
    let c0 = (width - logo_w) / 2;
    let glyphs = [Glyph::N.bitmap(), Glyph::J.bitmap(), Glyph::U.bitmap()];
    Ok(Array2::from_shape_fn((height, width), |(r, c)| {
        if r < r0 || c < c0 || r >= r0 + logo_h || c >= c0 + logo_w {
            return 0;
        }
        let gr = (r - r0) / scale;
        let gc = (c - c0) / scale;
        let slot = gc / (GLYPH_CELLS + 1);
        let within = gc % (GLYPH_CELLS + 1);
        if within < GLYPH_CELLS && glyphs[slot].get(gr, within) {
            slot as u8 + 1
        } else {
            0
        }
    }))
}

/// Pair-emission rate `P(x, y)` per pixel, counts/s. Indexed `[row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMap {
    pub rates: Array2<f64>,
}

impl EmissionMap {
    pub fn new(rates: Array2<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::config("emission map must be at least 1x1"));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::config(format!("emission rate {r} is negative or not finite")));
        }
        Ok(Self { rates })
    }

    pub fn width(&self) -> usize {
        self.rates.ncols()
    }

    pub fn height(&self) -> usize {
        self.rates.nrows()
    }

    pub fn total(&self) -> f64 {
        self.rates.sum()
    }
}

pub fn uniform_emission(width: usize, height: usize, rate: f64) -> Result<EmissionMap> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::config(format!("emission rate must be >= 0, got {rate}")));
    }
    EmissionMap::new(Array2::from_elem((height, width), rate))
}

/// Gaussian pump profile `peak · exp(−2r²/w²)` centered on the canvas, with
/// the 1/e² radius `waist_px` given in pixels.
pub fn gaussian_emission(width: usize, height: usize, peak: f64, waist_px: f64) -> Result<EmissionMap> {
    if !(peak >= 0.0) || !(waist_px > 0.0) {
        return Err(Error::config("gaussian emission needs peak >= 0 and waist > 0"));
    }
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    EmissionMap::new(Array2::from_shape_fn((height, width), |(r, c)| {
        let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
        peak * (-2.0 * d2 / (waist_px * waist_px)).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p5(w: usize, h: usize, maxval: u16, data: Vec<u16>) -> Vec<u8> {
        Raster::new(w, h, maxval, data).unwrap().to_p5()
    }

    #[test]
    fn load_uniform_rasters() {
        let white = load_object(&p5(3, 2, 255, vec![255; 6]), AmplitudeMapping::Threshold(128), None, 13.0).unwrap();
        assert!(white.pixels.iter().all(|p| p.amplitude == 1.0));
        let black = load_object(&p5(3, 2, 255, vec![0; 6]), AmplitudeMapping::Threshold(128), None, 13.0).unwrap();
        assert!(black.pixels.iter().all(|p| p.amplitude == 0.0));
    }

    #[test]
    fn load_checkerboard() {
        let data = vec![65535, 0, 0, 65535];
        let obj = load_object(&p5(2, 2, 65535, data.clone()), AmplitudeMapping::Threshold(32768), None, 13.0).unwrap();
        for (i, p) in obj.pixels.iter().enumerate() {
            let expect = if data[i] >= 32768 { 1.0 } else { 0.0 };
            assert_eq!(p.amplitude, expect);
        }
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load_object(b"junk", AmplitudeMapping::Linear, None, 13.0), Err(Error::Parse(_))));
        let amp = p5(2, 2, 255, vec![0; 4]);
        let ph = p5(3, 2, 255, vec![0; 6]);
        assert!(matches!(
            load_object(&amp, AmplitudeMapping::Linear, Some(&ph), 13.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(load_object(&amp, AmplitudeMapping::Threshold(300), None, 13.0).is_err());
    }

    #[test]
    fn phase_map_is_linear_below_two_pi() {
        let amp = p5(2, 1, 255, vec![255, 255]);
        let ph = p5(2, 1, 255, vec![0, 255]);
        let obj = load_object(&amp, AmplitudeMapping::Linear, Some(&ph), 13.0).unwrap();
        assert_eq!(obj.pixels[[0, 0]].phase, 0.0);
        let top = obj.pixels[[0, 1]].phase;
        assert!((top - TAU * 255.0 / 256.0).abs() < 1e-12 && top < TAU);
    }

    #[test]
    fn binary_raster_round_trips() {
        for maxval in [255u16, 65535] {
            let data: Vec<u16> = (0..20).map(|i| if (i * 7) % 3 == 0 { maxval } else { 0 }).collect();
            let bytes = p5(5, 4, maxval, data);
            let obj = load_object(&bytes, AmplitudeMapping::Threshold(maxval / 2 + 1), None, 13.0).unwrap();
            assert_eq!(obj.to_raster(maxval).to_p5(), bytes);
        }
    }

    #[test]
    fn knife_edge_examples() {
        assert_eq!(make_knife_edge(4, 3, 0).unwrap().transparent_fraction(), 1.0);
        assert_eq!(make_knife_edge(4, 3, 4).unwrap().transparent_fraction(), 0.0);
        let k = make_knife_edge(4, 2, 2).unwrap();
        for row in k.amplitudes().rows() {
            assert_eq!(row.to_vec(), vec![0.0, 0.0, 1.0, 1.0]);
        }
        assert!(make_knife_edge(4, 2, 5).is_err());
    }

    #[test]
    fn glyph_plates() {
        let one = Glyph::Custom(Bitmap::from_rows(&["#"]).unwrap());
        let plate = make_glyph_plate(&one, 5, 5).unwrap();
        assert_eq!(plate.pixels.iter().filter(|p| p.amplitude == 1.0).count(), 1);
        assert_eq!(plate.pixels[[2, 2]].amplitude, 1.0);

        let u = make_glyph_plate(&Glyph::U, 64, 64).unwrap();
        let frac = u.transparent_fraction();
        // shipped U has 36 of 64 cells set and is drawn at 48x48
        assert!((frac - 36.0 * 36.0 / 4096.0).abs() < 1e-12);
        assert!(frac > 0.0 && frac < 0.5);

        let big = Glyph::Custom(Bitmap::from_rows(&["###", "###"]).unwrap());
        assert!(make_glyph_plate(&big, 2, 2).is_err());
    }

    #[test]
    fn inverted_custom_plate_is_complement() {
        let bm = Bitmap::from_rows(&["#.#", ".#."]).unwrap();
        let a = make_glyph_plate(&Glyph::Custom(bm.clone()), 3, 2).unwrap();
        let b = make_glyph_plate(&Glyph::Custom(bm.inverted()), 3, 2).unwrap();
        assert_eq!(a.inverted(), b);
    }

    #[test]
    fn nju_logo_has_three_regions() {
        let labels = nju_labels(512, 512).unwrap();
        for region in 1..=3u8 {
            assert!(labels.iter().any(|&l| l == region));
        }
        assert!(nju_labels(10, 10).is_err());
    }

    #[test]
    fn emission_examples() {
        assert_eq!(uniform_emission(4, 4, 0.0).unwrap().total(), 0.0);
        assert!(uniform_emission(2, 2, 50.0).unwrap().rates.iter().all(|&r| r == 50.0));
        assert_eq!(uniform_emission(64, 64, 1.0).unwrap().total(), 4096.0);
        assert!(uniform_emission(2, 2, -1.0).is_err());
        let g = gaussian_emission(9, 9, 10.0, 3.0).unwrap();
        assert_eq!(g.rates[[4, 4]], 10.0);
        assert!(g.rates[[0, 0]] < g.rates[[4, 0]]);
    }

    proptest! {
        #[test]
        fn plate_and_inverse_tile_canvas(w in 8usize..40, h in 8usize..40, which in 0usize..3) {
            let g = [Glyph::N, Glyph::J, Glyph::U][which].clone();
            let plate = make_glyph_plate(&g, w, h).unwrap();
            let sum = &plate.amplitudes() + &plate.inverted().amplitudes();
            prop_assert!(sum.iter().all(|&v| v == 1.0));
        }
    }
}
