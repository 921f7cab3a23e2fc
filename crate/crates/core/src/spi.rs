//! Hadamard single-pixel acquisition and reconstruction.
//!
//! Masks are rows of the Sylvester Hadamard matrix of order `N = 4^k`,
//! reshaped row-major into `2^k × 2^k` images. Row `i = u·side + v` of that
//! matrix is the separable pattern `w_u(row)·w_v(col)` built from 1-D Walsh
//! functions. A ±1 mask is displayed as the complementary binary pair
//! (`+1` pixels, then `−1` pixels) and the single-pixel value is the
//! difference of the two detections.
//!
//! Each mask is measured at the four phase settings of
//! [`SPI_SETTINGS`](crate::interferometer::SPI_SETTINGS) and combined as
//! `C(0,π) − C(π,π) − C(π,0) + C(0,0)`, which for an ideal interferometer
//! leaves `2·P` on transparent pixels and nothing on opaque ones.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{InterferometerModel, SPI_SETTINGS};
use crate::rng;
use crate::scene::{EmissionMap, ObjectMap, Raster};

/// Upper bound on the bytes held by a [`MaskSet`].
pub const MAX_MASK_BYTES: usize = 1 << 28;

const MASK_STREAM: u16 = 0x5350;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskOrdering {
    Natural,
    /// Ascending number of sign changes along rows and columns.
    #[default]
    Sequency,
}

impl FromStr for MaskOrdering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "natural" => Ok(MaskOrdering::Natural),
            "sequency" => Ok(MaskOrdering::Sequency),
            other => Err(Error::config(format!("unknown mask ordering `{other}`"))),
        }
    }
}

impl fmt::Display for MaskOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskOrdering::Natural => "natural",
            MaskOrdering::Sequency => "sequency",
        })
    }
}

#[inline]
fn walsh(u: usize, x: usize) -> i8 {
    if (u & x).count_ones() & 1 == 0 {
        1
    } else {
        -1
    }
}

/// Number of sign changes of the 1-D Walsh function `u` over `side` samples.
pub fn sequency(u: usize, side: usize) -> usize {
    (1..side).filter(|&x| walsh(u, x) != walsh(u, x - 1)).count()
}

/// The full Hadamard mask set in a chosen order.
#[derive(Debug, Clone)]
pub struct MaskSet {
    scale: u32,
    side: usize,
    ordering: MaskOrdering,
    /// Natural (Sylvester) row index of each mask, in set order.
    natural: Vec<usize>,
    data: Vec<i8>,
}

/// Borrowed view of one mask.
#[derive(Debug, Clone, Copy)]
pub struct Mask<'a> {
    /// Row of the Sylvester matrix this mask came from.
    pub natural_index: usize,
    pub side: usize,
    /// Row-major ±1 entries.
    pub data: &'a [i8],
}

impl Mask<'_> {
    /// `+1 → 255`, `−1 → 0`.
    pub fn to_raster(&self) -> Raster {
        let data = self.data.iter().map(|&v| if v > 0 { 255 } else { 0 }).collect();
        Raster::new(self.side, self.side, 255, data).expect("mask is square and nonempty")
    }
}

/// Masks of `2^k × 2^k` pixels, `4^k` of them.
pub fn hadamard_masks(k: u32, ordering: MaskOrdering) -> Result<MaskSet> {
    if k > 15 {
        return Err(Error::Resource(format!("k = {k} is far beyond any mask budget")));
    }
    let side = 1usize << k;
    let order = side * side;
    if order.saturating_mul(order) > MAX_MASK_BYTES {
        return Err(Error::Resource(format!(
            "{order} masks of {order} pixels exceed the {MAX_MASK_BYTES}-byte budget"
        )));
    }
    let mut natural: Vec<usize> = (0..order).collect();
    if ordering == MaskOrdering::Sequency {
        let seq: Vec<usize> = (0..side).map(|u| sequency(u, side)).collect();
        natural.sort_by_key(|&i| (seq[i / side] + seq[i % side], i));
    }
    let mut data = vec![0i8; order * order];
    data.par_chunks_mut(order).zip(natural.par_iter()).for_each(|(mask, &i)| {
        let (ru, cu) = (i / side, i % side);
        for r in 0..side {
            let wr = walsh(ru, r);
            for c in 0..side {
                mask[r * side + c] = wr * walsh(cu, c);
            }
        }
    });
    Ok(MaskSet {
        scale: k,
        side,
        ordering,
        natural,
        data,
    })
}

impl MaskSet {
    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of masks, equal to the number of pixels per mask.
    pub fn order(&self) -> usize {
        self.side * self.side
    }

    pub fn ordering(&self) -> MaskOrdering {
        self.ordering
    }

    pub fn mask(&self, i: usize) -> Mask<'_> {
        let n = self.order();
        Mask {
            natural_index: self.natural[i],
            side: self.side,
            data: &self.data[i * n..(i + 1) * n],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Mask<'_>> + '_ {
        (0..self.order()).map(move |i| self.mask(i))
    }
}

/// Per-mask single-pixel values, in acquisition order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HadamardSpectrum {
    pub coefficients: Vec<f64>,
}

impl HadamardSpectrum {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// CSV with header `index,coefficient`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "coefficient"]).map_err(csv_err)?;
        for (i, c) in self.coefficients.iter().enumerate() {
            w.write_record([i.to_string(), c.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). Indices must
    /// run `0, 1, 2, …`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut coefficients = Vec::new();
        for (expect, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("spectrum row {expect} has {} fields", rec.len())));
            }
            let idx: usize = rec[0].trim().parse().map_err(|_| Error::Parse(format!("bad index `{}`", &rec[0])))?;
            if idx != expect {
                return Err(Error::Parse(format!("expected index {expect}, found {idx}")));
            }
            let c: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad coefficient `{}`", &rec[1])))?;
            coefficients.push(c);
        }
        Ok(Self { coefficients })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Expected signal rate maps (counts/s) at the four acquisition settings,
/// on the object grid.
pub fn setting_rate_maps(
    model: &InterferometerModel,
    object: &ObjectMap,
    emission: &EmissionMap,
) -> Result<[Array2<f64>; 4]> {
    model.validate()?;
    if (object.width(), object.height()) != (emission.width(), emission.height()) {
        return Err(Error::DimensionMismatch(format!(
            "object is {}x{} but emission map is {}x{}",
            object.width(),
            object.height(),
            emission.width(),
            emission.height()
        )));
    }
    Ok(SPI_SETTINGS.map(|(settings, _)| {
        ndarray::Zip::from(&object.pixels)
            .and(&emission.rates)
            .map_collect(|&px, &p| model.signal(p, settings, px))
    }))
}

/// Brings a square map onto a `side × side` mask grid. Finer maps are
/// summed over blocks; coarser maps split each pixel evenly.
pub fn resample_to_side(map: &Array2<f64>, side: usize) -> Result<Array2<f64>> {
    let (h, w) = map.dim();
    if h != w {
        return Err(Error::DimensionMismatch(format!("{w}x{h} map is not square")));
    }
    if h == side {
        return Ok(map.clone());
    }
    if h > side && h % side == 0 {
        let f = h / side;
        return Ok(Array2::from_shape_fn((side, side), |(r, c)| {
            map.slice(ndarray::s![r * f..(r + 1) * f, c * f..(c + 1) * f]).sum()
        }));
    }
    if side > h && side.is_multiple_of(h) {
        let f = side / h;
        let share = 1.0 / (f * f) as f64;
        return Ok(Array2::from_shape_fn((side, side), |(r, c)| map[[r / f, c / f]] * share));
    }
    Err(Error::DimensionMismatch(format!(
        "{h}x{h} map is not an integer multiple or divisor of the {side}x{side} mask grid"
    )))
}

/// Prepared maps on the mask grid; measurement of any mask is then a pair
/// of masked sums per setting.
#[derive(Debug, Clone)]
pub struct SpiScene {
    side: usize,
    maps: [Array2<f64>; 4],
}

impl SpiScene {
    pub fn new(maps: [Array2<f64>; 4], side: usize) -> Result<Self> {
        let mut out: [Array2<f64>; 4] = Default::default();
        for (o, m) in out.iter_mut().zip(maps.iter()) {
            *o = resample_to_side(m, side)?;
        }
        Ok(Self { side, maps: out })
    }

    pub fn from_model(model: &InterferometerModel, object: &ObjectMap, emission: &EmissionMap, side: usize) -> Result<Self> {
        Self::new(setting_rate_maps(model, object, emission)?, side)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Per-pixel combination of the four settings. For an ideal model this
    /// is `2·P` on transparent pixels and zero elsewhere.
    pub fn combined(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.side, self.side));
        for (m, (_, sign)) in self.maps.iter().zip(SPI_SETTINGS.iter()) {
            out.scaled_add(*sign, m);
        }
        out
    }

    /// Single-pixel value `C_M` for one mask. With `seed` set, each of the
    /// eight detections (four settings, two complementary halves) is an
    /// independent Poisson draw from stream `natural_index`.
    pub fn measure(&self, mask: Mask<'_>, integration_s: f64, seed: Option<u64>) -> Result<f64> {
        if mask.side != self.side {
            return Err(Error::DimensionMismatch(format!(
                "mask is {0}x{0} but scene grid is {1}x{1}",
                mask.side, self.side
            )));
        }
        if !(integration_s >= 0.0) || !integration_s.is_finite() {
            return Err(Error::config(format!("integration time must be >= 0, got {integration_s}")));
        }
        let mut rng = seed.map(|s| rng::stream(s, rng::stream_id(MASK_STREAM, mask.natural_index as u64)));
        let mut total = 0.0;
        for (map, (_, sign)) in self.maps.iter().zip(SPI_SETTINGS.iter()) {
            let (mut plus, mut minus) = (0.0, 0.0);
            for (&m, &rate) in mask.data.iter().zip(map.iter()) {
                if m > 0 {
                    plus += rate;
                } else {
                    minus += rate;
                }
            }
            plus *= integration_s;
            minus *= integration_s;
            let diff = match rng.as_mut() {
                Some(r) => {
                    let p = rng::poisson(plus, r) as f64;
                    let q = rng::poisson(minus, r) as f64;
                    p - q
                }
                None => plus - minus,
            };
            total += sign * diff;
        }
        Ok(total)
    }

    /// Measures the first `count` masks of `masks`, in parallel.
    pub fn acquire(&self, masks: &MaskSet, count: usize, integration_s: f64, seed: Option<u64>) -> Result<HadamardSpectrum> {
        if count > masks.order() {
            return Err(Error::config(format!(
                "{count} masks requested but the set has {}",
                masks.order()
            )));
        }
        let coefficients = (0..count)
            .into_par_iter()
            .map(|i| self.measure(masks.mask(i), integration_s, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(HadamardSpectrum { coefficients })
    }
}

/// One mask measured against a scene, noiseless when `rng_seed` is `None`.
pub fn measure_mask(
    model: &InterferometerModel,
    object: &ObjectMap,
    emission: &EmissionMap,
    mask: Mask<'_>,
    integration_s: f64,
    rng_seed: Option<u64>,
) -> Result<f64> {
    SpiScene::from_model(model, object, emission, mask.side)?.measure(mask, integration_s, rng_seed)
}

/// Spectrum of the first `count` masks of the set.
pub fn acquire_spectrum(
    model: &InterferometerModel,
    object: &ObjectMap,
    emission: &EmissionMap,
    masks: &MaskSet,
    count: usize,
    integration_s: f64,
    rng_seed: Option<u64>,
) -> Result<HadamardSpectrum> {
    SpiScene::from_model(model, object, emission, masks.side())?.acquire(masks, count, integration_s, rng_seed)
}

/// Weighted mask sum `(1/N)·Σ_i w_i·M_i` over the masks the spectrum covers.
pub fn reconstruct(masks: &MaskSet, spectrum: &HadamardSpectrum) -> Result<Array2<f64>> {
    let n = masks.order();
    let side = masks.side();
    if spectrum.len() > n {
        return Err(Error::DimensionMismatch(format!(
            "spectrum has {} entries but the set has {n} masks",
            spectrum.len()
        )));
    }
    let mut image = Array2::<f64>::zeros((side, side));
    image.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(r, mut row)| {
        let mut acc = vec![0.0; side];
        for (i, &w) in spectrum.coefficients.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let m = &masks.mask(i).data[r * side..(r + 1) * side];
            for (a, &v) in acc.iter_mut().zip(m) {
                *a += w * v as f64;
            }
        }
        for (o, a) in row.iter_mut().zip(acc) {
            *o = a / n as f64;
        }
    });
    Ok(image)
}
