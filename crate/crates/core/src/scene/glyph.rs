//! Block-letter glyph bitmaps used to build binary test plates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const N_ROWS: [&str; 8] = [
    "##....##", //
    "###...##", //
    "####..##", //
    "##.##.##", //
    "##..####", //
    "##...###", //
    "##....##", //
    "##....##", //
];

const J_ROWS: [&str; 8] = [
    "..######", //
    ".....##.", //
    ".....##.", //
    ".....##.", //
    ".....##.", //
    "##...##.", //
    "###.###.", //
    ".#####..", //
];

const U_ROWS: [&str; 8] = [
    "##....##", //
    "##....##", //
    "##....##", //
    "##....##", //
    "##....##", //
    "##....##", //
    "###..###", //
    ".######.", //
];

/// Side of the shipped glyph bitmaps, in glyph cells.
pub const GLYPH_CELLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    /// Row-major, `true` = set.
    pub bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::config(format!(
                "bitmap {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    /// Parses rows where `#` (or `1`) marks a set bit and anything else is clear.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().chars().count()).unwrap_or(0);
        let mut bits = Vec::with_capacity(width * height);
        for row in rows {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(Error::config("bitmap rows have unequal length"));
            }
            bits.extend(row.chars().map(|c| c == '#' || c == '1'));
        }
        Self::new(width, height, bits)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Each cell becomes a `factor × factor` block.
    pub fn upscale(&self, factor: usize) -> Self {
        let width = self.width * factor;
        let height = self.height * factor;
        let bits = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| self.get(r / factor, c / factor))
            .collect();
        Self { width, height, bits }
    }

    pub fn inverted(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
            ..self.clone()
        }
    }
}

/// Character of the test plate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Glyph {
    N,
    J,
    U,
    /// Placed at native size, not rescaled.
    Custom(Bitmap),
}

impl Glyph {
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_uppercase().as_str() {
            "N" => Ok(Glyph::N),
            "J" => Ok(Glyph::J),
            "U" => Ok(Glyph::U),
            other => Err(Error::config(format!("unknown glyph `{other}` (expected N, J or U)"))),
        }
    }

    pub fn bitmap(&self) -> Bitmap {
        let rows: &[&str] = match self {
            Glyph::N => &N_ROWS,
            Glyph::J => &J_ROWS,
            Glyph::U => &U_ROWS,
            Glyph::Custom(b) => return b.clone(),
        };
        Bitmap::from_rows(rows).expect("shipped glyphs are well formed")
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, Glyph::Custom(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_glyphs_are_square() {
        for g in [Glyph::N, Glyph::J, Glyph::U] {
            let b = g.bitmap();
            assert_eq!((b.width, b.height), (GLYPH_CELLS, GLYPH_CELLS));
            assert!(b.count_set() > 0 && b.count_set() < GLYPH_CELLS * GLYPH_CELLS);
        }
    }

    #[test]
    fn upscale_preserves_fraction() {
        let b = Glyph::U.bitmap();
        let big = b.upscale(3);
        assert_eq!(big.count_set(), 9 * b.count_set());
        assert!(big.get(0, 0) && big.get(2, 2) && !big.get(0, 6));
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(Bitmap::from_rows(&["##", "#"]).is_err());
        assert!(Bitmap::from_rows::<&str>(&[]).is_err());
        assert!(Glyph::parse("Q").is_err());
    }
}
