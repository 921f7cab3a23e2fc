//! Netpbm graymap (PGM) reading and writing, plain (`P2`) and raw (`P5`),
//! 8- and 16-bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples.
    pub data: Vec<u16>,
}

impl Raster {
    pub fn new(width: usize, height: usize, maxval: u16, data: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parse("raster must be at least 1x1".into()));
        }
        if maxval == 0 {
            return Err(Error::Parse("maxval must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::Parse(format!(
                "expected {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > maxval) {
            return Err(Error::Parse(format!("sample {v} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval,
            data,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.width + col]
    }

    /// Raw `P5` encoding with a canonical single-whitespace header.
    pub fn to_p5(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.data.iter().map(|&v| v as u8));
        } else {
            for &v in &self.data {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        out
    }

    /// Plain `P2` encoding, one image row per line.
    pub fn to_p2(&self) -> Vec<u8> {
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, self.maxval);
        for row in self.data.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.token()?;
        let raw = match magic.as_slice() {
            b"P5" => true,
            b"P2" => false,
            other => {
                return Err(Error::Parse(format!(
                    "unsupported magic `{}`",
                    String::from_utf8_lossy(other)
                )))
            }
        };
        let width = cur.number()?;
        let height = cur.number()?;
        let maxval = cur.number()?;
        if maxval == 0 || maxval > u16::MAX as usize {
            return Err(Error::Parse(format!("maxval {maxval} out of range")));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::Parse("raster dimensions overflow".into()))?;
        let data = if raw {
            // exactly one whitespace byte separates the header from the samples
            match bytes.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return Err(Error::Parse("missing whitespace after header".into())),
            }
            let body = &bytes[cur.pos..];
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            if body.len() < need {
                return Err(Error::Parse(format!(
                    "truncated raster: need {need} bytes, have {}",
                    body.len()
                )));
            }
            if wide {
                body[..need]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            } else {
                body[..need].iter().map(|&b| b as u16).collect()
            }
        } else {
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let v = cur.number()?;
                if v > u16::MAX as usize {
                    return Err(Error::Parse(format!("sample {v} out of range")));
                }
                data.push(v as u16);
            }
            data
        };
        Raster::new(width, height, maxval as u16, data)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<Vec<u8>> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse("unexpected end of raster header".into()));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected a number, found `{}`", String::from_utf8_lossy(&tok))))
    }
}
