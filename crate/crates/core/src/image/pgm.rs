//! Binary PGM (`P5`) reading and writing.
//!
//! Intensities are real-valued in memory, so saving quantizes them. The
//! mapping is written into the header as a comment,
//!
//! ```text
//! # beamcurve offset=<o> scale=<s>
//! ```
//!
//! meaning `value = o + s * sample`. Files without that comment load as
//! `sample / maxval`, which puts ordinary 8- and 16-bit images in `[0, 1]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

const SCALE_TAG: &str = "beamcurve";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Quantization {
    /// Clamp to `[0, 1]` and scale to the full sample range.
    Unit,
    /// Map `[min, max]` of the image onto the full sample range.
    MinMax,
}

/// Saves a 16-bit min-max quantized PGM.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    save_pgm(img, path, BitDepth::Sixteen, Quantization::MinMax)
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>, depth: BitDepth, q: Quantization) -> Result<()> {
    let mut buf = Vec::new();
    write_pgm(img, &mut buf, depth, q)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Returns the `(offset, scale)` actually used.
pub fn write_pgm(img: &Image, out: &mut impl Write, depth: BitDepth, q: Quantization) -> Result<(f64, f64)> {
    if img.is_empty() {
        return Err(Error::invalid("cannot save an empty image"));
    }
    let maxval = depth.maxval();
    let (offset, scale) = match q {
        Quantization::Unit => (0.0, 1.0 / maxval as f64),
        Quantization::MinMax => {
            let (lo, hi) = img.min_max().unwrap_or((0.0, 1.0));
            if hi > lo {
                (lo, (hi - lo) / maxval as f64)
            } else {
                (lo, 1.0 / maxval as f64)
            }
        }
    };
    write!(
        out,
        "P5\n# {SCALE_TAG} offset={offset:e} scale={scale:e}\n{} {}\n{maxval}\n",
        img.width(),
        img.height()
    )?;
    let quantize = |v: f64| ((v - offset) / scale).round().clamp(0.0, maxval as f64) as u32;
    let mut raster = Vec::with_capacity(img.len() * if depth == BitDepth::Eight { 1 } else { 2 });
    for &v in img.data() {
        let s = quantize(v);
        match depth {
            BitDepth::Eight => raster.push(s as u8),
            BitDepth::Sixteen => raster.extend_from_slice(&(s as u16).to_be_bytes()),
        }
    }
    out.write_all(&raster)?;
    Ok((offset, scale))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    load_pgm_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    scale: Option<(f64, f64)>,
}

impl Cursor<'_> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            reason: reason.into(),
        })
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                let start = self.pos + 1;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                self.parse_comment(start);
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn parse_comment(&mut self, start: usize) {
        let Ok(text) = std::str::from_utf8(&self.bytes[start..self.pos]) else {
            return;
        };
        let mut words = text.split_whitespace();
        if words.next() != Some(SCALE_TAG) {
            return;
        }
        let mut offset = None;
        let mut scale = None;
        for w in words {
            if let Some(v) = w.strip_prefix("offset=") {
                offset = v.parse::<f64>().ok();
            } else if let Some(v) = w.strip_prefix("scale=") {
                scale = v.parse::<f64>().ok();
            }
        }
        if let (Some(o), Some(s)) = (offset, scale) {
            self.scale = Some((o, s));
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.fail(format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        match text.parse::<u32>() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.fail(format!("{what} out of range"))
            }
        }
    }
}

/// Parses a binary PGM held in memory. Any defect yields
/// [`Error::Parse`] with the byte offset where it was found.
pub fn load_pgm_bytes(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        scale: None,
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return cur.fail("missing P5 magic number");
    }
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return cur.fail("zero image dimension");
    }
    if maxval == 0 || maxval > 65535 {
        return cur.fail(format!("maxval {maxval} outside 1..=65535"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return cur.fail("expected a single whitespace before the raster"),
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bps))
        .ok_or_else(|| Error::Parse {
            offset: cur.pos,
            reason: "image dimensions overflow".into(),
        })?;
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        cur.pos = bytes.len();
        return cur.fail(format!("raster truncated: {} of {need} bytes present", raster.len()));
    }
    let (offset, scale) = cur.scale.unwrap_or((0.0, 1.0 / maxval as f64));
    let data: Vec<f64> = if bps == 1 {
        raster[..need].iter().map(|&b| offset + scale * b as f64).collect()
    } else {
        raster[..need]
            .chunks_exact(2)
            .map(|c| offset + scale * u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Image::from_vec(width, height, data)
}
