//! Gray-level rasters, the synthetic test pattern, the noise model and PGM
//! file I/O.

mod noise;
mod pattern;
mod pgm;

pub use noise::{add_noise, NoiseSpec};
pub use pattern::{synth_pattern, PatternElement, PatternSpec};
pub use pgm::{load_image, load_pgm_bytes, save_image, save_pgm, write_pgm, BitDepth, Quantization};

use crate::error::{Error, Result};

/// Row-major grid of real-valued intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// A `width`×`height` image filled with zeros.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Bilinear sample at a real position; coordinates outside the raster
    /// are clamped to the nearest pixel.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let top = self.data[row0 + x0] * (1.0 - fx) + self.data[row0 + x1] * fx;
        let bottom = self.data[row1 + x0] * (1.0 - fx) + self.data[row1 + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Smallest and largest intensity, `None` for an empty image.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.data.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Edge signal-to-noise ratio: contrast across the step over the noise
/// standard deviation. A noiseless image (`sigma == 0`) has infinite SNR for
/// any nonzero contrast.
pub fn snr(edge_contrast: f64, sigma: f64) -> f64 {
    let c = edge_contrast.abs();
    if sigma > 0.0 {
        c / sigma
    } else if c == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

// Median absolute deviation of a standard normal.
const MAD_TO_SIGMA: f64 = 0.674_489_750_196_081_7;

/// Robust noise level estimate: the median absolute deviation of the
/// 4-neighbour Laplacian over interior pixels, rescaled so that i.i.d.
/// Gaussian noise of standard deviation σ yields σ.
///
/// The Laplacian of white noise has variance 20σ², and edges occupy few
/// pixels, so the median ignores them. A constant image gives 0.
pub fn estimate_sigma(img: &Image) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid("noise estimate needs at least a 3x3 image"));
    }
    let mut lap = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = img.get(x - 1, y) + img.get(x + 1, y) + img.get(x, y - 1) + img.get(x, y + 1)
                - 4.0 * img.get(x, y);
            lap.push(v);
        }
    }
    let med = median(&mut lap);
    let mut dev: Vec<f64> = lap.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    Ok(mad / MAD_TO_SIGMA / 20f64.sqrt())
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, &mut m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    if n % 2 == 1 {
        m
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + m)
    }
}
