//! Evaluation: pixel matching scores, the Canny baseline, SNR sweeps and
//! complexity benchmarks.

mod bench;
mod canny;
mod fmeasure;
mod sweep;

pub use bench::{benchmark, log_log_slope, BenchConfig, BenchReport, BenchRow};
pub use canny::{canny_baseline, CannyParams};
pub use fmeasure::{f_measure, MatchResult, DEFAULT_TOLERANCE};
pub use sweep::{simulated_image, snr_sweep, DetectorKind, RangeSummary, SweepCell, SweepConfig, SweepReport, SweepRow, TABLE_RANGES};

use crate::error::{Error, Result};

/// A binary raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Mask { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}
