//! Run configuration. Every command's flags live in one struct that is both
//! parsed by clap and echoed to `config.toml`, so a run dir can be replayed.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use beamcurve::eval::DetectorKind;
use beamcurve::MergeMode;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exhaustive merge, every pair of boundary pixels.
    Basic,
    /// Best-k merge, k junction pixels per interface.
    Fast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Synth(SynthConfig),
    Detect(DetectConfig),
    Calibrate(CalibrateConfig),
    Sweep(SweepConfig),
    Bench(BenchConfig),
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Synth(_) => "synth",
            RunConfig::Detect(_) => "detect",
            RunConfig::Calibrate(_) => "calibrate",
            RunConfig::Sweep(_) => "sweep",
            RunConfig::Bench(_) => "bench",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RunConfig::Synth(c) => c.validate(),
            RunConfig::Detect(c) => c.validate(),
            RunConfig::Calibrate(c) => c.validate(),
            RunConfig::Sweep(c) => c.validate(),
            RunConfig::Bench(c) => c.validate(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }
}

/// Detector settings shared by `detect` and `sweep`.
#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    /// Filter width in pixels.
    #[arg(long, default_value_t = 4)]
    pub w: usize,
    /// Search-space growth constant of the threshold.
    #[arg(long, default_value_t = beamcurve::scoring::DEFAULT_BETA)]
    pub beta: f64,
    /// Tiles at or below this side length are leaves.
    #[arg(long, default_value_t = beamcurve::partition::DEFAULT_N_MIN)]
    pub n_min: usize,
    /// A curve is dropped when more than this fraction of its pixels is
    /// already marked.
    #[arg(long, default_value_t = beamcurve::edgemap::DEFAULT_OVERLAP_FRACTION)]
    pub overlap_fraction: f64,
    /// Pixels within this chessboard distance of a mark count as marked.
    #[arg(long, default_value_t = beamcurve::edgemap::DEFAULT_OVERLAP_RADIUS)]
    pub overlap_radius: usize,
    /// Drop curves whose unmarked part is not significant by itself.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub residual_check: bool,
}

impl DetectorSettings {
    fn validate(&self) -> Result<()> {
        ensure!(self.w >= 1, "--w must be at least 1");
        ensure!(self.beta > 0.0 && self.beta.is_finite(), "--beta must be positive");
        ensure!(self.n_min >= 3, "--n-min must be at least 3");
        ensure!(
            (0.0..=1.0).contains(&self.overlap_fraction),
            "--overlap-fraction must be in [0, 1]"
        );
        Ok(())
    }

    pub fn detector_config(&self, mode: MergeMode, sigma: Option<f64>, threads: Option<usize>) -> beamcurve::DetectorConfig {
        beamcurve::DetectorConfig {
            mode,
            w: self.w,
            sigma,
            beta: self.beta,
            n_min: self.n_min,
            overlap_fraction: self.overlap_fraction,
            overlap_radius: self.overlap_radius,
            residual_check: self.residual_check,
            threads,
        }
    }
}

fn check_threads(threads: Option<usize>) -> Result<()> {
    ensure!(threads != Some(0), "--threads must be at least 1");
    Ok(())
}

fn check_noise(sigma: f64, sp_fraction: f64) -> Result<()> {
    ensure!(sigma > 0.0 && sigma.is_finite(), "--noise-sigma must be positive");
    ensure!((0.0..=1.0).contains(&sp_fraction), "--sp-fraction must be in [0, 1]");
    Ok(())
}

/// Pattern from a key-value file, or the simulation pattern at `size`.
pub fn load_pattern(file: Option<&PathBuf>, size: usize) -> Result<beamcurve::PatternSpec> {
    let spec = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading pattern {}", p.display()))?;
            beamcurve::PatternSpec::from_str(&text).with_context(|| format!("parsing pattern {}", p.display()))?
        }
        None => beamcurve::PatternSpec::simulation(size),
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Side of the square test image.
    #[arg(long, default_value_t = 129)]
    pub size: usize,
    /// Pattern file in the key-value grammar; overrides --size.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    /// Edge contrast over noise; the pattern is scaled to contrast snr·σ.
    #[arg(long, default_value_t = 2.0, conflicts_with = "clean")]
    pub snr: f64,
    /// Write the noiseless pattern instead.
    #[arg(long)]
    pub clean: bool,
    /// Gaussian noise level σ.
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// Fraction of salt-and-pepper pixels.
    #[arg(long, default_value_t = 0.01)]
    pub sp_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        ensure!(self.snr >= 0.0 && self.snr.is_finite(), "--snr must be non-negative");
        check_noise(self.noise_sigma, self.sp_fraction)?;
        load_pattern(self.pattern.as_ref(), self.size)?;
        Ok(())
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Input PGM image.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Basic)]
    pub mode: Mode,
    /// Junction pixels per interface in fast mode.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Per-pixel noise level; estimated from the image when not given.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    pub detector: DetectorSettings,
    /// Curves written to curves.csv, best first.
    #[arg(long, default_value_t = 1000)]
    pub max_curves: usize,
    /// Worker threads; all available cores when not given.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threads: Option<usize>,
}

impl DetectConfig {
    pub fn merge_mode(&self) -> MergeMode {
        match self.mode {
            Mode::Basic => MergeMode::Basic,
            Mode::Fast => MergeMode::Optimized { k: self.k },
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.k >= 1, "--k must be at least 1");
        if let Some(s) = self.sigma {
            ensure!(s > 0.0 && s.is_finite(), "--sigma must be positive");
        }
        self.detector.validate()?;
        check_threads(self.threads)?;
        ensure!(self.input.is_file(), "cannot read input image {}", self.input.display());
        Ok(())
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrateConfig {
    /// Side of the pure-noise images.
    #[arg(long, default_value_t = 129)]
    pub size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 4)]
    pub w: usize,
    #[arg(long, default_value_t = beamcurve::partition::DEFAULT_N_MIN)]
    pub n_min: usize,
    /// Noise images to average over.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Length bins with fewer curves in some trial are left out of the fit.
    #[arg(long, default_value_t = 10)]
    pub min_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threads: Option<usize>,
}

impl CalibrateConfig {
    pub fn options(&self) -> beamcurve::scoring::CalibrationOptions {
        beamcurve::scoring::CalibrationOptions {
            size: self.size,
            sigma: self.noise_sigma,
            w: self.w,
            n_min: self.n_min,
            trials: self.trials,
            min_samples: self.min_samples,
            threads: self.threads,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.size >= self.n_min, "--size must be at least --n-min");
        ensure!(self.noise_sigma > 0.0 && self.noise_sigma.is_finite(), "--noise-sigma must be positive");
        ensure!(self.w >= 1, "--w must be at least 1");
        ensure!(self.n_min >= 3, "--n-min must be at least 3");
        ensure!(self.trials >= 1, "--trials must be at least 1");
        check_threads(self.threads)
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Side of the simulation pattern.
    #[arg(long, default_value_t = 129)]
    pub size: usize,
    /// Pattern file in the key-value grammar; overrides --size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pattern: Option<PathBuf>,
    /// Comma-separated SNR values.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.8,1,1.2,1.4,1.6,1.8,2,2.2,2.4,2.6")]
    pub snr_grid: Vec<f64>,
    /// Noise images per SNR; their seeds follow --seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Comma-separated detectors: basic, fast, fast:<k>, canny.
    #[arg(long, value_delimiter = ',', default_value = "basic,fast:2,canny")]
    pub detectors: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sp_fraction: f64,
    /// Matching distance of the F-measure, in pixels.
    #[arg(long, default_value_t = beamcurve::eval::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[command(flatten)]
    pub detector: DetectorSettings,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn detector_kinds(&self) -> Result<Vec<DetectorKind>> {
        self.detectors.iter().map(|d| Ok(d.parse::<DetectorKind>()?)).collect()
    }

    fn validate(&self) -> Result<()> {
        ensure!(!self.snr_grid.is_empty(), "--snr-grid is empty");
        ensure!(
            self.snr_grid.iter().all(|s| *s >= 0.0 && s.is_finite()),
            "--snr-grid values must be non-negative"
        );
        ensure!(self.seeds >= 1, "--seeds must be at least 1");
        ensure!(!self.detectors.is_empty(), "--detectors is empty");
        self.detector_kinds()?;
        check_noise(self.noise_sigma, self.sp_fraction)?;
        ensure!(self.tolerance >= 0.0, "--tolerance must be non-negative");
        self.detector.validate()?;
        check_threads(self.threads)?;
        load_pattern(self.pattern.as_ref(), self.size)?;
        Ok(())
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Comma-separated image sides.
    #[arg(long, value_delimiter = ',', default_value = "65,129,257")]
    pub sizes: Vec<usize>,
    /// Comma-separated modes: basic, fast, fast:<k>.
    #[arg(long, value_delimiter = ',', default_value = "basic,fast:2")]
    pub modes: Vec<String>,
    /// Timed runs per cell; the fastest is kept.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 4)]
    pub w: usize,
    #[arg(long, default_value_t = beamcurve::partition::DEFAULT_N_MIN)]
    pub n_min: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threads: Option<usize>,
}

impl BenchConfig {
    pub fn merge_modes(&self) -> Result<Vec<MergeMode>> {
        self.modes
            .iter()
            .map(|m| match m.parse::<DetectorKind>()? {
                DetectorKind::Beam(mode) => Ok(mode),
                DetectorKind::Canny => bail!("canny has no tree to benchmark"),
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        ensure!(!self.sizes.is_empty(), "--sizes is empty");
        ensure!(self.sizes.iter().all(|&s| s >= self.n_min), "--sizes must be at least --n-min");
        ensure!(!self.modes.is_empty(), "--modes is empty");
        self.merge_modes()?;
        ensure!(self.repeats >= 1, "--repeats must be at least 1");
        ensure!(self.w >= 1, "--w must be at least 1");
        ensure!(self.n_min >= 3, "--n-min must be at least 3");
        check_threads(self.threads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        d: SweepConfig,
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::Sweep(Wrap::parse_from(["x", "--snr-grid", "1,2", "--seed", "7"]).d);
        let text = c.to_toml().unwrap();
        assert!(text.contains("command = \"sweep\""));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn unknown_detector_is_rejected() {
        let mut c = Wrap::parse_from(["x"]).d;
        assert!(c.validate().is_ok());
        c.detectors.push("sobel".into());
        assert!(c.validate().is_err());
    }
}
