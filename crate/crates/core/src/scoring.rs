//! Detection thresholds and edge scores.
//!
//! A curve of length `L` competes with `K_L ≈ 6N·2^(βL)` others in an
//! `N`-pixel image. The largest mean contrast expected among that many
//! pure-noise curves is
//!
//! ```text
//! T(L) = σ·sqrt(2·ln K_L / (w·L))
//! ```
//!
//! and a curve's score is `|C| - T(L)`. `β` is measured on noise images by
//! [`calibrate_beta`].
//!
//! `σ` here is the noise of one filter sample. A sample is the difference
//! of a pixel on each side of the curve, so for images with per-pixel noise
//! `σ_pixel` it is `√2·σ_pixel`; [`ThresholdParams::from_pixel_noise`]
//! applies that factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beamtree::{BeamTree, BuildOptions, MergeMode, Selection};
use crate::error::{Error, Result};
use crate::image::{add_noise, Image, NoiseSpec};
use crate::partition::DEFAULT_N_MIN;
use crate::response::{FilterParams, ResponseVector};

pub const DEFAULT_BETA: f64 = 0.65;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdParams {
    /// Noise of one two-sided filter sample.
    pub sigma: f64,
    pub w: usize,
    pub n_pixels: usize,
    pub beta: f64,
}

impl ThresholdParams {
    pub fn new(sigma: f64, w: usize, n_pixels: usize, beta: f64) -> Result<Self> {
        let p = ThresholdParams {
            sigma,
            w,
            n_pixels,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for an image whose pixels carry noise `sigma`.
    pub fn from_pixel_noise(sigma: f64, w: usize, n_pixels: usize, beta: f64) -> Result<Self> {
        Self::new(sigma * std::f64::consts::SQRT_2, w, n_pixels, beta)
    }

    /// Per-pixel noise level these parameters correspond to.
    pub fn pixel_sigma(&self) -> f64 {
        self.sigma / std::f64::consts::SQRT_2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.w == 0 {
            return Err(Error::invalid("filter width must be at least 1"));
        }
        if self.n_pixels == 0 {
            return Err(Error::invalid("pixel count must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    /// `(k, a, b)` with `T(L)² = k·(a/L + b)`.
    pub(crate) fn threshold_coefficients(&self) -> (f64, f64, f64) {
        (
            2.0 * self.sigma * self.sigma / self.w as f64,
            (6.0 * self.n_pixels as f64).ln(),
            self.beta * std::f64::consts::LN_2,
        )
    }
}

/// `ln K_L`.
pub fn search_space_size(len: f64, n_pixels: usize, beta: f64) -> f64 {
    (6.0 * n_pixels as f64).ln() + beta * len * std::f64::consts::LN_2
}

pub fn threshold(len: f64, params: &ThresholdParams) -> Result<f64> {
    if !(len > 0.0) {
        return Err(Error::invalid(format!("curve length must be positive, got {len}")));
    }
    let ln_k = search_space_size(len, params.n_pixels, params.beta);
    Ok(params.sigma * (2.0 * ln_k / (params.w as f64 * len)).sqrt())
}

pub fn score(rv: &ResponseVector, params: &ThresholdParams) -> f64 {
    rv.c.abs() - threshold(rv.len, params).unwrap_or(f64::INFINITY)
}

pub fn asymptotic_threshold(params: &ThresholdParams) -> f64 {
    params.sigma * (2.0 * params.beta * std::f64::consts::LN_2 / params.w as f64).sqrt()
}

/// One unit-width length bin of a calibration run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationBin {
    /// Bin centre.
    pub len: f64,
    /// Per-trial maximum of `|C|`, averaged over trials.
    pub max_abs_c: f64,
    /// Standard error of `max_abs_c`.
    pub std_err: f64,
    /// Largest `|C|` over all trials.
    pub overall_max: f64,
    /// Curves that fell in the bin, over all trials.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub beta: f64,
    /// Pixel noise of the calibration images.
    pub sigma: f64,
    pub w: usize,
    pub n_pixels: usize,
    pub trials: usize,
    pub bins: Vec<CalibrationBin>,
}

impl Calibration {
    pub fn params(&self) -> ThresholdParams {
        ThresholdParams {
            sigma: self.sigma * std::f64::consts::SQRT_2,
            w: self.w,
            n_pixels: self.n_pixels,
            beta: self.beta,
        }
    }

    /// Two columns `L max|C|`, preceded by `#` comment lines with the fit.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "# beta {:.6}\n# sigma {} w {} n_pixels {} trials {}\n# L max_abs_c std_err overall_max\n",
            self.beta, self.sigma, self.w, self.n_pixels, self.trials
        );
        for b in &self.bins {
            s.push_str(&format!("{:.1} {:.6} {:.6} {:.6}\n", b.len, b.max_abs_c, b.std_err, b.overall_max));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationOptions {
    pub size: usize,
    pub sigma: f64,
    pub w: usize,
    pub n_min: usize,
    pub trials: usize,
    pub min_samples: usize,
    pub threads: Option<usize>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            size: 129,
            sigma: 1.0,
            w: 4,
            n_min: DEFAULT_N_MIN,
            trials: 20,
            min_samples: 10,
            threads: None,
        }
    }
}

/// Per-trial `(bin → max |C|, bin → count)` for one noise image.
fn noise_trial(opts: &CalibrationOptions, seed: u64) -> Result<Vec<(f64, usize)>> {
    let clean = Image::new(opts.size, opts.size);
    let img = add_noise(&clean, &NoiseSpec::gaussian(opts.sigma, seed))?;
    let tree = BeamTree::build(
        &img,
        &BuildOptions {
            n_min: opts.n_min,
            filter: FilterParams::new(opts.w)?,
            mode: MergeMode::Basic,
            selection: Selection::MaxContrast,
            threads: Some(1),
        },
    )?;
    let mut bins: Vec<(f64, usize)> = Vec::new();
    for (c, len) in tree.contrasts() {
        let b = len.floor() as usize;
        if b >= bins.len() {
            bins.resize(b + 1, (0.0, 0));
        }
        bins[b].0 = bins[b].0.max(c);
        bins[b].1 += 1;
    }
    Ok(bins)
}

/// Measures `β` on pure-noise images.
///
/// Each trial builds the tree keeping the highest-`|C|` curve per pair and
/// records, for every unit length bin, the largest `|C|` seen. Bins with
/// fewer than `min_samples` curves in some trial are dropped. Inverting the
/// threshold formula at the per-trial maxima, averaged over trials, gives
/// `y = max|C|²·wL/(2σ²) - ln(6N) ≈ β·(L·ln 2)`, fitted through the origin,
/// where `σ` is the sample noise `√2·opts.sigma`.
pub fn calibrate_beta(opts: &CalibrationOptions, rng: &mut impl Rng) -> Result<Calibration> {
    if opts.trials == 0 {
        return Err(Error::invalid("calibration needs at least one trial"));
    }
    if !(opts.sigma > 0.0) {
        return Err(Error::invalid("calibration sigma must be positive"));
    }
    let seeds: Vec<u64> = (0..opts.trials).map(|_| rng.random()).collect();
    let run = || -> Result<Vec<Vec<(f64, usize)>>> {
        seeds.par_iter().map(|&s| noise_trial(opts, s)).collect()
    };
    let per_trial = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let n_bins = per_trial.iter().map(Vec::len).min().unwrap_or(0);
    let mut bins = Vec::new();
    for b in 1..n_bins {
        if per_trial.iter().any(|t| t[b].1 < opts.min_samples) {
            continue;
        }
        let n = opts.trials as f64;
        let mean_max = per_trial.iter().map(|t| t[b].0).sum::<f64>() / n;
        let std_err = if opts.trials > 1 {
            let var = per_trial.iter().map(|t| (t[b].0 - mean_max).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        bins.push(CalibrationBin {
            len: b as f64 + 0.5,
            max_abs_c: mean_max,
            std_err,
            overall_max: per_trial.iter().map(|t| t[b].0).fold(0.0, f64::max),
            samples: per_trial.iter().map(|t| t[b].1).sum(),
        });
    }
    if bins.len() < 3 {
        return Err(Error::Calibration(format!(
            "only {} usable length bins; use a larger image or more trials",
            bins.len()
        )));
    }
    let n_pixels = opts.size * opts.size;
    let ln6n = (6.0 * n_pixels as f64).ln();
    let sample_var = 2.0 * opts.sigma * opts.sigma;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for b in &bins {
        let y = b.max_abs_c.powi(2) * opts.w as f64 * b.len / (2.0 * sample_var) - ln6n;
        let x = b.len * std::f64::consts::LN_2;
        sxy += x * y;
        sxx += x * x;
    }
    let beta = sxy / sxx;
    if !(beta > 0.0) {
        return Err(Error::Calibration(format!("fitted beta {beta} is not positive")));
    }
    Ok(Calibration {
        beta,
        sigma: opts.sigma,
        w: opts.w,
        n_pixels,
        trials: opts.trials,
        bins,
    })
}

/// Convenience wrapper seeding the trial generator from one integer.
pub fn calibrate_beta_seeded(opts: &CalibrationOptions, seed: u64) -> Result<Calibration> {
    calibrate_beta(opts, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reference_params() -> ThresholdParams {
        ThresholdParams::new(1.0, 4, 129 * 129, 0.65).unwrap()
    }

    #[test]
    fn search_space_examples() {
        assert_abs_diff_eq!(search_space_size(0.0, 100, 0.65), 600f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(search_space_size(100.0, 129 * 129, 0.65), 56.57, epsilon = 0.01);
        assert!(search_space_size(11.0, 50, 0.65) > search_space_size(10.0, 50, 0.65));
        assert!(search_space_size(10.0, 51, 0.65) > search_space_size(10.0, 50, 0.65));
    }

    #[test]
    fn threshold_examples() {
        let p = reference_params();
        assert_abs_diff_eq!(threshold(100.0, &p).unwrap(), 0.532, epsilon = 1e-3);
        assert_abs_diff_eq!(asymptotic_threshold(&p), 0.4746, epsilon = 1e-4);
        assert_abs_diff_eq!(threshold(1e9, &p).unwrap(), asymptotic_threshold(&p), epsilon = 1e-4);
        let p2 = ThresholdParams { sigma: 2.0, ..p };
        assert_abs_diff_eq!(threshold(37.0, &p2).unwrap(), 2.0 * threshold(37.0, &p).unwrap(), epsilon = 1e-12);
        let wide = ThresholdParams { w: 8, ..p };
        assert_abs_diff_eq!(asymptotic_threshold(&wide) * 2f64.sqrt(), asymptotic_threshold(&p), epsilon = 1e-12);
        assert!(threshold(0.0, &p).is_err());
        assert!(threshold(-1.0, &p).is_err());
    }

    #[test]
    fn coefficients_match_formula() {
        let p = reference_params();
        let (k, a, b) = p.threshold_coefficients();
        for len in [1.0, 7.5, 300.0] {
            assert_abs_diff_eq!((k * (a / len + b)).sqrt(), threshold(len, &p).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn params_validation() {
        assert!(ThresholdParams::new(0.0, 4, 10, 0.65).is_err());
        assert!(ThresholdParams::new(1.0, 0, 10, 0.65).is_err());
        assert!(ThresholdParams::new(1.0, 4, 0, 0.65).is_err());
        assert!(ThresholdParams::new(1.0, 4, 10, 0.0).is_err());
        assert!(ThresholdParams::new(1.0, 4, 10, f64::NAN).is_err());
    }

    #[test]
    fn score_examples() {
        let p = reference_params();
        let f = FilterParams::new(4).unwrap();
        let t = threshold(20.0, &p).unwrap();
        let at = ResponseVector::new(t * 80.0, 20.0, vec![], f);
        assert_abs_diff_eq!(score(&at, &p), 0.0, epsilon = 1e-12);
        let zero = ResponseVector::new(0.0, 20.0, vec![], f);
        assert_abs_diff_eq!(score(&zero, &p), -t, epsilon = 1e-12);
        let neg = ResponseVector::new(-2.0 * t * 80.0, 20.0, vec![], f);
        assert_abs_diff_eq!(score(&neg, &p), t, epsilon = 1e-12);
        let quiet = ThresholdParams { sigma: 0.1, ..p };
        for len in (10..2000).map(|l| l as f64) {
            assert!(threshold(len, &quiet).unwrap() < 1.0);
        }
    }

    proptest! {
        #[test]
        fn threshold_decreases_in_length(
            l in 0.01f64..1e4,
            dl in 0.01f64..100.0,
            sigma in 0.01f64..10.0,
            w in 1usize..16,
            n in 1usize..1_000_000,
            beta in 0.01f64..3.0,
        ) {
            let p = ThresholdParams::new(sigma, w, n, beta).unwrap();
            let t1 = threshold(l, &p).unwrap();
            let t2 = threshold(l + dl, &p).unwrap();
            prop_assert!(t2 < t1);
            prop_assert!(t2 > asymptotic_threshold(&p));
        }
    }

    #[test]
    fn calibration_rejects_degenerate_runs() {
        let opts = CalibrationOptions { trials: 0, ..Default::default() };
        assert!(calibrate_beta_seeded(&opts, 1).is_err());
        let tiny = CalibrationOptions {
            size: 5,
            trials: 1,
            min_samples: 1000,
            ..Default::default()
        };
        assert!(matches!(calibrate_beta_seeded(&tiny, 1), Err(Error::Calibration(_))));
    }

    #[test]
    fn calibration_is_scale_free() {
        let base = CalibrationOptions {
            size: 33,
            trials: 4,
            threads: Some(1),
            ..Default::default()
        };
        let a = calibrate_beta_seeded(&base, 9).unwrap();
        let b = calibrate_beta_seeded(&CalibrationOptions { sigma: 2.0, ..base }, 9).unwrap();
        assert_abs_diff_eq!(a.beta, b.beta, epsilon = 1e-9);
        assert!(a.to_table().lines().count() == a.bins.len() + 3);
    }
}
