use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Image;
use crate::error::{Error, Result};

/// Additive Gaussian noise followed by sparse salt-and-pepper corruption.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation of the additive Gaussian noise.
    pub sigma: f64,
    /// Fraction of pixels replaced by salt or pepper values.
    pub sp_fraction: f64,
    /// Salt is `max(clean) + sp_magnitude`, pepper is `min(clean) - sp_magnitude`.
    pub sp_magnitude: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Gaussian noise only.
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            sigma,
            sp_fraction: 0.0,
            sp_magnitude: 0.0,
            seed,
        }
    }

    /// The simulation noise: Gaussian plus 1% salt and pepper placed three
    /// standard deviations beyond the clean intensity range.
    pub fn simulation(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            sigma,
            sp_fraction: 0.01,
            sp_magnitude: 3.0 * sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.sp_fraction) {
            return Err(Error::invalid(format!(
                "salt-and-pepper fraction must lie in [0, 1], got {}",
                self.sp_fraction
            )));
        }
        Ok(())
    }
}

/// Returns `img` corrupted by `noise`. Identical arguments give bit-identical
/// output.
pub fn add_noise(img: &Image, noise: &NoiseSpec) -> Result<Image> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = img.clone();
    if noise.sigma > 0.0 {
        let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let hits = (noise.sp_fraction * img.len() as f64).floor() as usize;
    if hits > 0 {
        let (lo, hi) = img.min_max().unwrap_or((0.0, 0.0));
        let salt = hi + noise.sp_magnitude;
        let pepper = lo - noise.sp_magnitude;
        let chosen = index::sample(&mut rng, img.len(), hits.min(img.len()));
        let data = out.data_mut();
        for i in chosen.iter() {
            data[i] = if rng.random_bool(0.5) { salt } else { pepper };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let img = Image::from_fn(9, 7, |x, y| (x * y) as f64 * 0.1);
        let out = add_noise(&img, &NoiseSpec::gaussian(0.0, 3)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn deterministic_per_seed() {
        let img = Image::filled(40, 40, 0.5);
        let spec = NoiseSpec::simulation(0.1, 42);
        let a = add_noise(&img, &spec).unwrap();
        let b = add_noise(&img, &spec).unwrap();
        assert_eq!(a.data(), b.data());
        let c = add_noise(&img, &NoiseSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn rejects_bad_spec() {
        let img = Image::new(4, 4);
        assert!(add_noise(&img, &NoiseSpec::gaussian(-1.0, 0)).is_err());
        let spec = NoiseSpec {
            sp_fraction: 1.5,
            ..NoiseSpec::gaussian(0.1, 0)
        };
        assert!(add_noise(&img, &spec).is_err());
    }

    #[test]
    fn salt_and_pepper_count_and_values() {
        let img = Image::from_fn(100, 100, |x, _| if x < 50 { 0.0 } else { 1.0 });
        let spec = NoiseSpec {
            sigma: 0.0,
            sp_fraction: 0.01,
            sp_magnitude: 0.3,
            seed: 7,
        };
        let out = add_noise(&img, &spec).unwrap();
        let changed: Vec<f64> = out
            .data()
            .iter()
            .zip(img.data())
            .filter(|(a, b)| a != b)
            .map(|(a, _)| *a)
            .collect();
        assert_eq!(changed.len(), 100);
        assert!(changed.iter().all(|&v| v == 1.3 || v == -0.3));
        assert!(changed.iter().any(|&v| v == 1.3));
        assert!(changed.iter().any(|&v| v == -0.3));
    }

    #[test]
    fn gaussian_moments() {
        // 10^6 samples: mean within 4σ/1000, std within 1%, near-zero skew and
        // excess kurtosis.
        let sigma = 0.1;
        let img = Image::new(1000, 1000);
        let out = add_noise(&img, &NoiseSpec::gaussian(sigma, 11)).unwrap();
        let n = out.len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let m2 = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = out.data().iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = out.data().iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let std = m2.sqrt();
        assert!(mean.abs() < 4.0 * sigma / 1000.0, "mean {mean}");
        assert!((std / sigma - 1.0).abs() < 0.01, "std {std}");
        assert!((m3 / m2.powf(1.5)).abs() < 0.05);
        assert!((m4 / (m2 * m2) - 3.0).abs() < 0.1);
    }
}
