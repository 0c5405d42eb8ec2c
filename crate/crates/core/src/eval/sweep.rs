use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use super::canny::{canny_baseline, CannyParams};
use super::fmeasure::{f_measure, DEFAULT_TOLERANCE};
use super::Mask;
use crate::beamtree::MergeMode;
use crate::detector::{detect, DetectorConfig};
use crate::error::{Error, Result};
use crate::image::{add_noise, synth_pattern, Image, NoiseSpec, PatternSpec};

/// SNR ranges averaged in the summary table.
pub const TABLE_RANGES: [(f64, f64); 3] = [(0.6, 1.0), (1.2, 2.0), (2.2, 2.6)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorKind {
    Beam(MergeMode),
    Canny,
}

impl DetectorKind {
    pub fn name(&self) -> String {
        match self {
            DetectorKind::Beam(MergeMode::Basic) => "basic".into(),
            DetectorKind::Beam(MergeMode::Optimized { k }) => format!("fast-k{k}"),
            DetectorKind::Canny => "canny".into(),
        }
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    /// `basic`, `canny`, `fast` (k = 2) or `fast:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(DetectorKind::Beam(MergeMode::Basic)),
            "canny" => Ok(DetectorKind::Canny),
            "fast" => Ok(DetectorKind::Beam(MergeMode::Optimized { k: 2 })),
            _ => {
                let k = s
                    .strip_prefix("fast:")
                    .or_else(|| s.strip_prefix("fast-k"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| Error::invalid(format!("unknown detector `{s}`")))?;
                Ok(DetectorKind::Beam(MergeMode::Optimized { k }))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub pattern: PatternSpec,
    pub snr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub sigma: f64,
    pub sp_fraction: f64,
    pub detectors: Vec<DetectorKind>,
    pub tolerance: f64,
    pub canny: CannyParams,
    /// Settings shared by the beam-curve detectors; mode and sigma are
    /// overridden per run.
    pub detector: DetectorConfig,
    pub threads: Option<usize>,
}

impl SweepConfig {
    /// SNR 0.6 to 2.6 in steps of 0.2.
    pub fn default_grid() -> Vec<f64> {
        (3..=13).map(|i| i as f64 * 0.2).collect()
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            pattern: PatternSpec::default_129(),
            snr_grid: Self::default_grid(),
            seeds: (0..10).collect(),
            sigma: 0.1,
            sp_fraction: 0.01,
            detectors: vec![
                DetectorKind::Beam(MergeMode::Basic),
                DetectorKind::Beam(MergeMode::Optimized { k: 2 }),
                DetectorKind::Canny,
            ],
            tolerance: DEFAULT_TOLERANCE,
            canny: CannyParams::default(),
            detector: DetectorConfig::default(),
            threads: None,
        }
    }
}

/// Mean over seeds of one detector at one SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub f_score: f64,
    pub f_std_err: f64,
    pub precision: f64,
    pub recall: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub snr: f64,
    /// One cell per detector, in configuration order.
    pub cells: Vec<SweepCell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeSummary {
    pub lo: f64,
    pub hi: f64,
    pub f_scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub detectors: Vec<DetectorKind>,
    pub rows: Vec<SweepRow>,
    pub ranges: Vec<RangeSummary>,
    pub seeds: usize,
}

impl SweepReport {
    pub fn column(&self, d: DetectorKind) -> Option<usize> {
        self.detectors.iter().position(|&x| x == d)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let names: Vec<String> = self.detectors.iter().map(DetectorKind::name).collect();
        let _ = write!(s, "{:>6}", "snr");
        for n in &names {
            let _ = write!(s, " {:>16} {:>9}", format!("F({n})"), "sec");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:>6.2}", r.snr);
            for c in &r.cells {
                let _ = write!(s, " {:>9.3} ±{:>5.3} {:>9.3}", c.f_score, c.f_std_err, c.seconds);
            }
            s.push('\n');
        }
        s.push('\n');
        let _ = write!(s, "{:>12}", "snr range");
        for n in &names {
            let _ = write!(s, " {:>10}", n);
        }
        s.push('\n');
        for g in &self.ranges {
            let _ = write!(s, "{:>12}", format!("{:.1}-{:.1}", g.lo, g.hi));
            for f in &g.f_scores {
                let _ = write!(s, " {:>10.3}", f);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("snr,detector,f_score,f_std_err,precision,recall,seconds\n");
        for r in &self.rows {
            for (d, c) in self.detectors.iter().zip(&r.cells) {
                let _ = writeln!(
                    s,
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    r.snr,
                    d.name(),
                    c.f_score,
                    c.f_std_err,
                    c.precision,
                    c.recall,
                    c.seconds
                );
            }
        }
        s
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The noisy image of one sweep cell: the clean pattern scaled to contrast
/// `snr·σ`, plus the simulation noise.
pub fn simulated_image(clean: &Image, snr: f64, sigma: f64, sp_fraction: f64, seed: u64) -> Result<Image> {
    let scaled = clean.map(|v| v * snr * sigma);
    let mut noise = NoiseSpec::simulation(sigma, seed);
    noise.sp_fraction = sp_fraction;
    add_noise(&scaled, &noise)
}

fn run_cell(
    cfg: &SweepConfig,
    clean: &Image,
    truth: &Mask,
    snr_index: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let snr = cfg.snr_grid[snr_index];
    let img = simulated_image(clean, snr, cfg.sigma, cfg.sp_fraction, mix(seed, snr_index as u64))?;
    cfg.detectors
        .iter()
        .map(|d| {
            let start = Instant::now();
            let found = match d {
                DetectorKind::Canny => canny_baseline(&img, &cfg.canny)?,
                DetectorKind::Beam(mode) => {
                    let dc = DetectorConfig {
                        mode: *mode,
                        sigma: Some(cfg.sigma),
                        threads: None,
                        ..cfg.detector
                    };
                    let det = detect(&img, &dc)?;
                    Mask::from_vec(img.width(), img.height(), det.edges.binarize(0.0))?
                }
            };
            let secs = start.elapsed().as_secs_f64();
            let m = f_measure(&found, truth, cfg.tolerance)?;
            Ok((m.f_score, m.precision, m.recall, secs))
        })
        .collect()
}

/// Runs every detector on every `(snr, seed)` cell and scores it against
/// Canny on the clean pattern.
pub fn snr_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.snr_grid.is_empty() || cfg.seeds.is_empty() || cfg.detectors.is_empty() {
        return Err(Error::invalid("sweep needs SNR values, seeds and detectors"));
    }
    if !(cfg.sigma > 0.0) {
        return Err(Error::invalid("sweep sigma must be positive"));
    }
    let clean = synth_pattern(&cfg.pattern)?;
    let truth = canny_baseline(&clean, &cfg.canny)?;
    let jobs: Vec<(usize, u64)> = (0..cfg.snr_grid.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let run = || -> Result<Vec<Vec<(f64, f64, f64, f64)>>> {
        jobs.par_iter().map(|&(i, s)| run_cell(cfg, &clean, &truth, i, s)).collect()
    };
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let n_seeds = cfg.seeds.len();
    let mut rows = Vec::new();
    for (i, &snr) in cfg.snr_grid.iter().enumerate() {
        let block = &results[i * n_seeds..(i + 1) * n_seeds];
        let cells = (0..cfg.detectors.len())
            .map(|d| {
                let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| block.iter().map(|r| f(&r[d])).sum::<f64>() / n_seeds as f64;
                let f_score = mean(|r| r.0);
                let var = if n_seeds > 1 {
                    block.iter().map(|r| (r[d].0 - f_score).powi(2)).sum::<f64>() / (n_seeds - 1) as f64
                } else {
                    0.0
                };
                SweepCell {
                    f_score,
                    f_std_err: (var / n_seeds as f64).sqrt(),
                    precision: mean(|r| r.1),
                    recall: mean(|r| r.2),
                    seconds: mean(|r| r.3),
                }
            })
            .collect();
        rows.push(SweepRow { snr, cells });
    }
    let ranges = TABLE_RANGES
        .iter()
        .filter_map(|&(lo, hi)| {
            let inside: Vec<&SweepRow> = rows.iter().filter(|r| r.snr >= lo - 1e-9 && r.snr <= hi + 1e-9).collect();
            (!inside.is_empty()).then(|| RangeSummary {
                lo,
                hi,
                f_scores: (0..cfg.detectors.len())
                    .map(|d| inside.iter().map(|r| r.cells[d].f_score).sum::<f64>() / inside.len() as f64)
                    .collect(),
            })
        })
        .collect();
    Ok(SweepReport {
        detectors: cfg.detectors.clone(),
        rows,
        ranges,
        seeds: n_seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_names_parse_back() {
        for d in [
            DetectorKind::Beam(MergeMode::Basic),
            DetectorKind::Beam(MergeMode::Optimized { k: 3 }),
            DetectorKind::Canny,
        ] {
            assert_eq!(d.name().parse::<DetectorKind>().unwrap(), d);
        }
        assert_eq!("fast".parse::<DetectorKind>().unwrap(), DetectorKind::Beam(MergeMode::Optimized { k: 2 }));
        assert!("fast:0".parse::<DetectorKind>().is_err());
        assert!("sobel".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn default_grid_spacing() {
        let g = SweepConfig::default_grid();
        assert_eq!(g.len(), 11);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[10] - 2.6).abs() < 1e-12);
    }

    #[test]
    fn small_sweep_is_deterministic() {
        let cfg = SweepConfig {
            pattern: PatternSpec::simulation(33),
            snr_grid: vec![1.0, 2.4],
            seeds: vec![1, 2],
            ..Default::default()
        };
        let a = snr_sweep(&cfg).unwrap();
        let b = snr_sweep(&SweepConfig { threads: Some(1), ..cfg }).unwrap();
        let strip = |r: &SweepReport| -> Vec<f64> { r.rows.iter().flat_map(|x| x.cells.iter().map(|c| c.f_score)).collect() };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.ranges.len(), 2);
        assert_eq!(a.to_csv().lines().count(), 1 + 2 * 3);
        assert!(a.to_text().contains("fast-k2"));
    }

    #[test]
    fn empty_grid_rejected() {
        let cfg = SweepConfig {
            snr_grid: vec![],
            ..Default::default()
        };
        assert!(snr_sweep(&cfg).is_err());
    }
}
