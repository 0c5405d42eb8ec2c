use std::fmt::Write as _;
use std::time::Instant;

use super::sweep::simulated_image;
use crate::beamtree::{BeamTree, BuildOptions, MergeMode, Selection};
use crate::error::{Error, Result};
use crate::image::{synth_pattern, PatternSpec};
use crate::partition::DEFAULT_N_MIN;
use crate::response::FilterParams;
use crate::scoring::{ThresholdParams, DEFAULT_BETA};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub modes: Vec<MergeMode>,
    pub repeats: usize,
    pub seed: u64,
    pub w: usize,
    pub n_min: usize,
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![65, 129, 257],
            modes: vec![MergeMode::Basic, MergeMode::Optimized { k: 2 }],
            repeats: 1,
            seed: 0,
            w: 4,
            n_min: DEFAULT_N_MIN,
            threads: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub n_pixels: usize,
    pub mode: MergeMode,
    /// Fastest of the repeats.
    pub seconds: f64,
    pub concatenations: u64,
    pub selection_ops: u64,
    pub stored: u64,
    /// Largest stored-curve count of any level.
    pub max_stored_per_level: u64,
    /// `18·N^1.5` for basic mode, `(6k+1)·N·log2 N` for best-k.
    pub bound: f64,
}

impl BenchRow {
    pub fn ops(&self) -> u64 {
        self.concatenations + self.selection_ops
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// `(mode, counter slope, time slope)` against `N` on log-log axes.
    pub slopes: Vec<(MergeMode, f64, f64)>,
}

fn mode_name(m: MergeMode) -> String {
    match m {
        MergeMode::Basic => "basic".into(),
        MergeMode::Optimized { k } => format!("fast-k{k}"),
    }
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>6} {:>8} {:>9} {:>10} {:>14} {:>12} {:>14} {:>10}\n",
            "size", "N", "mode", "seconds", "concatenations", "selection", "bound", "ops/bound"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6} {:>8} {:>9} {:>10.3} {:>14} {:>12} {:>14.0} {:>10.3}",
                r.size,
                r.n_pixels,
                mode_name(r.mode),
                r.seconds,
                r.concatenations,
                r.selection_ops,
                r.bound,
                r.ops() as f64 / r.bound
            );
        }
        s.push('\n');
        for (m, c, t) in &self.slopes {
            let _ = writeln!(s, "{:>9} counter slope {c:.3} time slope {t:.3}", mode_name(*m));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("size,n_pixels,mode,seconds,concatenations,selection_ops,stored,max_stored_per_level,bound\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{},{},{},{},{:.1}",
                r.size,
                r.n_pixels,
                mode_name(r.mode),
                r.seconds,
                r.concatenations,
                r.selection_ops,
                r.stored,
                r.max_stored_per_level,
                r.bound
            );
        }
        s
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Builds the tree on the simulation pattern (SNR 2, σ = 0.1) at every
/// size and mode, recording time and exact operation counts.
pub fn benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.sizes.is_empty() || cfg.modes.is_empty() || cfg.repeats == 0 {
        return Err(Error::invalid("benchmark needs sizes, modes and at least one repeat"));
    }
    if cfg.sizes.windows(2).any(|s| s[0] >= s[1]) {
        return Err(Error::invalid("benchmark sizes must be strictly ascending"));
    }
    let sigma = 0.1;
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        let clean = synth_pattern(&PatternSpec::simulation(size))?;
        let img = simulated_image(&clean, 2.0, sigma, 0.01, cfg.seed)?;
        let n = img.len();
        let params = ThresholdParams::from_pixel_noise(sigma, cfg.w, n, DEFAULT_BETA)?;
        for &mode in &cfg.modes {
            let opts = BuildOptions {
                n_min: cfg.n_min,
                filter: FilterParams::new(cfg.w)?,
                mode,
                selection: Selection::Score(params),
                threads: cfg.threads,
            };
            let mut best = f64::INFINITY;
            let mut tree = None;
            for _ in 0..cfg.repeats {
                let start = Instant::now();
                let t = BeamTree::build(&img, &opts)?;
                best = best.min(start.elapsed().as_secs_f64());
                tree = Some(t);
            }
            let c = tree.expect("at least one repeat").counters().clone();
            let nf = n as f64;
            let bound = match mode {
                MergeMode::Basic => 18.0 * nf.powf(1.5),
                MergeMode::Optimized { k } => (6 * k + 1) as f64 * nf * nf.log2(),
            };
            rows.push(BenchRow {
                size,
                n_pixels: n,
                mode,
                seconds: best,
                concatenations: c.concatenations,
                selection_ops: c.selection_ops,
                stored: c.stored,
                max_stored_per_level: c.per_level.iter().map(|l| l.stored).max().unwrap_or(0),
                bound,
            });
        }
    }
    let slopes = if cfg.sizes.len() >= 2 {
        cfg.modes
            .iter()
            .map(|&m| {
                let of = |f: fn(&BenchRow) -> f64| {
                    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.mode == m).map(|r| (r.n_pixels as f64, f(r))).collect();
                    log_log_slope(&pts)
                };
                (m, of(|r| r.ops() as f64), of(|r| r.seconds.max(1e-9)))
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(BenchReport { rows, slopes })
}
