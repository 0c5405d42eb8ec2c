use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use beamcurve::eval::{benchmark, simulated_image, snr_sweep};
use beamcurve::image::{load_image, save_image, synth_pattern};
use beamcurve::scoring::{asymptotic_threshold, calibrate_beta_seeded};
use beamcurve::{detect, MergeMode};

use crate::config::{load_pattern, BenchConfig, CalibrateConfig, DetectConfig, RunConfig, SweepConfig, SynthConfig};

/// Runs a validated config and writes everything under the run dir.
pub fn execute(cfg: &RunConfig, run_dir: Option<PathBuf>) -> Result<()> {
    let out = Output {
        dir: run_dir.unwrap_or_else(|| fresh_run_dir(cfg.name())),
        config: cfg.to_toml()?,
    };
    match cfg {
        RunConfig::Synth(c) => synth(c, &out),
        RunConfig::Detect(c) => detect_cmd(c, &out),
        RunConfig::Calibrate(c) => calibrate(c, &out),
        RunConfig::Sweep(c) => sweep(c, &out),
        RunConfig::Bench(c) => bench(c, &out),
    }
}

fn fresh_run_dir(command: &str) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let base = PathBuf::from("runs").join(format!("{command}-{secs}"));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    dir
}

/// The run dir is only created once there is something to write, so a
/// failed run leaves nothing behind.
struct Output {
    dir: PathBuf,
    config: String,
}

impl Output {
    fn open(&self) -> Result<&Path> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        fs::write(self.dir.join("config.toml"), &self.config)?;
        Ok(&self.dir)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn synth(c: &SynthConfig, out: &Output) -> Result<()> {
    let spec = load_pattern(c.pattern.as_ref(), c.size)?;
    let clean = synth_pattern(&spec)?;
    let img = if c.clean {
        clean.clone()
    } else {
        simulated_image(&clean, c.snr, c.noise_sigma, c.sp_fraction, c.seed)?
    };
    let dir = out.open()?;
    save_image(&img, dir.join("image.pgm"))?;
    save_image(&clean, dir.join("truth.pgm"))?;
    out.write("pattern.txt", &spec.to_config_string())?;
    let mut meta = format!("size = {}\nseed = {}\n", spec.size, c.seed);
    if c.clean {
        meta.push_str("snr = \"clean\"\nnoise_sigma = 0.0\ncontrast = 1.0\n");
    } else {
        let _ = write!(
            meta,
            "snr = {}\nnoise_sigma = {}\nsp_fraction = {}\ncontrast = {}\n",
            c.snr,
            c.noise_sigma,
            c.sp_fraction,
            c.snr * c.noise_sigma
        );
    }
    out.write("image.toml", &meta)?;
    println!("wrote {}", dir.join("image.pgm").display());
    Ok(())
}

fn detect_cmd(c: &DetectConfig, out: &Output) -> Result<()> {
    let img = load_image(&c.input).with_context(|| format!("loading {}", c.input.display()))?;
    let d = detect(&img, &c.detector.detector_config(c.merge_mode(), c.sigma, c.threads))?;
    let dir = out.open()?;
    let edges = d.edges.to_image();
    save_image(&edges, dir.join("edges.pgm"))?;
    out.write(
        "edges.toml",
        &format!(
            "width = {}\nheight = {}\nsigma = {}\nbeta = {}\nasymptotic_threshold = {}\ncurves = {}\naccepted = {}\nmarked_pixels = {}\nmax_score = {}\n",
            img.width(),
            img.height(),
            d.params.pixel_sigma(),
            d.params.beta,
            asymptotic_threshold(&d.params),
            d.curves.len(),
            d.edges.accepted(),
            d.edges.nonzero(),
            edges.min_max().map_or(0.0, |m| m.1),
        ),
    )?;
    out.write("curves.csv", &curve_table(&d, c.max_curves))?;

    println!(
        "{} significant curves, {} kept in the edge map, {} pixels marked",
        d.curves.len(),
        d.edges.accepted(),
        d.edges.nonzero()
    );
    if !d.curves.is_empty() {
        let top: Vec<String> = d.curves.iter().take(5).map(|s| format!("{:.3}", s.score)).collect();
        println!("top scores: {}", top.join(" "));
    }
    println!("wrote {}", dir.join("edges.pgm").display());
    Ok(())
}

fn curve_table(d: &beamcurve::Detection, max: usize) -> String {
    let mut s = String::from("rank,score,contrast,length,tile,x0,y0,x1,y1,pieces\n");
    for (i, c) in d.curves.iter().take(max).enumerate() {
        let segs = d.tree.segments(c.handle);
        let (Some(first), Some(last)) = (segs.first(), segs.last()) else {
            continue;
        };
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.3},{},{},{},{},{},{}",
            i + 1,
            c.score,
            c.c,
            c.len,
            c.handle.tile,
            first.from.x,
            first.from.y,
            last.to.x,
            last.to.y,
            segs.len()
        );
    }
    s
}

fn calibrate(c: &CalibrateConfig, out: &Output) -> Result<()> {
    let cal = calibrate_beta_seeded(&c.options(), c.seed)?;
    let dir = out.open()?;
    out.write("calibration.txt", &cal.to_table())?;
    println!(
        "beta = {:.4} over {} length bins, asymptotic threshold {:.4}",
        cal.beta,
        cal.bins.len(),
        asymptotic_threshold(&cal.params())
    );
    println!("wrote {}", dir.join("calibration.txt").display());
    Ok(())
}

fn sweep(c: &SweepConfig, out: &Output) -> Result<()> {
    let cfg = beamcurve::eval::SweepConfig {
        pattern: load_pattern(c.pattern.as_ref(), c.size)?,
        snr_grid: c.snr_grid.clone(),
        seeds: (0..c.seeds as u64).map(|i| c.seed.wrapping_add(i)).collect(),
        sigma: c.noise_sigma,
        sp_fraction: c.sp_fraction,
        detectors: c.detector_kinds()?,
        tolerance: c.tolerance,
        detector: c.detector.detector_config(MergeMode::Basic, None, None),
        threads: c.threads,
        ..Default::default()
    };
    let report = snr_sweep(&cfg)?;
    let dir = out.open()?;
    let text = report.to_text();
    out.write("sweep.txt", &text)?;
    out.write("sweep.csv", &report.to_csv())?;
    print!("{text}");
    println!("wrote {}", dir.join("sweep.txt").display());
    Ok(())
}

fn bench(c: &BenchConfig, out: &Output) -> Result<()> {
    let cfg = beamcurve::eval::BenchConfig {
        sizes: c.sizes.clone(),
        modes: c.merge_modes()?,
        repeats: c.repeats,
        seed: c.seed,
        w: c.w,
        n_min: c.n_min,
        threads: c.threads,
    };
    let report = benchmark(&cfg)?;
    let dir = out.open()?;
    let text = report.to_text();
    out.write("bench.txt", &text)?;
    out.write("bench.csv", &report.to_csv())?;
    print!("{text}");
    println!("wrote {}", dir.join("bench.txt").display());
    Ok(())
}
