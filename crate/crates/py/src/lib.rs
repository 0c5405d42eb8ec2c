//! Python bindings. Images cross the boundary as lists of rows of floats;
//! anything iterable that way (nested lists, 2-D numpy arrays) is accepted.

use std::str::FromStr;

use beamcurve::beamtree::{BuildOptions, Selection};
use beamcurve::eval::{self, Mask};
use beamcurve::image::{self as bimage, NoiseSpec, PatternSpec};
use beamcurve::scoring::{self, CalibrationOptions};
use beamcurve::{BeamTree, DetectorConfig, FilterParams, Image, MergeMode, ThresholdParams};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: beamcurve::Error) -> PyErr {
    match e {
        beamcurve::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn image_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Image> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("image rows differ in length"));
    }
    Image::from_vec(width, height, rows.concat()).map_err(to_py_err)
}

fn rows_of(img: &Image) -> Vec<Vec<f64>> {
    img.data().chunks(img.width().max(1)).map(<[f64]>::to_vec).collect()
}

fn merge_mode(mode: &str, k: usize) -> PyResult<MergeMode> {
    match mode {
        "basic" => Ok(MergeMode::Basic),
        "fast" => Ok(MergeMode::Optimized { k }),
        _ => Err(PyValueError::new_err(format!("mode must be `basic` or `fast`, got `{mode}`"))),
    }
}

/// One significant curve, best first in [`Detection.curves`].
#[pyclass(frozen, get_all, skip_from_py_object, module = "pybeamcurve")]
#[derive(Clone)]
struct Curve {
    score: f64,
    /// Signed mean contrast across the curve.
    contrast: f64,
    length: f64,
    start: (u32, u32),
    end: (u32, u32),
    /// Corner points of the polyline, start to end.
    points: Vec<(u32, u32)>,
}

#[pymethods]
impl Curve {
    fn __repr__(&self) -> String {
        format!(
            "Curve(score={:.4}, contrast={:.4}, length={:.2}, start={:?}, end={:?})",
            self.score, self.contrast, self.length, self.start, self.end
        )
    }
}

/// Result of [`detect`].
#[pyclass(frozen, get_all, module = "pybeamcurve")]
struct Detection {
    /// Soft edge map, rows of per-pixel scores; 0 where no edge.
    edges: Vec<Vec<f64>>,
    curves: Vec<Curve>,
    /// Curves painted into the edge map.
    accepted: usize,
    /// Per-pixel noise level used for the threshold.
    sigma: f64,
    beta: f64,
    asymptotic_threshold: f64,
    concatenations: u64,
    stored: u64,
}

#[pymethods]
impl Detection {
    fn __repr__(&self) -> String {
        format!(
            "Detection(curves={}, accepted={}, sigma={:.4})",
            self.curves.len(),
            self.accepted,
            self.sigma
        )
    }
}

/// Detects faint curved edges and returns the soft edge map with the
/// significant curves. `sigma=None` estimates the noise from the image.
#[pyfunction]
#[pyo3(signature = (
    image, *, mode = "basic", k = 2, w = 4, sigma = None, beta = scoring::DEFAULT_BETA,
    n_min = beamcurve::partition::DEFAULT_N_MIN,
    overlap_fraction = beamcurve::edgemap::DEFAULT_OVERLAP_FRACTION,
    overlap_radius = beamcurve::edgemap::DEFAULT_OVERLAP_RADIUS,
    residual_check = true, max_curves = 1000, threads = None
))]
#[allow(clippy::too_many_arguments)]
fn detect(
    py: Python<'_>,
    image: Vec<Vec<f64>>,
    mode: &str,
    k: usize,
    w: usize,
    sigma: Option<f64>,
    beta: f64,
    n_min: usize,
    overlap_fraction: f64,
    overlap_radius: usize,
    residual_check: bool,
    max_curves: usize,
    threads: Option<usize>,
) -> PyResult<Detection> {
    let img = image_from_rows(image)?;
    let cfg = DetectorConfig {
        mode: merge_mode(mode, k)?,
        w,
        sigma,
        beta,
        n_min,
        overlap_fraction,
        overlap_radius,
        residual_check,
        threads,
    };
    let d = py.detach(|| beamcurve::detect(&img, &cfg)).map_err(to_py_err)?;
    let curves = d
        .curves
        .iter()
        .take(max_curves)
        .map(|c| {
            let segs = d.tree.segments(c.handle);
            let mut points: Vec<(u32, u32)> = segs.iter().map(|s| (s.from.x, s.from.y)).collect();
            if let Some(last) = segs.last() {
                points.push((last.to.x, last.to.y));
            }
            Curve {
                score: c.score,
                contrast: c.c,
                length: c.len,
                start: points.first().copied().unwrap_or_default(),
                end: points.last().copied().unwrap_or_default(),
                points,
            }
        })
        .collect();
    let counters = d.tree.counters();
    Ok(Detection {
        edges: rows_of(&d.edges.to_image()),
        curves,
        accepted: d.edges.accepted(),
        sigma: d.params.pixel_sigma(),
        beta: d.params.beta,
        asymptotic_threshold: scoring::asymptotic_threshold(&d.params),
        concatenations: counters.concatenations,
        stored: counters.stored,
    })
}

/// Operation counts of one tree build, as a dict.
#[pyfunction]
#[pyo3(signature = (image, *, mode = "basic", k = 2, w = 4, n_min = beamcurve::partition::DEFAULT_N_MIN, threads = None))]
fn op_counts(
    py: Python<'_>,
    image: Vec<Vec<f64>>,
    mode: &str,
    k: usize,
    w: usize,
    n_min: usize,
    threads: Option<usize>,
) -> PyResult<std::collections::BTreeMap<&'static str, u64>> {
    let img = image_from_rows(image)?;
    let opts = BuildOptions {
        n_min,
        filter: FilterParams::new(w).map_err(to_py_err)?,
        mode: merge_mode(mode, k)?,
        selection: Selection::MaxContrast,
        threads,
    };
    let tree = py.detach(|| BeamTree::build(&img, &opts)).map_err(to_py_err)?;
    let c = tree.counters();
    Ok([
        ("concatenations", c.concatenations),
        ("stored", c.stored),
        ("selection_ops", c.selection_ops),
        ("levels", c.per_level.len() as u64),
    ]
    .into_iter()
    .collect())
}

/// Renders a binary test pattern. With `pattern=None` this is the
/// simulation pattern at `size`; otherwise `pattern` is a config string.
#[pyfunction]
#[pyo3(signature = (size = 129, pattern = None))]
fn synth_pattern(size: usize, pattern: Option<&str>) -> PyResult<Vec<Vec<f64>>> {
    let spec = match pattern {
        Some(text) => PatternSpec::from_str(text).map_err(to_py_err)?,
        None => PatternSpec::simulation(size),
    };
    Ok(rows_of(&bimage::synth_pattern(&spec).map_err(to_py_err)?))
}

/// Scales a clean pattern to contrast `snr * sigma` and adds Gaussian and
/// salt-and-pepper noise.
#[pyfunction]
#[pyo3(signature = (clean, snr, *, sigma = 0.1, sp_fraction = 0.01, seed = 0))]
fn simulated_image(clean: Vec<Vec<f64>>, snr: f64, sigma: f64, sp_fraction: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let img = image_from_rows(clean)?;
    Ok(rows_of(&eval::simulated_image(&img, snr, sigma, sp_fraction, seed).map_err(to_py_err)?))
}

/// Adds Gaussian noise only.
#[pyfunction]
#[pyo3(signature = (image, sigma, *, seed = 0))]
fn add_noise(image: Vec<Vec<f64>>, sigma: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let img = image_from_rows(image)?;
    Ok(rows_of(&bimage::add_noise(&img, &NoiseSpec::gaussian(sigma, seed)).map_err(to_py_err)?))
}

#[pyfunction]
fn estimate_sigma(image: Vec<Vec<f64>>) -> PyResult<f64> {
    bimage::estimate_sigma(&image_from_rows(image)?).map_err(to_py_err)
}

/// Detection threshold on the mean contrast of a curve of length `length`
/// in an image of `n_pixels` pixels with per-pixel noise `sigma`.
#[pyfunction]
#[pyo3(signature = (length, sigma, n_pixels, *, w = 4, beta = scoring::DEFAULT_BETA))]
fn threshold(length: f64, sigma: f64, n_pixels: usize, w: usize, beta: f64) -> PyResult<f64> {
    let params = ThresholdParams::from_pixel_noise(sigma, w, n_pixels, beta).map_err(to_py_err)?;
    scoring::threshold(length, &params).map_err(to_py_err)
}

/// Fits beta on pure-noise images; returns `(beta, [(length, max_abs_c), ...])`.
#[pyfunction]
#[pyo3(signature = (*, size = 129, sigma = 1.0, w = 4, trials = 20, seed = 0, threads = None))]
fn calibrate(
    py: Python<'_>,
    size: usize,
    sigma: f64,
    w: usize,
    trials: usize,
    seed: u64,
    threads: Option<usize>,
) -> PyResult<(f64, Vec<(f64, f64)>)> {
    let opts = CalibrationOptions {
        size,
        sigma,
        w,
        trials,
        threads,
        ..Default::default()
    };
    let cal = py
        .detach(|| scoring::calibrate_beta_seeded(&opts, seed))
        .map_err(to_py_err)?;
    Ok((cal.beta, cal.bins.iter().map(|b| (b.len, b.max_abs_c)).collect()))
}

/// Tolerance-matched `(f_score, precision, recall)` of two binary maps,
/// given as rows where any nonzero value counts as an edge.
#[pyfunction]
#[pyo3(signature = (detected, truth, *, tolerance = eval::DEFAULT_TOLERANCE))]
fn f_measure(detected: Vec<Vec<f64>>, truth: Vec<Vec<f64>>, tolerance: f64) -> PyResult<(f64, f64, f64)> {
    let mask = |rows| -> PyResult<Mask> {
        let img = image_from_rows(rows)?;
        Mask::from_vec(img.width(), img.height(), img.data().iter().map(|&v| v != 0.0).collect()).map_err(to_py_err)
    };
    let m = eval::f_measure(&mask(detected)?, &mask(truth)?, tolerance).map_err(to_py_err)?;
    Ok((m.f_score, m.precision, m.recall))
}

#[pyfunction]
fn load_pgm(path: &str) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows_of(&bimage::load_image(path).map_err(to_py_err)?))
}

/// Saves as 16-bit PGM; the value range is kept in a header comment so
/// [`load_pgm`] restores the original values.
#[pyfunction]
fn save_pgm(image: Vec<Vec<f64>>, path: &str) -> PyResult<()> {
    bimage::save_image(&image_from_rows(image)?, path).map_err(to_py_err)
}

#[pymodule]
fn pybeamcurve(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Curve>()?;
    m.add_class::<Detection>()?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(op_counts, m)?)?;
    m.add_function(wrap_pyfunction!(synth_pattern, m)?)?;
    m.add_function(wrap_pyfunction!(simulated_image, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(f_measure, m)?)?;
    m.add_function(wrap_pyfunction!(load_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(save_pgm, m)?)?;
    m.add("DEFAULT_BETA", scoring::DEFAULT_BETA)?;
    Ok(())
}
