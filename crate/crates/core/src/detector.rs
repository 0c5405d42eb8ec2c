use crate::beamtree::{BeamTree, BuildOptions, MergeMode, ScoredCurve, Selection};
use crate::edgemap::{edge_map_from_tree, EdgeMap, DEFAULT_OVERLAP_FRACTION, DEFAULT_OVERLAP_RADIUS};
use crate::error::Result;
use crate::image::{estimate_sigma, Image};
use crate::partition::DEFAULT_N_MIN;
use crate::response::FilterParams;
use crate::scoring::{ThresholdParams, DEFAULT_BETA};

/// Settings of the full detection pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorConfig {
    pub mode: MergeMode,
    pub w: usize,
    /// Per-pixel noise level; estimated from the image when `None`.
    pub sigma: Option<f64>,
    pub beta: f64,
    pub n_min: usize,
    pub overlap_fraction: f64,
    /// Chessboard radius within which painted pixels count as overlap.
    pub overlap_radius: usize,
    /// Drop curves whose part not yet marked is insignificant by itself.
    pub residual_check: bool,
    pub threads: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            mode: MergeMode::Basic,
            w: 4,
            sigma: None,
            beta: DEFAULT_BETA,
            n_min: DEFAULT_N_MIN,
            overlap_fraction: DEFAULT_OVERLAP_FRACTION,
            overlap_radius: DEFAULT_OVERLAP_RADIUS,
            residual_check: true,
            threads: None,
        }
    }
}

#[derive(Debug)]
pub struct Detection {
    pub tree: BeamTree,
    pub params: ThresholdParams,
    /// Positive-score curves, best first.
    pub curves: Vec<ScoredCurve>,
    pub edges: EdgeMap,
}

/// Builds the tree, scores every stored curve and paints the edge map.
pub fn detect(img: &Image, cfg: &DetectorConfig) -> Result<Detection> {
    let sigma = match cfg.sigma {
        Some(s) => s,
        None => estimate_sigma(img)?,
    };
    // A noiseless image still needs a finite threshold.
    let sigma = if sigma > 0.0 { sigma } else { 1e-9 };
    let params = ThresholdParams::from_pixel_noise(sigma, cfg.w, img.len(), cfg.beta)?;
    let tree = BeamTree::build(
        img,
        &BuildOptions {
            n_min: cfg.n_min,
            filter: FilterParams::new(cfg.w)?,
            mode: cfg.mode,
            selection: Selection::Score(params),
            threads: cfg.threads,
        },
    )?;
    let curves = tree.collect_curves(&params);
    let edges = edge_map_from_tree(
        &tree,
        &curves,
        cfg.overlap_fraction,
        cfg.overlap_radius,
        cfg.residual_check.then_some(&params),
    )?;
    Ok(Detection {
        tree,
        params,
        curves,
        edges,
    })
}
