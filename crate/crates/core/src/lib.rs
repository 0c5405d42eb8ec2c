//! Detection of faint curved edges in noisy images with the beam-curve
//! binary tree.
//!
//! The image is split recursively into a binary tree of tiles (squares split
//! into two rectangles, rectangles into two squares). For every pair of
//! boundary pixels on different sides of a tile the tree stores the single
//! curve between them that looks most like an edge. Leaves hold straight
//! segments; coarser tiles are filled by concatenating curves of their two
//! children at a pixel of the shared interface line. Each curve carries a
//! matched-filter response and is scored against a length-dependent
//! threshold that accounts for the size of the searched curve family.
//!
//! Modules:
//!
//! - [`image`] – raster type, synthetic patterns, noise model, PGM I/O.
//! - [`partition`] – the rectangle partition tree and boundary bookkeeping.
//! - [`response`] – response vectors and the straight-line matched filter.
//! - [`beamtree`] – the bottom-up dynamic program (basic and best-k modes).
//! - [`scoring`] – detection threshold, edge score and β calibration.
//! - [`edgemap`] – greedy non-maximal suppression into a soft edge map.
//! - [`eval`] – F-measure, Canny baseline, SNR sweeps and benchmarks.
//!
//! [`detect`] runs the whole pipeline on one image.

pub mod beamtree;
pub mod edgemap;
pub mod error;
pub mod eval;
pub mod image;
pub mod partition;
pub mod response;
pub mod scoring;

mod detector;

pub use beamtree::{BeamTree, MergeMode, OpCounters, Selection};
pub use detector::{detect, Detection, DetectorConfig};
pub use edgemap::EdgeMap;
pub use error::{Error, Result};
pub use image::{Image, NoiseSpec, PatternSpec};
pub use partition::{PartitionTree, Pixel, Rect, Tile};
pub use response::{FilterParams, ResponseVector};
pub use scoring::ThresholdParams;
