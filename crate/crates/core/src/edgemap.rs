//! Soft edge map assembly with greedy non-maximal suppression.

use crate::beamtree::{BeamTree, ScoredCurve, Segment};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::partition::Pixel;
use crate::response::bresenham;
use crate::scoring::{threshold, ThresholdParams};

pub const DEFAULT_OVERLAP_FRACTION: f64 = 0.5;
pub const DEFAULT_OVERLAP_RADIUS: usize = 2;

/// Per-pixel score of the best accepted curve through it; 0 means no edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    // pixels within `radius` (chessboard distance) of a painted pixel
    near: Vec<bool>,
    radius: usize,
    accepted: usize,
}

impl EdgeMap {
    /// Overlap counts exact pixel coincidence.
    pub fn new(width: usize, height: usize) -> Self {
        Self::with_radius(width, height, 0)
    }

    /// A pixel of a new curve counts as overlapping when a painted pixel
    /// lies within `radius` of it (chessboard distance).
    pub fn with_radius(width: usize, height: usize, radius: usize) -> Self {
        EdgeMap {
            width,
            height,
            values: vec![0.0; width * height],
            near: vec![false; width * height],
            radius,
            accepted: 0,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Curves painted so far.
    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Paints `pixels` with `score` unless more than `overlap_fraction` of
    /// them are already marked. Returns whether the curve was kept.
    pub fn paint(&mut self, pixels: &[Pixel], score: f64, overlap_fraction: f64) -> bool {
        if pixels.is_empty() {
            return false;
        }
        let marked = pixels.iter().filter(|p| self.near[p.index(self.width)]).count();
        if marked as f64 > overlap_fraction * pixels.len() as f64 {
            return false;
        }
        let r = self.radius as i64;
        for p in pixels {
            let v = &mut self.values[p.index(self.width)];
            *v = v.max(score);
            for y in (p.y as i64 - r).max(0)..=(p.y as i64 + r).min(self.height as i64 - 1) {
                for x in (p.x as i64 - r).max(0)..=(p.x as i64 + r).min(self.width as i64 - 1) {
                    self.near[y as usize * self.width + x as usize] = true;
                }
            }
        }
        self.accepted += 1;
        true
    }

    /// Like [`EdgeMap::paint`] for a curve given as straight pieces, with one
    /// more condition when `residual` is set: if some pieces are already
    /// mostly marked, the remaining pieces must still form a significant
    /// curve of the same polarity on their own.
    pub fn paint_segments(
        &mut self,
        segments: &[Segment],
        score: f64,
        overlap_fraction: f64,
        residual: Option<&ThresholdParams>,
    ) -> bool {
        let mut pixels: Vec<Pixel> = Vec::new();
        let (mut r_all, mut r_rest, mut len_rest) = (0.0, 0.0, 0.0);
        let mut covered_any = false;
        for s in segments {
            let line = bresenham(s.from, s.to);
            let marked = line.iter().filter(|p| self.near[p.index(self.width)]).count();
            r_all += s.r;
            if 2 * marked > line.len() {
                covered_any = true;
            } else {
                r_rest += s.r;
                len_rest += s.len;
            }
            pixels.pop();
            pixels.extend(line);
        }
        if let (Some(params), true) = (residual, covered_any) {
            let significant = len_rest > 0.0
                && r_rest * r_all > 0.0
                && r_rest.abs() / (params.w as f64 * len_rest) > threshold(len_rest, params).unwrap_or(f64::INFINITY);
            if !significant {
                return false;
            }
        }
        self.paint(&pixels, score, overlap_fraction)
    }

    pub fn to_image(&self) -> Image {
        Image::from_vec(self.width, self.height, self.values.clone()).expect("dimensions match")
    }

    /// Pixels strictly above `level`.
    pub fn binarize(&self, level: f64) -> Vec<bool> {
        binarize(&self.values, level)
    }
}

pub fn binarize(values: &[f64], level: f64) -> Vec<bool> {
    values.iter().map(|&v| v > level).collect()
}

fn check_fraction(overlap_fraction: f64) -> Result<()> {
    if (0.0..=1.0).contains(&overlap_fraction) {
        Ok(())
    } else {
        Err(Error::invalid(format!("overlap fraction must be in [0, 1], got {overlap_fraction}")))
    }
}

/// Paints pre-sorted `(pixels, score)` curves in order.
pub fn build_edge_map<'a>(
    curves: impl IntoIterator<Item = (&'a [Pixel], f64)>,
    width: usize,
    height: usize,
    overlap_fraction: f64,
    overlap_radius: usize,
) -> Result<EdgeMap> {
    check_fraction(overlap_fraction)?;
    let mut map = EdgeMap::with_radius(width, height, overlap_radius);
    let mut last = f64::INFINITY;
    for (pixels, score) in curves {
        if !(score > 0.0) || score > last {
            return Err(Error::invalid("curves must have positive, non-increasing scores"));
        }
        last = score;
        map.paint(pixels, score, overlap_fraction);
    }
    Ok(map)
}

/// Edge map of the curves collected from a built tree. With `residual`
/// set, see [`EdgeMap::paint_segments`].
pub fn edge_map_from_tree(
    tree: &BeamTree,
    curves: &[ScoredCurve],
    overlap_fraction: f64,
    overlap_radius: usize,
    residual: Option<&ThresholdParams>,
) -> Result<EdgeMap> {
    check_fraction(overlap_fraction)?;
    let part = tree.partition();
    let mut map = EdgeMap::with_radius(part.width(), part.height(), overlap_radius);
    for c in curves {
        map.paint_segments(&tree.segments(c.handle), c.score, overlap_fraction, residual);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(y: u32, xs: std::ops::Range<u32>) -> Vec<Pixel> {
        xs.map(|x| Pixel { x, y }).collect()
    }

    #[test]
    fn empty_list_gives_zero_map() {
        let m = build_edge_map(std::iter::empty(), 4, 3, 0.5, 0).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
        assert_eq!(m.accepted(), 0);
    }

    #[test]
    fn duplicate_curve_is_suppressed() {
        let c = row(1, 0..5);
        let m = build_edge_map([(&c[..], 5.0), (&c[..], 3.0)], 6, 3, 0.5, 0).unwrap();
        assert_eq!(m.accepted(), 1);
        assert!(c.iter().all(|p| m.get(p.x as usize, p.y as usize) == 5.0));
    }

    #[test]
    fn disjoint_curves_keep_their_scores() {
        let a = row(0, 0..4);
        let b = row(2, 0..4);
        let m = build_edge_map([(&a[..], 5.0), (&b[..], 3.0)], 4, 3, 0.5, 0).unwrap();
        assert_eq!(m.accepted(), 2);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.get(1, 2), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn partial_overlap_keeps_higher_value() {
        let a = row(0, 0..4);
        let b = row(0, 2..8);
        let m = build_edge_map([(&a[..], 5.0), (&b[..], 3.0)], 8, 1, 0.5, 0).unwrap();
        assert_eq!(m.accepted(), 2);
        assert_eq!(m.get(2, 0), 5.0);
        assert_eq!(m.get(5, 0), 3.0);
        let m = build_edge_map([(&a[..], 5.0), (&b[..], 3.0)], 8, 1, 0.2, 0).unwrap();
        assert_eq!(m.accepted(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        let a = row(0, 0..2);
        assert!(build_edge_map([(&a[..], 1.0), (&a[..], 2.0)], 2, 1, 0.5, 0).is_err());
        assert!(build_edge_map([(&a[..], 0.0)], 2, 1, 0.5, 0).is_err());
        assert!(build_edge_map([(&a[..], 1.0)], 2, 1, 1.5, 0).is_err());
    }

    #[test]
    fn binarize_examples() {
        let v = [0.0, 0.5, 2.0];
        assert_eq!(binarize(&v, 0.0), [false, true, true]);
        assert_eq!(binarize(&v, 3.0), [false, false, false]);
    }

    fn seg(x0: u32, x1: u32, r: f64) -> Segment {
        Segment {
            from: Pixel::new(x0, 0),
            to: Pixel::new(x1, 0),
            r,
            len: (x1 - x0) as f64,
        }
    }

    #[test]
    fn residual_check_drops_weak_detours() {
        let p = ThresholdParams::from_pixel_noise(1.0, 4, 10_000, 0.6).unwrap();
        let mut m = EdgeMap::with_radius(100, 1, 0);
        assert!(m.paint_segments(&[seg(0, 30, 4.0 * 30.0)], 5.0, 0.5, Some(&p)));
        // strong part already painted, new part barely contrasted
        let weak = [seg(0, 30, 4.0 * 30.0), seg(30, 40, 0.4)];
        assert!(!m.paint_segments(&weak, 4.0, 0.5, Some(&p)));
        assert!(m.paint_segments(&weak, 4.0, 0.8, None));
        let mut m = EdgeMap::with_radius(100, 1, 0);
        m.paint_segments(&[seg(0, 30, 4.0 * 30.0)], 5.0, 0.5, Some(&p));
        let strong = [seg(0, 30, 4.0 * 30.0), seg(30, 90, 4.0 * 60.0)];
        assert!(m.paint_segments(&strong, 4.0, 0.5, Some(&p)));
        assert_eq!(m.get(80, 0), 4.0);
        assert_eq!(m.get(10, 0), 5.0);
    }

    #[test]
    fn radius_widens_overlap() {
        let a = row(0, 0..6);
        let b = row(2, 0..6);
        let m = build_edge_map([(&a[..], 5.0), (&b[..], 3.0)], 6, 3, 0.5, 2).unwrap();
        assert_eq!(m.accepted(), 1);
        let m = build_edge_map([(&a[..], 5.0), (&b[..], 3.0)], 6, 3, 0.5, 1).unwrap();
        assert_eq!(m.accepted(), 2);
    }

    proptest! {
        #[test]
        fn painting_never_decreases_values(
            curves in proptest::collection::vec((0u32..10, 0u32..10, 1u32..8, 0.01f64..10.0), 0..30),
            frac in 0.0f64..1.0,
        ) {
            let mut curves = curves;
            curves.sort_by(|a, b| b.3.total_cmp(&a.3));
            let mut m = EdgeMap::new(20, 10);
            for (x, y, n, s) in &curves {
                let before = m.values().to_vec();
                let pixels = row(*y, *x..*x + *n);
                m.paint(&pixels, *s, frac);
                for (a, b) in before.iter().zip(m.values()) {
                    prop_assert!(b >= a);
                }
            }
            for v in m.values() {
                prop_assert!(*v == 0.0 || curves.iter().any(|c| c.3 == *v));
            }
        }

        #[test]
        fn binarize_is_monotone(vals in proptest::collection::vec(0.0f64..5.0, 1..50), a in 0.0f64..5.0, d in 0.0f64..5.0) {
            let lo = binarize(&vals, a);
            let hi = binarize(&vals, a + d);
            for (l, h) in lo.iter().zip(&hi) {
                prop_assert!(!h || *l);
            }
        }
    }
}
