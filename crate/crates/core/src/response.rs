//! Matched-filter response vectors.
//!
//! A curve carries `R`, the summed contrast between the two sides of the
//! curve, its Euclidean length `L`, the mean contrast `C = R / m(L)` with
//! `m(L) = w·L` samples per side, and its pixel chain `P`. `R` is signed: it
//! is measured from the side the unit normal `(-u_y, u_x)` points to minus the
//! opposite side, where `u` is the travel direction. Reversing a curve negates
//! `R`, and concatenating two curves of opposite polarity cancels.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::partition::Pixel;

/// Width of the matched filter in samples per side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterParams {
    pub w: usize,
}

impl FilterParams {
    pub fn new(w: usize) -> Result<Self> {
        if w == 0 {
            return Err(Error::invalid("filter width must be at least 1"));
        }
        Ok(FilterParams { w })
    }

    #[inline]
    pub fn mass(&self, len: f64) -> f64 {
        filter_mass(len, self.w)
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams { w: 4 }
    }
}

/// Number of filter samples per side for a curve of length `len`.
#[inline]
pub fn filter_mass(len: f64, w: usize) -> f64 {
    w as f64 * len
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseVector {
    pub r: f64,
    pub len: f64,
    pub c: f64,
    pub pixels: Vec<Pixel>,
}

impl ResponseVector {
    pub fn new(r: f64, len: f64, pixels: Vec<Pixel>, params: FilterParams) -> Self {
        ResponseVector {
            r,
            len,
            c: r / params.mass(len),
            pixels,
        }
    }

    /// First and last pixel of the chain.
    pub fn endpoints(&self) -> (Pixel, Pixel) {
        (self.pixels[0], self.pixels[self.pixels.len() - 1])
    }

    /// Same curve traversed backwards.
    pub fn reversed(&self) -> ResponseVector {
        let mut pixels = self.pixels.clone();
        pixels.reverse();
        ResponseVector {
            r: -self.r,
            len: self.len,
            c: -self.c,
            pixels,
        }
    }

    /// Concatenation at the single endpoint the two curves share. Each part
    /// is reoriented to run through the junction, so the result goes from
    /// the free end of `self` to the free end of `other`.
    pub fn concatenate(&self, other: &ResponseVector, params: FilterParams) -> Result<ResponseVector> {
        let (a0, a1) = self.endpoints();
        let (b0, b1) = other.endpoints();
        let shared = [(a1, b0), (a1, b1), (a0, b0), (a0, b1)];
        let hits: Vec<usize> = (0..4).filter(|&i| shared[i].0 == shared[i].1).collect();
        if hits.len() != 1 {
            return Err(Error::invalid(format!(
                "curves {a0}-{a1} and {b0}-{b1} do not meet at exactly one endpoint"
            )));
        }
        let (first, second) = match hits[0] {
            0 => (self.clone(), other.clone()),
            1 => (self.clone(), other.reversed()),
            2 => (self.reversed(), other.clone()),
            _ => (self.reversed(), other.reversed()),
        };
        let r = first.r + second.r;
        let len = first.len + second.len;
        let mut pixels = first.pixels;
        pixels.extend_from_slice(&second.pixels[1..]);
        Ok(ResponseVector::new(r, len, pixels, params))
    }

    #[inline]
    pub fn abs_contrast(&self) -> f64 {
        self.c.abs()
    }
}

/// Signed response sum and length of the straight segment `p1 → p2`.
///
/// The segment is cut into `⌈L⌉` equal pieces and sampled at each piece's
/// midpoint; at every sample the filter compares `w` bilinear samples at unit
/// offsets along each side of the normal. Each sample is weighted by the
/// piece length, so an ideal step of contrast `c` along the segment gives
/// `R = c·w·L`.
pub fn line_sums(img: &Image, p1: Pixel, p2: Pixel, w: usize) -> (f64, f64) {
    let (x1, y1) = (p1.x as f64, p1.y as f64);
    let dx = p2.x as f64 - x1;
    let dy = p2.y as f64 - y1;
    let len = dx.hypot(dy);
    let pieces = (len - 1e-9).ceil().max(1.0);
    let step = len / pieces;
    let (ux, uy) = (dx / len, dy / len);
    let (nx, ny) = (-uy, ux);
    let mut acc = 0.0;
    for i in 0..pieces as usize {
        let t = (i as f64 + 0.5) * step;
        let (qx, qy) = (x1 + t * ux, y1 + t * uy);
        for o in 1..=w {
            let o = o as f64;
            acc += img.sample(qx + o * nx, qy + o * ny) - img.sample(qx - o * nx, qy - o * ny);
        }
    }
    (acc * step, len)
}

/// Matched-filter response of the straight segment from `p1` to `p2`.
pub fn line_response(img: &Image, p1: Pixel, p2: Pixel, params: FilterParams) -> Result<ResponseVector> {
    if p1 == p2 {
        return Err(Error::invalid(format!("zero-length segment at {p1}")));
    }
    let inside = |p: Pixel| (p.x as usize) < img.width() && (p.y as usize) < img.height();
    if !inside(p1) || !inside(p2) {
        return Err(Error::invalid(format!("segment {p1}-{p2} leaves the image")));
    }
    let (r, len) = line_sums(img, p1, p2, params.w);
    Ok(ResponseVector::new(r, len, bresenham(p1, p2), params))
}

/// 8-connected pixel chain from `p1` to `p2`. The chain does not depend on
/// the direction of travel: `bresenham(b, a)` is `bresenham(a, b)` reversed.
pub fn bresenham(p1: Pixel, p2: Pixel) -> Vec<Pixel> {
    let (a, b, flip) = if p2 < p1 { (p2, p1, true) } else { (p1, p2, false) };
    let mut out = Vec::new();
    let (mut x, mut y) = (a.x as i64, a.y as i64);
    let (x2, y2) = (b.x as i64, b.y as i64);
    let dx = (x2 - x).abs();
    let dy = -(y2 - y).abs();
    let sx = if x < x2 { 1 } else { -1 };
    let sy = if y < y2 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        out.push(Pixel::new(x as u32, y as u32));
        if x == x2 && y == y2 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    if flip {
        out.reverse();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn px(x: u32, y: u32) -> Pixel {
        Pixel::new(x, y)
    }

    fn chain(pixels: &[(u32, u32)]) -> Vec<Pixel> {
        pixels.iter().map(|&(x, y)| px(x, y)).collect()
    }

    #[test]
    fn mass_examples() {
        assert_eq!(filter_mass(10.0, 4), 40.0);
        assert_eq!(filter_mass(1.0, 1), 1.0);
        assert_eq!(filter_mass(2.5, 4) + filter_mass(3.5, 4), filter_mass(6.0, 4));
        assert!(FilterParams::new(0).is_err());
    }

    #[test]
    fn concatenation_arithmetic() {
        let p = FilterParams { w: 4 };
        let a = ResponseVector::new(6.0, 3.0, chain(&[(0, 0), (1, 0), (2, 0), (3, 0)]), p);
        let b = ResponseVector::new(2.0, 1.0, chain(&[(3, 0), (4, 0)]), p);
        let ab = a.concatenate(&b, p).unwrap();
        assert_eq!(ab.r, 8.0);
        assert_eq!(ab.len, 4.0);
        assert_eq!(ab.c, 8.0 / 16.0);
        assert_eq!(ab.pixels.len(), a.pixels.len() + b.pixels.len() - 1);
        assert_eq!(ab.endpoints(), (px(0, 0), px(4, 0)));

        let zero = ResponseVector::new(0.0, 2.0, chain(&[(4, 0), (5, 0), (6, 0)]), p);
        let abz = ab.concatenate(&zero, p).unwrap();
        assert_eq!(abz.r, ab.r);
        assert!(abz.len > ab.len);
    }

    #[test]
    fn concatenation_requires_a_shared_endpoint() {
        let p = FilterParams { w: 4 };
        let a = ResponseVector::new(1.0, 1.0, chain(&[(0, 0), (1, 0)]), p);
        let b = ResponseVector::new(1.0, 1.0, chain(&[(5, 5), (6, 5)]), p);
        assert!(a.concatenate(&b, p).is_err());
    }

    #[test]
    fn polarity() {
        let p = FilterParams { w: 2 };
        let a = ResponseVector::new(3.0, 1.5, chain(&[(0, 0), (1, 0)]), p);
        let b = ResponseVector::new(-3.0, 1.5, chain(&[(1, 0), (2, 0)]), p);
        assert_eq!(a.concatenate(&b, p).unwrap().c, 0.0);
        let b = ResponseVector::new(3.0, 1.5, chain(&[(1, 0), (2, 0)]), p);
        assert_eq!(a.concatenate(&b, p).unwrap().c, a.c);
        // a reversed partner meets at its far end and is flipped back
        let br = b.reversed();
        assert_eq!(a.concatenate(&br, p).unwrap().c, a.c);
    }

    #[test]
    fn step_edge_contrast_is_exact() {
        let c = 0.37;
        let img = Image::from_fn(21, 21, |x, _| if x >= 10 { c } else { 0.0 });
        let rv = line_response(&img, px(10, 0), px(10, 20), FilterParams { w: 4 }).unwrap();
        assert!((rv.c.abs() - c).abs() < 1e-12, "{}", rv.c);
        assert_eq!(rv.len, 20.0);
        assert_eq!(rv.pixels.len(), 21);
    }

    #[test]
    fn constant_image_has_zero_response() {
        let img = Image::filled(11, 11, 0.8);
        let rv = line_response(&img, px(0, 3), px(10, 7), FilterParams::default()).unwrap();
        assert_eq!(rv.r, 0.0);
        assert_eq!(rv.c, 0.0);
        assert!(line_response(&img, px(2, 2), px(2, 2), FilterParams::default()).is_err());
        assert!(line_response(&img, px(2, 2), px(20, 2), FilterParams::default()).is_err());
    }

    #[test]
    fn noise_variance_scales_with_filter_mass() {
        // axis-aligned segment: samples fall on pixel columns, so C is an
        // average of w·L independent left-minus-right differences
        let w = 4;
        let (p1, p2) = (px(8, 4), px(8, 14));
        let len = 10.0;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 10_000;
        let cs: Vec<f64> = (0..trials)
            .map(|_| {
                let img = Image::from_fn(17, 19, |_, _| normal.sample(&mut rng));
                line_response(&img, p1, p2, FilterParams { w }).unwrap().c
            })
            .collect();
        let mean = cs.iter().sum::<f64>() / trials as f64;
        let var = cs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let expected = 2.0 / filter_mass(len, w);
        assert!((var / expected - 1.0).abs() < 0.2, "var {var} expected {expected}");
    }

    #[test]
    fn bresenham_examples() {
        assert_eq!(bresenham(px(0, 0), px(3, 0)), chain(&[(0, 0), (1, 0), (2, 0), (3, 0)]));
        assert_eq!(bresenham(px(2, 2), px(0, 0)), chain(&[(2, 2), (1, 1), (0, 0)]));
        assert_eq!(bresenham(px(1, 1), px(1, 1)), chain(&[(1, 1)]));
    }

    proptest! {
        #[test]
        fn swapping_endpoints_negates_response(
            x1 in 0u32..15, y1 in 0u32..15, x2 in 0u32..15, y2 in 0u32..15, seed in any::<u64>()
        ) {
            prop_assume!((x1, y1) != (x2, y2));
            let mut s = seed | 1;
            let img = Image::from_fn(15, 15, |_, _| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s % 1000) as f64 / 1000.0
            });
            let p = FilterParams { w: 3 };
            let a = line_response(&img, px(x1, y1), px(x2, y2), p).unwrap();
            let b = line_response(&img, px(x2, y2), px(x1, y1), p).unwrap();
            prop_assert!((a.r + b.r).abs() < 1e-9);
            prop_assert_eq!(a.len, b.len);
            let mut rev = b.pixels.clone();
            rev.reverse();
            prop_assert_eq!(&a.pixels, &rev);

            // difference of means: adding a constant changes nothing
            let shifted = img.map(|v| v + 3.25);
            let c = line_response(&shifted, px(x1, y1), px(x2, y2), p).unwrap();
            prop_assert!((a.r - c.r).abs() < 1e-9);
        }

        #[test]
        fn bresenham_is_8_connected(x1 in 0u32..40, y1 in 0u32..40, x2 in 0u32..40, y2 in 0u32..40) {
            let c = bresenham(px(x1, y1), px(x2, y2));
            prop_assert_eq!(c[0], px(x1, y1));
            prop_assert_eq!(c[c.len() - 1], px(x2, y2));
            prop_assert_eq!(c.len() as u32, x1.abs_diff(x2).max(y1.abs_diff(y2)) + 1);
            for w in c.windows(2) {
                prop_assert!(w[0].x.abs_diff(w[1].x) <= 1 && w[0].y.abs_diff(w[1].y) <= 1);
            }
        }

        #[test]
        fn concatenation_accumulates_associatively(
            r in proptest::collection::vec(-5.0f64..5.0, 3),
            l in proptest::collection::vec(0.5f64..5.0, 3),
        ) {
            let p = FilterParams { w: 4 };
            let a = ResponseVector::new(r[0], l[0], chain(&[(0, 0), (1, 0)]), p);
            let b = ResponseVector::new(r[1], l[1], chain(&[(1, 0), (2, 0)]), p);
            let c = ResponseVector::new(r[2], l[2], chain(&[(2, 0), (3, 0)]), p);
            let left = a.concatenate(&b, p).unwrap().concatenate(&c, p).unwrap();
            let right = a.concatenate(&b.concatenate(&c, p).unwrap(), p).unwrap();
            prop_assert!((left.r - right.r).abs() < 1e-12);
            prop_assert!((left.len - right.len).abs() < 1e-12);
            prop_assert!((left.c * p.mass(left.len) - left.r).abs() < 1e-12);
            prop_assert_eq!(left.pixels, right.pixels);
        }
    }
}
