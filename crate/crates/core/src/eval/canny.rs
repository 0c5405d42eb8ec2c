use std::collections::VecDeque;

use super::Mask;
use crate::error::{Error, Result};
use crate::image::Image;

/// Hysteresis thresholds are fractions of the largest gradient magnitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
    pub smoothing_sigma: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            low: 0.26,
            high: 0.65,
            smoothing_sigma: 1.0,
        }
    }
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let pass = |src: &Image, horizontal: bool| {
        Image::from_fn(src.width(), src.height(), |x, y| {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let o = k as i64 - radius;
                let (sx, sy) = if horizontal {
                    ((x as i64 + o).clamp(0, w - 1), y as i64)
                } else {
                    (x as i64, (y as i64 + o).clamp(0, h - 1))
                };
                acc += kv * src.get(sx as usize, sy as usize);
            }
            acc / norm
        })
    };
    pass(&pass(img, true), false)
}

/// Classical Canny: Gaussian smoothing, Sobel gradients, directional
/// thinning and hysteresis between `low·max` and `high·max`.
pub fn canny_baseline(img: &Image, params: &CannyParams) -> Result<Mask> {
    if !(0.0 <= params.low && params.low <= params.high) {
        return Err(Error::invalid(format!(
            "canny thresholds need 0 <= low <= high, got [{}, {}]",
            params.low, params.high
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut out = Mask::new(w, h);
    if w < 3 || h < 3 {
        return Ok(out);
    }
    let s = gaussian_blur(img, params.smoothing_sigma);
    let at = |x: i64, y: i64| s.get(x.clamp(0, w as i64 - 1) as usize, y.clamp(0, h as i64 - 1) as usize);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = dx.hypot(dy);
        }
    }
    let max = mag.iter().cloned().fold(0.0, f64::max);
    // Smoothing leaves round-off ripples on flat images.
    if max <= 1e-9 {
        return Ok(out);
    }
    let m = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v <= 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (ox, oy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            // Strict on one side so that two-pixel plateaus thin to one pixel.
            if v > m(x - ox, y - oy) && v >= m(x + ox, y + oy) {
                thin[i] = v / max;
            }
        }
    }
    let mut queue = VecDeque::new();
    for (i, &v) in thin.iter().enumerate() {
        if v >= params.high {
            out.data[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !out.data[j] && thin[j] >= params.low {
                    out.data[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let m = canny_baseline(&Image::filled(20, 20, 3.0), &CannyParams::default()).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn step_edge_gives_one_pixel_line() {
        let img = Image::from_fn(20, 20, |x, _| if x >= 10 { 1.0 } else { 0.0 });
        let m = canny_baseline(&img, &CannyParams::default()).unwrap();
        for y in 0..20 {
            let row: Vec<usize> = (0..20).filter(|&x| m.get(x, y)).collect();
            assert_eq!(row.len(), 1, "row {y}: {row:?}");
            assert!((9..=10).contains(&row[0]));
        }
    }

    #[test]
    fn bad_thresholds_rejected() {
        let p = CannyParams {
            low: 0.7,
            high: 0.2,
            smoothing_sigma: 1.0,
        };
        assert!(canny_baseline(&Image::new(5, 5), &p).is_err());
    }
}
