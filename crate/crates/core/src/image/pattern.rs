use std::fmt::Write as _;
use std::str::FromStr;

use super::Image;
use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

/// A shape painted into a synthetic pattern. Coordinates are pixel centers,
/// `x` to the right and `y` downwards.
#[derive(Clone, Debug, PartialEq)]
pub enum PatternElement {
    /// Straight band of width `thickness` lying on the left of the directed
    /// segment `from → to` (for a left-to-right segment, below it).
    Segment {
        from: (f64, f64),
        to: (f64, f64),
        thickness: f64,
        intensity: Option<f64>,
    },
    /// Annulus `inner <= r < outer` around `center`.
    Ring {
        center: (f64, f64),
        inner: f64,
        outer: f64,
        intensity: Option<f64>,
    },
    /// Stroke along two mirrored half circles of `radius` meeting at `center`:
    /// the upper one bulges left, the lower one right.
    SCurve {
        center: (f64, f64),
        radius: f64,
        thickness: f64,
        intensity: Option<f64>,
    },
}

impl PatternElement {
    fn intensity(&self) -> Option<f64> {
        match self {
            PatternElement::Segment { intensity, .. }
            | PatternElement::Ring { intensity, .. }
            | PatternElement::SCurve { intensity, .. } => *intensity,
        }
    }

    /// Axis-aligned extent `(xmin, ymin, xmax, ymax)`.
    fn extent(&self) -> (f64, f64, f64, f64) {
        match *self {
            PatternElement::Segment {
                from,
                to,
                thickness,
                ..
            } => {
                let (n, _) = band_frame(from, to);
                let corners = [
                    from,
                    to,
                    (from.0 + n.0 * thickness, from.1 + n.1 * thickness),
                    (to.0 + n.0 * thickness, to.1 + n.1 * thickness),
                ];
                corners.iter().fold(
                    (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                    |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
                )
            }
            PatternElement::Ring { center, outer, .. } => {
                (center.0 - outer, center.1 - outer, center.0 + outer, center.1 + outer)
            }
            PatternElement::SCurve {
                center,
                radius,
                thickness,
                ..
            } => {
                let h = 0.5 * thickness;
                (
                    center.0 - radius - h,
                    center.1 - 2.0 * radius - h,
                    center.0 + radius + h,
                    center.1 + 2.0 * radius + h,
                )
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PatternElement::Segment { from, to, thickness, .. } => {
                thickness > 0.0 && (from.0 - to.0).hypot(from.1 - to.1) > 0.0
            }
            PatternElement::Ring { inner, outer, .. } => inner >= 0.0 && outer > inner,
            PatternElement::SCurve { radius, thickness, .. } => radius > 0.0 && thickness > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate pattern element {self:?}")))
        }
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            PatternElement::Segment { from, to, thickness, .. } => {
                let (n, len) = band_frame(from, to);
                let u = (n.1, -n.0);
                let (dx, dy) = (x - from.0, y - from.1);
                let along = dx * u.0 + dy * u.1;
                let across = dx * n.0 + dy * n.1;
                along >= -EPS && along <= len + EPS && across >= -EPS && across < thickness - EPS
            }
            PatternElement::Ring { center, inner, outer, .. } => {
                let r = (x - center.0).hypot(y - center.1);
                r >= inner - EPS && r < outer - EPS
            }
            PatternElement::SCurve { center, radius, thickness, .. } => {
                let h = 0.5 * thickness;
                let (cy, on_side) = if y <= center.1 {
                    (center.1 - radius, x <= center.0 + EPS)
                } else {
                    (center.1 + radius, x >= center.0 - EPS)
                };
                let r = (x - center.0).hypot(y - cy);
                on_side && (r - radius).abs() < h - EPS
            }
        }
    }
}

// Unit normal pointing to the band side, and the segment length.
fn band_frame(from: (f64, f64), to: (f64, f64)) -> ((f64, f64), f64) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = dx.hypot(dy);
    ((-dy / len, dx / len), len)
}

/// A square binary test pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternSpec {
    pub size: usize,
    pub background: f64,
    pub foreground: f64,
    pub elements: Vec<PatternElement>,
}

impl PatternSpec {
    pub fn empty(size: usize) -> Self {
        PatternSpec {
            size,
            background: 0.0,
            foreground: 1.0,
            elements: Vec::new(),
        }
    }

    /// The 129×129 simulation pattern: three straight bars, two concentric
    /// rings and an S stroke through the image center.
    pub fn default_129() -> Self {
        Self::simulation(129)
    }

    /// The simulation pattern laid out on a `size`×`size` canvas (geometry is
    /// scaled from the 129 layout).
    pub fn simulation(size: usize) -> Self {
        let s = (size as f64 - 1.0) / 128.0;
        let p = |x: f64, y: f64| (x * s, y * s);
        let elements = vec![
            PatternElement::Segment {
                from: p(14.0, 10.0),
                to: p(24.0, 100.0),
                thickness: 8.0 * s,
                intensity: None,
            },
            PatternElement::Segment {
                from: p(34.0, 80.0),
                to: p(52.0, 104.0),
                thickness: 8.0 * s,
                intensity: None,
            },
            PatternElement::Segment {
                from: p(20.0, 116.0),
                to: p(120.0, 110.0),
                thickness: 8.0 * s,
                intensity: None,
            },
            PatternElement::Ring {
                center: p(102.0, 30.0),
                inner: 6.0 * s,
                outer: 12.0 * s,
                intensity: None,
            },
            PatternElement::Ring {
                center: p(102.0, 30.0),
                inner: 17.0 * s,
                outer: 23.0 * s,
                intensity: None,
            },
            PatternElement::SCurve {
                center: p(64.0, 58.0),
                radius: 128.0 / 6.0 * s * 0.9,
                thickness: 8.0 * s,
                intensity: None,
            },
        ];
        PatternSpec {
            size,
            background: 0.0,
            foreground: 1.0,
            elements,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("pattern size must be positive"));
        }
        let max = (self.size - 1) as f64;
        for e in &self.elements {
            e.validate()?;
            let (x0, y0, x1, y1) = e.extent();
            if x0 < -EPS || y0 < -EPS || x1 > max + EPS || y1 > max + EPS {
                return Err(Error::invalid(format!(
                    "pattern element {e:?} leaves the {0}x{0} canvas",
                    self.size
                )));
            }
        }
        Ok(())
    }

    /// Serializes to the key-value config grammar read by [`FromStr`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "size = {}", self.size);
        let _ = writeln!(out, "background = {}", self.background);
        let _ = writeln!(out, "foreground = {}", self.foreground);
        for e in &self.elements {
            let (key, mut nums) = match *e {
                PatternElement::Segment { from, to, thickness, .. } => {
                    ("segment", vec![from.0, from.1, to.0, to.1, thickness])
                }
                PatternElement::Ring { center, inner, outer, .. } => {
                    ("ring", vec![center.0, center.1, inner, outer])
                }
                PatternElement::SCurve { center, radius, thickness, .. } => {
                    ("scurve", vec![center.0, center.1, radius, thickness])
                }
            };
            nums.extend(e.intensity());
            let joined: Vec<String> = nums.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{key} = {}", joined.join(" "));
        }
        out
    }
}

/// Config grammar, one statement per line, `#` starts a comment:
///
/// ```text
/// size = 129
/// background = 0
/// foreground = 1
/// segment = x0 y0 x1 y1 thickness [intensity]
/// ring = cx cy inner outer [intensity]
/// scurve = cx cy radius thickness [intensity]
/// ```
impl FromStr for PatternSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = PatternSpec::empty(0);
        let mut have_size = false;
        for (i, raw) in s.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config {
                line: line_no,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let nums: Vec<f64> = value
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad number `{t}`: {e}"))))
                .collect::<Result<_>>()?;
            let arity = |lo: usize, hi: usize| {
                if nums.len() < lo || nums.len() > hi {
                    Err(err(format!("`{}` takes {lo}..={hi} numbers, got {}", key.trim(), nums.len())))
                } else {
                    Ok(())
                }
            };
            match key.trim() {
                "size" => {
                    arity(1, 1)?;
                    if nums[0] < 1.0 || nums[0].fract() != 0.0 {
                        return Err(err(format!("size must be a positive integer, got {}", nums[0])));
                    }
                    spec.size = nums[0] as usize;
                    have_size = true;
                }
                "background" => {
                    arity(1, 1)?;
                    spec.background = nums[0];
                }
                "foreground" => {
                    arity(1, 1)?;
                    spec.foreground = nums[0];
                }
                "segment" => {
                    arity(5, 6)?;
                    spec.elements.push(PatternElement::Segment {
                        from: (nums[0], nums[1]),
                        to: (nums[2], nums[3]),
                        thickness: nums[4],
                        intensity: nums.get(5).copied(),
                    });
                }
                "ring" => {
                    arity(4, 5)?;
                    spec.elements.push(PatternElement::Ring {
                        center: (nums[0], nums[1]),
                        inner: nums[2],
                        outer: nums[3],
                        intensity: nums.get(4).copied(),
                    });
                }
                "scurve" => {
                    arity(4, 5)?;
                    spec.elements.push(PatternElement::SCurve {
                        center: (nums[0], nums[1]),
                        radius: nums[2],
                        thickness: nums[3],
                        intensity: nums.get(4).copied(),
                    });
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        if !have_size {
            return Err(Error::Config {
                line: 0,
                reason: "missing `size`".into(),
            });
        }
        Ok(spec)
    }
}

/// Rasterizes the pattern without anti-aliasing: every pixel whose center is
/// covered by an element takes that element's intensity (later elements win),
/// all others the background.
pub fn synth_pattern(spec: &PatternSpec) -> Result<Image> {
    spec.validate()?;
    let n = spec.size;
    Ok(Image::from_fn(n, n, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        spec.elements
            .iter()
            .rev()
            .find(|e| e.covers(fx, fy))
            .map(|e| e.intensity().unwrap_or(spec.foreground))
            .unwrap_or(spec.background)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_pattern_is_uniform() {
        let img = synth_pattern(&PatternSpec {
            background: 0.25,
            ..PatternSpec::empty(17)
        })
        .unwrap();
        assert!(img.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn default_pattern_is_binary() {
        let spec = PatternSpec::default_129();
        let img = synth_pattern(&spec).unwrap();
        assert_eq!((img.width(), img.height()), (129, 129));
        let mut values: Vec<f64> = img.data().to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        assert_eq!(values, vec![0.0, 1.0]);
        let fg = img.data().iter().filter(|&&v| v == 1.0).count();
        assert!(fg > 1500 && fg < 8000, "foreground pixels {fg}");
    }

    #[test]
    fn horizontal_band_has_sharp_top_and_bottom() {
        // A band of thickness t covers rows r..r+t, half open.
        let (n, r) = (33usize, 12usize);
        let spec = PatternSpec {
            elements: vec![PatternElement::Segment {
                from: (4.0, r as f64),
                to: (28.0, r as f64),
                thickness: (n - 1 - r) as f64,
                intensity: None,
            }],
            ..PatternSpec::empty(n)
        };
        let img = synth_pattern(&spec).unwrap();
        for y in 1..n {
            let changes = (0..n).any(|x| img.get(x, y) != img.get(x, y - 1));
            assert_eq!(changes, y == r || y == n - 1, "row {y}");
        }
    }

    #[test]
    fn out_of_bounds_geometry_is_rejected() {
        let spec = PatternSpec {
            elements: vec![PatternElement::Ring {
                center: (5.0, 5.0),
                inner: 2.0,
                outer: 8.0,
                intensity: None,
            }],
            ..PatternSpec::empty(20)
        };
        assert!(synth_pattern(&spec).is_err());
    }

    #[test]
    fn config_round_trip() {
        let spec = PatternSpec::default_129();
        let text = spec.to_config_string();
        let parsed: PatternSpec = text.parse().unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let err = "size = 10\n\nring = 1 2 3\n".parse::<PatternSpec>().unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = "bogus = 1".parse::<PatternSpec>().unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        assert!("background = 1".parse::<PatternSpec>().is_err());
    }
}
