use super::Mask;
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub matched: usize,
    pub detected: usize,
    pub truth: usize,
}

impl MatchResult {
    pub fn unmatched_detected(&self) -> usize {
        self.detected - self.matched
    }

    pub fn unmatched_truth(&self) -> usize {
        self.truth - self.matched
    }
}

/// One-to-one matching of detected to true edge pixels within distance
/// `tol`, closest pairs first. Ties are ordered by the pixel indices
/// without regard to role, so swapping the two masks swaps precision and
/// recall exactly.
///
/// An empty detection against empty truth counts as perfect.
pub fn f_measure(detected: &Mask, truth: &Mask, tol: f64) -> Result<MatchResult> {
    if (detected.width, detected.height) != (truth.width, truth.height) {
        return Err(Error::invalid(format!(
            "detected {}x{} and truth {}x{} differ in size",
            detected.width, detected.height, truth.width, truth.height
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::invalid(format!("tolerance must be >= 0, got {tol}")));
    }
    let (w, h) = (detected.width as i64, detected.height as i64);
    let r = tol.floor() as i64;
    let tol2 = tol * tol;
    let mut pairs: Vec<(i64, usize, usize, usize, usize)> = Vec::new();
    for (di, _) in detected.data.iter().enumerate().filter(|(_, &b)| b) {
        let (x, y) = ((di as i64) % w, (di as i64) / w);
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = dx * dx + dy * dy;
                let (tx, ty) = (x + dx, y + dy);
                if d2 as f64 > tol2 || tx < 0 || ty < 0 || tx >= w || ty >= h {
                    continue;
                }
                let ti = (ty * w + tx) as usize;
                if truth.data[ti] {
                    pairs.push((d2, di.min(ti), di.max(ti), di, ti));
                }
            }
        }
    }
    pairs.sort_unstable();
    let mut used_d = vec![false; detected.data.len()];
    let mut used_t = vec![false; truth.data.len()];
    let mut matched = 0;
    for (_, _, _, di, ti) in pairs {
        if !used_d[di] && !used_t[ti] {
            used_d[di] = true;
            used_t[ti] = true;
            matched += 1;
        }
    }
    let (nd, nt) = (detected.count(), truth.count());
    let ratio = |m: usize, n: usize| if n == 0 { 1.0 } else { m as f64 / n as f64 };
    let (precision, recall) = if nd == 0 && nt > 0 {
        (0.0, 0.0)
    } else if nt == 0 && nd > 0 {
        (0.0, 0.0)
    } else {
        (ratio(matched, nd), ratio(matched, nt))
    };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MatchResult {
        precision,
        recall,
        f_score,
        matched,
        detected: nd,
        truth: nt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> Mask {
        let mut m = Mask::new(w, h);
        for &(x, y) in on {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn identity_is_perfect() {
        let t = mask(8, 8, &[(1, 1), (2, 2), (5, 3)]);
        let r = f_measure(&t, &t, 2.0).unwrap();
        assert_eq!((r.precision, r.recall, r.f_score), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_detection_scores_zero() {
        let t = mask(8, 8, &[(1, 1)]);
        let r = f_measure(&Mask::new(8, 8), &t, 2.0).unwrap();
        assert_eq!(r.f_score, 0.0);
    }

    #[test]
    fn one_pixel_shift_within_tolerance() {
        let line: Vec<_> = (0..8).map(|y| (3, y)).collect();
        let shifted: Vec<_> = (0..8).map(|y| (4, y)).collect();
        let r = f_measure(&mask(8, 8, &shifted), &mask(8, 8, &line), 2.0).unwrap();
        assert_eq!(r.f_score, 1.0);
        let far: Vec<_> = (0..8).map(|y| (6, y)).collect();
        let r = f_measure(&mask(8, 8, &far), &mask(8, 8, &line), 2.0).unwrap();
        assert_eq!(r.f_score, 0.0);
    }

    #[test]
    fn matching_is_one_to_one() {
        let r = f_measure(&mask(5, 1, &[(1, 0), (2, 0)]), &mask(5, 1, &[(1, 0)]), 2.0).unwrap();
        assert_eq!(r.matched, 1);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.unmatched_detected(), 1);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(f_measure(&Mask::new(2, 2), &Mask::new(3, 2), 2.0).is_err());
    }

    proptest! {
        #[test]
        fn role_swap_swaps_precision_and_recall(
            a in proptest::collection::vec(any::<bool>(), 100),
            b in proptest::collection::vec(any::<bool>(), 100),
            tol in 0.0f64..3.0,
        ) {
            let (a, b) = (Mask::from_vec(10, 10, a).unwrap(), Mask::from_vec(10, 10, b).unwrap());
            let ab = f_measure(&a, &b, tol).unwrap();
            let ba = f_measure(&b, &a, tol).unwrap();
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.recall, ba.precision);
            prop_assert!((ab.f_score - ba.f_score).abs() < 1e-12);
            for v in [ab.precision, ab.recall, ab.f_score] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
