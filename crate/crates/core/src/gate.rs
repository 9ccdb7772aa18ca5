//! Expected-size window that decides whether a mask is trustworthy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Mask;

/// Relative size deviation used in the reference experiments.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("no calibration masks supplied")]
    NoMasks,
    #[error("every calibration mask is empty")]
    AllEmpty,
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    BadAlpha(f64),
}

/// Valid mask sizes `[s_min, s_max]` around the expected size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeGate {
    pub expected_size: f64,
    pub alpha: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl SizeGate {
    pub fn new(expected_size: f64, alpha: f64) -> Result<Self, GateError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GateError::BadAlpha(alpha));
        }
        if !(expected_size > 0.0 && expected_size.is_finite()) {
            return Err(GateError::AllEmpty);
        }
        Ok(Self {
            expected_size,
            alpha,
            s_min: expected_size * (1.0 - alpha),
            s_max: expected_size * (1.0 + alpha),
        })
    }

    /// Inclusive on both ends.
    pub fn is_valid(&self, size: usize) -> bool {
        let s = size as f64;
        self.s_min <= s && s <= self.s_max
    }

    pub fn accepts(&self, mask: &Mask) -> bool {
        self.is_valid(mask.count())
    }
}

/// Calibrates from first-frame annotations: `E[S]` is the mean size over all
/// supplied masks (one gate per dataset, not per object).
pub fn calibrate_gate(first_frame_gt: &[Mask], alpha: f64) -> Result<SizeGate, GateError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GateError::BadAlpha(alpha));
    }
    if first_frame_gt.is_empty() {
        return Err(GateError::NoMasks);
    }
    let total: usize = first_frame_gt.iter().map(Mask::count).sum();
    if total == 0 {
        return Err(GateError::AllEmpty);
    }
    SizeGate::new(total as f64 / first_frame_gt.len() as f64, alpha)
}

pub fn is_valid(gate: &SizeGate, size: usize) -> bool {
    gate.is_valid(size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_of_size(n: usize) -> Mask {
        Mask::from_fn(100, 20, |x, y| y * 100 + x < n).unwrap()
    }

    #[test]
    fn calibration_mean_and_bounds() {
        let g = calibrate_gate(&[mask_of_size(800), mask_of_size(1200)], 0.5).unwrap();
        assert_eq!(g.expected_size, 1000.0);
        assert_eq!((g.s_min, g.s_max), (500.0, 1500.0));

        let g = calibrate_gate(&[mask_of_size(100)], 0.5).unwrap();
        assert_eq!((g.s_min, g.s_max), (50.0, 150.0));
    }

    #[test]
    fn calibration_errors() {
        assert_eq!(
            calibrate_gate(&[mask_of_size(10)], 0.0).unwrap_err(),
            GateError::BadAlpha(0.0)
        );
        assert_eq!(
            calibrate_gate(&[mask_of_size(10)], 1.0).unwrap_err(),
            GateError::BadAlpha(1.0)
        );
        assert_eq!(calibrate_gate(&[], 0.5).unwrap_err(), GateError::NoMasks);
        assert_eq!(
            calibrate_gate(&[mask_of_size(0), mask_of_size(0)], 0.5).unwrap_err(),
            GateError::AllEmpty
        );
    }

    #[test]
    fn inclusive_bounds() {
        let g = SizeGate::new(1000.0, 0.5).unwrap();
        assert!(g.is_valid(500));
        assert!(g.is_valid(1500));
        assert!(!g.is_valid(499));
        assert!(!g.is_valid(1501));
        assert!(!g.is_valid(0));
    }

    #[test]
    fn fractional_bounds_compare_without_rounding() {
        let g = SizeGate::new(3.0, 0.5).unwrap(); // [1.5, 4.5]
        assert!(!g.is_valid(1));
        assert!(g.is_valid(2));
        assert!(g.is_valid(4));
        assert!(!g.is_valid(5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn validity_is_an_interval(e in 1.0f64..1e5, alpha in 0.01f64..0.99, a in 0usize..200_000, b in 0usize..200_000, t in 0.0f64..1.0) {
                let g = SizeGate::new(e, alpha).unwrap();
                let (lo, hi) = (a.min(b), a.max(b));
                let mid = lo + ((hi - lo) as f64 * t) as usize;
                if g.is_valid(lo) && g.is_valid(hi) {
                    prop_assert!(g.is_valid(mid));
                }
            }

            #[test]
            fn bounds_scale_with_pixel_area(sizes in proptest::collection::vec(1usize..500, 1..5), k in 1usize..5) {
                let masks: Vec<Mask> = sizes.iter().map(|&n| mask_of_size(n)).collect();
                let scaled: Vec<Mask> = sizes.iter().map(|&n| mask_of_size(n * k)).collect();
                let g = calibrate_gate(&masks, 0.5).unwrap();
                let gk = calibrate_gate(&scaled, 0.5).unwrap();
                prop_assert!((gk.s_min - g.s_min * k as f64).abs() <= 1e-9 * gk.s_min);
                prop_assert!((gk.s_max - g.s_max * k as f64).abs() <= 1e-9 * gk.s_max);
            }
        }
    }
}
