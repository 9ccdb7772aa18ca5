//! Depth-aware refinement: pick well-separated depth maxima and move the
//! prompt onto the closest one.
//!
//! Depth follows the near-high convention: animals standing on the floor
//! show up as peaks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetProfile;
use crate::geometry::PixelPoint;
use crate::raster::DepthMap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DarError {
    #[error("DAR needs at least one maximum and a positive radius")]
    InvalidParams,
    #[error("no depth maxima to relocate to")]
    NoMaxima,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarParams {
    pub n_maxima: usize,
    /// Exclusion radius in pixels.
    pub radius: f64,
}

impl DarParams {
    pub fn new(n_maxima: usize, radius: f64) -> Result<Self, DarError> {
        let p = Self { n_maxima, radius };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DarError> {
        if self.n_maxima == 0 || !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(DarError::InvalidParams);
        }
        Ok(())
    }

    /// Reference parameters for a profile, with the radius multiplied by
    /// `pixel_scale`.
    pub fn for_profile(profile: DatasetProfile, pixel_scale: f64) -> Self {
        let (n_maxima, radius) = profile.dar_defaults();
        Self {
            n_maxima,
            radius: radius * pixel_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPeak {
    pub point: PixelPoint,
    pub depth: f32,
}

/// Maxima in extraction order (non-increasing depth).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MaximaSet {
    pub peaks: Vec<DepthPeak>,
}

impl MaximaSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = PixelPoint> + '_ {
        self.peaks.iter().map(|p| p.point)
    }
}

/// Greedy non-maximum suppression over the whole map.
///
/// Each round takes the global maximum of the remaining pixels (lowest
/// row-major index on ties) and removes every pixel within Euclidean
/// distance `radius` of it, inclusive. Stops early once nothing remains.
pub fn extract_maxima(depth: &DepthMap, params: &DarParams) -> Result<MaximaSet, DarError> {
    params.validate()?;
    let (w, h) = depth.dims();
    let mut work: Vec<f32> = depth.as_slice().to_vec();
    let r = params.radius;
    let r2 = r * r;
    let reach = r.floor() as i64;
    let mut peaks = Vec::with_capacity(params.n_maxima);

    // Per-row argmax, refreshed only for rows touched by a suppression disk.
    let row_best = |work: &[f32], y: usize| -> (usize, f32) {
        let mut best = (usize::MAX, f32::NEG_INFINITY);
        for (x, &v) in work[y * w..(y + 1) * w].iter().enumerate() {
            if v > best.1 {
                best = (y * w + x, v);
            }
        }
        best
    };
    let mut rows: Vec<(usize, f32)> = (0..h).map(|y| row_best(&work, y)).collect();

    for _ in 0..params.n_maxima {
        let mut best = (usize::MAX, f32::NEG_INFINITY);
        for &r in &rows {
            if r.1 > best.1 {
                best = r;
            }
        }
        if best.0 == usize::MAX {
            break;
        }
        let i = best.0;
        let (cx, cy) = ((i % w) as i64, (i / w) as i64);
        peaks.push(DepthPeak {
            point: PixelPoint::new(cx as f64, cy as f64),
            depth: depth.as_slice()[i],
        });
        let (x0, x1) = ((cx - reach).max(0), (cx + reach).min(w as i64 - 1));
        let (y0, y1) = ((cy - reach).max(0), (cy + reach).min(h as i64 - 1));
        for y in y0..=y1 {
            let dy = (y - cy) as f64;
            for x in x0..=x1 {
                let dx = (x - cx) as f64;
                if dx * dx + dy * dy <= r2 {
                    work[y as usize * w + x as usize] = f32::NEG_INFINITY;
                }
            }
            rows[y as usize] = row_best(&work, y as usize);
        }
    }
    Ok(MaximaSet { peaks })
}

/// Nearest maximum to `prompt`; earlier-extracted maxima win ties.
pub fn dar_refine(prompt: PixelPoint, maxima: &MaximaSet) -> Result<PixelPoint, DarError> {
    let mut best: Option<(f64, PixelPoint)> = None;
    for p in maxima.points() {
        let d = p.distance_sq(prompt);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p).ok_or(DarError::NoMaxima)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bumps(w: usize, h: usize, centers: &[(f64, f64, f64)], sigma: f64) -> DepthMap {
        DepthMap::from_fn(w, h, |x, y| {
            centers
                .iter()
                .map(|&(cx, cy, a)| {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    a * (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .sum::<f64>() as f32
        })
        .unwrap()
    }

    /// Full-raster oracle: repeatedly scan every pixel, checking distance to
    /// every previously chosen maximum.
    fn oracle(depth: &DepthMap, n: usize, r: f64) -> Vec<(usize, usize)> {
        let mut chosen: Vec<(usize, usize)> = Vec::new();
        for _ in 0..n {
            let mut best: Option<((usize, usize), f32)> = None;
            for y in 0..depth.height() {
                for x in 0..depth.width() {
                    let suppressed = chosen.iter().any(|&(mx, my)| {
                        (x as f64 - mx as f64).hypot(y as f64 - my as f64) <= r
                    });
                    if suppressed {
                        continue;
                    }
                    let v = depth.get(x, y);
                    if best.is_none_or(|(_, bv)| v > bv) {
                        best = Some(((x, y), v));
                    }
                }
            }
            match best {
                Some((p, _)) => chosen.push(p),
                None => break,
            }
        }
        chosen
    }

    #[test]
    fn single_bump() {
        let d = bumps(120, 90, &[(50.0, 40.0, 1.0)], 6.0);
        let m = extract_maxima(&d, &DarParams::new(1, 10.0).unwrap()).unwrap();
        assert_eq!(m.points().collect::<Vec<_>>(), vec![PixelPoint::new(50.0, 40.0)]);
    }

    #[test]
    fn planted_bumps_in_height_order() {
        let planted = [
            (20.0, 20.0, 0.6),
            (100.0, 25.0, 1.0),
            (60.0, 70.0, 0.8),
            (20.0, 120.0, 0.9),
            (110.0, 120.0, 0.7),
        ];
        let d = bumps(140, 140, &planted, 4.0);
        let r = 15.0;
        let m = extract_maxima(&d, &DarParams::new(5, r).unwrap()).unwrap();
        let got: Vec<(usize, usize)> = m.points().map(|p| (p.x as usize, p.y as usize)).collect();
        assert_eq!(got, oracle(&d, 5, r));
        assert_eq!(got, vec![(100, 25), (20, 120), (60, 70), (110, 120), (20, 20)]);
    }

    #[test]
    fn constant_map_uses_row_major_tie_break() {
        let d = DepthMap::filled(10, 4, 1.0).unwrap();
        let m = extract_maxima(&d, &DarParams::new(3, 3.0).unwrap()).unwrap();
        let got: Vec<PixelPoint> = m.points().collect();
        assert_eq!(got[0], PixelPoint::new(0.0, 0.0));
        let want: Vec<PixelPoint> = oracle(&d, 3, 3.0)
            .into_iter()
            .map(|(x, y)| PixelPoint::new(x as f64, y as f64))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn stops_when_everything_is_suppressed() {
        let d = DepthMap::filled(5, 5, 0.0).unwrap();
        let m = extract_maxima(&d, &DarParams::new(10, 100.0).unwrap()).unwrap();
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn refine_nearest_and_ties() {
        let m = MaximaSet {
            peaks: vec![
                DepthPeak {
                    point: PixelPoint::new(0.0, 0.0),
                    depth: 2.0,
                },
                DepthPeak {
                    point: PixelPoint::new(10.0, 0.0),
                    depth: 1.0,
                },
            ],
        };
        let at = |x| dar_refine(PixelPoint::new(x, 0.0), &m).unwrap();
        assert_eq!(at(0.0), PixelPoint::new(0.0, 0.0));
        assert_eq!(at(4.0), PixelPoint::new(0.0, 0.0));
        assert_eq!(at(6.0), PixelPoint::new(10.0, 0.0));
        assert_eq!(at(5.0), PixelPoint::new(0.0, 0.0));
        assert_eq!(
            dar_refine(PixelPoint::new(1.0, 1.0), &MaximaSet::default()),
            Err(DarError::NoMaxima)
        );
    }

    #[test]
    fn profile_parameters() {
        assert_eq!(
            DarParams::for_profile(DatasetProfile::Rats, 1.0),
            DarParams::new(8, 200.0).unwrap()
        );
        assert_eq!(
            DarParams::for_profile(DatasetProfile::Mice, 1.0),
            DarParams::new(22, 125.0).unwrap()
        );
        assert_eq!(DarParams::for_profile(DatasetProfile::Rats, 0.2).radius, 40.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn maxima_invariants(
                w in 2usize..30, h in 2usize..30,
                values in proptest::collection::vec(0u8..6, 900),
                n in 1usize..8, r in 0.5f64..8.0,
                px in 0.0f64..30.0, py in 0.0f64..30.0,
            ) {
                let d = DepthMap::from_fn(w, h, |x, y| values[y * 30 + x] as f32).unwrap();
                let m = extract_maxima(&d, &DarParams::new(n, r).unwrap()).unwrap();
                let pts: Vec<PixelPoint> = m.points().collect();
                for (i, a) in pts.iter().enumerate() {
                    for b in &pts[i + 1..] {
                        prop_assert!(a.distance(*b) > r);
                    }
                }
                for pair in m.peaks.windows(2) {
                    prop_assert!(pair[1].depth <= pair[0].depth);
                }
                let oracle_pts: Vec<PixelPoint> = oracle(&d, n, r)
                    .into_iter()
                    .map(|(x, y)| PixelPoint::new(x as f64, y as f64))
                    .collect();
                prop_assert_eq!(&pts, &oracle_pts);

                let p = PixelPoint::new(px, py);
                let q = dar_refine(p, &m).unwrap();
                prop_assert!(pts.contains(&q));
                for other in &pts {
                    prop_assert!(q.distance(p) <= other.distance(p));
                }
            }
        }
    }
}
