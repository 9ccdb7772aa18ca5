//! Planar geometry: points, the arena quadrilateral, and the perspective
//! transform that maps scene-camera pixels onto the canonical arena frame.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::GrayImage;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate correspondences: three points are collinear")]
    Degenerate,
    #[error("homography is singular")]
    Singular,
    #[error("point maps to infinity (w = {0:e})")]
    AtInfinity(f64),
    #[error("non-finite point ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("arena detection failed: {0}")]
    DetectionFailed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: PixelPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: PixelPoint) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    /// Clamps into `[0, width-1] x [0, height-1]`.
    pub fn clamp_to(self, width: usize, height: usize) -> PixelPoint {
        PixelPoint::new(
            self.x.clamp(0.0, (width - 1) as f64),
            self.y.clamp(0.0, (height - 1) as f64),
        )
    }

    pub fn in_bounds(self, width: usize, height: usize) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.x <= (width - 1) as f64
            && self.y <= (height - 1) as f64
    }

    /// Nearest pixel with halves rounded up on both axes.
    pub fn round_half_up(self) -> (i64, i64) {
        ((self.x + 0.5).floor() as i64, (self.y + 0.5).floor() as i64)
    }
}

impl From<[f64; 2]> for PixelPoint {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

/// Signed doubled area of the triangle `abc`; positive when `a -> b -> c`
/// turns clockwise on screen (y down).
fn cross(a: PixelPoint, b: PixelPoint, c: PixelPoint) -> f64 {
    (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
}

/// Four corners ordered top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    corners: [PixelPoint; 4],
}

impl Quad {
    pub fn new(corners: [PixelPoint; 4]) -> Result<Self, GeometryError> {
        if let Some(p) = corners.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(p.x, p.y));
        }
        let quad = Self { corners };
        if !quad.is_strictly_convex() {
            return Err(GeometryError::Degenerate);
        }
        Ok(quad)
    }

    pub fn corners(&self) -> [PixelPoint; 4] {
        self.corners
    }

    /// Axis-aligned rectangle `[0, width] x [0, height]`.
    pub fn rect(width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new([
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(width, 0.0),
            PixelPoint::new(width, height),
            PixelPoint::new(0.0, height),
        ])
    }

    pub fn area(&self) -> f64 {
        let c = &self.corners;
        let mut twice = 0.0;
        for i in 0..4 {
            let (a, b) = (c[i], c[(i + 1) % 4]);
            twice += a.x * b.y - b.x * a.y;
        }
        twice / 2.0
    }

    fn is_strictly_convex(&self) -> bool {
        let c = &self.corners;
        (0..4).all(|i| cross(c[i], c[(i + 1) % 4], c[(i + 2) % 4]) > 0.0) && self.area() > 0.0
    }
}

/// A 3x3 projective transform normalized so that `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let m = Matrix3::from_row_slice(&rows.concat());
        Self::normalized(m)
    }

    fn normalized(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let s = m[(2, 2)];
        if !m.iter().all(|v| v.is_finite()) || s.abs() < 1e-12 {
            return Err(GeometryError::Singular);
        }
        let mut m = m / s;
        m[(2, 2)] = 1.0;
        if m.determinant().abs() <= 1e-12 {
            return Err(GeometryError::Singular);
        }
        Ok(Self { m })
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        let inv = self.m.try_inverse().ok_or(GeometryError::Singular)?;
        Self::normalized(inv)
    }

    pub fn apply(&self, p: PixelPoint) -> Result<PixelPoint, GeometryError> {
        apply_homography(self, p)
    }
}

/// Solves the 8-unknown direct linear system that maps each `src[i]` onto
/// `dst[i]` with `h[2][2]` fixed to 1.
pub fn estimate_homography(
    src: &[PixelPoint; 4],
    dst: &[PixelPoint; 4],
) -> Result<Homography, GeometryError> {
    for p in src.iter().chain(dst) {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite(p.x, p.y));
        }
    }
    if has_collinear_triple(src) || has_collinear_triple(dst) {
        return Err(GeometryError::Degenerate);
    }

    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let r = 2 * i;
        // u = (h0 x + h1 y + h2) / (h6 x + h7 y + 1)
        a.set_row(
            r,
            &SMatrix::<f64, 1, 8>::from_row_slice(&[
                s.x,
                s.y,
                1.0,
                0.0,
                0.0,
                0.0,
                -s.x * d.x,
                -s.y * d.x,
            ]),
        );
        b[r] = d.x;
        // v = (h3 x + h4 y + h5) / (h6 x + h7 y + 1)
        a.set_row(
            r + 1,
            &SMatrix::<f64, 1, 8>::from_row_slice(&[
                0.0,
                0.0,
                0.0,
                s.x,
                s.y,
                1.0,
                -s.x * d.y,
                -s.y * d.y,
            ]),
        );
        b[r + 1] = d.y;
    }
    let h = a.lu().solve(&b).ok_or(GeometryError::Degenerate)?;
    Homography::normalized(Matrix3::new(
        h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0,
    ))
}

fn has_collinear_triple(pts: &[PixelPoint; 4]) -> bool {
    let extent = pts
        .iter()
        .flat_map(|p| pts.iter().map(move |q| p.distance(*q)))
        .fold(0.0, f64::max);
    let tol = 1e-9 * extent.max(1e-12).powi(2);
    const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    TRIPLES
        .iter()
        .any(|&(i, j, k)| cross(pts[i], pts[j], pts[k]).abs() <= tol)
}

pub fn apply_homography(h: &Homography, p: PixelPoint) -> Result<PixelPoint, GeometryError> {
    let v = h.m * Vector3::new(p.x, p.y, 1.0);
    if v[2].abs() < 1e-12 {
        return Err(GeometryError::AtInfinity(v[2]));
    }
    Ok(PixelPoint::new(v[0] / v[2], v[1] / v[2]))
}

/// Finds the bright (or dark) rectangular arena border.
///
/// Central-difference gradient magnitude is thresholded into an edge map;
/// each corner is the edge pixel with the extremal score of `x+y`, `x-y`,
/// `-x-y` or `-x+y`. Gradient magnitude ignores polarity, so bright-on-dark
/// and dark-on-bright arenas are handled alike.
pub fn detect_arena_quad(img: &GrayImage, edge_threshold: f64) -> Result<Quad, GeometryError> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(GeometryError::DetectionFailed("frame too small"));
    }
    // (score, point) per corner: TL min(x+y), TR max(x-y), BR max(x+y), BL max(y-x)
    let mut best: [Option<(f64, PixelPoint)>; 4] = [None; 4];
    let mut edges = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (img.get(x + 1, y) as f64 - img.get(x - 1, y) as f64) / 2.0;
            let gy = (img.get(x, y + 1) as f64 - img.get(x, y - 1) as f64) / 2.0;
            if gx.hypot(gy) < edge_threshold {
                continue;
            }
            edges += 1;
            let (fx, fy) = (x as f64, y as f64);
            let p = PixelPoint::new(fx, fy);
            let scores = [-(fx + fy), fx - fy, fx + fy, fy - fx];
            for (slot, score) in best.iter_mut().zip(scores) {
                if slot.is_none_or(|(s, _)| score > s) {
                    *slot = Some((score, p));
                }
            }
        }
    }
    if edges < 4 {
        return Err(GeometryError::DetectionFailed("fewer than 4 edge pixels"));
    }
    let corners = best.map(|b| b.expect("edges >= 4").1);
    Quad::new(corners).map_err(|_| GeometryError::DetectionFailed("degenerate quadrilateral"))
}

/// Arena transform settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    pub enabled: bool,
    pub edge_threshold: f64,
    /// Explicit corners (TL, TR, BR, BL); overrides detection.
    pub corners: Option<[[f64; 2]; 4]>,
    /// Canonical frame size; defaults to the source resolution.
    pub target: Option<[f64; 2]>,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            edge_threshold: 40.0,
            corners: None,
            target: None,
        }
    }
}

impl ArenaConfig {
    /// Homography from scene-camera pixels to the canonical arena frame.
    /// `frame` is only consulted when no corners are configured.
    pub fn transform(
        &self,
        frame: Option<&GrayImage>,
        resolution: (usize, usize),
    ) -> Result<Homography, GeometryError> {
        let quad = match (self.corners, frame) {
            (Some(c), _) => Quad::new(c.map(PixelPoint::from))?,
            (None, Some(img)) => detect_arena_quad(img, self.edge_threshold)?,
            (None, None) => return Err(GeometryError::DetectionFailed("no frame to detect on")),
        };
        let [tw, th] = self
            .target
            .unwrap_or([resolution.0 as f64, resolution.1 as f64]);
        let target = Quad::rect(tw - 1.0, th - 1.0)?;
        estimate_homography(&quad.corners(), &target.corners())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: [[f64; 2]; 4]) -> [PixelPoint; 4] {
        v.map(PixelPoint::from)
    }

    const UNIT: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

    /// Dense Gaussian elimination with partial pivoting, independent of the
    /// nalgebra path used by `estimate_homography`.
    fn oracle_solve(src: &[PixelPoint; 4], dst: &[PixelPoint; 4]) -> [f64; 8] {
        let mut m = vec![vec![0.0f64; 9]; 8];
        for i in 0..4 {
            let (x, y, u, v) = (src[i].x, src[i].y, dst[i].x, dst[i].y);
            m[2 * i] = vec![x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
            m[2 * i + 1] = vec![0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
        }
        for col in 0..8 {
            let piv = (col..8)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for row in 0..8 {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..9 {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        let mut out = [0.0; 8];
        for i in 0..8 {
            out[i] = m[i][8] / m[i][i];
        }
        out
    }

    #[test]
    fn identity_for_equal_quads() {
        let h = estimate_homography(&pts(UNIT), &pts(UNIT)).unwrap();
        let rows = h.rows();
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scale_by_two() {
        let dst = pts([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        let h = estimate_homography(&pts(UNIT), &dst).unwrap();
        let r = h.rows();
        assert!((r[0][0] - 2.0).abs() < 1e-12 && (r[1][1] - 2.0).abs() < 1e-12);
        assert!(r[0][1].abs() < 1e-12 && r[2][0].abs() < 1e-12);
        assert_eq!(r[2][2], 1.0);
    }

    #[test]
    fn general_quad_matches_oracle() {
        let src = pts(UNIT);
        let dst = pts([[0.0, 0.0], [4.0, 1.0], [5.0, 6.0], [-1.0, 5.0]]);
        let h = estimate_homography(&src, &dst).unwrap();
        let want = oracle_solve(&src, &dst);
        let got = h.rows().concat();
        for i in 0..8 {
            assert!((got[i] - want[i]).abs() < 1e-9, "entry {i}");
        }
        for (s, d) in src.iter().zip(&dst) {
            assert!(h.apply(*s).unwrap().distance(*d) <= 1e-6);
        }
    }

    #[test]
    fn collinear_rejected() {
        let src = pts([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        assert_eq!(
            estimate_homography(&src, &pts(UNIT)).unwrap_err(),
            GeometryError::Degenerate
        );
    }

    #[test]
    fn apply_examples() {
        let p = PixelPoint::new(3.0, 4.0);
        assert_eq!(Homography::identity().apply(p).unwrap(), p);
        let h = Homography::from_rows([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(h.apply(p).unwrap(), PixelPoint::new(6.0, 8.0));
    }

    #[test]
    fn vanishing_denominator() {
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            h.apply(PixelPoint::new(-1.0, 0.0)),
            Err(GeometryError::AtInfinity(_))
        ));
    }

    #[test]
    fn normalization_sets_h22() {
        let h = Homography::from_rows([[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(h.rows()[2][2], 1.0);
        assert_eq!(h.rows()[0][0], 2.0);
    }

    #[test]
    fn quad_rejects_non_convex_or_misordered() {
        // counter-clockwise ordering
        assert!(Quad::new(pts([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])).is_err());
        // dart
        assert!(Quad::new(pts([[0.0, 0.0], [4.0, 0.0], [1.0, 1.0], [0.0, 4.0]])).is_err());
        assert!(Quad::new(pts(UNIT)).is_ok());
    }

    fn render_rect(w: usize, h: usize, center: PixelPoint, half: (f64, f64), angle_deg: f64) -> GrayImage {
        let (s, c) = angle_deg.to_radians().sin_cos();
        GrayImage::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - center.x, y as f64 - center.y);
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            if u.abs() <= half.0 && v.abs() <= half.1 {
                255
            } else {
                0
            }
        })
        .unwrap()
    }

    fn rect_corners(center: PixelPoint, half: (f64, f64), angle_deg: f64) -> [PixelPoint; 4] {
        let (s, c) = angle_deg.to_radians().sin_cos();
        [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(a, b)| {
            let (u, v) = (a * half.0, b * half.1);
            PixelPoint::new(center.x + c * u - s * v, center.y + s * u + c * v)
        })
    }

    #[test]
    fn detects_axis_aligned_arena() {
        let img = GrayImage::from_fn(200, 150, |x, y| {
            if (20..=180).contains(&x) && (10..=140).contains(&y) {
                255
            } else {
                0
            }
        })
        .unwrap();
        let quad = detect_arena_quad(&img, 40.0).unwrap();
        let truth = pts([[20.0, 10.0], [180.0, 10.0], [180.0, 140.0], [20.0, 140.0]]);
        for (got, want) in quad.corners().iter().zip(&truth) {
            assert!(got.distance(*want) <= 2.0, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn detects_rotated_arena() {
        let center = PixelPoint::new(100.0, 75.0);
        let half = (60.0, 40.0);
        let img = render_rect(200, 150, center, half, 15.0);
        let quad = detect_arena_quad(&img, 40.0).unwrap();
        for (got, want) in quad.corners().iter().zip(&rect_corners(center, half, 15.0)) {
            assert!(got.distance(*want) <= 3.0, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn blank_frame_fails() {
        let img = GrayImage::filled(50, 40, 128).unwrap();
        assert!(matches!(
            detect_arena_quad(&img, 40.0),
            Err(GeometryError::DetectionFailed(_))
        ));
    }

    #[test]
    fn configured_corners_override_detection() {
        let cfg = ArenaConfig {
            enabled: true,
            corners: Some([[10.0, 10.0], [90.0, 12.0], [88.0, 70.0], [12.0, 68.0]]),
            target: Some([101.0, 81.0]),
            ..ArenaConfig::default()
        };
        let h = cfg.transform(None, (100, 80)).unwrap();
        let tl = h.apply(PixelPoint::new(10.0, 10.0)).unwrap();
        let br = h.apply(PixelPoint::new(88.0, 70.0)).unwrap();
        assert!(tl.distance(PixelPoint::new(0.0, 0.0)) < 1e-9);
        assert!(br.distance(PixelPoint::new(100.0, 80.0)) < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inverse_round_trip(
                jitter in proptest::collection::vec(-0.2f64..0.2, 8),
                px in 0.0f64..1.0, py in 0.0f64..1.0,
            ) {
                let dst = pts([
                    [jitter[0], jitter[1]],
                    [1.0 + jitter[2], jitter[3]],
                    [1.0 + jitter[4], 1.0 + jitter[5]],
                    [jitter[6], 1.0 + jitter[7]],
                ]);
                let h = estimate_homography(&pts(UNIT), &dst).unwrap();
                let inv = h.inverse().unwrap();
                let p = PixelPoint::new(px, py);
                let back = inv.apply(h.apply(p).unwrap()).unwrap();
                prop_assert!(back.distance(p) <= 1e-6);
                prop_assert_eq!(h.rows()[2][2], 1.0);
            }
        }
    }
}
