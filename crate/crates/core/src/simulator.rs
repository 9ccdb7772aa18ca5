//! Synthetic arena scenes with exact ground truth.
//!
//! Objects are filled ellipses moving at constant velocity with elastic
//! wall bounces. Lower object ids are drawn on top. Depth is a flat floor
//! plus one Gaussian bump per object, so every isolated object center is a
//! strict local depth maximum. Gaze follows the target's center with
//! Gaussian jitter and occasional saccades.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetInfo, DatasetProfile, Layout, Manifest, ObjectId};
use crate::error::{Error, Result};
use crate::geometry::PixelPoint;
use crate::raster::{write_pfm, write_pgm, DepthMap, GrayImage, LabelId, LabelMap, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Semi-axes `[a, b]` along x and y, in pixels.
    pub semi_axes: [f64; 2],
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    pub depth_amplitude: f64,
    pub depth_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeModel {
    /// Per-axis standard deviation of fixation jitter, pixels.
    pub sigma: f64,
    pub saccade_prob: f64,
    pub saccade_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub profile: DatasetProfile,
    #[serde(default = "one")]
    pub pixel_scale: f64,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Number of frames.
    pub duration: usize,
    pub floor_depth: f64,
    pub gaze: GazeModel,
    pub seed: u64,
    pub objects: Vec<ObjectSpec>,
}

fn default_name() -> String {
    "synthetic".into()
}

fn one() -> f64 {
    1.0
}

/// Rendered ground truth for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub labels: LabelMap,
    /// Visible pixels of each object, indexed by `object id - 1`.
    pub masks: Vec<Mask>,
    pub depth: DepthMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub frame: usize,
    pub point: PixelPoint,
    pub valid: bool,
}

const FLOOR_INTENSITY: u8 = 220;

/// Resolution of the recordings the profiles are modeled on.
pub const REFERENCE_RESOLUTION: (usize, usize) = (1640, 1232);

impl ScenarioConfig {
    /// Two large dark objects at 1/5 of the reference 1640x1232 resolution,
    /// 30 s at 30 fps.
    pub fn rats_like(seed: u64) -> Self {
        Self {
            name: "rats".into(),
            profile: DatasetProfile::Rats,
            pixel_scale: 0.2,
            width: 328,
            height: 246,
            fps: 30.0,
            duration: 900,
            floor_depth: 1.0,
            gaze: GazeModel {
                sigma: 8.0,
                saccade_prob: 0.3,
                saccade_amplitude: 12.0,
            },
            seed,
            objects: vec![
                ObjectSpec {
                    semi_axes: [14.0, 5.0],
                    start: [90.0, 80.0],
                    velocity: [2.6, 1.4],
                    depth_amplitude: 1.0,
                    depth_sigma: 12.0,
                },
                ObjectSpec {
                    semi_axes: [14.0, 5.0],
                    start: [230.0, 170.0],
                    velocity: [-2.2, 1.8],
                    depth_amplitude: 0.9,
                    depth_sigma: 12.0,
                },
            ],
        }
    }

    /// Four small, fast objects at desk scale.
    pub fn mice_like(seed: u64) -> Self {
        let spec = |start: [f64; 2], velocity: [f64; 2]| ObjectSpec {
            semi_axes: [12.0, 6.0],
            start,
            velocity,
            depth_amplitude: 0.5,
            depth_sigma: 6.0,
        };
        Self {
            name: "mice".into(),
            profile: DatasetProfile::Mice,
            pixel_scale: 0.2,
            width: 328,
            height: 246,
            fps: 30.0,
            duration: 900,
            floor_depth: 1.0,
            gaze: GazeModel {
                sigma: 8.0,
                saccade_prob: 0.3,
                saccade_amplitude: 25.0,
            },
            seed,
            objects: vec![
                spec([60.0, 50.0], [2.1, 1.4]),
                spec([250.0, 60.0], [-1.8, 2.2]),
                spec([80.0, 190.0], [2.4, -1.2]),
                spec([260.0, 200.0], [-2.0, -1.7]),
            ],
        }
    }

    /// The same scene at the reference 1640x1232 resolution.
    pub fn full_resolution(&self) -> Self {
        let k = 1.0 / self.pixel_scale;
        let mut cfg = self.clone();
        cfg.pixel_scale = 1.0;
        cfg.width = REFERENCE_RESOLUTION.0;
        cfg.height = REFERENCE_RESOLUTION.1;
        cfg.gaze.sigma *= k;
        cfg.gaze.saccade_amplitude *= k;
        for o in &mut cfg.objects {
            o.semi_axes = o.semi_axes.map(|v| v * k);
            o.start = o.start.map(|v| v * k);
            o.velocity = o.velocity.map(|v| v * k);
            o.depth_sigma *= k;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("scenario: {msg}")));
        if self.width < 2 || self.height < 2 {
            return bad("frame must be at least 2x2".into());
        }
        if self.duration == 0 {
            return bad("duration must be at least one frame".into());
        }
        if self.objects.is_empty() || self.objects.len() > 255 {
            return bad("need between 1 and 255 objects".into());
        }
        let g = &self.gaze;
        if !(0.0..=1.0).contains(&g.saccade_prob) || !(g.sigma >= 0.0) || !(g.saccade_amplitude >= 0.0) {
            return bad("gaze sigma/amplitude must be >= 0 and saccade_prob in [0, 1]".into());
        }
        if !(self.pixel_scale > 0.0) || !(self.fps > 0.0) || !self.floor_depth.is_finite() {
            return bad("pixel_scale and fps must be positive, floor_depth finite".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            let [a, b] = o.semi_axes;
            let [x, y] = o.start;
            if !(a > 0.0 && b > 0.0) || !(o.depth_sigma > 0.0) || !o.depth_amplitude.is_finite() {
                return bad(format!("object {}: semi-axes and depth_sigma must be positive", i + 1));
            }
            if x - a < 0.0 || y - b < 0.0 || x + a > (self.width - 1) as f64 || y + b > (self.height - 1) as f64 {
                return bad(format!("object {} does not fit inside the frame at t=0", i + 1));
            }
            if !o.velocity.iter().all(|v| v.is_finite()) {
                return bad(format!("object {}: velocity must be finite", i + 1));
            }
        }
        Ok(())
    }

    pub fn object_ids(&self) -> Vec<ObjectId> {
        (1..=self.objects.len() as u8).map(ObjectId).collect()
    }

    pub fn dataset_info(&self) -> DatasetInfo {
        DatasetInfo {
            name: self.name.clone(),
            profile: self.profile,
            width: self.width,
            height: self.height,
            frames: self.duration,
            fps: self.fps,
            objects: self.object_ids(),
            pixel_scale: self.pixel_scale,
        }
    }

    /// Continuous center of `object` at frame `t`.
    pub fn center_at(&self, object: ObjectId, t: usize) -> PixelPoint {
        let o = &self.objects[object.0 as usize - 1];
        let x = bounce(o.start[0], o.velocity[0], t as f64, o.semi_axes[0], (self.width - 1) as f64 - o.semi_axes[0]);
        let y = bounce(o.start[1], o.velocity[1], t as f64, o.semi_axes[1], (self.height - 1) as f64 - o.semi_axes[1]);
        PixelPoint::new(x, y)
    }

    /// Integer pixel the object is rasterized around.
    pub fn pixel_center_at(&self, object: ObjectId, t: usize) -> (i64, i64) {
        self.center_at(object, t).round_half_up()
    }
}

/// Position on `[lo, hi]` of a point moving at `v` with reflecting walls.
fn bounce(start: f64, v: f64, t: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let u = (start - lo + v * t).rem_euclid(2.0 * span);
    lo + if u <= span { u } else { 2.0 * span - u }
}

pub fn render_frame(cfg: &ScenarioConfig, t: usize) -> FrameTruth {
    let labels = render_labels(cfg, t);
    let masks = cfg.object_ids().into_iter().map(|id| labels.label_mask(LabelId(id.0))).collect();
    FrameTruth {
        labels,
        masks,
        depth: render_depth(cfg, t),
    }
}

pub fn render_labels(cfg: &ScenarioConfig, t: usize) -> LabelMap {
    let (w, h) = (cfg.width, cfg.height);
    let mut labels = LabelMap::filled(w, h, LabelId::BACKGROUND).expect("validated dimensions");
    // paint highest id first so lower ids end up on top
    for id in cfg.object_ids().into_iter().rev() {
        let o = &cfg.objects[id.0 as usize - 1];
        let (cx, cy) = cfg.pixel_center_at(id, t);
        let [a, b] = o.semi_axes;
        let (ra, rb) = (a.ceil() as i64, b.ceil() as i64);
        for y in (cy - rb).max(0)..=(cy + rb).min(h as i64 - 1) {
            let ny = (y - cy) as f64 / b;
            for x in (cx - ra).max(0)..=(cx + ra).min(w as i64 - 1) {
                let nx = (x - cx) as f64 / a;
                if nx * nx + ny * ny <= 1.0 {
                    labels.set(x as usize, y as usize, LabelId(id.0));
                }
            }
        }
    }
    labels
}

pub fn render_depth(cfg: &ScenarioConfig, t: usize) -> DepthMap {
    let bumps: Vec<(f64, f64, f64, f64)> = cfg
        .object_ids()
        .into_iter()
        .map(|id| {
            let o = &cfg.objects[id.0 as usize - 1];
            let (cx, cy) = cfg.pixel_center_at(id, t);
            (cx as f64, cy as f64, o.depth_amplitude, 2.0 * o.depth_sigma * o.depth_sigma)
        })
        .collect();
    // Each bump factors into a column term times a row term.
    let cols: Vec<Vec<f64>> = bumps
        .iter()
        .map(|&(cx, _, amp, two_s2)| {
            (0..cfg.width)
                .map(|x| amp * (-(x as f64 - cx).powi(2) / two_s2).exp())
                .collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = bumps
        .iter()
        .map(|&(_, cy, _, two_s2)| {
            (0..cfg.height)
                .map(|y| (-(y as f64 - cy).powi(2) / two_s2).exp())
                .collect()
        })
        .collect();
    DepthMap::from_fn(cfg.width, cfg.height, |x, y| {
        let mut d = cfg.floor_depth;
        for (col, row) in cols.iter().zip(&rows) {
            d += col[x] * row[y];
        }
        d as f32
    })
    .expect("validated dimensions")
}

/// Grayscale camera frame: dark animals on a bright floor for the rats
/// profile, bright-on-bright for mice.
pub fn render_gray(cfg: &ScenarioConfig, labels: &LabelMap) -> GrayImage {
    let animal = match cfg.profile {
        DatasetProfile::Rats => 40,
        DatasetProfile::Mice => 250,
    };
    labels.map(|l| if l.is_background() { FLOOR_INTENSITY } else { animal })
}

/// Seeds the gaze stream of one object.
pub fn gaze_rng(seed: u64, object: ObjectId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((object.0 as u64) << 32))
}

/// One gaze sample per frame: target center plus Gaussian jitter, plus a
/// saccade offset of fixed length in a uniform direction with probability
/// `saccade_prob`, clamped to the frame.
pub fn synthesize_gaze<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    object: ObjectId,
    rng: &mut R,
) -> Vec<GazeSample> {
    let g = cfg.gaze;
    let jitter = Normal::new(0.0, g.sigma).expect("sigma validated non-negative");
    (0..cfg.duration)
        .map(|t| {
            let c = cfg.center_at(object, t);
            let mut x = c.x + jitter.sample(rng);
            let mut y = c.y + jitter.sample(rng);
            if rng.random::<f64>() < g.saccade_prob {
                let theta = rng.random_range(0.0..TAU);
                x += g.saccade_amplitude * theta.cos();
                y += g.saccade_amplitude * theta.sin();
            }
            GazeSample {
                frame: t,
                point: PixelPoint::new(x, y).clamp_to(cfg.width, cfg.height),
                valid: true,
            }
        })
        .collect()
}

/// `frame,x,y,valid` with three decimals.
pub fn write_gaze_csv(samples: &[GazeSample]) -> String {
    let mut out = String::from("frame,x,y,valid\n");
    for s in samples {
        out.push_str(&format!(
            "{},{:.3},{:.3},{}\n",
            s.frame,
            s.point.x,
            s.point.y,
            u8::from(s.valid)
        ));
    }
    out
}

pub fn read_gaze_csv(text: &str) -> Result<Vec<GazeSample>> {
    #[derive(Deserialize)]
    struct Row {
        frame: usize,
        x: f64,
        y: f64,
        valid: u8,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Data(format!("gaze csv: {e}")))?;
    if headers != vec!["frame", "x", "y", "valid"] {
        return Err(Error::Data(format!(
            "gaze csv header must be `frame,x,y,valid`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("gaze csv row {}: {e}", i + 1)))?;
        if row.frame != i {
            return Err(Error::Data(format!(
                "gaze csv must have one row per frame in order; row {} has frame {}",
                i + 1,
                row.frame
            )));
        }
        let valid = match row.valid {
            0 => false,
            1 => true,
            v => return Err(Error::Data(format!("gaze csv row {}: valid must be 0 or 1, got {v}", i + 1))),
        };
        let point = PixelPoint::new(row.x, row.y);
        if valid && !point.is_finite() {
            return Err(Error::Data(format!("gaze csv row {}: non-finite point", i + 1)));
        }
        out.push(GazeSample {
            frame: row.frame,
            point,
            valid,
        });
    }
    Ok(out)
}

/// Writes the full dataset tree: frames, label maps, depth maps, per-object
/// ground-truth masks, gaze CSVs and `manifest.toml`.
pub fn emit_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let write = |name: String, bytes: &[u8]| {
        let path = out_dir.join(&name);
        fs::write(&path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    };
    for t in 0..cfg.duration {
        let truth = render_frame(cfg, t);
        write(dataset::frame_file(t), &write_pgm(&render_gray(cfg, &truth.labels)))?;
        write(dataset::labels_file(t), &write_pgm(&truth.labels))?;
        write(dataset::depth_file(t), &write_pfm(&truth.depth))?;
        for (id, mask) in cfg.object_ids().into_iter().zip(&truth.masks) {
            write(dataset::gt_file(t, id), &write_pgm(mask))?;
        }
    }
    for id in cfg.object_ids() {
        let gaze = synthesize_gaze(cfg, id, &mut gaze_rng(cfg.seed, id));
        write(dataset::gaze_file(id), write_gaze_csv(&gaze).as_bytes())?;
    }
    let manifest = Manifest {
        dataset: cfg.dataset_info(),
        layout: Layout::default(),
        scenario: Some(cfg.clone()),
    };
    write(dataset::MANIFEST_FILE.into(), manifest.to_toml().as_bytes())
}

/// Ground-truth raster sizes of each object when nothing occludes it.
pub fn ellipse_area(spec: &ObjectSpec) -> usize {
    let [a, b] = spec.semi_axes;
    let (ra, rb) = (a.ceil() as i64, b.ceil() as i64);
    let mut n = 0;
    for y in -rb..=rb {
        for x in -ra..=ra {
            let (nx, ny) = (x as f64 / a, y as f64 / b);
            if nx * nx + ny * ny <= 1.0 {
                n += 1;
            }
        }
    }
    n
}

impl FrameTruth {
    pub fn mask(&self, object: ObjectId) -> &Mask {
        &self.masks[object.0 as usize - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dar::{extract_maxima, DarParams};

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            name: "small".into(),
            profile: DatasetProfile::Rats,
            pixel_scale: 1.0,
            width: 120,
            height: 90,
            fps: 30.0,
            duration: 10,
            floor_depth: 1.0,
            gaze: GazeModel {
                sigma: 0.0,
                saccade_prob: 0.0,
                saccade_amplitude: 0.0,
            },
            seed: 5,
            objects: vec![
                ObjectSpec {
                    semi_axes: [10.0, 5.0],
                    start: [20.0, 20.0],
                    velocity: [2.0, 0.0],
                    depth_amplitude: 1.0,
                    depth_sigma: 4.0,
                },
                ObjectSpec {
                    semi_axes: [8.0, 8.0],
                    start: [90.0, 60.0],
                    velocity: [0.0, -1.0],
                    depth_amplitude: 0.5,
                    depth_sigma: 4.0,
                },
            ],
        }
    }

    #[test]
    fn initial_frame_matches_specs() {
        let cfg = small();
        let f = render_frame(&cfg, 0);
        for (id, spec) in cfg.object_ids().into_iter().zip(&cfg.objects) {
            assert_eq!(f.mask(id).count(), ellipse_area(spec));
            assert_eq!(cfg.center_at(id, 0), PixelPoint::from(spec.start));
        }
    }

    #[test]
    fn constant_velocity_without_bounce() {
        let cfg = small();
        assert_eq!(cfg.center_at(ObjectId(1), 10).x, 40.0);
    }

    #[test]
    fn bounces_off_walls() {
        // lo = 0, hi = 10, start 8 moving +3: 11 -> reflects to 9
        assert_eq!(bounce(8.0, 3.0, 1.0, 0.0, 10.0), 9.0);
        assert_eq!(bounce(8.0, 3.0, 4.0, 0.0, 10.0), 0.0);
        assert_eq!(bounce(8.0, 3.0, 5.0, 0.0, 10.0), 3.0);
        let mut cfg = small();
        cfg.duration = 400;
        for t in 0..400 {
            let c = cfg.center_at(ObjectId(1), t);
            assert!(c.x >= 10.0 && c.x <= 109.0);
        }
    }

    #[test]
    fn depth_peaks_sit_on_object_centers() {
        let cfg = small();
        for t in [0, 5, 9] {
            let f = render_frame(&cfg, t);
            let m = extract_maxima(&f.depth, &DarParams::new(2, 20.0).unwrap()).unwrap();
            for id in cfg.object_ids() {
                let (cx, cy) = cfg.pixel_center_at(id, t);
                let c = PixelPoint::new(cx as f64, cy as f64);
                assert!(m.points().any(|p| p.distance(c) <= 1.0), "t={t} {id}");
            }
        }
    }

    #[test]
    fn labels_and_masks_agree_and_lower_id_on_top() {
        let mut cfg = small();
        cfg.objects[1].start = [28.0, 22.0];
        let f = render_frame(&cfg, 0);
        for (i, m) in f.masks.iter().enumerate() {
            assert_eq!(*m, f.labels.label_mask(LabelId(i as u8 + 1)));
        }
        assert_eq!(f.labels.get(20, 20), LabelId(1));
        assert!(f.masks[1].count() < ellipse_area(&cfg.objects[1]));
    }

    #[test]
    fn noiseless_gaze_is_the_trajectory() {
        let cfg = small();
        let g = synthesize_gaze(&cfg, ObjectId(1), &mut gaze_rng(1, ObjectId(1)));
        assert_eq!(g.len(), 10);
        for s in &g {
            assert_eq!(s.point, cfg.center_at(ObjectId(1), s.frame));
        }
    }

    #[test]
    fn gaze_is_seeded() {
        let mut cfg = small();
        cfg.gaze = GazeModel {
            sigma: 3.0,
            saccade_prob: 0.2,
            saccade_amplitude: 15.0,
        };
        let a = synthesize_gaze(&cfg, ObjectId(2), &mut gaze_rng(9, ObjectId(2)));
        let b = synthesize_gaze(&cfg, ObjectId(2), &mut gaze_rng(9, ObjectId(2)));
        let c = synthesize_gaze(&cfg, ObjectId(2), &mut gaze_rng(10, ObjectId(2)));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gaze_jitter_std() {
        let mut cfg = ScenarioConfig::rats_like(3);
        cfg.gaze = GazeModel {
            sigma: 5.0,
            saccade_prob: 0.0,
            saccade_amplitude: 0.0,
        };
        // stationary target away from the walls so clamping never kicks in
        cfg.objects[0].velocity = [0.0, 0.0];
        cfg.objects[0].start = [160.0, 120.0];
        let g = synthesize_gaze(&cfg, ObjectId(1), &mut gaze_rng(3, ObjectId(1)));
        assert_eq!(g.len(), 900);
        for axis in 0..2 {
            let v: Vec<f64> = g.iter().map(|s| if axis == 0 { s.point.x - 160.0 } else { s.point.y - 120.0 }).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let std = (v.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
            assert!((4.0..=6.0).contains(&std), "axis {axis}: {std}");
        }
    }

    #[test]
    fn gaze_csv_round_trip_and_validation() {
        let samples = vec![
            GazeSample {
                frame: 0,
                point: PixelPoint::new(1.25, 2.5),
                valid: true,
            },
            GazeSample {
                frame: 1,
                point: PixelPoint::new(0.0, 0.0),
                valid: false,
            },
        ];
        let text = write_gaze_csv(&samples);
        assert_eq!(text, "frame,x,y,valid\n0,1.250,2.500,1\n1,0.000,0.000,0\n");
        assert_eq!(read_gaze_csv(&text).unwrap(), samples);
        assert!(read_gaze_csv("frame,x,y,valid\n1,0,0,1\n").is_err());
        assert!(read_gaze_csv("f,x,y,v\n0,0,0,1\n").is_err());
        assert!(read_gaze_csv("frame,x,y,valid\n0,0,0,2\n").is_err());
    }

    #[test]
    fn validation_catches_bad_scenarios() {
        let mut cfg = small();
        cfg.objects[0].start = [5.0, 20.0];
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.gaze.saccade_prob = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.duration = 0;
        assert!(cfg.validate().is_err());
        assert!(small().validate().is_ok());
        assert!(ScenarioConfig::rats_like(0).validate().is_ok());
        assert!(ScenarioConfig::mice_like(0).validate().is_ok());
        assert!(ScenarioConfig::rats_like(0).full_resolution().validate().is_ok());
    }

    #[test]
    fn full_resolution_profile() {
        let full = ScenarioConfig::rats_like(0).full_resolution();
        assert_eq!((full.width, full.height), (1640, 1232));
        assert_eq!(full.pixel_scale, 1.0);
    }
}
