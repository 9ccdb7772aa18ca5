//! TOML run configuration.
//!
//! Every key is optional; unset values fall back to the dataset profile.
//! Radii are in dataset pixels. When left unset they default to the
//! profile's full-resolution value times the manifest's `pixel_scale`.
//!
//! ```toml
//! [dataset]
//! profile = "rats"        # overrides the manifest
//! [gate]
//! alpha = 0.5
//! calibration = "all-objects"   # or "target"
//! [les]
//! enabled = true
//! n = 20
//! radius = 10.0
//! out_of_bounds = "clamp"       # or "redraw"
//! [kf]
//! enabled = true
//! q_scale = 0.01
//! r_scale = 0.1
//! initial_var = 1.0
//! on_reject = "hold"            # or "advance"
//! [dar]
//! enabled = true
//! n_maxima = 8
//! radius = 40.0
//! [arena]
//! enabled = false
//! [provider]
//! segmenter = "labelmap"        # or "exec"
//! exec = { cmd = "python adapter.py", timeout_s = 30.0 }
//! depth = "file"                # or "synthetic" / "exec"
//! depth_flip = false
//! connectivity = "4"
//! [pipeline]
//! seed = 0
//! fallback_order = "les-kf"     # or "kf-les"
//! workers = 4
//! ```

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dar::DarParams;
use crate::dataset::{DatasetInfo, DatasetProfile};
use crate::error::{Error, Result};
use crate::gate::DEFAULT_ALPHA;
use crate::geometry::ArenaConfig;
use crate::kalman::{RejectPolicy, DEFAULT_INITIAL_VAR, DEFAULT_Q_SCALE, DEFAULT_R_SCALE};
use crate::les::{BoundsPolicy, LesParams, DEFAULT_CANDIDATES};
use crate::pipeline::{FallbackOrder, KfSettings, PipelineConfig};
use crate::provider::exec::DEFAULT_TIMEOUT;
use crate::raster::Connectivity;
use crate::report::MethodFlags;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub profile: Option<DatasetProfile>,
    pub pixel_scale: Option<f64>,
}

/// Which first-frame masks set the expected size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateCalibration {
    /// Mean over every annotated object (one gate per dataset).
    #[default]
    AllObjects,
    /// The run's target object only.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    pub alpha: f64,
    pub calibration: GateCalibration,
}

impl Default for GateSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            calibration: GateCalibration::AllObjects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LesSection {
    pub enabled: bool,
    pub n: usize,
    pub radius: Option<f64>,
    pub out_of_bounds: BoundsPolicy,
}

impl Default for LesSection {
    fn default() -> Self {
        Self {
            enabled: false,
            n: DEFAULT_CANDIDATES,
            radius: None,
            out_of_bounds: BoundsPolicy::Clamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KfSection {
    pub enabled: bool,
    pub q_scale: f64,
    pub r_scale: f64,
    pub initial_var: f64,
    pub on_reject: RejectPolicy,
}

impl Default for KfSection {
    fn default() -> Self {
        Self {
            enabled: false,
            q_scale: DEFAULT_Q_SCALE,
            r_scale: DEFAULT_R_SCALE,
            initial_var: DEFAULT_INITIAL_VAR,
            on_reject: RejectPolicy::Hold,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarSection {
    pub enabled: bool,
    pub n_maxima: Option<usize>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    #[default]
    Labelmap,
    Exec,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthKind {
    /// `depth_%06d.pfm` next to the frames.
    #[default]
    File,
    /// Rendered from the manifest's scenario.
    Synthetic,
    /// Asked from the exec child.
    Exec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecSection {
    pub cmd: Option<String>,
    pub timeout_s: f64,
}

impl Default for ExecSection {
    fn default() -> Self {
        Self {
            cmd: None,
            timeout_s: DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }
}

impl ExecSection {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub segmenter: SegmenterKind,
    pub exec: ExecSection,
    pub depth: DepthKind,
    pub depth_flip: bool,
    pub connectivity: Connectivity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub seed: u64,
    pub fallback_order: FallbackOrder,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub gate: GateSection,
    pub les: LesSection,
    pub kf: KfSection,
    pub dar: DarSection,
    pub arena: ArenaConfig,
    pub provider: ProviderSection,
    pub pipeline: PipelineSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn flags(&self) -> MethodFlags {
        MethodFlags::new(self.les.enabled, self.kf.enabled, self.dar.enabled)
    }

    pub fn profile(&self, info: &DatasetInfo) -> DatasetProfile {
        self.dataset.profile.unwrap_or(info.profile)
    }

    pub fn pixel_scale(&self, info: &DatasetInfo) -> f64 {
        self.dataset.pixel_scale.unwrap_or(info.pixel_scale)
    }

    /// Fills profile defaults and validates every parameter.
    pub fn resolve(&self, info: &DatasetInfo) -> Result<PipelineConfig> {
        let profile = self.profile(info);
        let scale = self.pixel_scale(info);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("pixel_scale must be positive, got {scale}")));
        }
        if !(self.gate.alpha > 0.0 && self.gate.alpha < 1.0) {
            return Err(Error::Config(format!(
                "gate.alpha must lie strictly between 0 and 1, got {}",
                self.gate.alpha
            )));
        }
        let les = LesParams {
            n_candidates: self.les.n,
            radius: self.les.radius.unwrap_or(profile.les_radius() * scale),
            out_of_bounds: self.les.out_of_bounds,
        };
        les.validate()
            .map_err(|e| Error::Config(format!("les: {e}")))?;
        let base = DarParams::for_profile(profile, scale);
        let dar = DarParams {
            n_maxima: self.dar.n_maxima.unwrap_or(base.n_maxima),
            radius: self.dar.radius.unwrap_or(base.radius),
        };
        dar.validate()
            .map_err(|e| Error::Config(format!("dar: {e}")))?;
        let kf = KfSettings {
            q_scale: self.kf.q_scale,
            r_scale: self.kf.r_scale,
            initial_var: self.kf.initial_var,
            on_reject: self.kf.on_reject,
        };
        for (name, v) in [("q_scale", kf.q_scale), ("r_scale", kf.r_scale), ("initial_var", kf.initial_var)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("kf.{name} must be positive, got {v}")));
            }
        }
        if self.provider.segmenter == SegmenterKind::Exec && self.provider.exec.cmd.is_none() {
            return Err(Error::Config("provider.segmenter = \"exec\" needs provider.exec.cmd".into()));
        }
        if !(self.provider.exec.timeout_s > 0.0 && self.provider.exec.timeout_s.is_finite()) {
            return Err(Error::Config("provider.exec.timeout_s must be positive".into()));
        }
        if self.pipeline.workers == Some(0) {
            return Err(Error::Config("pipeline.workers must be at least 1".into()));
        }
        Ok(PipelineConfig {
            flags: self.flags(),
            alpha: self.gate.alpha,
            calibration: self.gate.calibration,
            les,
            kf,
            dar,
            arena: self.arena.clone(),
            seed: self.pipeline.seed,
            fallback_order: self.pipeline.fallback_order,
        })
    }
}
