//! On-disk dataset layout and per-dataset parameter profiles.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Instance id of a tracked object; equal to its label id in label maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u8);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "obj{:02}", self.0)
    }
}

/// Which of the two reference recordings a dataset resembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetProfile {
    #[default]
    Rats,
    Mice,
}

impl DatasetProfile {
    /// LES sampling half-width at full resolution.
    pub fn les_radius(self) -> f64 {
        match self {
            DatasetProfile::Rats => 50.0,
            DatasetProfile::Mice => 25.0,
        }
    }

    /// DAR `(maxima count, exclusion radius)` at full resolution.
    pub fn dar_defaults(self) -> (usize, f64) {
        match self {
            DatasetProfile::Rats => (8, 200.0),
            DatasetProfile::Mice => (22, 125.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetProfile::Rats => "rats",
            DatasetProfile::Mice => "mice",
        }
    }
}

impl fmt::Display for DatasetProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rats" => Ok(DatasetProfile::Rats),
            "mice" => Ok(DatasetProfile::Mice),
            other => Err(format!("unknown dataset profile `{other}` (expected rats|mice)")),
        }
    }
}

pub fn frame_file(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

pub fn labels_file(index: usize) -> String {
    format!("labels_{index:06}.pgm")
}

pub fn depth_file(index: usize) -> String {
    format!("depth_{index:06}.pfm")
}

pub fn gt_file(index: usize, object: ObjectId) -> String {
    format!("gt_{index:06}_obj{:02}.pgm", object.0)
}

pub fn gaze_file(object: ObjectId) -> String {
    format!("gaze_obj{:02}.csv", object.0)
}

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Static description of a dataset, recorded in `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub name: String,
    pub profile: DatasetProfile,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    pub objects: Vec<ObjectId>,
    /// Ratio of this dataset's resolution to the full-size recordings;
    /// pixel radii from the profile are multiplied by it.
    pub pixel_scale: f64,
}

impl DatasetInfo {
    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub frame: String,
    pub labels: String,
    pub depth: String,
    pub ground_truth: String,
    pub gaze: String,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            frame: "frame_%06d.pgm".into(),
            labels: "labels_%06d.pgm".into(),
            depth: "depth_%06d.pfm".into(),
            ground_truth: "gt_%06d_obj%02d.pgm".into(),
            gaze: "gaze_obj%02d.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: DatasetInfo,
    pub layout: Layout,
    /// Generator settings when the dataset is synthetic.
    pub scenario: Option<crate::simulator::ScenarioConfig>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, Error> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always serializable")
    }
}

/// A dataset directory plus its manifest.
#[derive(Debug, Clone)]
pub struct DiskDataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl DiskDataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, Error> {
        let root = root.into();
        let manifest = Manifest::load(&root)?;
        Ok(Self { root, manifest })
    }

    pub fn info(&self) -> &DatasetInfo {
        &self.manifest.dataset
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }
}
