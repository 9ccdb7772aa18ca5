//! Segmentation and depth backends behind uniform contracts.
//!
//! * [`LabelMapProvider`] / [`FileDepthProvider`] / [`FileGroundTruth`] read
//!   a dataset directory;
//! * [`SceneOracle`] renders a synthetic scenario in memory;
//! * [`ExecProvider`] talks to an external model process over a line
//!   protocol (see [`exec`]).
//!
//! Backends are owned by one pipeline worker each, so methods take
//! `&mut self`. Every raster a backend returns is checked against the
//! frame resolution by [`Backends`].

pub mod exec;
mod files;
mod scene;

use std::time::Duration;

use thiserror::Error;

use crate::dataset::ObjectId;
use crate::geometry::PixelPoint;
use crate::raster::{CodecError, DepthMap, Mask, Pixel};

pub use exec::ExecProvider;
pub use files::{FileDepthProvider, FileGroundTruth, LabelMapProvider};
pub use scene::SceneOracle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: CodecError,
    },
    #[error("prompt ({x}, {y}) is outside the {width}x{height} frame")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("provider returned {got:?}, frame is {expected:?}")]
    Resolution {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("frame {0} is outside the dataset")]
    NoSuchFrame(usize),
    #[error("object {0} is not part of the scene")]
    NoSuchObject(ObjectId),
    #[error("failed to start provider process: {0}")]
    Spawn(String),
    #[error("provider process exited: {0}")]
    ChildExited(String),
    #[error("truncated response from provider process")]
    Truncated,
    #[error("malformed response from provider process: {0}")]
    Malformed(String),
    #[error("provider did not answer within {0:?}")]
    Timeout(Duration),
    #[error("provider error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("unsupported request: {0}")]
    Unsupported(String),
}

/// Identifies one frame of one run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameRef {
    pub run: String,
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
}

impl FrameRef {
    pub fn new(run: impl Into<String>, frame_index: usize, resolution: (usize, usize)) -> Self {
        Self {
            run: run.into(),
            frame_index,
            width: resolution.0,
            height: resolution.1,
        }
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Rounds `p` half-up per axis and checks it lands inside the frame.
    pub fn prompt_pixel(&self, p: PixelPoint) -> Result<Pixel, ProviderError> {
        let (x, y) = p.round_half_up();
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return Err(ProviderError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(Pixel::new(x as usize, y as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub name: &'static str,
    pub deterministic: bool,
    pub concurrent_safe: bool,
}

/// Point-prompted segmentation `f`.
pub trait SegmentationProvider: Send {
    fn capabilities(&self) -> Capabilities;
    fn segment(&mut self, frame: &FrameRef, prompt: PixelPoint) -> Result<Mask, ProviderError>;
}

/// Monocular depth `g`, larger values nearer the camera.
pub trait DepthProvider: Send {
    fn capabilities(&self) -> Capabilities;
    fn depth(&mut self, frame: &FrameRef) -> Result<DepthMap, ProviderError>;
}

/// Annotated masks for scoring and gate calibration.
pub trait GroundTruth: Send {
    fn gt_mask(&mut self, frame: &FrameRef, object: ObjectId) -> Result<Mask, ProviderError>;
}

fn check_resolution(frame: &FrameRef, got: (usize, usize)) -> Result<(), ProviderError> {
    if got != frame.resolution() {
        return Err(ProviderError::Resolution {
            expected: frame.resolution(),
            got,
        });
    }
    Ok(())
}

/// The set of backends one worker uses for one run.
pub struct Backends {
    pub segmenter: Box<dyn SegmentationProvider>,
    pub depth: Option<Box<dyn DepthProvider>>,
    pub ground_truth: Box<dyn GroundTruth>,
    seg_calls: usize,
}

impl Backends {
    pub fn new(
        segmenter: Box<dyn SegmentationProvider>,
        depth: Option<Box<dyn DepthProvider>>,
        ground_truth: Box<dyn GroundTruth>,
    ) -> Self {
        Self {
            segmenter,
            depth,
            ground_truth,
            seg_calls: 0,
        }
    }

    /// A scene oracle serving all three roles.
    pub fn from_scene(scene: SceneOracle) -> Self {
        Self::new(
            Box::new(scene.clone()),
            Some(Box::new(scene.clone())),
            Box::new(scene),
        )
    }

    pub fn segment(&mut self, frame: &FrameRef, prompt: PixelPoint) -> Result<Mask, ProviderError> {
        self.seg_calls += 1;
        let mask = self.segmenter.segment(frame, prompt)?;
        check_resolution(frame, mask.dims())?;
        Ok(mask)
    }

    pub fn depth(&mut self, frame: &FrameRef) -> Result<DepthMap, ProviderError> {
        let provider = self
            .depth
            .as_mut()
            .ok_or_else(|| ProviderError::Unsupported("no depth provider configured".into()))?;
        let depth = provider.depth(frame)?;
        check_resolution(frame, depth.dims())?;
        Ok(depth)
    }

    pub fn gt_mask(&mut self, frame: &FrameRef, object: ObjectId) -> Result<Mask, ProviderError> {
        let mask = self.ground_truth.gt_mask(frame, object)?;
        check_resolution(frame, mask.dims())?;
        Ok(mask)
    }

    /// Segmentation calls issued so far.
    pub fn seg_calls(&self) -> usize {
        self.seg_calls
    }
}
