//! Gaze-prompted video object segmentation with prompt refinement.
//!
//! A gaze point is fed to a point-promptable segmenter. A size gate judges
//! the resulting mask, and three refiners repair prompts that produce
//! implausible masks:
//!
//! * [`dar`] moves the prompt onto the nearest well-separated depth maximum;
//! * [`les`] probes random prompts around a failed one;
//! * [`kalman`] substitutes a constant-velocity prediction.
//!
//! [`pipeline`] composes them per frame, [`metrics`] and [`report`] score
//! the output, and [`simulator`] generates scenes with exact ground truth.

pub mod config;
pub mod dar;
pub mod dataset;
pub mod error;
pub mod gate;
pub mod geometry;
pub mod kalman;
pub mod les;
pub mod metrics;
pub mod pipeline;
pub mod provider;
pub mod raster;
pub mod report;
pub mod simulator;

pub use dataset::{DatasetProfile, ObjectId};
pub use error::{Error, Result};
pub use gate::SizeGate;
pub use pipeline::{PipelineConfig, RunOutput};
pub use report::{MethodFlags, RunResult};
pub use geometry::PixelPoint;
pub use raster::{DepthMap, LabelMap, Mask};
