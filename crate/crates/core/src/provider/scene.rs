//! In-memory backend rendering a synthetic scenario on demand.

use std::sync::{Arc, Mutex, OnceLock};

use crate::dataset::ObjectId;
use crate::geometry::PixelPoint;
use crate::raster::{ComponentIndex, Connectivity, DepthMap, LabelId, LabelMap, Mask};
use crate::simulator::{render_depth, render_labels, ScenarioConfig};

use super::{
    check_resolution, Capabilities, DepthProvider, FrameRef, GroundTruth, ProviderError,
    SegmentationProvider,
};

#[derive(Debug)]
struct FrameCache {
    index: usize,
    labels: LabelMap,
    components: ComponentIndex,
    depth: OnceLock<DepthMap>,
}

/// Most recently rendered frame, shared by every oracle cloned from the
/// same parent so jobs advancing in lockstep render each frame once.
type FrameSlot = Arc<Mutex<Option<Arc<FrameCache>>>>;

/// Serves label-map segmentation, depth and ground truth straight from a
/// [`ScenarioConfig`], with the same semantics as the file-backed
/// providers reading an emitted copy of the scenario.
///
/// Clones share the frame cache.
#[derive(Debug, Clone)]
pub struct SceneOracle {
    cfg: Arc<ScenarioConfig>,
    connectivity: Connectivity,
    cache: FrameSlot,
}

impl SceneOracle {
    pub fn new(cfg: Arc<ScenarioConfig>, connectivity: Connectivity) -> Self {
        Self {
            cfg,
            connectivity,
            cache: FrameSlot::default(),
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    fn frame(&self, frame: &FrameRef) -> Result<Arc<FrameCache>, ProviderError> {
        check_resolution(frame, (self.cfg.width, self.cfg.height))?;
        if frame.frame_index >= self.cfg.duration {
            return Err(ProviderError::NoSuchFrame(frame.frame_index));
        }
        let mut slot = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        match slot.as_ref() {
            Some(c) if c.index == frame.frame_index => Ok(Arc::clone(c)),
            _ => {
                let labels = render_labels(&self.cfg, frame.frame_index);
                let components = ComponentIndex::build(&labels, self.connectivity);
                let cache = Arc::new(FrameCache {
                    index: frame.frame_index,
                    labels,
                    components,
                    depth: OnceLock::new(),
                });
                *slot = Some(Arc::clone(&cache));
                Ok(cache)
            }
        }
    }
}

const SCENE_CAPS: Capabilities = Capabilities {
    name: "scene",
    deterministic: true,
    concurrent_safe: true,
};

impl SegmentationProvider for SceneOracle {
    fn capabilities(&self) -> Capabilities {
        SCENE_CAPS
    }

    fn segment(&mut self, frame: &FrameRef, prompt: PixelPoint) -> Result<Mask, ProviderError> {
        let pixel = frame.prompt_pixel(prompt)?;
        let cache = self.frame(frame)?;
        Ok(cache
            .components
            .mask_at(pixel)
            .expect("prompt checked against frame resolution"))
    }
}

impl DepthProvider for SceneOracle {
    fn capabilities(&self) -> Capabilities {
        SCENE_CAPS
    }

    fn depth(&mut self, frame: &FrameRef) -> Result<DepthMap, ProviderError> {
        let cache = self.frame(frame)?;
        Ok(cache
            .depth
            .get_or_init(|| render_depth(&self.cfg, frame.frame_index))
            .clone())
    }
}

impl GroundTruth for SceneOracle {
    fn gt_mask(&mut self, frame: &FrameRef, object: ObjectId) -> Result<Mask, ProviderError> {
        if object.0 == 0 || object.0 as usize > self.cfg.objects.len() {
            return Err(ProviderError::NoSuchObject(object));
        }
        let cache = self.frame(frame)?;
        Ok(cache.labels.label_mask(LabelId(object.0)))
    }
}
