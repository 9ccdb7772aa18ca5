//! Backends reading a dataset directory.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use crate::dataset::{self, ObjectId};
use crate::geometry::PixelPoint;
use crate::raster::{read_pfm, read_pgm, ComponentIndex, Connectivity, DepthMap, LabelMap, Mask};

use super::{
    check_resolution, Capabilities, DepthProvider, FrameRef, GroundTruth, ProviderError,
    SegmentationProvider,
};

fn read_file(path: &Path) -> Result<Vec<u8>, ProviderError> {
    fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => ProviderError::MissingFile(path.display().to_string()),
        _ => ProviderError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        },
    })
}

fn codec_err(path: &Path) -> impl FnOnce(crate::raster::CodecError) -> ProviderError + '_ {
    move |source| ProviderError::Codec {
        path: path.display().to_string(),
        source,
    }
}

const FILE_CAPS: Capabilities = Capabilities {
    name: "file",
    deterministic: true,
    concurrent_safe: true,
};

/// Segments by returning the connected component of the label map under
/// the rounded prompt. Background (label 0) is segmentable too.
#[derive(Debug, Clone)]
pub struct LabelMapProvider {
    root: PathBuf,
    connectivity: Connectivity,
    cache: Option<(usize, ComponentIndex)>,
}

impl LabelMapProvider {
    pub fn new(root: impl Into<PathBuf>, connectivity: Connectivity) -> Self {
        Self {
            root: root.into(),
            connectivity,
            cache: None,
        }
    }

    fn index(&mut self, frame: &FrameRef) -> Result<&ComponentIndex, ProviderError> {
        let hit = matches!(&self.cache, Some((i, _)) if *i == frame.frame_index);
        if !hit {
            let path = self.root.join(dataset::labels_file(frame.frame_index));
            let labels: LabelMap = read_pgm(&read_file(&path)?).map_err(codec_err(&path))?;
            check_resolution(frame, labels.dims())?;
            self.cache = Some((
                frame.frame_index,
                ComponentIndex::build(&labels, self.connectivity),
            ));
        }
        Ok(&self.cache.as_ref().expect("filled above").1)
    }
}

impl SegmentationProvider for LabelMapProvider {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: "labelmap",
            ..FILE_CAPS
        }
    }

    fn segment(&mut self, frame: &FrameRef, prompt: PixelPoint) -> Result<Mask, ProviderError> {
        let pixel = frame.prompt_pixel(prompt)?;
        let index = self.index(frame)?;
        Ok(index.mask_at(pixel).expect("prompt checked against frame resolution"))
    }
}

/// Reads `depth_%06d.pfm`, optionally flipping far-high sources to the
/// near-high convention.
#[derive(Debug, Clone)]
pub struct FileDepthProvider {
    root: PathBuf,
    flip: bool,
}

impl FileDepthProvider {
    pub fn new(root: impl Into<PathBuf>, flip: bool) -> Self {
        Self {
            root: root.into(),
            flip,
        }
    }
}

impl DepthProvider for FileDepthProvider {
    fn capabilities(&self) -> Capabilities {
        FILE_CAPS
    }

    fn depth(&mut self, frame: &FrameRef) -> Result<DepthMap, ProviderError> {
        let path = self.root.join(dataset::depth_file(frame.frame_index));
        let depth = read_pfm(&read_file(&path)?).map_err(codec_err(&path))?;
        check_resolution(frame, depth.dims())?;
        Ok(if self.flip { depth.flipped() } else { depth })
    }
}

/// Reads `gt_%06d_obj%02d.pgm`.
#[derive(Debug, Clone)]
pub struct FileGroundTruth {
    root: PathBuf,
}

impl FileGroundTruth {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl GroundTruth for FileGroundTruth {
    fn gt_mask(&mut self, frame: &FrameRef, object: ObjectId) -> Result<Mask, ProviderError> {
        let path = self.root.join(dataset::gt_file(frame.frame_index, object));
        read_pgm(&read_file(&path)?).map_err(codec_err(&path))
    }
}
