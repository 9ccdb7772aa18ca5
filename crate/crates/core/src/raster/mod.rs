//! Raster containers shared by every stage: binary masks, instance label
//! maps, depth maps and grayscale frames.
//!
//! All rasters are row-major with a top-left origin, `x` rightward and `y`
//! downward. Codecs convert foreign conventions (PFM's bottom-up rows) at the
//! file boundary so nothing else has to care.

mod codec;
mod components;

pub use codec::{read_pfm, read_pgm, write_pfm, write_pgm, write_ppm, CodecError, PgmSample};
pub use components::{connected_component, ComponentIndex, Connectivity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelPoint;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("raster data has {got} samples, expected {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("pixel ({x}, {y}) lies outside a {width}x{height} raster")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("depth value at index {index} is not finite")]
    NonFinite { index: usize },
}

/// Instance id stored in a label map. Id 0 is background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[repr(transparent)]
pub struct LabelId(pub u8);

impl LabelId {
    pub const BACKGROUND: LabelId = LabelId(0);

    pub fn is_background(self) -> bool {
        self.0 == 0
    }
}

/// Integer pixel coordinate inside a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn center(self) -> PixelPoint {
        PixelPoint::new(self.x as f64, self.y as f64)
    }
}

/// A row-major 2D grid of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Raster<bool>;

/// Block length for pixel counting; small enough that a `u32` never wraps.
const COUNT_CHUNK: usize = 1 << 16;
pub type LabelMap = Raster<LabelId>;
pub type DepthMap = Raster<f32>;
pub type GrayImage = Raster<u8>;
pub type RgbImage = Raster<[u8; 3]>;

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(RasterError::DataLength {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self, RasterError> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[self.index_of(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index_of(x, y);
        self.data[i] = value;
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Checked lookup for signed coordinates.
    pub fn pixel(&self, x: i64, y: i64) -> Result<Pixel, RasterError> {
        if self.contains(x, y) {
            Ok(Pixel::new(x as usize, y as usize))
        } else {
            Err(RasterError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn ensure_same_dims<U>(&self, other: &Raster<U>) -> Result<(), RasterError> {
        if self.width != other.width || self.height != other.height {
            return Err(RasterError::DimensionMismatch {
                left: self.dims(),
                right: (other.width, other.height),
            });
        }
        Ok(())
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyDimensions { width, height });
    }
    Ok(())
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::filled(width, height, false)
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data
            .chunks(COUNT_CHUNK)
            .map(|c| c.iter().fold(0u32, |n, &b| n.wrapping_add(b as u32)) as usize)
            .sum()
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask, RasterError> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Size of the intersection without materializing it.
    pub fn overlap(&self, other: &Mask) -> Result<usize, RasterError> {
        self.ensure_same_dims(other)?;
        Ok(self
            .data
            .chunks(COUNT_CHUNK)
            .zip(other.data.chunks(COUNT_CHUNK))
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .fold(0u32, |n, (&a, &b)| n.wrapping_add((a & b) as u32)) as usize
            })
            .sum())
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask, RasterError> {
        self.ensure_same_dims(other)?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// Foreground pixel count `S` of a mask.
pub fn mask_size(mask: &Mask) -> usize {
    mask.count()
}

/// Pointwise intersection and union of two same-size masks.
pub fn mask_ops(a: &Mask, b: &Mask) -> Result<(Mask, Mask), RasterError> {
    Ok((a.intersection(b)?, a.union(b)?))
}

impl LabelMap {
    /// Mask of every pixel carrying `id`, regardless of connectivity.
    pub fn label_mask(&self, id: LabelId) -> Mask {
        self.map(|v| v == id)
    }
}

impl DepthMap {
    /// Validates that every value is finite.
    pub fn finite(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Self::from_vec(width, height, data)
    }

    /// Location of the largest value; ties go to the lowest row-major index.
    pub fn argmax(&self) -> Pixel {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        Pixel::new(best % self.width, best / self.width)
    }

    /// Reverses the depth orientation so that larger means nearer.
    pub fn flipped(&self) -> DepthMap {
        let max = self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let min = self.data.iter().copied().fold(f32::INFINITY, f32::min);
        self.map(|v| max + min - v)
    }
}
