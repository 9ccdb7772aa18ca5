//! Local exploratory sampling: when a prompt yields an implausible mask,
//! probe random nearby prompts and keep the first one whose mask passes the
//! size gate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::SizeGate;
use crate::geometry::PixelPoint;
use crate::provider::ProviderError;
use crate::raster::Mask;

pub const DEFAULT_CANDIDATES: usize = 20;

/// Attempts per candidate under [`BoundsPolicy::Redraw`] before falling
/// back to clamping.
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Error)]
pub enum LesError {
    #[error("LES needs at least one candidate and a positive radius")]
    InvalidParams,
    #[error("segmentation failed on probe {index}: {source}")]
    Probe {
        index: usize,
        #[source]
        source: ProviderError,
    },
}

/// What to do with a candidate that falls outside the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsPolicy {
    #[default]
    Clamp,
    Redraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesParams {
    pub n_candidates: usize,
    pub radius: f64,
    pub out_of_bounds: BoundsPolicy,
}

impl LesParams {
    pub fn new(n_candidates: usize, radius: f64) -> Result<Self, LesError> {
        let p = Self {
            n_candidates,
            radius,
            out_of_bounds: BoundsPolicy::Clamp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LesError> {
        if self.n_candidates == 0 || !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(LesError::InvalidParams);
        }
        Ok(())
    }
}

/// Result of a refinement stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub prompt: PixelPoint,
    pub mask: Mask,
    /// The mask passed the gate.
    pub accepted: bool,
    pub probes_used: usize,
}

impl RefineOutcome {
    pub fn unchanged(prompt: PixelPoint, mask: Mask, accepted: bool) -> Self {
        Self {
            prompt,
            mask,
            accepted,
            probes_used: 0,
        }
    }
}

fn draw_candidate<R: Rng + ?Sized>(
    center: PixelPoint,
    params: &LesParams,
    frame_size: (usize, usize),
    rng: &mut R,
) -> PixelPoint {
    let r = params.radius;
    let (w, h) = frame_size;
    let mut attempts = 0;
    loop {
        let dx = rng.random_range(-r..=r);
        let dy = rng.random_range(-r..=r);
        let p = PixelPoint::new(center.x + dx, center.y + dy);
        attempts += 1;
        match params.out_of_bounds {
            BoundsPolicy::Redraw if !p.in_bounds(w, h) && attempts < MAX_REDRAWS => continue,
            _ => return p.clamp_to(w, h),
        }
    }
}

/// Runs exploratory sampling around `prompt`.
///
/// A gate-valid `initial_mask` is returned untouched without calling
/// `segment`. Otherwise up to `n_candidates` prompts are drawn uniformly from
/// the square `[x-r, x+r] x [y-r, y+r]` and segmented in draw order; the
/// first valid mask wins. When none qualifies the original prompt and mask
/// are returned with `accepted == false`.
pub fn les_refine<R, F>(
    prompt: PixelPoint,
    initial_mask: Mask,
    gate: &SizeGate,
    mut segment: F,
    params: &LesParams,
    frame_size: (usize, usize),
    rng: &mut R,
) -> Result<RefineOutcome, LesError>
where
    R: Rng + ?Sized,
    F: FnMut(PixelPoint) -> Result<Mask, ProviderError>,
{
    params.validate()?;
    if gate.accepts(&initial_mask) {
        return Ok(RefineOutcome::unchanged(prompt, initial_mask, true));
    }
    for index in 0..params.n_candidates {
        let candidate = draw_candidate(prompt, params, frame_size, rng);
        let mask = segment(candidate).map_err(|source| LesError::Probe { index, source })?;
        if gate.accepts(&mask) {
            return Ok(RefineOutcome {
                prompt: candidate,
                mask,
                accepted: true,
                probes_used: index + 1,
            });
        }
    }
    Ok(RefineOutcome {
        prompt,
        mask: initial_mask,
        accepted: false,
        probes_used: params.n_candidates,
    })
}
