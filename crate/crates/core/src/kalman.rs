//! Constant-velocity Kalman filter over the prompt position.
//!
//! The state is `[x, y, vx, vy]` in pixels and pixels/frame. The filter is
//! corrected only by prompts whose masks passed the size gate; on failure it
//! supplies a predicted replacement prompt.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::SizeGate;
use crate::geometry::PixelPoint;
use crate::les::RefineOutcome;
use crate::provider::ProviderError;
use crate::raster::Mask;

pub const DEFAULT_Q_SCALE: f64 = 1e-2;
pub const DEFAULT_R_SCALE: f64 = 1e-1;
pub const DEFAULT_INITIAL_VAR: f64 = 1.0;

#[derive(Debug, Error)]
pub enum KalmanError {
    #[error("filter has not been initialized")]
    Uninitialized,
    #[error("non-finite prompt ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("segmentation at the predicted prompt failed: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KalmanState {
    pub state: [f64; 4],
    pub covariance: [[f64; 4]; 4],
    pub initialized: bool,
}

impl KalmanState {
    pub fn uninitialized() -> Self {
        Self::default()
    }

    pub fn position(&self) -> PixelPoint {
        PixelPoint::new(self.state[0], self.state[1])
    }

    fn x(&self) -> Vector4<f64> {
        Vector4::from_column_slice(&self.state)
    }

    fn p(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.covariance[i][j])
    }

    fn from_parts(x: Vector4<f64>, p: Matrix4<f64>) -> Self {
        let mut covariance = [[0.0; 4]; 4];
        for (i, row) in covariance.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = p[(i, j)];
            }
        }
        Self {
            state: [x[0], x[1], x[2], x[3]],
            covariance,
            initialized: true,
        }
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.covariance[i][i]).sum()
    }
}

/// What to keep when a predicted prompt is rejected by the gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectPolicy {
    /// Keep the pre-prediction state.
    #[default]
    Hold,
    /// Keep the (uncorrected) prediction.
    Advance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub f: Matrix4<f64>,
    pub h: Matrix2x4<f64>,
    pub q: Matrix4<f64>,
    pub r_obs: Matrix2<f64>,
    pub on_reject: RejectPolicy,
}

impl KalmanConfig {
    /// Unit-time-step constant-velocity model with isotropic noise.
    pub fn constant_velocity(q_scale: f64, r_scale: f64) -> Self {
        #[rustfmt::skip]
        let f = Matrix4::new(
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        #[rustfmt::skip]
        let h = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        );
        Self {
            f,
            h,
            q: Matrix4::identity() * q_scale,
            r_obs: Matrix2::identity() * r_scale,
            on_reject: RejectPolicy::Hold,
        }
    }
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self::constant_velocity(DEFAULT_Q_SCALE, DEFAULT_R_SCALE)
    }
}

pub fn kf_init(p: PixelPoint, initial_var: f64) -> Result<KalmanState, KalmanError> {
    if !p.is_finite() {
        return Err(KalmanError::NonFinite(p.x, p.y));
    }
    Ok(KalmanState::from_parts(
        Vector4::new(p.x, p.y, 0.0, 0.0),
        Matrix4::identity() * initial_var,
    ))
}

pub fn kf_predict(
    st: &KalmanState,
    cfg: &KalmanConfig,
) -> Result<(KalmanState, PixelPoint), KalmanError> {
    if !st.initialized {
        return Err(KalmanError::Uninitialized);
    }
    let x = cfg.f * st.x();
    let p = cfg.f * st.p() * cfg.f.transpose() + cfg.q;
    let z = cfg.h * x;
    Ok((
        KalmanState::from_parts(x, symmetrize(p)),
        PixelPoint::new(z[0], z[1]),
    ))
}

/// Standard correction with innovation `z - H x`.
pub fn kf_correct(
    st: &KalmanState,
    z: PixelPoint,
    cfg: &KalmanConfig,
) -> Result<KalmanState, KalmanError> {
    if !st.initialized {
        return Err(KalmanError::Uninitialized);
    }
    if !z.is_finite() {
        return Err(KalmanError::NonFinite(z.x, z.y));
    }
    let x = st.x();
    let p = st.p();
    let s = cfg.h * p * cfg.h.transpose() + cfg.r_obs;
    let s_inv = s.try_inverse().ok_or(KalmanError::SingularInnovation)?;
    let k: Matrix4x2<f64> = p * cfg.h.transpose() * s_inv;
    let innovation = Vector2::new(z.x, z.y) - cfg.h * x;
    let x = x + k * innovation;
    let p = (Matrix4::identity() - k * cfg.h) * p;
    Ok(KalmanState::from_parts(x, symmetrize(p)))
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// What a [`kf_step`] did, for tracing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanStepReport {
    pub initialized_now: bool,
    pub corrected: bool,
    /// Prompt proposed by the prediction path, when it was tried.
    pub predicted_prompt: Option<PixelPoint>,
    pub predicted_size: Option<usize>,
}

/// One frame of filter bookkeeping.
///
/// * raw mask valid: predict, then correct with `raw_prompt` (or initialize
///   the filter if this is the first valid prompt);
/// * raw mask invalid: predict, segment at the predicted prompt (clamped to
///   the frame) and adopt it when the gate accepts. The filter is never
///   corrected here; a rejected prediction is discarded under
///   [`RejectPolicy::Hold`].
#[allow(clippy::too_many_arguments)]
pub fn kf_step<F>(
    st: &KalmanState,
    raw_prompt: PixelPoint,
    raw_mask: Mask,
    gate: &SizeGate,
    mut segment: F,
    cfg: &KalmanConfig,
    initial_var: f64,
    frame_size: (usize, usize),
) -> Result<(KalmanState, RefineOutcome, KalmanStepReport), KalmanError>
where
    F: FnMut(PixelPoint) -> Result<Mask, ProviderError>,
{
    let mut report = KalmanStepReport {
        initialized_now: false,
        corrected: false,
        predicted_prompt: None,
        predicted_size: None,
    };
    let raw_valid = gate.accepts(&raw_mask);
    if !st.initialized {
        let outcome = RefineOutcome::unchanged(raw_prompt, raw_mask, raw_valid);
        if raw_valid {
            report.initialized_now = true;
            return Ok((kf_init(raw_prompt, initial_var)?, outcome, report));
        }
        return Ok((*st, outcome, report));
    }

    let (predicted, prompt) = kf_predict(st, cfg)?;
    if raw_valid {
        let corrected = kf_correct(&predicted, raw_prompt, cfg)?;
        report.corrected = true;
        return Ok((
            corrected,
            RefineOutcome::unchanged(raw_prompt, raw_mask, true),
            report,
        ));
    }

    let (w, h) = frame_size;
    let prompt = prompt.clamp_to(w, h);
    let mask = segment(prompt)?;
    report.predicted_prompt = Some(prompt);
    report.predicted_size = Some(mask.count());
    if gate.accepts(&mask) {
        let outcome = RefineOutcome {
            prompt,
            mask,
            accepted: true,
            probes_used: 1,
        };
        return Ok((predicted, outcome, report));
    }
    let next = match cfg.on_reject {
        RejectPolicy::Hold => *st,
        RejectPolicy::Advance => predicted,
    };
    Ok((
        next,
        RefineOutcome {
            prompt: raw_prompt,
            mask: raw_mask,
            accepted: false,
            probes_used: 1,
        },
        report,
    ))
}
