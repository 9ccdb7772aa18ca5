//! Region overlap scores and their aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Mask, RasterError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("overlap is undefined for two empty masks")]
    BothEmpty,
    #[error("no frame could be scored")]
    NothingScored,
    #[error("relative improvement is undefined for a baseline of {0}")]
    ZeroBaseline(f64),
}

/// Intersection and union sizes.
fn counts(a: &Mask, b: &Mask) -> Result<(usize, usize), MetricError> {
    let inter = a.overlap(b)?;
    Ok((inter, a.count() + b.count() - inter))
}

/// `|A ∩ B| / |A ∪ B|`.
pub fn jaccard(a: &Mask, b: &Mask) -> Result<f64, MetricError> {
    let (inter, union) = counts(a, b)?;
    if union == 0 {
        return Err(MetricError::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

/// `2|A ∩ B| / (|A| + |B|)`.
pub fn dsc(a: &Mask, b: &Mask) -> Result<f64, MetricError> {
    let (inter, union) = counts(a, b)?;
    if union == 0 {
        return Err(MetricError::BothEmpty);
    }
    Ok(2.0 * inter as f64 / (a.count() + b.count()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: usize,
    pub j: f64,
    pub dsc: f64,
    /// False when the frame was skipped because its ground truth is empty.
    pub valid: bool,
}

impl FrameScore {
    pub fn skipped(frame_index: usize) -> Self {
        Self {
            frame_index,
            j: 0.0,
            dsc: 0.0,
            valid: false,
        }
    }

    /// A frame that produced no prediction at all; counts as zero overlap.
    pub fn zero(frame_index: usize) -> Self {
        Self {
            frame_index,
            j: 0.0,
            dsc: 0.0,
            valid: true,
        }
    }
}

/// Scores `pred` against `gt`. Frames with empty ground truth are skipped.
pub fn score_frame(frame_index: usize, pred: &Mask, gt: &Mask) -> Result<FrameScore, MetricError> {
    pred.ensure_same_dims(gt)?;
    if !gt.as_slice().contains(&true) {
        return Ok(FrameScore::skipped(frame_index));
    }
    let (inter, union) = counts(pred, gt)?;
    Ok(FrameScore {
        frame_index,
        j: inter as f64 / union as f64,
        dsc: 2.0 * inter as f64 / (union + inter) as f64,
        valid: true,
    })
}

/// Scored-frame count and means of J and DSC on the 0-100 scale, at full
/// precision.
pub fn aggregate(scores: &[FrameScore]) -> Result<(f64, f64, usize), MetricError> {
    let (mut sj, mut sd, mut n) = (0.0, 0.0, 0usize);
    for s in scores.iter().filter(|s| s.valid) {
        sj += s.j;
        sd += s.dsc;
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::NothingScored);
    }
    Ok((100.0 * sj / n as f64, 100.0 * sd / n as f64, n))
}

/// Formats `x` with one decimal, rounding ties away from zero.
///
/// Rounding works on the shortest decimal representation of `x`, so values
/// like 70.65 round up even though their binary value lies just below.
pub fn fmt1(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let repr = format!("{}", x.abs());
    let (int, frac) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac.bytes().map(|b| b - b'0').collect();
    digits.push(frac.first().copied().unwrap_or(0));
    if frac.get(1).copied().unwrap_or(0) >= 5 {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let tenth = digits.pop().expect("at least one digit");
    let int: String = digits.iter().map(|d| (b'0' + d) as char).collect();
    let negative = x < 0.0 && (!int.trim_start_matches('0').is_empty() || tenth != 0);
    format!("{}{}.{}", if negative { "-" } else { "" }, int, tenth)
}

/// [`fmt1`] as a number.
pub fn round1(x: f64) -> f64 {
    fmt1(x).parse().expect("fmt1 emits a decimal number")
}

/// `(treated - baseline) / baseline * 100`, rounded to one decimal.
pub fn relative_improvement(baseline: f64, treated: f64) -> Result<f64, MetricError> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(MetricError::ZeroBaseline(baseline));
    }
    Ok(round1((treated - baseline) / baseline * 100.0))
}
