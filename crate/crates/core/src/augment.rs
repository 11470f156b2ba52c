//! Prosody augmentation: random shifting and piecewise time warping of
//! smoothed F0/energy contours.
//!
//! [`pro_aug`] flips a fair coin between the two operators, draws the
//! operator's parameters once, and applies the identical transform to both
//! contours so they stay mutually aligned.

use serde::{Deserialize, Serialize};

use crate::contour::{resample_linear, Contour};
use crate::error::{param, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Inclusive shift range in frames; must be symmetric.
    pub shift_range: (i64, i64),
    /// Inclusive range for the number of warp segments.
    pub n_segments_range: (usize, usize),
    /// Per-segment time-scale range.
    pub scale_range: (f64, f64),
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            shift_range: (-15, 15),
            n_segments_range: (2, 5),
            scale_range: (0.4, 1.6),
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.shift_range;
        if lo != -hi || hi < 0 {
            return param(format!(
                "shift range [{lo}, {hi}] must be symmetric about 0"
            ));
        }
        let (smin, smax) = self.n_segments_range;
        if smin < 2 || smin > smax {
            return param(format!(
                "segment range [{smin}, {smax}] needs 2 <= min <= max"
            ));
        }
        let (a, b) = self.scale_range;
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return param(format!(
                "scale range [{a}, {b}] must be positive and ordered"
            ));
        }
        Ok(())
    }
}

/// The transform applied by one augmentation draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    Shift {
        frames: i64,
    },
    Warp {
        boundaries: Vec<usize>,
        scales: Vec<f64>,
    },
}

impl AugmentOp {
    pub fn apply(&self, c: &Contour) -> Result<Contour> {
        match self {
            AugmentOp::Shift { frames } => random_shift(c, *frames),
            AugmentOp::Warp { boundaries, scales } => piecewise_time_warp(c, boundaries, scales),
        }
    }

    pub fn is_shift(&self) -> bool {
        matches!(self, AugmentOp::Shift { .. })
    }
}

/// Move the contour by `shift` frames (positive = later), holding the
/// boundary value in the vacated frames.
pub fn random_shift(c: &Contour, shift: i64) -> Result<Contour> {
    let n = c.len() as i64;
    if shift.abs() >= n.max(1) {
        return param(format!(
            "|shift| = {} must be below the length {n}",
            shift.abs()
        ));
    }
    let values = (0..n)
        .map(|i| c.values[(i - shift).clamp(0, n - 1) as usize])
        .collect();
    Ok(c.with_values(values))
}

/// Split at `boundaries`, resample segment `i` to `round(len_i * scales[i])`
/// frames (at least 1), concatenate and resample back to the input length.
pub fn piecewise_time_warp(c: &Contour, boundaries: &[usize], scales: &[f64]) -> Result<Contour> {
    let n = c.len();
    if n == 0 {
        return param("cannot warp an empty contour");
    }
    if scales.len() != boundaries.len() + 1 {
        return param(format!(
            "{} boundaries need {} scales, got {}",
            boundaries.len(),
            boundaries.len() + 1,
            scales.len()
        ));
    }
    if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return param("warp scales must be positive and finite");
    }
    let mut edges = Vec::with_capacity(boundaries.len() + 2);
    edges.push(0);
    edges.extend_from_slice(boundaries);
    edges.push(n);
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return param(format!(
            "boundaries {boundaries:?} must be strictly increasing interior indices of 0..{n}"
        ));
    }
    let mut warped = Vec::new();
    for (seg, &scale) in edges.windows(2).zip(scales) {
        let piece = &c.values[seg[0]..seg[1]];
        let target = ((piece.len() as f64 * scale).round() as usize).max(1);
        warped.extend(resample_linear(piece, target));
    }
    Ok(c.with_values(resample_linear(&warped, n)))
}

/// Draw one augmentation transform for a contour of length `len`.
pub fn draw_op(len: usize, p: &AugmentParams, rng: &mut Rng) -> Result<AugmentOp> {
    p.validate()?;
    if len == 0 {
        return param("cannot augment an empty contour");
    }
    if rng.coin() {
        let max = p.shift_range.1.min(len as i64 - 1);
        Ok(AugmentOp::Shift {
            frames: rng.int_inclusive(-max, max),
        })
    } else {
        let (smin, smax) = p.n_segments_range;
        let n_seg = rng.int_inclusive(smin as i64, smax as i64) as usize;
        let n_seg = n_seg.min(len);
        let mut boundaries = rng.sample_distinct(1, len, n_seg - 1);
        boundaries.sort_unstable();
        let (a, b) = p.scale_range;
        let scales = (0..n_seg).map(|_| rng.uniform_range(a, b)).collect();
        Ok(AugmentOp::Warp { boundaries, scales })
    }
}

/// Augment an F0/energy pair with one shared random transform.
pub fn pro_aug(
    f0_s: &Contour,
    energy_s: &Contour,
    p: &AugmentParams,
    rng: &mut Rng,
) -> Result<(Contour, Contour, AugmentOp)> {
    if f0_s.len() != energy_s.len() {
        return param(format!(
            "F0 and energy lengths differ: {} vs {}",
            f0_s.len(),
            energy_s.len()
        ));
    }
    let op = draw_op(f0_s.len(), p, rng)?;
    Ok((op.apply(f0_s)?, op.apply(energy_s)?, op))
}

pub fn pro_aug_seeded(
    f0_s: &Contour,
    energy_s: &Contour,
    p: &AugmentParams,
    seed: u64,
) -> Result<(Contour, Contour, AugmentOp)> {
    pro_aug(f0_s, energy_s, p, &mut Rng::seeded(seed))
}
