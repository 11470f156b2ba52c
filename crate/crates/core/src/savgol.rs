//! Savitzky-Golay smoothing.
//!
//! Interior samples take the value at the window centre of the least-squares
//! polynomial fitted over the surrounding `window` samples. The first and
//! last `window / 2` samples are evaluated on the polynomial fitted over the
//! first (respectively last) full window, so polynomials of degree up to
//! `order` are reproduced exactly everywhere. Sequences shorter than the
//! window are fitted as a whole with the degree capped at `len - 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contour::{Contour, ContourKind};
use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavgolParams {
    pub window: usize,
    pub order: usize,
}

impl Default for SavgolParams {
    fn default() -> Self {
        SavgolParams {
            window: 9,
            order: 2,
        }
    }
}

impl SavgolParams {
    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return param(format!("window {} must be odd", self.window));
        }
        if self.window <= self.order {
            return param(format!(
                "window {} must exceed polynomial order {}",
                self.window, self.order
            ));
        }
        Ok(())
    }
}

/// Weights `w` such that `sum_j w[j] * y[j]` is the degree-`order`
/// least-squares fit over `len` equally spaced samples evaluated at sample
/// position `at` (0-based, may be fractional).
pub fn fit_weights(len: usize, order: usize, at: f64) -> Vec<f64> {
    assert!(len > order);
    // Positions are centred and scaled to [-1, 1] for conditioning.
    let mid = (len - 1) as f64 / 2.0;
    let scale = if len > 1 { mid } else { 1.0 };
    let design = DMatrix::from_fn(len, order + 1, |j, k| {
        ((j as f64 - mid) / scale).powi(k as i32)
    });
    let pinv = design
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .expect("svd with both factors computed");
    let x = (at - mid) / scale;
    (0..len)
        .map(|j| (0..=order).map(|k| x.powi(k as i32) * pinv[(k, j)]).sum())
        .collect()
}

/// Smooth a plain sequence.
pub fn savgol_filter(values: &[f64], p: SavgolParams) -> Result<Vec<f64>> {
    p.validate()?;
    let n = values.len();
    if n == 0 {
        return param("cannot smooth an empty sequence");
    }
    if n < p.window {
        let order = p.order.min(n - 1);
        return Ok((0..n)
            .map(|i| dot(&fit_weights(n, order, i as f64), values))
            .collect());
    }
    let half = p.window / 2;
    let centre = fit_weights(p.window, p.order, half as f64);
    let mut out = Vec::with_capacity(n);
    for i in 0..half {
        out.push(dot(
            &fit_weights(p.window, p.order, i as f64),
            &values[..p.window],
        ));
    }
    for i in half..n - half {
        out.push(dot(&centre, &values[i - half..=i + half]));
    }
    let tail = &values[n - p.window..];
    for i in n - half..n {
        let at = (i - (n - p.window)) as f64;
        out.push(dot(&fit_weights(p.window, p.order, at), tail));
    }
    Ok(out)
}

/// Smooth a contour. F0 contours are treated specially: unvoiced (zero)
/// frames are bridged by linear interpolation between the flanking voiced
/// values (held constant before the first and after the last voiced frame),
/// the bridged sequence is smoothed, and the unvoiced frames are zeroed
/// again.
pub fn savgol_smooth(c: &Contour, p: SavgolParams) -> Result<Contour> {
    c.validate()?;
    if c.kind != ContourKind::F0 {
        return Ok(c.with_values(savgol_filter(&c.values, p)?));
    }
    p.validate()?;
    if c.is_empty() {
        return param("cannot smooth an empty sequence");
    }
    let voiced: Vec<usize> = (0..c.len()).filter(|&t| c.values[t] != 0.0).collect();
    if voiced.is_empty() {
        return Ok(c.clone());
    }
    let bridged = bridge_gaps(&c.values, &voiced);
    let smoothed = savgol_filter(&bridged, p)?;
    let values = c
        .values
        .iter()
        .zip(smoothed)
        .map(|(&raw, s)| match raw {
            0.0 => 0.0,
            // Keep voiced frames non-zero even if the fit dips through zero.
            _ if s <= 0.0 => raw,
            _ => s,
        })
        .collect();
    Ok(c.with_values(values))
}

fn bridge_gaps(values: &[f64], voiced: &[usize]) -> Vec<f64> {
    let mut out = values.to_vec();
    let (first, last) = (voiced[0], *voiced.last().unwrap());
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for pair in voiced.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = (b - a) as f64;
        for t in a + 1..b {
            let frac = (t - a) as f64 / span;
            out[t] = values[a] * (1.0 - frac) + values[b] * frac;
        }
    }
    out
}

fn dot(w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).map(|(a, b)| a * b).sum()
}
