//! Per-frame scalar sequences (F0, energy, durations) and voicing masks.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourKind {
    /// Fundamental frequency in Hz; exactly 0 on unvoiced frames.
    F0,
    /// Log-energy.
    Energy,
    /// Durations in frames, one per deduplicated unit.
    Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub kind: ContourKind,
    /// Hop between frames, in samples. Zero for unit-indexed contours.
    pub hop: usize,
    pub values: Vec<f64>,
}

impl Contour {
    pub fn new(kind: ContourKind, hop: usize, values: Vec<f64>) -> Self {
        Contour { kind, hop, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same kind and hop, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Contour {
            kind: self.kind,
            hop: self.hop,
            values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return param(format!("contour value at frame {i} is not finite"));
        }
        if self.kind == ContourKind::F0 && self.values.iter().any(|&v| v < 0.0) {
            return param("F0 contour contains negative values");
        }
        Ok(())
    }

    /// Voicing implied by an F0 contour (non-zero = voiced).
    pub fn implied_vuv(&self) -> VuvMask {
        VuvMask::new(self.values.iter().map(|&v| v != 0.0).collect())
    }
}

/// Per-frame voicing flags, 1 = voiced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VuvMask {
    flags: Vec<u8>,
}

impl VuvMask {
    pub fn new(voiced: Vec<bool>) -> Self {
        VuvMask {
            flags: voiced.into_iter().map(u8::from).collect(),
        }
    }

    pub fn from_flags(flags: Vec<u8>) -> Result<Self> {
        if flags.iter().any(|&f| f > 1) {
            return param("VUV flags must be 0 or 1");
        }
        Ok(VuvMask { flags })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn is_voiced(&self, t: usize) -> bool {
        self.flags[t] == 1
    }

    pub fn flags(&self) -> &[u8] {
        &self.flags
    }

    pub fn voiced_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f == 1).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.flags.iter().map(|&f| f == 1)
    }
}

/// Linearly resample `values` to `target_len` samples with the first and last
/// samples aligned to the ends. A single output sample takes the midpoint.
pub fn resample_linear(values: &[f64], target_len: usize) -> Vec<f64> {
    let n = values.len();
    if target_len == 0 || n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![values[0]; target_len];
    }
    if target_len == 1 {
        return vec![interp_at(values, (n - 1) as f64 / 2.0)];
    }
    let step = (n - 1) as f64 / (target_len - 1) as f64;
    (0..target_len)
        .map(|j| {
            if j == target_len - 1 {
                values[n - 1]
            } else {
                interp_at(values, j as f64 * step)
            }
        })
        .collect()
}

fn interp_at(values: &[f64], pos: f64) -> f64 {
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        values[lo]
    } else {
        values[lo] * (1.0 - frac) + values[hi] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_identity_and_ends() {
        let v = vec![0.0, 1.0, 4.0, 9.0];
        assert_eq!(resample_linear(&v, 4), v);
        let up = resample_linear(&v, 7);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[6], 9.0);
        assert!((up[1] - 0.5).abs() < 1e-12);
        assert_eq!(resample_linear(&[3.0], 5), vec![3.0; 5]);
        assert_eq!(resample_linear(&[1.0, 3.0], 1), vec![2.0]);
        assert!(resample_linear(&v, 0).is_empty());
    }

    #[test]
    fn vuv_rejects_non_binary() {
        assert!(VuvMask::from_flags(vec![0, 1, 2]).is_err());
        let m = VuvMask::from_flags(vec![0, 1, 1]).unwrap();
        assert_eq!(m.voiced_count(), 2);
    }
}
