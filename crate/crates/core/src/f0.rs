//! Frame-wise F0 estimation by normalized autocorrelation.
//!
//! Frames are laid out exactly like the mel spectrogram frames (same hop and
//! frame length, no padding), so the F0 contour and the energy contour of
//! one waveform always have the same length. Each frame is analysed over a
//! window of `ceil(2 * sample_rate / f0_min)` samples centred on the frame
//! centre (shifted inward at the signal edges), long enough to hold two
//! periods of the lowest admissible pitch.

use serde::{Deserialize, Serialize};

use crate::contour::{Contour, ContourKind, VuvMask};
use crate::error::{param, Error, Result};
use crate::signal::Waveform;

/// Frames quieter than this RMS are unvoiced regardless of periodicity.
pub const SILENCE_RMS: f64 = 1e-4;

/// A later autocorrelation peak must beat the earliest candidate by this
/// factor to be preferred; suppresses octave-down errors.
const PEAK_PREFERENCE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Params {
    pub f0_min: f64,
    pub f0_max: f64,
    pub periodicity_threshold: f64,
    pub hop_size: usize,
    /// Frame length used for frame layout; matches the mel window.
    pub frame_length: usize,
}

impl Default for F0Params {
    fn default() -> Self {
        F0Params {
            f0_min: 50.0,
            f0_max: 600.0,
            periodicity_threshold: 0.45,
            hop_size: 256,
            frame_length: 1024,
        }
    }
}

impl F0Params {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max && self.f0_max <= nyquist) {
            return param(format!(
                "need 0 < f0_min < f0_max <= {nyquist}, got {}..{}",
                self.f0_min, self.f0_max
            ));
        }
        if !(self.periodicity_threshold > 0.0 && self.periodicity_threshold < 1.0) {
            return param("periodicity threshold must lie in (0, 1)");
        }
        if self.hop_size == 0 || self.frame_length == 0 || self.hop_size > self.frame_length {
            return param("need 0 < hop_size <= frame_length");
        }
        Ok(())
    }

    pub fn analysis_window(&self, sample_rate: u32) -> usize {
        (2.0 * sample_rate as f64 / self.f0_min).ceil() as usize
    }
}

/// Pitch decision for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePitch {
    pub f0: f64,
    pub periodicity: f64,
    pub rms: f64,
    pub voiced: bool,
}

pub fn estimate_f0(w: &Waveform, p: &F0Params) -> Result<(Contour, VuvMask)> {
    w.validate()?;
    p.validate(w.sample_rate)?;
    let sr = w.sample_rate as f64;
    let win = p.analysis_window(w.sample_rate);
    let needed = win.max(p.frame_length);
    if w.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: w.len(),
        });
    }
    let n_frames = 1 + (w.len() - p.frame_length) / p.hop_size;
    let lag_min = ((sr / p.f0_max).floor() as usize).max(2);
    let lag_max = ((sr / p.f0_min).ceil() as usize).min(win - 2);

    let mut values = Vec::with_capacity(n_frames);
    let mut voiced = Vec::with_capacity(n_frames);
    let mut seg = vec![0.0; win];
    for t in 0..n_frames {
        let center = t * p.hop_size + p.frame_length / 2;
        let start = center.saturating_sub(win / 2).min(w.len() - win);
        seg.copy_from_slice(&w.samples[start..start + win]);
        let fp = analyse_frame(&mut seg, sr, lag_min, lag_max, p);
        values.push(if fp.voiced { fp.f0 } else { 0.0 });
        voiced.push(fp.voiced);
    }
    Ok((
        Contour::new(ContourKind::F0, p.hop_size, values),
        VuvMask::new(voiced),
    ))
}

fn analyse_frame(
    seg: &mut [f64],
    sr: f64,
    lag_min: usize,
    lag_max: usize,
    p: &F0Params,
) -> FramePitch {
    let n = seg.len();
    let rms = (seg.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    let unvoiced = FramePitch {
        f0: 0.0,
        periodicity: 0.0,
        rms,
        voiced: false,
    };
    if rms <= SILENCE_RMS {
        return unvoiced;
    }
    let mean = seg.iter().sum::<f64>() / n as f64;
    seg.iter_mut().for_each(|x| *x -= mean);

    // r[k] holds the normalized autocorrelation at lag (lag_min - 1 + k).
    let first = lag_min - 1;
    let r: Vec<f64> = (first..=lag_max + 1)
        .map(|lag| normalized_autocorr(seg, lag))
        .collect();

    let candidates: Vec<usize> = (1..r.len() - 1)
        .filter(|&k| r[k] >= r[k - 1] && r[k] > r[k + 1])
        .collect();
    let best = match candidates.iter().map(|&k| r[k]).reduce(f64::max) {
        Some(b) if b > 0.0 => b,
        _ => return unvoiced,
    };
    let k = candidates
        .into_iter()
        .find(|&k| r[k] >= PEAK_PREFERENCE * best)
        .expect("best candidate qualifies");

    let (offset, peak) = parabolic_peak(r[k - 1], r[k], r[k + 1]);
    let lag = (first + k) as f64 + offset;
    let f0 = sr / lag;
    let voiced = peak > p.periodicity_threshold && f0 >= p.f0_min && f0 <= p.f0_max;
    FramePitch {
        f0,
        periodicity: peak,
        rms,
        voiced,
    }
}

fn normalized_autocorr(x: &[f64], lag: usize) -> f64 {
    let m = x.len() - lag;
    let (head, tail) = (&x[..m], &x[lag..]);
    let cross: f64 = head.iter().zip(tail).map(|(a, b)| a * b).sum();
    let e0: f64 = head.iter().map(|a| a * a).sum();
    let e1: f64 = tail.iter().map(|b| b * b).sum();
    let denom = (e0 * e1).sqrt();
    if denom > 0.0 {
        cross / denom
    } else {
        0.0
    }
}

/// Vertex of the parabola through three equally spaced samples, as
/// (offset from the middle sample, interpolated value).
fn parabolic_peak(left: f64, mid: f64, right: f64) -> (f64, f64) {
    let curvature = left - 2.0 * mid + right;
    if curvature >= 0.0 {
        return (0.0, mid);
    }
    let offset = (0.5 * (left - right) / curvature).clamp(-0.5, 0.5);
    (offset, mid - 0.25 * (left - right) * offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{frame_energy, mel_spectrogram, FrameParams};
    use std::f64::consts::PI;

    fn tone(freq: f64, secs: f64) -> Vec<f64> {
        let n = (secs * 16000.0) as usize;
        (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16000.0).sin())
            .collect()
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn tone_220() {
        let w = Waveform::new(tone(220.0, 1.0), 16000).unwrap();
        let (f0, vuv) = estimate_f0(&w, &F0Params::default()).unwrap();
        assert_eq!(f0.len(), vuv.len());
        let voiced: Vec<f64> = f0.values.iter().copied().filter(|&v| v > 0.0).collect();
        assert!(voiced.len() as f64 >= 0.95 * f0.len() as f64);
        let med = median(voiced);
        assert!((218.0..=222.0).contains(&med), "median {med}");
    }

    #[test]
    fn silence_is_unvoiced() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let (f0, vuv) = estimate_f0(&w, &F0Params::default()).unwrap();
        assert_eq!(vuv.voiced_count(), 0);
        assert!(f0.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_halves() {
        let mut s = tone(100.0, 1.0);
        s.extend(tone(400.0, 1.0));
        let w = Waveform::new(s, 16000).unwrap();
        let p = F0Params::default();
        let (f0, _) = estimate_f0(&w, &p).unwrap();
        let half_frame = |t: usize| t * p.hop_size + p.frame_length / 2 < 16000;
        let first: Vec<f64> = (0..f0.len())
            .filter(|&t| half_frame(t) && f0.values[t] > 0.0)
            .map(|t| f0.values[t])
            .collect();
        let second: Vec<f64> = (0..f0.len())
            .filter(|&t| !half_frame(t) && f0.values[t] > 0.0)
            .map(|t| f0.values[t])
            .collect();
        assert!((median(first) - 100.0).abs() < 2.0);
        assert!((median(second) - 400.0).abs() < 8.0);
    }

    #[test]
    fn frame_count_matches_energy() {
        for n in [1024, 1500, 4096, 16000, 16001] {
            let w = Waveform::new(tone(150.0, n as f64 / 16000.0), 16000).unwrap();
            let (f0, _) = estimate_f0(&w, &F0Params::default()).unwrap();
            let e = frame_energy(&mel_spectrogram(&w, &FrameParams::default()).unwrap());
            assert_eq!(f0.len(), e.len());
        }
    }

    #[test]
    fn errors() {
        let w = Waveform::new(vec![0.1; 500], 16000).unwrap();
        assert!(matches!(
            estimate_f0(&w, &F0Params::default()),
            Err(Error::TooShort { .. })
        ));
        let w = Waveform::new(tone(100.0, 0.5), 16000).unwrap();
        let p = F0Params {
            f0_min: 500.0,
            f0_max: 100.0,
            ..F0Params::default()
        };
        assert!(matches!(estimate_f0(&w, &p), Err(Error::Param(_))));
    }

    #[test]
    fn parabola_vertex() {
        // y = -(x - 0.25)^2 sampled at -1, 0, 1
        let f = |x: f64| -(x - 0.25) * (x - 0.25);
        let (off, val) = parabolic_peak(f(-1.0), f(0.0), f(1.0));
        assert!((off - 0.25).abs() < 1e-12);
        assert!(val.abs() < 1e-12);
    }
}
