//! Audio ingestion, framing, mel spectrogram and frame energy.
//!
//! Framing uses a periodic Hann window without centering or padding, so a
//! signal of `n` samples yields `1 + (n - window) / hop` frames. Mel bands
//! follow the Slaney mel scale (linear below 1 kHz, logarithmic above) with
//! triangular filters of unit peak height between adjacent band edges.
//! Magnitudes are amplitude, not power.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::contour::{Contour, ContourKind};
use crate::error::{param, Error, Result};

pub const ENERGY_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let w = Waveform {
            samples,
            sample_rate,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return param("sample rate must be positive");
        }
        if self.samples.is_empty() {
            return param("waveform is empty");
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return param("waveform contains non-finite samples");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub window_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams {
            window_size: 1024,
            hop_size: 256,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
        }
    }
}

impl FrameParams {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.hop_size == 0 || self.hop_size > self.window_size {
            return param(format!(
                "hop size {} must be in 1..={}",
                self.hop_size, self.window_size
            ));
        }
        if self.n_mels == 0 {
            return param("n_mels must be at least 1");
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return param(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin={} fmax={}",
                self.fmin, self.fmax
            ));
        }
        Ok(())
    }

    /// Frame count for a signal of `len` samples, or `None` if shorter than
    /// one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.window_size).then(|| 1 + (len - self.window_size) / self.hop_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    /// `T x n_mels` amplitude mel spectrogram.
    pub frames: Array2<f64>,
    pub params: FrameParams,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// Read a 16-bit PCM mono WAV file, scaling samples by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let file = std::io::BufReader::new(std::fs::File::open(path.as_ref())?);
    // Past this point a read failure means a truncated or corrupt file.
    let reader = hound::WavReader::new(file).map_err(read_error)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannels(spec.channels));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedDepth(format!(
            "{}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(read_error)?;
    Waveform::new(samples, spec.sample_rate)
}

/// Write a waveform as 16-bit PCM mono, clipping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(hound_error)?;
    for &s in &w.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(hound_error)?;
    }
    writer.finalize().map_err(hound_error)
}

fn read_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => {
            Error::Format(format!("truncated or unreadable WAV data: {io}"))
        }
        other => hound_error(other),
    }
}

fn hound_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedDepth("unsupported WAV encoding".into()),
        other => Error::Format(other.to_string()),
    }
}

const MEL_F_SP: f64 = 200.0 / 3.0;
const MEL_MIN_LOG_HZ: f64 = 1000.0;
const MEL_MIN_LOG_MEL: f64 = MEL_MIN_LOG_HZ / MEL_F_SP;

fn mel_log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MEL_MIN_LOG_HZ {
        hz / MEL_F_SP
    } else {
        MEL_MIN_LOG_MEL + (hz / MEL_MIN_LOG_HZ).ln() / mel_log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MEL_MIN_LOG_MEL {
        mel * MEL_F_SP
    } else {
        MEL_MIN_LOG_HZ * ((mel - MEL_MIN_LOG_MEL) * mel_log_step()).exp()
    }
}

/// The `n_mels + 2` band edges in Hz, equally spaced on the mel scale.
pub fn mel_band_edges(p: &FrameParams) -> Vec<f64> {
    let lo = hz_to_mel(p.fmin);
    let hi = hz_to_mel(p.fmax);
    let n = p.n_mels + 2;
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Center frequency of each mel band.
pub fn mel_center_frequencies(p: &FrameParams) -> Vec<f64> {
    let edges = mel_band_edges(p);
    edges[1..edges.len() - 1].to_vec()
}

/// `n_mels x (window/2 + 1)` triangular filterbank.
pub fn mel_filterbank(p: &FrameParams, sample_rate: u32) -> Array2<f64> {
    let n_bins = p.window_size / 2 + 1;
    let edges = mel_band_edges(p);
    let bin_hz = sample_rate as f64 / p.window_size as f64;
    Array2::from_shape_fn((p.n_mels, n_bins), |(m, k)| {
        let f = k as f64 * bin_hz;
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let rising = (f - lo) / (mid - lo);
        let falling = (hi - f) / (hi - mid);
        rising.min(falling).max(0.0)
    })
}

pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude STFT frames, `T x (window/2 + 1)`.
pub fn stft_magnitude(w: &Waveform, p: &FrameParams) -> Result<Array2<f64>> {
    let n_frames = p.frame_count(w.len()).ok_or(Error::TooShort {
        needed: p.window_size,
        got: w.len(),
    })?;
    let n_bins = p.window_size / 2 + 1;
    let window = hann_window(p.window_size);
    let fft = FftPlanner::new().plan_fft_forward(p.window_size);
    let mut buf = vec![Complex::new(0.0, 0.0); p.window_size];
    let mut out = Array2::zeros((n_frames, n_bins));
    for t in 0..n_frames {
        let start = t * p.hop_size;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(w.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            out[[t, k]] = buf[k].norm();
        }
    }
    Ok(out)
}

pub fn mel_spectrogram(w: &Waveform, p: &FrameParams) -> Result<MelSpectrogram> {
    w.validate()?;
    p.validate(w.sample_rate)?;
    let mag = stft_magnitude(w, p)?;
    let fb = mel_filterbank(p, w.sample_rate);
    Ok(MelSpectrogram {
        frames: mag.dot(&fb.t()),
        params: *p,
    })
}

/// Per-frame `ln(max(||m_t||, 1e-5))`.
pub fn frame_energy(m: &MelSpectrogram) -> Contour {
    let values = m
        .frames
        .rows()
        .into_iter()
        .map(|row| row.dot(&row).sqrt().max(ENERGY_FLOOR).ln())
        .collect();
    Contour::new(ContourKind::Energy, m.params.hop_size, values)
}
