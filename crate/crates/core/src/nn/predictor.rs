//! F0/energy and duration predictors: stacked blocks of self-attention and
//! 1-D convolution, each sublayer wrapped in a residual connection followed
//! by layer normalization, then a per-frame linear head.

use ndarray::{Array1, Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use super::attention::{cross_attention, AttentionParams};
use super::{check_dim, gaussian, Linear};
use crate::error::{param, Result};
use crate::rng::Rng;

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gamma[j] + self.beta[j];
            }
        }
        out
    }
}

/// Convolution over time with zero "same" padding. `weight` is
/// `out_channels x in_channels x kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

impl Conv1d {
    pub fn random(input: usize, output: usize, kernel: usize, rng: &mut Rng) -> Self {
        let std = (1.0 / (input * kernel) as f64).sqrt();
        Conv1d {
            weight: Array3::from_shape_simple_fn((output, input, kernel), || std * rng.normal()),
            bias: Array1::zeros(output),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.in_channels(), x.ncols())?;
        let (t_len, k) = (x.nrows(), self.kernel());
        let half = (k / 2) as isize;
        let mut out = Array2::zeros((t_len, self.out_channels()));
        for t in 0..t_len {
            for o in 0..self.out_channels() {
                let mut acc = self.bias[o];
                for tap in 0..k {
                    let src = t as isize + tap as isize - half;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    let row = x.row(src as usize);
                    for (i, &xv) in row.iter().enumerate() {
                        acc += self.weight[[o, i, tap]] * xv;
                    }
                }
                out[[t, o]] = acc;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub attention: AttentionParams,
    pub norm1: LayerNorm,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub norm2: LayerNorm,
}

impl Block {
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let attended = cross_attention(x, x, &self.attention)?.output;
        let h = self.norm1.forward((&x + &attended).view());
        let hidden = self.conv1.forward(h.view())?.mapv(|v| v.max(0.0));
        let ff = self.conv2.forward(hidden.view())?;
        Ok(self.norm2.forward((&h + &ff).view()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Two outputs per frame: log-F0 and energy.
    FeatureEnergy,
    /// One positive output per unit via softplus.
    Duration,
}

impl PredictorKind {
    pub fn n_outputs(self) -> usize {
        match self {
            PredictorKind::FeatureEnergy => 2,
            PredictorKind::Duration => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorParams {
    pub kind: PredictorKind,
    pub blocks: Vec<Block>,
    pub head: Linear,
}

impl PredictorParams {
    /// Randomly initialised predictor with `n_blocks` blocks of width `dim`,
    /// convolution hidden width `hidden` and odd kernel width `kernel`.
    pub fn random(
        kind: PredictorKind,
        dim: usize,
        hidden: usize,
        kernel: usize,
        n_blocks: usize,
        rng: &mut Rng,
    ) -> Self {
        let blocks = (0..n_blocks)
            .map(|_| Block {
                attention: AttentionParams::random(dim, rng),
                norm1: LayerNorm::new(dim),
                conv1: Conv1d::random(dim, hidden, kernel, rng),
                conv2: Conv1d::random(hidden, dim, kernel, rng),
                norm2: LayerNorm::new(dim),
            })
            .collect();
        PredictorParams {
            kind,
            blocks,
            head: Linear::random(dim, kind.n_outputs(), rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.head.in_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.head.out_dim() != self.kind.n_outputs() {
            return param(format!(
                "{:?} head must emit {} outputs, has {}",
                self.kind,
                self.kind.n_outputs(),
                self.head.out_dim()
            ));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.attention.validate()?;
            let consistent = b.attention.dim() == d
                && b.norm1.gamma.len() == d
                && b.norm2.gamma.len() == d
                && b.conv1.in_channels() == d
                && b.conv2.in_channels() == b.conv1.out_channels()
                && b.conv2.out_channels() == d
                && b.conv1.kernel() % 2 == 1
                && b.conv2.kernel() % 2 == 1;
            if !consistent {
                return param(format!(
                    "block {i} dimensions are inconsistent with width {d}"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorOutput {
    FeatureEnergy { log_f0: Vec<f64>, energy: Vec<f64> },
    Duration { durations: Vec<f64> },
}

impl PredictorOutput {
    pub fn len(&self) -> usize {
        match self {
            PredictorOutput::FeatureEnergy { log_f0, .. } => log_f0.len(),
            PredictorOutput::Duration { durations } => durations.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<&[f64]> {
        match self {
            PredictorOutput::FeatureEnergy { log_f0, energy } => vec![log_f0, energy],
            PredictorOutput::Duration { durations } => vec![durations],
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn predictor_forward(x: ArrayView2<f64>, p: &PredictorParams) -> Result<PredictorOutput> {
    if x.nrows() == 0 {
        return param("predictor input is empty");
    }
    p.validate()?;
    check_dim(p.dim(), x.ncols())?;
    let mut h = x.to_owned();
    for block in &p.blocks {
        h = block.forward(h.view())?;
    }
    let head = p.head.forward(h.view())?;
    Ok(match p.kind {
        PredictorKind::FeatureEnergy => PredictorOutput::FeatureEnergy {
            log_f0: head.column(0).to_vec(),
            energy: head.column(1).to_vec(),
        },
        PredictorKind::Duration => PredictorOutput::Duration {
            durations: head.column(0).iter().map(|&v| softplus(v)).collect(),
        },
    })
}

/// Gaussian input batch helper for smoke tests.
pub fn random_input(frames: usize, dim: usize, rng: &mut Rng) -> Array2<f64> {
    gaussian(frames, dim, 1.0, rng)
}
