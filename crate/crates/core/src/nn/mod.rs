//! Pure-math neural building blocks: embedding lookup, cross-attention,
//! gradient reversal, predictor input assembly and forward passes, and the
//! training losses with analytic gradients.
//!
//! Matrices are row-major `T x D` arrays with one frame (or unit) per row.
//! Linear maps act on row vectors: `y = x W + b`.

pub mod attention;
pub mod loss;
pub mod predictor;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::contour::{resample_linear, Contour, VuvMask};
use crate::error::{param, Error, Result};
use crate::rng::Rng;
use crate::units::Unit;

pub use attention::{cross_attention, AttentionOutput, AttentionParams, ProjectionBlock};
pub use loss::{
    assemble_total_losses, cosine_similarity, cross_entropy, loss_prosody, loss_triplet,
    mel_reconstruction_loss, CrossEntropy, ProsodyLoss, TotalLoss, TripletLoss,
};
pub use predictor::{predictor_forward, PredictorKind, PredictorOutput, PredictorParams};

pub const DEFAULT_EMBED_DIM: usize = 256;

/// Matrix with i.i.d. `N(0, std^2)` entries.
pub fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || std * rng.normal())
}

pub(crate) fn check_finite(m: ArrayView2<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return param(format!("{what} contains non-finite values"));
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimMismatch { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub weights: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        check_finite(weights.view(), "embedding table")?;
        if weights.ncols() == 0 {
            return param("embedding dimension must be positive");
        }
        Ok(EmbeddingTable { weights })
    }

    pub fn random(vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        EmbeddingTable {
            weights: gaussian(vocab, dim, 1.0, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Row `t` of the result is the table row for `units[t]`.
pub fn embed_units(units: &[Unit], table: &EmbeddingTable) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((units.len(), table.dim()));
    for (t, &u) in units.iter().enumerate() {
        let u = u as usize;
        if u >= table.vocab() {
            return Err(Error::Lookup {
                index: u,
                size: table.vocab(),
            });
        }
        out.row_mut(t).assign(&table.weights.row(u));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn random(input: usize, output: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: gaussian(input, output, (1.0 / input as f64).sqrt(), rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.in_dim(), x.ncols())?;
        Ok(x.dot(&self.weight) + &self.bias)
    }
}

/// Lifts a scalar per frame into `D` dimensions: `v * weight + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarProjection {
    pub weight: Array1<f64>,
    pub bias: Array1<f64>,
}

impl ScalarProjection {
    pub fn zeros(dim: usize) -> Self {
        ScalarProjection {
            weight: Array1::zeros(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        ScalarProjection {
            weight: Array1::from_shape_simple_fn(dim, || rng.normal()),
            bias: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }

    pub fn project(&self, values: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((values.len(), self.dim()), |(t, j)| {
            values[t] * self.weight[j] + self.bias[j]
        })
    }
}

/// Projections feeding the F0/energy predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeProjection {
    pub f0: ScalarProjection,
    pub energy: ScalarProjection,
    /// Row 0 embeds unvoiced frames, row 1 voiced frames.
    pub vuv_table: Array2<f64>,
}

impl FeProjection {
    pub fn zeros(dim: usize) -> Self {
        FeProjection {
            f0: ScalarProjection::zeros(dim),
            energy: ScalarProjection::zeros(dim),
            vuv_table: Array2::zeros((2, dim)),
        }
    }

    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        FeProjection {
            f0: ScalarProjection::random(dim, rng),
            energy: ScalarProjection::random(dim, rng),
            vuv_table: gaussian(2, dim, 1.0, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.vuv_table.ncols()
    }
}

/// F0/energy predictor input: the reference F0 and energy (resampled to the
/// content length when needed) projected to `D` dims, plus the content
/// embeddings, plus the embedded VUV mask of the content utterance.
pub fn assemble_fe_input(
    f0: &Contour,
    energy: &Contour,
    content: ArrayView2<f64>,
    vuv: &VuvMask,
    proj: &FeProjection,
) -> Result<Array2<f64>> {
    if f0.is_empty() || energy.is_empty() || content.nrows() == 0 {
        return param("F0, energy and content inputs must be non-empty");
    }
    if f0.len() != energy.len() {
        return param(format!(
            "F0 and energy lengths differ: {} vs {}",
            f0.len(),
            energy.len()
        ));
    }
    let target = content.nrows();
    if vuv.len() != target {
        return param(format!(
            "VUV mask has {} frames, content has {target}",
            vuv.len()
        ));
    }
    check_dim(proj.dim(), content.ncols())?;
    let f0_vals = resample_linear(&f0.values, target);
    let energy_vals = resample_linear(&energy.values, target);
    let mut out = proj.f0.project(&f0_vals) + proj.energy.project(&energy_vals) + content;
    for (t, voiced) in vuv.iter().enumerate() {
        let mut row = out.row_mut(t);
        row += &proj.vuv_table.row(usize::from(voiced));
    }
    Ok(out)
}

/// Duration predictor input: unique-unit embeddings of the content
/// utterance, plus the smoothed reference durations resampled to the
/// unique-unit count and projected, plus the time-averaged disentangled
/// emotion representation broadcast to every position.
pub fn assemble_duration_input(
    unit_embeddings: ArrayView2<f64>,
    durations: &Contour,
    emotion: ArrayView2<f64>,
    proj: &ScalarProjection,
) -> Result<Array2<f64>> {
    if unit_embeddings.nrows() == 0 || durations.is_empty() || emotion.nrows() == 0 {
        return param("duration predictor inputs must be non-empty");
    }
    check_dim(proj.dim(), unit_embeddings.ncols())?;
    check_dim(proj.dim(), emotion.ncols())?;
    let dur = resample_linear(&durations.values, unit_embeddings.nrows());
    let pooled = emotion.mean_axis(ndarray::Axis(0)).expect("non-empty");
    Ok(proj.project(&dur) + unit_embeddings + &pooled)
}

/// Bookkeeping from a gradient-reversal forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrlTape {
    shape: (usize, usize),
}

/// Identity in the forward direction.
pub fn grl_forward(x: ArrayView2<f64>) -> (Array2<f64>, GrlTape) {
    (x.to_owned(), GrlTape { shape: x.dim() })
}

/// Negated, scaled upstream gradient.
pub fn grl_backward(tape: &GrlTape, upstream: ArrayView2<f64>, lambda: f64) -> Result<Array2<f64>> {
    if upstream.dim() != tape.shape {
        return param(format!(
            "upstream gradient shape {:?} does not match forward shape {:?}",
            upstream.dim(),
            tape.shape
        ));
    }
    Ok(upstream.mapv(|g| -lambda * g))
}

pub const DEFAULT_GRL_LAMBDA: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::ContourKind;
    use ndarray::{array, Array2};

    #[test]
    fn embedding_lookup() {
        let mut w = Array2::zeros((3, 4));
        w[[0, 0]] = 1.0;
        w[[1, 1]] = 1.0;
        let tbl = EmbeddingTable::new(w).unwrap();
        let e = embed_units(&[0, 0], &tbl).unwrap();
        assert_eq!(e, array![[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]);
        assert_eq!(embed_units(&[], &tbl).unwrap().dim(), (0, 4));
        assert!(matches!(
            embed_units(&[3], &tbl),
            Err(Error::Lookup { index: 3, size: 3 })
        ));
        let eye = EmbeddingTable::new(Array2::eye(4)).unwrap();
        let e = embed_units(&[2, 0, 3], &eye).unwrap();
        for (t, u) in [2usize, 0, 3].into_iter().enumerate() {
            for j in 0..4 {
                assert_eq!(e[[t, j]], if j == u { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn grl_identity_and_reversal() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let (y, tape) = grl_forward(x.view());
        assert_eq!(y, x);
        let g = array![[1.0, 2.0], [-3.0, 0.0]];
        assert_eq!(grl_backward(&tape, g.view(), 1.0).unwrap(), -&g);
        assert!(grl_backward(&tape, array![[1.0]].view(), 1.0).is_err());
        // d/dx (grl(x))^2 at x = 3 with lambda 2.
        let (fx, tape) = grl_forward(array![[3.0]].view());
        let upstream = fx.mapv(|v| 2.0 * v);
        assert_eq!(
            grl_backward(&tape, upstream.view(), 2.0).unwrap()[[0, 0]],
            -12.0
        );
    }

    fn contour(v: Vec<f64>) -> Contour {
        Contour::new(ContourKind::Energy, 256, v)
    }

    #[test]
    fn fe_input_content_only() {
        let c = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let vuv = VuvMask::new(vec![true, false, true]);
        let out = assemble_fe_input(
            &contour(vec![100.0, 120.0, 130.0]),
            &contour(vec![-1.0, 0.0, 1.0]),
            c.view(),
            &vuv,
            &FeProjection::zeros(2),
        )
        .unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn fe_input_constant_sum() {
        let proj = FeProjection {
            f0: ScalarProjection {
                weight: array![1.0, 1.0],
                bias: array![0.0, 0.0],
            },
            energy: ScalarProjection {
                weight: array![0.0, 0.0],
                bias: array![10.0, 20.0],
            },
            vuv_table: array![[0.0, 0.0], [100.0, 200.0]],
        };
        let c = Array2::from_elem((2, 2), 1000.0);
        let vuv = VuvMask::new(vec![true, true]);
        let out = assemble_fe_input(
            &contour(vec![2.0, 2.0, 2.0, 2.0]),
            &contour(vec![7.0; 4]),
            c.view(),
            &vuv,
            &proj,
        )
        .unwrap();
        assert_eq!(out, array![[1112.0, 1222.0], [1112.0, 1222.0]]);
    }

    #[test]
    fn fe_input_errors() {
        let c = Array2::zeros((3, 2));
        let p = FeProjection::zeros(2);
        let vuv = VuvMask::new(vec![true; 3]);
        assert!(assemble_fe_input(&contour(vec![]), &contour(vec![]), c.view(), &vuv, &p).is_err());
        assert!(assemble_fe_input(
            &contour(vec![1.0]),
            &contour(vec![1.0, 2.0]),
            c.view(),
            &vuv,
            &p
        )
        .is_err());
        let short = VuvMask::new(vec![true; 2]);
        assert!(assemble_fe_input(
            &contour(vec![1.0]),
            &contour(vec![1.0]),
            c.view(),
            &short,
            &p
        )
        .is_err());
        assert!(assemble_fe_input(
            &contour(vec![1.0]),
            &contour(vec![1.0]),
            c.view(),
            &vuv,
            &FeProjection::zeros(3)
        )
        .is_err());
    }

    #[test]
    fn duration_input_shape() {
        let units = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let emo = array![[2.0, 4.0], [4.0, 8.0]];
        let proj = ScalarProjection {
            weight: array![1.0, 0.0],
            bias: array![0.0, 0.0],
        };
        let dur = Contour::new(ContourKind::Duration, 0, vec![1.0, 3.0]);
        let out = assemble_duration_input(units.view(), &dur, emo.view(), &proj).unwrap();
        assert_eq!(out, array![[5.0, 6.0], [5.0, 7.0], [7.0, 7.0]]);
    }
}
