//! Single-head scaled dot-product attention.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_dim, check_finite, gaussian, Linear};
use crate::error::{param, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
    pub output: Array2<f64>,
}

impl AttentionParams {
    pub fn identity(dim: usize) -> Self {
        let eye = Array2::eye(dim);
        AttentionParams {
            query: eye.clone(),
            key: eye.clone(),
            value: eye.clone(),
            output: eye,
        }
    }

    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        let std = (1.0 / dim as f64).sqrt();
        AttentionParams {
            query: gaussian(dim, dim, std, rng),
            key: gaussian(dim, dim, std, rng),
            value: gaussian(dim, dim, std, rng),
            output: gaussian(dim, dim, std, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.query.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (name, m) in [
            ("query", &self.query),
            ("key", &self.key),
            ("value", &self.value),
            ("output", &self.output),
        ] {
            if m.dim() != (d, d) {
                return param(format!(
                    "{name} projection must be {d}x{d}, got {:?}",
                    m.dim()
                ));
            }
            check_finite(m.view(), name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `T_q x D`.
    pub output: Array2<f64>,
    /// `T_q x T_kv`; every row is a probability distribution.
    pub weights: Array2<f64>,
}

/// `softmax(Q K^T / sqrt(D)) V W_o` with `Q = q_in W_q`, `K = kv_in W_k`,
/// `V = kv_in W_v`.
pub fn cross_attention(
    q_in: ArrayView2<f64>,
    kv_in: ArrayView2<f64>,
    p: &AttentionParams,
) -> Result<AttentionOutput> {
    p.validate()?;
    let d = p.dim();
    check_dim(d, q_in.ncols())?;
    check_dim(d, kv_in.ncols())?;
    if kv_in.nrows() == 0 {
        return param("attention needs at least one key/value row");
    }
    let q = q_in.dot(&p.query);
    let k = kv_in.dot(&p.key);
    let v = kv_in.dot(&p.value);
    let mut weights = q.dot(&k.t()) / (d as f64).sqrt();
    softmax_rows(&mut weights);
    let output = weights.dot(&v).dot(&p.output);
    Ok(AttentionOutput { output, weights })
}

pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Post-attention projection: one linear layer followed by `tanh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBlock {
    pub linear: Linear,
}

impl ProjectionBlock {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        ProjectionBlock {
            linear: Linear::random(dim, dim, rng),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.linear.forward(x)?.mapv(f64::tanh))
    }
}

/// Time-average of a sequence of embeddings.
pub fn mean_pool(x: ArrayView2<f64>) -> Option<Array1<f64>> {
    x.mean_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_kv_row() {
        let q = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 5.0]];
        let kv = array![[0.5, -0.5, 2.0]];
        let out = cross_attention(q.view(), kv.view(), &AttentionParams::identity(3)).unwrap();
        for row in out.output.rows() {
            assert_eq!(row, kv.row(0));
        }
    }

    #[test]
    fn identical_kv_rows() {
        let q = array![[1.0, 2.0], [3.0, -4.0], [0.0, 0.0]];
        let kv = array![[0.25, 7.0], [0.25, 7.0], [0.25, 7.0], [0.25, 7.0]];
        let out = cross_attention(q.view(), kv.view(), &AttentionParams::identity(2)).unwrap();
        for row in out.output.rows() {
            assert!((row[0] - 0.25).abs() < 1e-12 && (row[1] - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = Rng::seeded(3);
        let p = AttentionParams::random(8, &mut rng);
        let q = super::gaussian(5, 8, 3.0, &mut rng);
        let kv = super::gaussian(11, 8, 3.0, &mut rng);
        let out = cross_attention(q.view(), kv.view(), &p).unwrap();
        assert_eq!(out.output.dim(), (5, 8));
        for row in out.weights.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn dim_mismatch() {
        let q = array![[1.0, 2.0]];
        let kv = array![[1.0, 2.0, 3.0]];
        assert!(cross_attention(q.view(), kv.view(), &AttentionParams::identity(2)).is_err());
    }
}
