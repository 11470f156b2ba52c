//! Objective evaluation: DTW alignment, DTW-aligned Pearson correlation of
//! F0/energy contours, word/character error rate, and emotion embedding
//! cosine similarity.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::nn::cosine_similarity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Full dynamic-time-warping alignment with local cost `|a_i - b_j|` and
/// steps (1,0), (0,1), (1,1). On equal accumulated costs the backtrace
/// prefers the diagonal, then advancing in `a`, then advancing in `b`.
pub fn dtw_align(a: &[f64], b: &[f64]) -> Result<AlignmentPath> {
    if a.is_empty() || b.is_empty() {
        return param("DTW inputs must be non-empty");
    }
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![f64::INFINITY; n * m];
    let idx = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let local = (a[i] - b[j]).abs();
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 {
                    acc[idx(i - 1, j - 1)]
                } else {
                    f64::INFINITY
                };
                let up = if i > 0 {
                    acc[idx(i - 1, j)]
                } else {
                    f64::INFINITY
                };
                let left = if j > 0 {
                    acc[idx(i, j - 1)]
                } else {
                    f64::INFINITY
                };
                diag.min(up).min(left)
            };
            acc[idx(i, j)] = local + best_prev;
        }
    }

    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[idx(i - 1, j - 1)];
            let up = acc[idx(i - 1, j)];
            let left = acc[idx(i, j - 1)];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(AlignmentPath {
        pairs,
        cost: acc[idx(n - 1, m - 1)],
    })
}

/// Sample Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return param("Pearson correlation needs two equal-length non-empty samples");
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::UndefinedCorrelation);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// DTW-align two contours and correlate the values paired along the path.
/// With `drop_unvoiced`, zero (unvoiced F0) frames are removed from both
/// sides before alignment.
pub fn aligned_pcc(a: &[f64], b: &[f64], drop_unvoiced: bool) -> Result<f64> {
    let keep = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .copied()
            .filter(|&x| !drop_unvoiced || x != 0.0)
            .collect()
    };
    let (a, b) = (keep(a), keep(b));
    if a.is_empty() || b.is_empty() {
        return param("no frames left to correlate");
    }
    let path = dtw_align(&a, &b)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = path.pairs.iter().map(|&(i, j)| (a[i], b[j])).unzip();
    pearson(&xs, &ys)
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance as a percentage of the reference length.
pub fn error_rate<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return param("reference must be non-empty");
    }
    Ok(100.0 * edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Lowercase, strip punctuation other than apostrophes, collapse whitespace.
pub fn normalize_transcript(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '\'' {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn word_error_rate(reference: &str, hypothesis: &str) -> Result<f64> {
    let r = normalize_transcript(reference);
    let h = normalize_transcript(hypothesis);
    let rw: Vec<&str> = r.split_whitespace().collect();
    let hw: Vec<&str> = h.split_whitespace().collect();
    error_rate(&rw, &hw)
}

/// Character error rate over the normalized transcripts, spaces included.
pub fn character_error_rate(reference: &str, hypothesis: &str) -> Result<f64> {
    let rc: Vec<char> = normalize_transcript(reference).chars().collect();
    let hc: Vec<char> = normalize_transcript(hypothesis).chars().collect();
    error_rate(&rc, &hc)
}

/// Emotion embedding cosine similarity.
pub fn eecs(e1: ArrayView1<f64>, e2: ArrayView1<f64>) -> Result<f64> {
    cosine_similarity(e1, e2)
}

/// One utterance pair's metrics; absent inputs give `None` (JSON `null`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub wer: Option<f64>,
    pub cer: Option<f64>,
    pub eecs: Option<f64>,
    pub f0_pcc: Option<f64>,
    pub e_pcc: Option<f64>,
}

impl MetricReport {
    /// Per-field mean over the reports where the field is present.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        fn avg(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
            let v: Vec<f64> = vals.flatten().collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        }
        MetricReport {
            wer: avg(reports.iter().map(|r| r.wer)),
            cer: avg(reports.iter().map(|r| r.cer)),
            eecs: avg(reports.iter().map(|r| r.eecs)),
            f0_pcc: avg(reports.iter().map(|r| r.f0_pcc)),
            e_pcc: avg(reports.iter().map(|r| r.e_pcc)),
        }
    }
}
