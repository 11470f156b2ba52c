//! Training losses and their analytic gradients.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::contour::VuvMask;
use crate::error::{param, Error, Result};

/// Default weight of the mel reconstruction term; every other term is 1.
pub const RECON_WEIGHT: f64 = 45.0;

/// Default triplet margin.
pub const TRIPLET_MARGIN: f64 = 0.3;

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (u.dot(&u).sqrt(), v.dot(&v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyLoss {
    pub value: f64,
    pub f0: f64,
    pub energy: f64,
    pub duration: f64,
    pub grad_f0: Vec<f64>,
    pub grad_energy: Vec<f64>,
    pub grad_duration: Vec<f64>,
}

/// Squared error on F0 (voiced frames only) and energy, absolute error on
/// durations, each averaged over its frames and then summed.
///
/// F0 predictions and targets are compared as given; the F0/energy head
/// emits log-F0, so callers pass log-F0 targets.
pub fn loss_prosody(
    f0_hat: &[f64],
    f0: &[f64],
    vuv: &VuvMask,
    energy_hat: &[f64],
    energy: &[f64],
    dur_hat: &[f64],
    dur: &[f64],
) -> Result<ProsodyLoss> {
    let pairs = [
        ("F0", f0_hat.len(), f0.len()),
        ("VUV", f0_hat.len(), vuv.len()),
        ("energy", energy_hat.len(), energy.len()),
        ("duration", dur_hat.len(), dur.len()),
    ];
    for (name, a, b) in pairs {
        if a != b {
            return param(format!("{name} lengths differ: {a} vs {b}"));
        }
    }
    if energy.is_empty() || dur.is_empty() {
        return param("energy and duration sequences must be non-empty");
    }

    let voiced = vuv.voiced_count();
    let mut grad_f0 = vec![0.0; f0.len()];
    let mut f0_loss = 0.0;
    if voiced == 0 {
        log::warn!("no voiced frames; F0 loss term is 0");
    } else {
        let nv = voiced as f64;
        for (t, is_voiced) in vuv.iter().enumerate() {
            if is_voiced {
                let diff = f0_hat[t] - f0[t];
                f0_loss += diff * diff / nv;
                grad_f0[t] = 2.0 * diff / nv;
            }
        }
    }

    let ne = energy.len() as f64;
    let mut energy_loss = 0.0;
    let grad_energy = energy_hat
        .iter()
        .zip(energy)
        .map(|(h, y)| {
            let diff = h - y;
            energy_loss += diff * diff / ne;
            2.0 * diff / ne
        })
        .collect();

    let nd = dur.len() as f64;
    let mut dur_loss = 0.0;
    let grad_duration = dur_hat
        .iter()
        .zip(dur)
        .map(|(h, y)| {
            let diff = h - y;
            dur_loss += diff.abs() / nd;
            sign(diff) / nd
        })
        .collect();

    Ok(ProsodyLoss {
        value: f0_loss + energy_loss + dur_loss,
        f0: f0_loss,
        energy: energy_loss,
        duration: dur_loss,
        grad_f0,
        grad_energy,
        grad_duration,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub value: f64,
    /// Number of triplets with a positive hinge.
    pub active: usize,
    pub grad_anchor: Array2<f64>,
    pub grad_positive: Array2<f64>,
    pub grad_negative: Array2<f64>,
}

/// `sum_i max(0, sim(a_i, n_i) - sim(a_i, p_i) + margin)` with cosine
/// similarity.
pub fn loss_triplet(
    anchors: ArrayView2<f64>,
    positives: ArrayView2<f64>,
    negatives: ArrayView2<f64>,
    margin: f64,
) -> Result<TripletLoss> {
    if positives.dim() != anchors.dim() || negatives.dim() != anchors.dim() {
        return param(format!(
            "triplet shapes differ: {:?}, {:?}, {:?}",
            anchors.dim(),
            positives.dim(),
            negatives.dim()
        ));
    }
    let mut out = TripletLoss {
        value: 0.0,
        active: 0,
        grad_anchor: Array2::zeros(anchors.dim()),
        grad_positive: Array2::zeros(anchors.dim()),
        grad_negative: Array2::zeros(anchors.dim()),
    };
    for i in 0..anchors.nrows() {
        let (a, p, n) = (anchors.row(i), positives.row(i), negatives.row(i));
        let na = norm_checked(a, "anchor", i)?;
        let np = norm_checked(p, "positive", i)?;
        let nn = norm_checked(n, "negative", i)?;
        let s_ap = a.dot(&p) / (na * np);
        let s_an = a.dot(&n) / (na * nn);
        let hinge = s_an - s_ap + margin;
        if hinge <= 0.0 {
            continue;
        }
        out.value += hinge;
        out.active += 1;
        // d sim(x, y) / dx = y / (|x||y|) - sim * x / |x|^2
        let d_an_a = &n / (na * nn) - &(&a * (s_an / (na * na)));
        let d_ap_a = &p / (na * np) - &(&a * (s_ap / (na * na)));
        let d_an_n = &a / (na * nn) - &(&n * (s_an / (nn * nn)));
        let d_ap_p = &a / (na * np) - &(&p * (s_ap / (np * np)));
        out.grad_anchor.row_mut(i).assign(&(d_an_a - d_ap_a));
        out.grad_negative.row_mut(i).assign(&d_an_n);
        out.grad_positive.row_mut(i).assign(&(-d_ap_p));
    }
    Ok(out)
}

fn norm_checked(v: ArrayView1<f64>, role: &str, row: usize) -> Result<f64> {
    let n = v.dot(&v).sqrt();
    if n == 0.0 {
        return Err(Error::Degenerate(format!("{role} row {row} has zero norm")));
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    /// `(softmax(logits) - onehot(labels)) / N`.
    pub grad: Array2<f64>,
}

/// Mean softmax cross-entropy.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<CrossEntropy> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return param(format!("{} labels for {n} rows", labels.len()));
    }
    if n == 0 || c == 0 {
        return param("cross-entropy needs at least one row and one class");
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return param(format!("label {bad} out of range for {c} classes"));
    }
    let mut grad = Array2::zeros((n, c));
    let mut value = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        value += (log_z - row[label]) / n as f64;
        for j in 0..c {
            let p = (row[j] - log_z).exp();
            grad[[i, j]] = (p - if j == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok(CrossEntropy { value, grad })
}

/// Mean absolute error between two mel spectrograms.
pub fn mel_reconstruction_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return param(format!(
            "mel shapes differ: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        ));
    }
    if pred.is_empty() {
        return param("mel spectrograms are empty");
    }
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalLoss {
    pub value: f64,
    /// Each part after weighting.
    pub weighted: BTreeMap<String, f64>,
}

/// Weighted sum of named loss parts. Parts without an explicit weight get
/// weight 1; a weight naming an absent part is an error.
pub fn assemble_total_losses(
    parts: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
) -> Result<TotalLoss> {
    if let Some(name) = weights.keys().find(|k| !parts.contains_key(*k)) {
        return param(format!("weight given for missing loss part '{name}'"));
    }
    let mut weighted = BTreeMap::new();
    for (name, &value) in parts {
        let w = weights.get(name).copied().unwrap_or(1.0);
        if !value.is_finite() || !w.is_finite() {
            return param(format!("loss part '{name}' or its weight is not finite"));
        }
        weighted.insert(name.clone(), w * value);
    }
    Ok(TotalLoss {
        value: weighted.values().sum(),
        weighted,
    })
}

/// Default weights for the generator objective: reconstruction 45.
pub fn default_weights() -> BTreeMap<String, f64> {
    BTreeMap::from([("recon".to_string(), RECON_WEIGHT)])
}

/// Named parts of the full generator objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLossParts {
    /// Adversarial loss supplied by an external discriminator.
    pub adv: f64,
    /// Feature-matching loss supplied by an external discriminator.
    pub fm: f64,
    /// Mel reconstruction MAE.
    pub recon: f64,
    pub triplet: f64,
    pub emotion_grl: f64,
    pub content_grl: f64,
    pub prosody: f64,
}

impl GeneratorLossParts {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("adv".to_string(), self.adv),
            ("fm".to_string(), self.fm),
            ("recon".to_string(), self.recon),
            ("triplet".to_string(), self.triplet),
            ("emotion_grl".to_string(), self.emotion_grl),
            ("content_grl".to_string(), self.content_grl),
            ("prosody".to_string(), self.prosody),
        ])
    }
}
