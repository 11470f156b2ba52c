//! Discrete content units: K-means codebooks over frame features, nearest
//! centroid assignment, and run-length deduplication into unit durations.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng::Rng;

pub type Unit = u32;

pub const DEFAULT_VOCAB: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub centroids: Array2<f64>,
}

impl Codebook {
    pub fn new(centroids: Array2<f64>) -> Result<Self> {
        if centroids.nrows() == 0 || centroids.ncols() == 0 {
            return param("codebook needs at least one centroid of positive dimension");
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return param("codebook contains non-finite values");
        }
        Ok(Codebook { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Index of the nearest centroid by squared distance; lowest index wins ties.
    pub fn nearest(&self, x: ArrayView1<f64>) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.rows().into_iter().enumerate() {
            let d = sq_dist(x, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Inertia after each Lloyd iteration (index 0 is the seeding).
    pub inertia: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_features(features: ArrayView2<f64>) -> Result<()> {
    if features.iter().any(|v| !v.is_finite()) {
        return param("feature matrix contains non-finite values");
    }
    Ok(())
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops when the assignment no longer changes or after `max_iters`
/// iterations. Empty clusters keep their previous centroid. Output depends
/// only on `seed`, not on the rayon worker count.
pub fn kmeans_fit(
    features: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansFit> {
    let (n, dim) = features.dim();
    if k == 0 {
        return param("k must be at least 1");
    }
    if n < k {
        return Err(Error::InsufficientData { frames: n, k });
    }
    if dim == 0 {
        return param("features must have positive dimension");
    }
    check_features(features)?;

    let mut rng = Rng::seeded(seed);
    let mut codebook = Codebook {
        centroids: kmeans_pp(features, k, &mut rng),
    };
    let (mut labels, first) = assign_all(features, &codebook);
    let mut inertia = vec![first];
    let mut converged = false;
    for _ in 0..max_iters {
        codebook.centroids = update_centroids(features, &labels, &codebook.centroids);
        let (next, value) = assign_all(features, &codebook);
        let prev = *inertia.last().unwrap();
        debug_assert!(
            value <= prev + 1e-9 * prev.abs().max(1.0),
            "inertia increased from {prev} to {value}"
        );
        inertia.push(value);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    Ok(KMeansFit {
        codebook,
        inertia,
        converged,
    })
}

fn kmeans_pp(features: ArrayView2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = features.nrows();
    let mut chosen = vec![rng.below(n as u64) as usize];
    let mut d2: Vec<f64> = features
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, features.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Every point coincides with a chosen centroid.
            rng.below(n as u64) as usize
        };
        chosen.push(next);
        for (i, r) in features.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, features.row(next)));
        }
    }
    features.select(Axis(0), &chosen)
}

fn assign_all(features: ArrayView2<f64>, cb: &Codebook) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = (0..features.nrows())
        .into_par_iter()
        .map(|i| cb.nearest(features.row(i)))
        .collect();
    let inertia = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), inertia)
}

fn update_centroids(
    features: ArrayView2<f64>,
    labels: &[usize],
    prev: &Array2<f64>,
) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros(prev.dim());
    let mut counts = vec![0usize; prev.nrows()];
    for (row, &l) in features.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            sums.row_mut(i).assign(&prev.row(i));
        } else {
            sums.row_mut(i).mapv_inplace(|v| v / c as f64);
        }
    }
    sums
}

pub fn kmeans_assign(features: ArrayView2<f64>, cb: &Codebook) -> Result<Vec<Unit>> {
    if features.ncols() != cb.dim() {
        return Err(Error::DimMismatch {
            expected: cb.dim(),
            got: features.ncols(),
        });
    }
    check_features(features)?;
    let (labels, _) = assign_all(features, cb);
    Ok(labels.into_iter().map(|l| l as Unit).collect())
}

/// Run-length encoded unit sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DedupResult {
    pub unique_units: Vec<Unit>,
    pub counts: Vec<u32>,
}

impl DedupResult {
    pub fn validate(&self) -> Result<()> {
        if self.unique_units.len() != self.counts.len() {
            return param(format!(
                "{} units but {} counts",
                self.unique_units.len(),
                self.counts.len()
            ));
        }
        if self.counts.contains(&0) {
            return param("run counts must be positive");
        }
        if self.unique_units.windows(2).any(|w| w[0] == w[1]) {
            return param("adjacent unique units must differ");
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

pub fn dedup(units: &[Unit]) -> DedupResult {
    let mut out = DedupResult::default();
    for &u in units {
        match out.unique_units.last() {
            Some(&last) if last == u => *out.counts.last_mut().unwrap() += 1,
            _ => {
                out.unique_units.push(u);
                out.counts.push(1);
            }
        }
    }
    out
}

pub fn expand(d: &DedupResult) -> Result<Vec<Unit>> {
    d.validate()?;
    let mut out = Vec::with_capacity(d.total_len());
    for (&u, &c) in d.unique_units.iter().zip(&d.counts) {
        out.extend(std::iter::repeat_n(u, c as usize));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn dedup_cases() {
        let d = dedup(&[5, 5, 5, 2, 2, 7]);
        assert_eq!(d.unique_units, vec![5, 2, 7]);
        assert_eq!(d.counts, vec![3, 2, 1]);
        assert_eq!(dedup(&[]), DedupResult::default());
    }

    #[test]
    fn expand_cases() {
        let d = DedupResult {
            unique_units: vec![5, 2, 7],
            counts: vec![3, 2, 1],
        };
        assert_eq!(expand(&d).unwrap(), vec![5, 5, 5, 2, 2, 7]);
        assert!(expand(&DedupResult::default()).unwrap().is_empty());
        let d = DedupResult {
            unique_units: vec![3],
            counts: vec![4],
        };
        assert_eq!(expand(&d).unwrap(), vec![3, 3, 3, 3]);
        let bad = DedupResult {
            unique_units: vec![3, 4],
            counts: vec![1, 0],
        };
        assert!(expand(&bad).is_err());
    }

    #[test]
    fn two_points_two_clusters() {
        let x = array![[0.0, 0.0], [3.0, 4.0]];
        let fit = kmeans_fit(x.view(), 2, 11, 50).unwrap();
        assert_eq!(*fit.inertia.last().unwrap(), 0.0);
        let mut rows: Vec<Vec<f64>> = fit
            .codebook
            .centroids
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn single_cluster_is_mean() {
        let x = array![[1.0, 2.0], [3.0, -2.0], [5.0, 6.0], [-1.0, 0.0]];
        let fit = kmeans_fit(x.view(), 1, 3, 10).unwrap();
        let c = fit.codebook.centroids.row(0);
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn insufficient_data() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            kmeans_fit(x.view(), 3, 0, 10),
            Err(Error::InsufficientData { frames: 2, k: 3 })
        ));
    }

    #[test]
    fn duplicate_points() {
        let x = array![[1.0], [1.0], [1.0]];
        let fit = kmeans_fit(x.view(), 2, 5, 10).unwrap();
        assert_eq!(fit.codebook.k(), 2);
        assert_eq!(*fit.inertia.last().unwrap(), 0.0);
    }

    #[test]
    fn assign_exact_and_ties() {
        let cb = Codebook::new(array![
            [0.0, 0.0],
            [1.0, 0.0],
            [-1.0, 0.0],
            [0.0, 5.0],
            [9.0, 9.0],
            [1.0, 0.0]
        ])
        .unwrap();
        let u = kmeans_assign(cb.centroids.view(), &cb).unwrap();
        // Row 5 duplicates row 1, so the lower index wins.
        assert_eq!(u, vec![0, 1, 2, 3, 4, 1]);
        // (0.5, 0) is equidistant to centroids 0 and 1.
        assert_eq!(
            kmeans_assign(array![[0.5, 0.0]].view(), &cb).unwrap(),
            vec![0]
        );
        // Equidistant to 2 and 5 only: (0,0) removed via a different book.
        let cb2 = Codebook::new(array![[9.0], [9.0], [-1.0], [9.0], [9.0], [1.0]]).unwrap();
        assert_eq!(kmeans_assign(array![[0.0]].view(), &cb2).unwrap(), vec![2]);
        assert!(matches!(
            kmeans_assign(array![[0.0, 0.0, 0.0]].view(), &cb),
            Err(Error::DimMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    proptest! {
        #[test]
        fn dedup_expand_roundtrip(u in proptest::collection::vec(0u32..4, 0..100)) {
            let d = dedup(&u);
            prop_assert!(d.validate().is_ok());
            prop_assert_eq!(d.total_len(), u.len());
            prop_assert_eq!(expand(&d).unwrap(), u);
        }
    }
}
