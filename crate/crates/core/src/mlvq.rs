//! Multi-means quantization: vectors are de-meaned by the nearest of `M`
//! k-means centers instead of a single global mean. `M = 1` reduces exactly
//! to the plain encoder.
//!
//! Centers are fitted once with seeded k-means++ initialization and Lloyd
//! iterations, and stay fixed while a stream runs. The idealized re-fit
//! variant exists purely as an upper-bound baseline for the harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::VectorDataset;
use crate::error::{Error, Result};
use crate::quantize::{self, EncodedVector, MeanVector, QuantizerConfig};

/// `M` mean vectors for multi-means encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    centers: Vec<f32>,
    m: usize,
    dim: usize,
    fit_seed: u64,
    fit_iterations: u32,
}

impl CenterSet {
    /// Single-center set equal to a sample mean; the plain-LVQ case.
    pub fn from_mean(mu: &MeanVector) -> Self {
        Self {
            centers: mu.components().to_vec(),
            m: 1,
            dim: mu.dim(),
            fit_seed: 0,
            fit_iterations: 0,
        }
    }

    pub fn from_centers(centers: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 || centers.is_empty() || centers.len() % dim != 0 {
            return Err(Error::arg("center matrix shape mismatch"));
        }
        if let Some(v) = centers.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite center component {v}")));
        }
        let m = centers.len() / dim;
        Ok(Self {
            centers,
            m,
            dim,
            fit_seed: 0,
            fit_iterations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, m: usize) -> &[f32] {
        &self.centers[m * self.dim..(m + 1) * self.dim]
    }

    pub fn centers_flat(&self) -> &[f32] {
        &self.centers
    }

    pub fn fit_seed(&self) -> u64 {
        self.fit_seed
    }

    pub fn fit_iterations(&self) -> u32 {
        self.fit_iterations
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KmeansOptions {
    pub max_iters: u32,
    pub rel_tolerance: f64,
    /// Replace the first k-means++ seed with the global sample mean.
    pub seed_with_global_mean: bool,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_tolerance: 1e-4,
            seed_with_global_mean: false,
        }
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        let diff = x as f64 - y as f64;
        acc += diff * diff;
    }
    acc
}

/// Index of the Euclidean-nearest center; ties break to the lowest index.
pub fn assign_center(x: &[f32], centers: &CenterSet) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for m in 0..centers.len() {
        let d = sq_dist(x, centers.center(m));
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    best
}

/// Sum of squared distances from every row to its nearest center.
pub fn kmeans_objective(x: &VectorDataset, centers: &CenterSet) -> f64 {
    let n = x.len();
    let chunk = 1024;
    (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|ci| {
            let mut acc = 0f64;
            for i in ci * chunk..((ci + 1) * chunk).min(n) {
                let row = x.row(i);
                acc += sq_dist(row, centers.center(assign_center(row, centers)));
            }
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn kmeanspp_init(x: &VectorDataset, m: usize, rng: &mut ChaCha8Rng, opts: &KmeansOptions) -> Vec<f32> {
    let n = x.len();
    let d = x.dim();
    let mut centers: Vec<f32> = Vec::with_capacity(m * d);
    let mut min_dist = vec![f64::INFINITY; n];

    let push_and_update = |centers: &mut Vec<f32>, min_dist: &mut [f64], c: &[f32], x: &VectorDataset| {
        centers.extend_from_slice(c);
        for i in 0..x.len() {
            let dsq = sq_dist(x.row(i), c);
            if dsq < min_dist[i] {
                min_dist[i] = dsq;
            }
        }
    };

    if opts.seed_with_global_mean {
        let mu = quantize::compute_mean(x, 1.0, 0).expect("non-empty dataset");
        push_and_update(&mut centers, &mut min_dist, mu.components(), x);
    } else {
        let first = rng.random_range(0..n);
        push_and_update(&mut centers, &mut min_dist, x.row(first), x);
    }

    while centers.len() / d < m {
        let total: f64 = min_dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_dist.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with existing centers; any row works.
            rng.random_range(0..n)
        };
        push_and_update(&mut centers, &mut min_dist, x.row(pick), x);
    }
    centers
}

/// Lloyd's iterations from k-means++ initialization. Deterministic for a
/// fixed seed; empty clusters are re-seeded from the farthest point.
pub fn kmeans_fit(x: &VectorDataset, m: usize, seed: u64, opts: &KmeansOptions) -> Result<CenterSet> {
    if m == 0 {
        return Err(Error::arg("center count must be >= 1"));
    }
    if x.len() < m {
        return Err(Error::arg(format!("cannot fit {m} centers to {} vectors", x.len())));
    }
    let d = x.dim();
    if m == 1 {
        // Lloyd's fixed point for a single center is the sample mean; share
        // the mean computation so the reduction is bit-identical.
        let mu = quantize::compute_mean(x, 1.0, seed)?;
        let mut c = CenterSet::from_mean(&mu);
        c.fit_seed = seed;
        c.fit_iterations = 1;
        return Ok(c);
    }

    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp_init(x, m, &mut rng, opts);
    let mut assignment = vec![0u32; n];
    let mut prev_obj = f64::INFINITY;
    let mut iterations = 0u32;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let view = CenterSet {
            centers: centers.clone(),
            m,
            dim: d,
            fit_seed: seed,
            fit_iterations: 0,
        };
        let chunk = 512;
        let parts: Vec<(Vec<u32>, f64)> = (0..n.div_ceil(chunk))
            .into_par_iter()
            .map(|ci| {
                let lo = ci * chunk;
                let hi = ((ci + 1) * chunk).min(n);
                let mut labels = Vec::with_capacity(hi - lo);
                let mut obj = 0f64;
                for i in lo..hi {
                    let row = x.row(i);
                    let a = assign_center(row, &view);
                    labels.push(a as u32);
                    obj += sq_dist(row, view.center(a));
                }
                (labels, obj)
            })
            .collect();
        let mut obj = 0f64;
        {
            let mut at = 0usize;
            for (labels, o) in &parts {
                assignment[at..at + labels.len()].copy_from_slice(labels);
                at += labels.len();
                obj += o;
            }
        }

        let mut sums = vec![0f64; m * d];
        let mut counts = vec![0usize; m];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a as usize] += 1;
            let row = x.row(i);
            let s = &mut sums[a as usize * d..(a as usize + 1) * d];
            for (acc, &v) in s.iter_mut().zip(row) {
                *acc += v as f64;
            }
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for c in 0..m {
            if counts[c] == 0 {
                // Re-seed from the point farthest from its current center.
                let mut far = 0usize;
                let mut far_d = -1.0;
                for i in 0..n {
                    if reseeded.contains(&i) {
                        continue;
                    }
                    let dsq = sq_dist(x.row(i), view.center(assignment[i] as usize));
                    if dsq > far_d {
                        far_d = dsq;
                        far = i;
                    }
                }
                reseeded.push(far);
                centers[c * d..(c + 1) * d].copy_from_slice(x.row(far));
            } else {
                for j in 0..d {
                    centers[c * d + j] = (sums[c * d + j] / counts[c] as f64) as f32;
                }
            }
        }

        if reseeded.is_empty() && prev_obj.is_finite() && prev_obj - obj <= opts.rel_tolerance * prev_obj.max(f64::MIN_POSITIVE) {
            prev_obj = obj;
            break;
        }
        prev_obj = obj;
    }

    Ok(CenterSet {
        centers,
        m,
        dim: d,
        fit_seed: seed,
        fit_iterations: iterations,
    })
}

/// Multi-means encode: de-mean by the nearest center and record its index.
pub fn mlvq_encode(x: &[f32], centers: &CenterSet, cfg: QuantizerConfig) -> Result<EncodedVector> {
    if x.len() != centers.dim() {
        return Err(Error::arg(format!("dimension mismatch: {} vs {}", x.len(), centers.dim())));
    }
    let (b1, b2) = cfg.storage_bits()?;
    let idx = assign_center(x, centers);
    quantize::encode_with_center(x, centers.center(idx), b1, b2, Some(idx as u32))
}

/// Fresh centers on the current database plus a full re-encode; an
/// upper-bound baseline for streaming comparisons.
pub fn mlvq_refit_ideal(
    x: &VectorDataset,
    m: usize,
    cfg: QuantizerConfig,
    seed: u64,
    opts: &KmeansOptions,
) -> Result<(CenterSet, Vec<EncodedVector>)> {
    let centers = kmeans_fit(x, m, seed, opts)?;
    let encoded = x
        .rows()
        .map(|row| mlvq_encode(row, &centers, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((centers, encoded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generate_clustered_dataset;
    use crate::quantize::{compute_mean, epsilon1, lvq_encode, DecodeLevel};

    #[test]
    fn single_center_is_sample_mean() {
        let (x, _) = generate_clustered_dataset(300, 6, 3, 2.0, 7).unwrap();
        let c = kmeans_fit(&x, 1, 9, &KmeansOptions::default()).unwrap();
        let mu = compute_mean(&x, 1.0, 9).unwrap();
        assert_eq!(c.center(0), mu.components());
    }

    #[test]
    fn m_equals_n_distinct_points_has_zero_objective() {
        let data = vec![0.0f32, 0.0, 4.0, 0.0, 0.0, 4.0, 4.0, 4.0, 2.0, -3.0];
        let x = VectorDataset::from_rows(2, data).unwrap();
        let c = kmeans_fit(&x, 5, 3, &KmeansOptions::default()).unwrap();
        let obj = kmeans_objective(&x, &c);
        assert!(obj < 1e-12, "objective {obj}");
    }

    #[test]
    fn two_blobs_recovered() {
        let (x, l) = generate_clustered_dataset(400, 4, 2, 8.0, 5).unwrap();
        let c = kmeans_fit(&x, 2, 1, &KmeansOptions::default()).unwrap();
        let sep = (0..4)
            .map(|j| (l.centroid(0)[j] - l.centroid(1)[j]) as f64)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        // Each fitted center sits near one true blob mean.
        for m in 0..2 {
            let best = (0..2)
                .map(|t| {
                    (0..4)
                        .map(|j| (c.center(m)[j] - l.centroid(t)[j]) as f64)
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.1 * sep, "center {m}: {best} vs separation {sep}");
        }
    }

    #[test]
    fn kmeans_deterministic() {
        let (x, _) = generate_clustered_dataset(500, 5, 4, 3.0, 2).unwrap();
        let a = kmeans_fit(&x, 4, 11, &KmeansOptions::default()).unwrap();
        let b = kmeans_fit(&x, 4, 11, &KmeansOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_rejects_m_above_n() {
        let x = VectorDataset::from_rows(2, vec![1.0, 2.0]).unwrap();
        assert!(kmeans_fit(&x, 2, 0, &KmeansOptions::default()).is_err());
    }

    #[test]
    fn kmeans_recovers_generator_labels() {
        let (x, l) = generate_clustered_dataset(2000, 8, 4, 10.0, 1).unwrap();
        let c = kmeans_fit(&x, 4, 3, &KmeansOptions::default()).unwrap();
        let fitted: Vec<usize> = (0..x.len()).map(|i| assign_center(x.row(i), &c)).collect();
        // Best agreement over all permutations of 4 labels.
        let perms = [
            [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
            [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
            [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
        ];
        let best = perms
            .iter()
            .map(|p| {
                fitted
                    .iter()
                    .zip(l.labels())
                    .filter(|&(&f, &t)| p[f] == t as usize)
                    .count()
            })
            .max()
            .unwrap();
        assert!(best as f64 >= 0.99 * x.len() as f64, "agreement {best}/{}", x.len());
    }

    #[test]
    fn assign_basics_and_oracle() {
        let (x, _) = generate_clustered_dataset(100, 3, 2, 4.0, 6).unwrap();
        let single = kmeans_fit(&x, 1, 0, &KmeansOptions::default()).unwrap();
        assert_eq!(assign_center(x.row(0), &single), 0);

        let c = kmeans_fit(&x, 5, 2, &KmeansOptions::default()).unwrap();
        let exact = c.center(3).to_vec();
        assert_eq!(assign_center(&exact, &c), 3);
        for i in 0..x.len() {
            let got = assign_center(x.row(i), &c);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for m in 0..c.len() {
                let d = sq_dist(x.row(i), c.center(m));
                if d < best_d {
                    best_d = d;
                    best = m;
                }
            }
            assert_eq!(got, best);
        }
    }

    #[test]
    fn m1_reduces_to_plain_encoding() {
        let (x, _) = generate_clustered_dataset(50, 6, 2, 2.0, 8).unwrap();
        let mu = compute_mean(&x, 1.0, 0).unwrap();
        let centers = CenterSet::from_mean(&mu);
        let cfg = QuantizerConfig::new(4.0, 8.0).unwrap();
        for i in 0..x.len() {
            let a = lvq_encode(x.row(i), &mu, cfg).unwrap();
            let b = mlvq_encode(x.row(i), &centers, cfg).unwrap();
            assert_eq!(b.center_id, Some(0));
            assert_eq!((a.codes1, a.lo, a.delta, a.codes2), (b.codes1, b.lo, b.delta, b.codes2));
        }
    }

    #[test]
    fn vector_equal_to_center_encodes_exactly() {
        let (x, _) = generate_clustered_dataset(60, 4, 3, 5.0, 4).unwrap();
        let c = kmeans_fit(&x, 3, 1, &KmeansOptions::default()).unwrap();
        let cfg = QuantizerConfig::new(4.0, 0.0).unwrap();
        let v = c.center(2).to_vec();
        let e = mlvq_encode(&v, &c, cfg).unwrap();
        assert_eq!(e.center_id, Some(2));
        assert_eq!(e.delta, 0.0);
        assert!(e.codes1.iter().all(|&b| b == 0));
        let back = crate::quantize::lvq_decode(&e, DecodeLevel::One, c.center(2)).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn multi_means_lowers_epsilon_when_seeded_with_mean() {
        let (x, _) = generate_clustered_dataset(3000, 8, 10, 4.0, 12).unwrap();
        let cfg = QuantizerConfig::new(4.0, 0.0).unwrap();
        let mu = compute_mean(&x, 1.0, 0).unwrap();
        let plain = CenterSet::from_mean(&mu);
        let opts = KmeansOptions {
            seed_with_global_mean: true,
            ..KmeansOptions::default()
        };
        let many = kmeans_fit(&x, 100, 5, &opts).unwrap();
        let e1 = epsilon1(&x, cfg, &plain).unwrap().total;
        let e100 = epsilon1(&x, cfg, &many).unwrap().total;
        assert!(e100 <= e1, "epsilon1 M=100 {e100} > M=1 {e1}");
    }

    #[test]
    fn refit_deterministic_and_not_worse() {
        let (x, l) = generate_clustered_dataset(600, 6, 3, 6.0, 9).unwrap();
        let cfg = QuantizerConfig::new(4.0, 0.0).unwrap();
        let opts = KmeansOptions::default();
        let (c1, _) = mlvq_refit_ideal(&x, 3, cfg, 7, &opts).unwrap();
        let (c2, _) = mlvq_refit_ideal(&x, 3, cfg, 7, &opts).unwrap();
        assert_eq!(c1, c2);

        // Drop one entire cluster, then compare stale centers to a re-fit.
        let keep: Vec<usize> = (0..x.len()).filter(|&i| l.labels()[i] != 0).collect();
        let shrunk = x.select_rows(&keep).unwrap();
        let (refit, _) = mlvq_refit_ideal(&shrunk, 3, cfg, 7, &opts).unwrap();
        let stale_obj = kmeans_objective(&shrunk, &c1);
        let refit_obj = kmeans_objective(&shrunk, &refit);
        assert!(refit_obj <= stale_obj, "refit {refit_obj} > stale {stale_obj}");

        let stale_eps = epsilon1(&shrunk, cfg, &c1).unwrap().total;
        let refit_eps = epsilon1(&shrunk, cfg, &refit).unwrap().total;
        assert!(refit_eps <= stale_eps, "refit eps {refit_eps} > stale {stale_eps}");
    }

    use crate::dataio::VectorDataset;
}
