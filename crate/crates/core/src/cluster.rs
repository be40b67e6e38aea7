//! K-Means and DBSCAN.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{squared_euclidean, Points};

/// Label used for noise points.
pub const NOISE: i32 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid label {0}; labels must be -1 or non-negative")]
    InvalidLabel(i32),
    #[error("k must be in 1..={n}, got {k}")]
    InvalidK { k: usize, n: usize },
    #[error("only {distinct} distinct points for k = {k}")]
    TooFewDistinctPoints { k: usize, distinct: usize },
    #[error("eps must be positive and finite, got {0}")]
    InvalidEps(f64),
    #[error("min_pts must be at least 1")]
    InvalidMinPts,
    #[error("no points to cluster")]
    Empty,
}

/// Per-point labels, noise as `-1`, clusters numbered densely `0..n_clusters`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<i32>,
    n_clusters: usize,
}

impl ClusterAssignment {
    /// Validates and densifies arbitrary labels. Cluster ids keep their
    /// relative numeric order; `-1` stays noise.
    pub fn from_labels(raw: Vec<i32>) -> Result<Self, ClusterError> {
        if let Some(&bad) = raw.iter().find(|&&l| l < NOISE) {
            return Err(ClusterError::InvalidLabel(bad));
        }
        let mut ids: Vec<i32> = raw.iter().copied().filter(|&l| l >= 0).collect();
        ids.sort_unstable();
        ids.dedup();
        let remap: BTreeMap<i32, i32> = ids.iter().enumerate().map(|(i, &l)| (l, i as i32)).collect();
        let labels = raw
            .into_iter()
            .map(|l| if l == NOISE { NOISE } else { remap[&l] })
            .collect();
        Ok(ClusterAssignment {
            labels,
            n_clusters: ids.len(),
        })
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of clusters, noise excluded.
    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster as i32)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step, final one included.
    pub inertia_trace: Vec<f64>,
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_euclidean(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &Points, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    (0..points.len())
        .into_par_iter()
        .map(|i| nearest_centroid(points.row(i), centroids))
        .unzip()
}

fn kmeans_plus_plus(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, ClusterError> {
    let n = points.len();
    let mut centroids = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut closest: Vec<f64> = points
        .rows()
        .map(|p| squared_euclidean(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        if total <= 0.0 {
            return Err(ClusterError::TooFewDistinctPoints {
                k,
                distinct: centroids.len(),
            });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, w) in closest.iter().enumerate() {
            acc += w;
            if acc > target && *w > 0.0 {
                pick = i;
                break;
            }
        }
        while closest[pick] == 0.0 {
            // float round-off ran past the end; walk back to a usable point
            pick -= 1;
        }
        let c = points.row(pick).to_vec();
        for (d, p) in closest.iter_mut().zip(points.rows()) {
            *d = d.min(squared_euclidean(p, &c));
        }
        centroids.push(c);
    }
    Ok(centroids)
}

// Moves the centroid of every empty cluster onto the point farthest from its
// own centroid.
fn repair_empty(points: &Points, labels: &[usize], dists: &[f64], centroids: &mut [Vec<f64>]) -> bool {
    let mut counts = vec![0usize; centroids.len()];
    for &l in labels {
        counts[l] += 1;
    }
    let mut dists = dists.to_vec();
    let mut repaired = false;
    for (j, &count) in counts.iter().enumerate() {
        if count > 0 {
            continue;
        }
        let (far, d) = dists
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best });
        if d <= 0.0 {
            continue;
        }
        centroids[j] = points.row(far).to_vec();
        dists[far] = 0.0;
        repaired = true;
    }
    repaired
}

/// Lloyd's algorithm from a k-means++ start.
pub fn kmeans(points: &Points, params: KMeansParams) -> Result<KMeansResult, ClusterError> {
    let n = points.len();
    if params.k == 0 || params.k > n {
        return Err(ClusterError::InvalidK { k: params.k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_plus_plus(points, params.k, &mut rng)?;
    let dim = points.dim();
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..params.max_iter {
        iterations += 1;
        let (labels, dists) = assign(points, &centroids);
        trace.push(dists.iter().sum::<f64>());

        let mut sums = vec![vec![0.0; dim]; params.k];
        let mut counts = vec![0usize; params.k];
        for (p, &l) in points.rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut updated: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| {
                if c == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / c as f64).collect()
                }
            })
            .collect();
        repair_empty(points, &labels, &dists, &mut updated);

        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_euclidean(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift <= params.tol {
            break;
        }
    }

    let mut final_labels;
    let mut final_dists;
    let mut attempts = 0;
    loop {
        (final_labels, final_dists) = assign(points, &centroids);
        attempts += 1;
        if attempts > params.k || !repair_empty(points, &final_labels, &final_dists, &mut centroids) {
            break;
        }
    }
    let mut counts = vec![0usize; params.k];
    for &l in &final_labels {
        counts[l] += 1;
    }
    if counts.contains(&0) {
        return Err(ClusterError::TooFewDistinctPoints {
            k: params.k,
            distinct: counts.iter().filter(|&&c| c > 0).count(),
        });
    }
    let inertia = final_dists.iter().sum();
    trace.push(inertia);
    Ok(KMeansResult {
        assignment: ClusterAssignment {
            labels: final_labels.into_iter().map(|l| l as i32).collect(),
            n_clusters: params.k,
        },
        centroids,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self, ClusterError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ClusterError::InvalidEps(eps));
        }
        if min_pts == 0 {
            return Err(ClusterError::InvalidMinPts);
        }
        Ok(DbscanParams { eps, min_pts })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbscanResult {
    pub assignment: ClusterAssignment,
    /// `true` where the point's eps-neighbourhood (itself included) holds at
    /// least `min_pts` points.
    pub core: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Unassigned,
    Noise,
    Cluster(usize),
}

/// Indices within `eps` of point `i`, `i` included, ascending.
pub fn region_query(points: &Points, i: usize, eps: f64) -> Vec<usize> {
    let p = points.row(i);
    let eps2 = eps * eps;
    (0..points.len())
        .filter(|&j| squared_euclidean(p, points.row(j)) <= eps2)
        .collect()
}

/// DBSCAN as a sequential linear scan.
///
/// A point whose neighbourhood is too small is provisionally noise and may
/// later be claimed as a border point by the first cluster that reaches it.
/// Clusters are numbered in creation order.
pub fn dbscan(points: &Points, params: DbscanParams) -> Result<DbscanResult, ClusterError> {
    let n = points.len();
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    let DbscanParams { eps, min_pts } = DbscanParams::new(params.eps, params.min_pts)?;
    let mut state = vec![State::Unassigned; n];
    let mut core = vec![false; n];
    let mut queued = vec![false; n];
    let mut next_cluster = 0;

    for p in 0..n {
        if state[p] != State::Unassigned {
            continue;
        }
        let neighbors = region_query(points, p, eps);
        core[p] = neighbors.len() >= min_pts;
        if !core[p] {
            state[p] = State::Noise;
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        state[p] = State::Cluster(c);

        queued.iter_mut().for_each(|q| *q = false);
        queued[p] = true;
        let mut seeds: Vec<usize> = Vec::with_capacity(neighbors.len());
        for q in neighbors {
            if !queued[q] {
                queued[q] = true;
                seeds.push(q);
            }
        }
        let mut k = 0;
        while k < seeds.len() {
            let q = seeds[k];
            k += 1;
            if state[q] == State::Noise {
                state[q] = State::Cluster(c);
            }
            if state[q] != State::Unassigned {
                continue;
            }
            let neighbors = region_query(points, q, eps);
            state[q] = State::Cluster(c);
            core[q] = neighbors.len() >= min_pts;
            if !core[q] {
                continue;
            }
            for r in neighbors {
                if !queued[r] {
                    queued[r] = true;
                    seeds.push(r);
                }
            }
        }
    }

    let labels = state
        .into_iter()
        .map(|s| match s {
            State::Cluster(c) => c as i32,
            _ => NOISE,
        })
        .collect();
    Ok(DbscanResult {
        assignment: ClusterAssignment {
            labels,
            n_clusters: next_cluster,
        },
        core,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> Points {
        Points::from_scalars(values)
    }

    #[test]
    fn assignment_densifies() {
        let a = ClusterAssignment::from_labels(vec![5, -1, 2, 5, 9]).unwrap();
        assert_eq!(a.labels(), &[1, -1, 0, 1, 2]);
        assert_eq!(a.n_clusters(), 3);
        assert_eq!(a.noise_count(), 1);
        assert_eq!(a.cluster_sizes(), vec![1, 2, 1]);
        assert_eq!(a.members(1), vec![0, 3]);
        assert_eq!(
            ClusterAssignment::from_labels(vec![0, -2]),
            Err(ClusterError::InvalidLabel(-2))
        );
    }

    #[test]
    fn kmeans_four_point_optimum() {
        let pts = line(&[0.0, 1.0, 10.0, 11.0]);
        // exhaustive check over all 2-partitions
        let values = [0.0, 1.0, 10.0, 11.0];
        let mut best = f64::INFINITY;
        for mask in 1u32..15 {
            let (a, b): (Vec<f64>, Vec<f64>) = (0..4)
                .map(|i| (mask >> i & 1 == 1, values[i]))
                .fold((vec![], vec![]), |(mut a, mut b), (in_a, v)| {
                    if in_a { a.push(v) } else { b.push(v) }
                    (a, b)
                });
            let sse = |g: &[f64]| {
                let m = g.iter().sum::<f64>() / g.len() as f64;
                g.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            };
            best = best.min(sse(&a) + sse(&b));
        }
        assert_eq!(best, 1.0);
        for seed in 0..20 {
            let r = kmeans(&pts, KMeansParams::new(2, seed)).unwrap();
            assert!((r.inertia - best).abs() < 1e-12);
            let mut cs: Vec<f64> = r.centroids.iter().map(|c| c[0]).collect();
            cs.sort_by(f64::total_cmp);
            assert_eq!(cs, vec![0.5, 10.5]);
            let l = r.assignment.labels();
            assert_eq!(l[0], l[1]);
            assert_eq!(l[2], l[3]);
            assert_ne!(l[0], l[2]);
        }
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = line(&[3.0, -1.0, 8.0, 2.5, 7.0]);
        let r = kmeans(&pts, KMeansParams::new(5, 3)).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.assignment.n_clusters(), 5);
    }

    #[test]
    fn kmeans_k_one_is_total_variance() {
        let values = [1.0, 2.0, 4.0, 9.0];
        let r = kmeans(&line(&values), KMeansParams::new(1, 0)).unwrap();
        let mean = values.iter().sum::<f64>() / 4.0;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((r.centroids[0][0] - mean).abs() < 1e-12);
        assert!((r.inertia - var * 4.0).abs() < 1e-9);
    }

    #[test]
    fn kmeans_errors() {
        let pts = line(&[1.0, 2.0]);
        assert_eq!(kmeans(&pts, KMeansParams::new(3, 0)), Err(ClusterError::InvalidK { k: 3, n: 2 }));
        assert_eq!(kmeans(&pts, KMeansParams::new(0, 0)), Err(ClusterError::InvalidK { k: 0, n: 2 }));
        assert!(matches!(
            kmeans(&line(&[1.0, 1.0, 1.0]), KMeansParams::new(2, 0)),
            Err(ClusterError::TooFewDistinctPoints { .. })
        ));
    }

    #[test]
    fn kmeans_is_deterministic_per_seed() {
        let values: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64 * 0.7).collect();
        let a = kmeans(&line(&values), KMeansParams::new(4, 11)).unwrap();
        let b = kmeans(&line(&values), KMeansParams::new(4, 11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_repairs_empty_clusters() {
        // centroids at 0 and 100 after the first step would strand cluster 1
        let pts = line(&[0.0, 0.1, 0.2, 50.0, 50.1]);
        let mut labels = vec![0usize; 5];
        labels[3] = 0;
        let dists = vec![0.0, 0.01, 0.04, 2500.0, 2510.0];
        let mut cents = vec![vec![0.0], vec![100.0]];
        assert!(repair_empty(&pts, &labels, &dists, &mut cents));
        assert_eq!(cents[1], vec![50.1]);
    }

    #[test]
    fn dbscan_three_groups_and_noise() {
        let pts = line(&[0.0, 0.5, 1.0, 10.0, 10.5, 11.0, 50.0]);
        let r = dbscan(&pts, DbscanParams::new(1.0, 3).unwrap()).unwrap();
        assert_eq!(r.assignment.labels(), &[0, 0, 0, 1, 1, 1, -1]);
        assert_eq!(r.assignment.n_clusters(), 2);
        assert_eq!(r.core, vec![true, true, true, true, true, true, false]);
    }

    #[test]
    fn dbscan_tiny_eps_is_all_noise() {
        let pts = line(&[0.0, 1.0, 2.5, 4.0]);
        let r = dbscan(&pts, DbscanParams::new(0.5, 2).unwrap()).unwrap();
        assert!(r.assignment.labels().iter().all(|&l| l == NOISE));
        assert_eq!(r.assignment.n_clusters(), 0);
    }

    #[test]
    fn dbscan_min_pts_one_is_connected_components() {
        let pts = line(&[0.0, 0.9, 1.8, 5.0, 9.0, 9.5]);
        let r = dbscan(&pts, DbscanParams::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(r.assignment.labels(), &[0, 0, 0, 1, 2, 2]);
        assert!(r.core.iter().all(|&c| c));
    }

    #[test]
    fn dbscan_noise_becomes_border() {
        // point 0 is scanned first, found non-core, then claimed by the cluster at 1..3
        let pts = line(&[0.0, 0.8, 1.0, 1.2]);
        let r = dbscan(&pts, DbscanParams::new(0.85, 3).unwrap()).unwrap();
        assert_eq!(r.assignment.labels(), &[0, 0, 0, 0]);
        assert!(!r.core[0]);
    }

    #[test]
    fn dbscan_params_validated() {
        assert!(DbscanParams::new(0.0, 3).is_err());
        assert!(DbscanParams::new(f64::NAN, 3).is_err());
        assert!(DbscanParams::new(1.0, 0).is_err());
        let empty = Points::new(1, vec![]).unwrap();
        assert_eq!(dbscan(&empty, DbscanParams::new(1.0, 1).unwrap()), Err(ClusterError::Empty));
    }
}
