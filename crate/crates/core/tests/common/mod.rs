//! Independent reference implementations used by the oracle and acceptance
//! suites. Deliberately naive.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Gaussian-ish blobs: `k` centres in a box, uniform jitter around each.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, k: usize) -> Vec<Vec<f64>> {
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            let c = &centres[i % k];
            c.iter().map(|v| v + rng.random_range(-1.5..1.5)).collect()
        })
        .collect()
}

fn neighbours(points: &[Vec<f64>], i: usize, eps: f64) -> Vec<usize> {
    (0..points.len()).filter(|&j| dist(&points[i], &points[j]) <= eps).collect()
}

pub fn core_flags(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<bool> {
    (0..points.len()).map(|i| neighbours(points, i, eps).len() >= min_pts).collect()
}

/// Core points grouped by transitive core-to-core reachability, each group
/// as a sorted set, groups ordered by their smallest member.
pub fn core_partition(points: &[Vec<f64>], core: &[bool], eps: f64) -> Vec<BTreeSet<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && dist(&points[i], &points[j]) <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for i in (0..n).filter(|&i| core[i]) {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().insert(i);
    }
    let mut out: Vec<BTreeSet<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| *g.iter().next().unwrap());
    out
}

/// Textbook sequential DBSCAN: scan points in order, grow each new cluster
/// with an explicit seed list, noise may later become border.
pub fn sequential_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i32> {
    const UNSEEN: i32 = -2;
    let mut labels = vec![UNSEEN; points.len()];
    let mut cluster = -1;
    for p in 0..points.len() {
        if labels[p] != UNSEEN {
            continue;
        }
        let seeds = neighbours(points, p, eps);
        if seeds.len() < min_pts {
            labels[p] = -1;
            continue;
        }
        cluster += 1;
        labels[p] = cluster;
        let mut queue: Vec<usize> = seeds;
        let mut k = 0;
        while k < queue.len() {
            let q = queue[k];
            k += 1;
            if labels[q] == -1 {
                labels[q] = cluster;
            }
            if labels[q] != UNSEEN {
                continue;
            }
            labels[q] = cluster;
            let more = neighbours(points, q, eps);
            if more.len() >= min_pts {
                queue.extend(more);
            }
        }
    }
    labels
}

pub fn silhouette_mean(points: &[Vec<f64>], labels: &[i32]) -> Option<f64> {
    let groups: BTreeSet<i32> = labels.iter().copied().collect();
    if groups.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    for i in 0..points.len() {
        let own: Vec<usize> = (0..points.len()).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let b = groups
            .iter()
            .filter(|&&g| g != labels[i])
            .map(|&g| {
                let other: Vec<usize> = (0..points.len()).filter(|&j| labels[j] == g).collect();
                other.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / other.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Some(total / points.len() as f64)
}

/// (homogeneity, completeness, v) straight from the entropy definitions.
pub fn v_measure(truth: &[i32], pred: &[i32]) -> (f64, f64, f64) {
    let n = truth.len() as f64;
    let classes: BTreeSet<i32> = truth.iter().copied().collect();
    let clusters: BTreeSet<i32> = pred.iter().copied().collect();
    let count = |c: Option<i32>, k: Option<i32>| {
        truth
            .iter()
            .zip(pred)
            .filter(|(t, p)| c.is_none_or(|c| **t == c) && k.is_none_or(|k| **p == k))
            .count() as f64
    };
    let mut h_c = 0.0;
    for &c in &classes {
        let p = count(Some(c), None) / n;
        h_c -= p * p.ln();
    }
    let mut h_k = 0.0;
    for &k in &clusters {
        let p = count(None, Some(k)) / n;
        h_k -= p * p.ln();
    }
    let mut h_c_k = 0.0;
    let mut h_k_c = 0.0;
    for &c in &classes {
        for &k in &clusters {
            let nck = count(Some(c), Some(k));
            if nck > 0.0 {
                h_c_k -= nck / n * (nck / count(None, Some(k))).ln();
                h_k_c -= nck / n * (nck / count(Some(c), None)).ln();
            }
        }
    }
    let h = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_k / h_c };
    let c = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_c / h_k };
    let v = if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) };
    (h, c, v)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues descending with eigenvectors as rows.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect()
}
