//! Cluster validity: silhouette widths and V-measure.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterAssignment, NOISE};
use crate::numeric::{euclidean, Points};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("silhouette undefined: need at least 2 clusters, got {0}")]
    SilhouetteUndefined(usize),
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("no samples to score")]
    Empty,
}

/// How silhouette treats the noise label `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// Noise points are dropped before scoring.
    Exclude,
    /// Noise forms one more cluster.
    #[default]
    OwnCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    /// Row indices that were scored, ascending.
    pub indices: Vec<usize>,
    /// Label of each scored sample.
    pub labels: Vec<i32>,
    /// `s(i)` per scored sample.
    pub per_sample: Vec<f64>,
    pub mean: f64,
    /// Ascending silhouette values per cluster, the silhouette-plot data.
    pub per_cluster: BTreeMap<i32, Vec<f64>>,
}

/// Euclidean silhouette. Members of singleton clusters score 0.
pub fn silhouette(
    points: &Points,
    assignment: &ClusterAssignment,
    policy: NoisePolicy,
) -> Result<SilhouetteReport, MetricsError> {
    silhouette_labels(points, assignment.labels(), policy)
}

/// [`silhouette`] over raw labels.
pub fn silhouette_labels(
    points: &Points,
    labels: &[i32],
    policy: NoisePolicy,
) -> Result<SilhouetteReport, MetricsError> {
    if points.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            points: points.len(),
            labels: labels.len(),
        });
    }
    let indices: Vec<usize> = (0..labels.len())
        .filter(|&i| policy == NoisePolicy::OwnCluster || labels[i] != NOISE)
        .collect();
    // group ids dense over the scored samples
    let mut group_of: BTreeMap<i32, usize> = BTreeMap::new();
    for &i in &indices {
        let next = group_of.len();
        group_of.entry(labels[i]).or_insert(next);
    }
    let n_groups = group_of.len();
    if n_groups < 2 {
        return Err(MetricsError::SilhouetteUndefined(n_groups));
    }
    let groups: Vec<usize> = indices.iter().map(|&i| group_of[&labels[i]]).collect();
    let mut sizes = vec![0usize; n_groups];
    for &g in &groups {
        sizes[g] += 1;
    }

    let per_sample: Vec<f64> = (0..indices.len())
        .into_par_iter()
        .map(|a| {
            let own = groups[a];
            if sizes[own] == 1 {
                return 0.0;
            }
            let p = points.row(indices[a]);
            let mut sums = vec![0.0; n_groups];
            for (b, &j) in indices.iter().enumerate() {
                if a != b {
                    sums[groups[b]] += euclidean(p, points.row(j));
                }
            }
            let intra = sums[own] / (sizes[own] - 1) as f64;
            let nearest = (0..n_groups)
                .filter(|&g| g != own)
                .map(|g| sums[g] / sizes[g] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = intra.max(nearest);
            if denom == 0.0 {
                0.0
            } else {
                ((nearest - intra) / denom).clamp(-1.0, 1.0)
            }
        })
        .collect();

    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    let sample_labels: Vec<i32> = indices.iter().map(|&i| labels[i]).collect();
    let mut per_cluster: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (&l, &s) in sample_labels.iter().zip(&per_sample) {
        per_cluster.entry(l).or_default().push(s);
    }
    for values in per_cluster.values_mut() {
        values.sort_by(f64::total_cmp);
    }
    Ok(SilhouetteReport {
        indices,
        labels: sample_labels,
        per_sample,
        mean,
        per_cluster,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasureReport {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v: f64,
    pub beta: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Conditional entropy `H(A|B)` from a contingency table keyed by `(a, b)`.
fn conditional_entropy(table: &BTreeMap<(i32, i32), usize>, b_totals: &BTreeMap<i32, usize>, n: f64, swap: bool) -> f64 {
    table
        .iter()
        .map(|(&(a, b), &count)| {
            let given = if swap { a } else { b };
            let p = count as f64 / n;
            -p * (count as f64 / b_totals[&given] as f64).ln()
        })
        .sum()
}

/// Homogeneity, completeness and their `beta`-weighted harmonic mean, with
/// natural-log entropies.
pub fn v_measure(truth: &[i32], pred: &[i32], beta: f64) -> Result<VMeasureReport, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            points: truth.len(),
            labels: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(MetricsError::InvalidBeta(beta));
    }
    let n = truth.len() as f64;
    let mut table: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    let mut classes: BTreeMap<i32, usize> = BTreeMap::new();
    let mut clusters: BTreeMap<i32, usize> = BTreeMap::new();
    for (&c, &k) in truth.iter().zip(pred) {
        *table.entry((c, k)).or_insert(0) += 1;
        *classes.entry(c).or_insert(0) += 1;
        *clusters.entry(k).or_insert(0) += 1;
    }
    let h_c = entropy(classes.values().copied(), n);
    let h_k = entropy(clusters.values().copied(), n);
    let h_c_given_k = conditional_entropy(&table, &clusters, n, false);
    let h_k_given_c = conditional_entropy(&table, &classes, n, true);

    let homogeneity = if h_c == 0.0 {
        1.0
    } else {
        (1.0 - h_c_given_k / h_c).clamp(0.0, 1.0)
    };
    let completeness = if h_k == 0.0 {
        1.0
    } else {
        (1.0 - h_k_given_c / h_k).clamp(0.0, 1.0)
    };
    let denom = beta * homogeneity + completeness;
    let v = if homogeneity * completeness == 0.0 || denom == 0.0 {
        0.0
    } else {
        ((1.0 + beta) * homogeneity * completeness / denom).clamp(0.0, 1.0)
    };
    Ok(VMeasureReport {
        homogeneity,
        completeness,
        v,
        beta,
    })
}
