//! Dense point sets, PCA and k-distance curves.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_COMPONENTS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum NumericError {
    #[error("point dimensionality must be positive")]
    ZeroDims,
    #[error("{len} values do not fill rows of width {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("non-finite coordinate at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("PCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("n_components must be in 1..={max}, got {requested}")]
    InvalidComponents { requested: usize, max: usize },
    #[error("min_pts must be in 1..{n} for {n} points, got {min_pts}")]
    InvalidMinPts { min_pts: usize, n: usize },
    #[error("expected points of dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Row-major `n x dim` matrix of f64 coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if dim == 0 {
            return Err(NumericError::ZeroDims);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(NumericError::Ragged {
                len: data.len(),
                dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Points { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericError> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(NumericError::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Points::new(dim, data)
    }

    /// One-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Self {
        Points::new(1, values.to_vec()).expect("dim 1 always fits")
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            dim: self.dim,
            data,
        }
    }

    /// Leading `k` columns of every row.
    pub fn leading_columns(&self, k: usize) -> Points {
        let k = k.min(self.dim);
        let data = self.rows().flat_map(|r| r[..k].iter().copied()).collect();
        Points { dim: k, data }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for r in self.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

/// Fitted principal component projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `d`.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn transform(&self, points: &Points) -> Result<Points, NumericError> {
        if points.dim() != self.mean.len() {
            return Err(NumericError::DimensionMismatch {
                expected: self.mean.len(),
                actual: points.dim(),
            });
        }
        let k = self.components.len();
        let mut out = Vec::with_capacity(points.len() * k);
        let mut centered = vec![0.0; self.mean.len()];
        for r in points.rows() {
            for ((c, v), m) in centered.iter_mut().zip(r).zip(&self.mean) {
                *c = v - m;
            }
            out.extend(
                self.components
                    .iter()
                    .map(|comp| comp.iter().zip(&centered).map(|(a, b)| a * b).sum::<f64>()),
            );
        }
        Points::new(k, out)
    }

    /// Maps reduced coordinates back to the input space.
    pub fn inverse_transform(&self, reduced: &Points) -> Result<Points, NumericError> {
        if reduced.dim() != self.components.len() {
            return Err(NumericError::DimensionMismatch {
                expected: self.components.len(),
                actual: reduced.dim(),
            });
        }
        let d = self.mean.len();
        let mut out = Vec::with_capacity(reduced.len() * d);
        for r in reduced.rows() {
            let mut x = self.mean.clone();
            for (coef, comp) in r.iter().zip(&self.components) {
                for (xi, ci) in x.iter_mut().zip(comp) {
                    *xi += coef * ci;
                }
            }
            out.extend(x);
        }
        Points::new(d, out)
    }
}

/// Fits PCA on mean-centred data via the eigendecomposition of the sample
/// covariance and returns the model with the projected points.
///
/// Components are ordered by decreasing variance and each is sign-normalized
/// so its largest-magnitude entry is positive.
pub fn pca_fit_transform(
    points: &Points,
    n_components: usize,
) -> Result<(PcaModel, Points), NumericError> {
    let n = points.len();
    let d = points.dim();
    if n < 2 {
        return Err(NumericError::TooFewRows(n));
    }
    let max = (n - 1).min(d);
    if n_components == 0 || n_components > max {
        return Err(NumericError::InvalidComponents {
            requested: n_components,
            max,
        });
    }
    let mean = points.mean();
    let centered = DMatrix::from_fn(n, d, |i, j| points.row(i)[j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let total: f64 = eigen.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let mut comp: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        let pivot = comp
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        if pivot.1 < 0.0 {
            comp.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(comp);
        explained_variance.push(eigen.eigenvalues[idx].max(0.0));
    }
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let model = PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
    };
    let reduced = model.transform(points)?;
    Ok((model, reduced))
}

/// Ascending per-point mean distance to the `min_pts` nearest other points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDistanceCurve {
    pub values: Vec<f64>,
    pub min_pts: usize,
}

impl KDistanceCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Euclidean k-distance curve. The query point itself is not its own
/// neighbour.
pub fn k_distance_curve(points: &Points, min_pts: usize) -> Result<KDistanceCurve, NumericError> {
    let n = points.len();
    if min_pts == 0 || min_pts >= n {
        return Err(NumericError::InvalidMinPts { min_pts, n });
    }
    let mut values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = points.row(i);
            let mut dists: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(p, points.row(j)))
                .collect();
            dists.select_nth_unstable_by(min_pts - 1, f64::total_cmp);
            dists[..min_pts].iter().sum::<f64>() / min_pts as f64
        })
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(KDistanceCurve { values, min_pts })
}
