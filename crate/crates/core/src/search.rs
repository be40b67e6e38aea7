//! Choosing DBSCAN parameters: knee detection on k-distance curves, the
//! steepest-bend zone of a curve, and the (eps, MinPts) grid search.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{dbscan, ClusterError, DbscanParams};
use crate::embed::EmbeddingMatrix;
use crate::metrics::{silhouette, v_measure, NoisePolicy};
use crate::numeric::{pca_fit_transform, KDistanceCurve, NumericError, Points};

pub const DEFAULT_SENSITIVITY: f64 = 1.0;
pub const DEFAULT_STEP: usize = 1;

/// Best-score floor when no truth labels are given.
pub const UNLABELED_FLOOR: f64 = -1.0;
/// Best-score floor when truth labels are given.
pub const LABELED_FLOOR: f64 = -0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("curve needs at least {need} points, got {got}")]
    CurveTooShort { need: usize, got: usize },
    #[error("curve must be non-decreasing (drops at index {0})")]
    NotMonotone(usize),
    #[error("x and y lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("window must be in 2..{len}, got {window}")]
    InvalidWindow { window: usize, len: usize },
    #[error("n_candidates must be positive")]
    NoCandidates,
    #[error("degenerate zone [{lo}, {hi}]")]
    DegenerateZone { lo: f64, hi: f64 },
    #[error("step must be positive")]
    InvalidStep,
    #[error("{labels} truth labels for {rows} rows")]
    TruthMismatch { labels: usize, rows: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Which way the curve bends. Increasing curves only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveShape {
    Concave,
    Convex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knee {
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

fn normalize(values: &[f64]) -> Option<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    (span > 0.0).then(|| values.iter().map(|v| (v - lo) / span).collect())
}

fn check_curve(xs: &[f64], ys: &[f64]) -> Result<(), SearchError> {
    if xs.len() != ys.len() {
        return Err(SearchError::LengthMismatch {
            x: xs.len(),
            y: ys.len(),
        });
    }
    if ys.len() < 3 {
        return Err(SearchError::CurveTooShort {
            need: 3,
            got: ys.len(),
        });
    }
    if let Some(i) = (0..ys.len()).find(|&i| !xs[i].is_finite() || !ys[i].is_finite()) {
        return Err(SearchError::NonFinite(i));
    }
    if let Some(i) = (1..ys.len()).find(|&i| ys[i] < ys[i - 1] || xs[i] <= xs[i - 1]) {
        return Err(SearchError::NotMonotone(i));
    }
    Ok(())
}

/// Normalized difference curve: `y - x` for concave, `x - y` for convex.
pub fn difference_curve(xs: &[f64], ys: &[f64], shape: CurveShape) -> Result<Vec<f64>, SearchError> {
    check_curve(xs, ys)?;
    let xn = normalize(xs).unwrap_or_else(|| vec![0.0; xs.len()]);
    let Some(yn) = normalize(ys) else {
        return Ok(vec![0.0; ys.len()]);
    };
    Ok(xn
        .iter()
        .zip(&yn)
        .map(|(x, y)| match shape {
            CurveShape::Concave => y - x,
            CurveShape::Convex => x - y,
        })
        .collect())
}

/// Differences below this are treated as a straight line.
const FLAT: f64 = 1e-9;

/// Kneedle on an increasing curve: the first local maximum of the
/// difference curve after which the curve drops below
/// `max - sensitivity * mean x spacing` before the next local maximum.
pub fn find_knee(
    xs: &[f64],
    ys: &[f64],
    shape: CurveShape,
    sensitivity: f64,
) -> Result<Option<Knee>, SearchError> {
    let diff = difference_curve(xs, ys, shape)?;
    let n = diff.len();
    let step = 1.0 / (n - 1) as f64;
    let maxima: Vec<usize> = (1..n - 1)
        .filter(|&i| diff[i] > FLAT && diff[i] > diff[i - 1] && diff[i] >= diff[i + 1])
        .collect();
    for (m, &i) in maxima.iter().enumerate() {
        let threshold = diff[i] - sensitivity * step;
        let end = maxima.get(m + 1).copied().unwrap_or(n);
        if (i + 1..end).any(|j| diff[j] < threshold) {
            return Ok(Some(Knee {
                index: i,
                x: xs[i],
                y: ys[i],
            }));
        }
    }
    Ok(None)
}

/// Concave when the curve lies mostly above its chord, convex otherwise.
pub fn detect_shape(ys: &[f64]) -> CurveShape {
    let Some(yn) = normalize(ys) else {
        return CurveShape::Concave;
    };
    let n = yn.len().max(2);
    let area: f64 = yn
        .iter()
        .enumerate()
        .map(|(i, y)| y - i as f64 / (n - 1) as f64)
        .sum();
    if area >= 0.0 {
        CurveShape::Concave
    } else {
        CurveShape::Convex
    }
}

/// Knee of a k-distance curve with x = point rank. `y` of the result is the
/// suggested eps.
pub fn kneedle_knee(curve: &KDistanceCurve, sensitivity: f64) -> Result<Option<Knee>, SearchError> {
    let xs: Vec<f64> = (0..curve.len()).map(|i| i as f64).collect();
    check_curve(&xs, &curve.values)?;
    find_knee(&xs, &curve.values, detect_shape(&curve.values), sensitivity)
}

/// Eps candidates drawn from the steepest-bending stretch of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeZone {
    pub lo: f64,
    pub hi: f64,
    pub candidate_eps: Vec<f64>,
}

impl SlopeZone {
    /// `n` evenly spaced candidates over `[lo, hi]`; the midpoint when `n = 1`.
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, SearchError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(SearchError::DegenerateZone { lo, hi });
        }
        let candidate_eps = match n {
            0 => return Err(SearchError::NoCandidates),
            1 => vec![(lo + hi) / 2.0],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        };
        Ok(SlopeZone {
            lo,
            hi,
            candidate_eps,
        })
    }

    /// A zone with explicit candidates, as used by a single-cell grid.
    pub fn with_candidates(mut candidates: Vec<f64>) -> Result<Self, SearchError> {
        if candidates.is_empty() {
            return Err(SearchError::NoCandidates);
        }
        if let Some(i) = candidates.iter().position(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(SearchError::NonFinite(i));
        }
        candidates.sort_by(f64::total_cmp);
        Ok(SlopeZone {
            lo: candidates[0],
            hi: candidates[candidates.len() - 1],
            candidate_eps: candidates,
        })
    }
}

/// Window `[s, s + window]` maximizing the summed second difference over its
/// interior points, which telescopes to the slope gained across the window.
/// The earliest window wins ties.
pub fn steepest_window(values: &[f64], window: usize) -> Result<usize, SearchError> {
    if window < 2 || window >= values.len() {
        return Err(SearchError::InvalidWindow {
            window,
            len: values.len(),
        });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for s in 0..values.len() - window {
        let gain = (values[s + window] - values[s + window - 1]) - (values[s + 1] - values[s]);
        if gain > best.1 {
            best = (s, gain);
        }
    }
    Ok(best.0)
}

pub fn slope_zone(curve: &KDistanceCurve, window: usize, n_candidates: usize) -> Result<SlopeZone, SearchError> {
    let start = steepest_window(&curve.values, window)?;
    SlopeZone::new(curve.values[start], curve.values[start + window], n_candidates)
}

/// `n_components + 1, n_components + 1 + step, ...` below `2 * n_components + 1`.
pub fn min_pts_candidates(n_components: usize, step: usize) -> Result<Vec<usize>, SearchError> {
    if step == 0 {
        return Err(SearchError::InvalidStep);
    }
    Ok((n_components + 1..2 * n_components + 1).step_by(step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub eps: f64,
    pub min_pts: usize,
    pub n_clusters: usize,
    pub noise: usize,
    /// Reduced-space silhouette, noise as its own cluster; `-1` when undefined.
    pub silhouette: f64,
    pub v_measure: Option<f64>,
    /// `(silhouette + v_measure) / 2` when labeled, the silhouette otherwise.
    pub combined: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    /// Ordered by eps, then MinPts.
    pub cells: Vec<GridCell>,
    /// Index into `cells`, absent when no cell beat the starting floor.
    pub best: Option<usize>,
    pub labeled: bool,
}

impl GridSearchResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn best_score(&self) -> f64 {
        self.best_cell().map_or(
            if self.labeled { LABELED_FLOOR } else { UNLABELED_FLOOR },
            |c| c.combined,
        )
    }
}

/// DBSCAN at one grid point, scored on the given (already reduced) points.
pub fn evaluate_cell(
    points: &Points,
    truth: Option<&[i32]>,
    eps: f64,
    min_pts: usize,
) -> Result<GridCell, SearchError> {
    let run = dbscan(points, DbscanParams::new(eps, min_pts)?)?;
    let a = &run.assignment;
    let (sil, degenerate) = if a.n_clusters() < 2 {
        (-1.0, true)
    } else {
        match silhouette(points, a, NoisePolicy::OwnCluster) {
            Ok(r) => (r.mean, false),
            Err(_) => (-1.0, true),
        }
    };
    let v = match truth {
        Some(t) => Some(
            v_measure(t, a.labels(), 1.0)
                .map(|r| r.v)
                .map_err(|_| SearchError::TruthMismatch {
                    labels: t.len(),
                    rows: points.len(),
                })?,
        ),
        None => None,
    };
    Ok(GridCell {
        eps,
        min_pts,
        n_clusters: a.n_clusters(),
        noise: a.noise_count(),
        silhouette: sil,
        v_measure: v,
        combined: v.map_or(sil, |v| (sil + v) / 2.0),
        degenerate,
    })
}

/// Strict-improvement argmax in (eps, MinPts) order, whatever order the cells
/// arrive in. Returns an index into `cells`.
pub fn select_best(cells: &[GridCell], labeled: bool) -> Option<usize> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| {
        cells[a]
            .eps
            .total_cmp(&cells[b].eps)
            .then(cells[a].min_pts.cmp(&cells[b].min_pts))
    });
    let mut best_score = if labeled { LABELED_FLOOR } else { UNLABELED_FLOOR };
    let mut best = None;
    for i in order {
        if cells[i].combined > best_score {
            best_score = cells[i].combined;
            best = Some(i);
        }
    }
    // a lone cell is returned whatever it scored
    if best.is_none() && cells.len() == 1 {
        best = Some(0);
    }
    best
}

/// Grid search over already reduced points.
pub fn grid_search_points(
    points: &Points,
    truth: Option<&[i32]>,
    eps_candidates: &[f64],
    min_pts: &[usize],
) -> Result<GridSearchResult, SearchError> {
    if let Some(t) = truth {
        if t.len() != points.len() {
            return Err(SearchError::TruthMismatch {
                labels: t.len(),
                rows: points.len(),
            });
        }
    }
    let mut eps: Vec<f64> = eps_candidates.to_vec();
    eps.sort_by(f64::total_cmp);
    let mut seen = HashSet::new();
    eps.retain(|e| seen.insert(e.to_bits()));
    let mut mins = min_pts.to_vec();
    mins.sort_unstable();
    mins.dedup();

    let grid: Vec<(f64, usize)> = eps
        .iter()
        .flat_map(|&e| mins.iter().map(move |&m| (e, m)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(e, m)| evaluate_cell(points, truth, e, m))
        .collect::<Result<Vec<_>, _>>()?;
    let labeled = truth.is_some();
    let best = select_best(&cells, labeled);
    Ok(GridSearchResult {
        cells,
        best,
        labeled,
    })
}

/// PCA to `n_components` once, then DBSCAN + scoring for every
/// (eps, MinPts) pair of the zone and the MinPts range.
pub fn grid_search_dbscan_params(
    emb: &EmbeddingMatrix,
    truth: Option<&[i32]>,
    n_components: usize,
    step: usize,
    zone: &SlopeZone,
) -> Result<GridSearchResult, SearchError> {
    if let Some(t) = truth {
        if t.len() != emb.rows() {
            return Err(SearchError::TruthMismatch {
                labels: t.len(),
                rows: emb.rows(),
            });
        }
    }
    let min_pts = min_pts_candidates(n_components, step)?;
    let (_, reduced) = pca_fit_transform(&emb.to_points(), n_components)?;
    grid_search_points(&reduced, truth, &zone.candidate_eps, &min_pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::k_distance_curve;
    use proptest::prelude::*;

    fn hyperbola() -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..=90).map(|i| 1.0 + i as f64 * 0.1).collect();
        let ys = xs.iter().map(|x| 5.0 - 1.0 / x).collect();
        (xs, ys)
    }

    #[test]
    fn hyperbola_knee_matches_difference_argmax() {
        let (xs, ys) = hyperbola();
        let diff = difference_curve(&xs, &ys, CurveShape::Concave).unwrap();
        let argmax = (0..diff.len()).max_by(|&a, &b| diff[a].total_cmp(&diff[b])).unwrap();
        let knee = find_knee(&xs, &ys, CurveShape::Concave, 1.0).unwrap().unwrap();
        assert_eq!(knee.index, argmax);
        // analytic maximum of the difference curve sits at x = sqrt(10)
        assert!((knee.x - 10f64.sqrt()).abs() < 0.1);
        assert_eq!(detect_shape(&ys), CurveShape::Concave);
    }

    #[test]
    fn straight_line_has_no_knee() {
        let xs: Vec<f64> = (0..50).map(f64::from).collect();
        for shape in [CurveShape::Concave, CurveShape::Convex] {
            assert_eq!(find_knee(&xs, &xs, shape, 1.0).unwrap(), None);
        }
        let curve = KDistanceCurve {
            values: xs.iter().map(|x| 0.5 * x + 2.0).collect(),
            min_pts: 3,
        };
        assert_eq!(kneedle_knee(&curve, 1.0).unwrap(), None);
    }

    #[test]
    fn convex_curve_knee() {
        let xs: Vec<f64> = (0..100).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 10.0).exp()).collect();
        assert_eq!(detect_shape(&ys), CurveShape::Convex);
        let diff = difference_curve(&xs, &ys, CurveShape::Convex).unwrap();
        let argmax = (0..diff.len()).max_by(|&a, &b| diff[a].total_cmp(&diff[b])).unwrap();
        let curve = KDistanceCurve { values: ys, min_pts: 2 };
        let knee = kneedle_knee(&curve, 1.0).unwrap().unwrap();
        assert_eq!(knee.index, argmax);
        assert_eq!(knee.y, curve.values[argmax]);
    }

    #[test]
    fn flat_curve_has_no_knee() {
        let curve = KDistanceCurve {
            values: vec![1.0; 10],
            min_pts: 2,
        };
        assert_eq!(kneedle_knee(&curve, 1.0).unwrap(), None);
    }

    #[test]
    fn knee_rejects_bad_curves() {
        let short = KDistanceCurve { values: vec![0.0, 1.0], min_pts: 1 };
        assert!(matches!(kneedle_knee(&short, 1.0), Err(SearchError::CurveTooShort { .. })));
        let falling = KDistanceCurve { values: vec![0.0, 2.0, 1.0], min_pts: 1 };
        assert_eq!(kneedle_knee(&falling, 1.0), Err(SearchError::NotMonotone(2)));
    }

    fn brute_window(values: &[f64], window: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for s in 0..values.len() - window {
            let second: f64 = (s + 1..s + window)
                .map(|i| values[i + 1] - 2.0 * values[i] + values[i - 1])
                .sum();
            if second > best.1 + 1e-9 {
                best = (s, second);
            }
        }
        best.0
    }

    #[test]
    fn flat_then_steep_zone_straddles_break() {
        let values: Vec<f64> = (0..100)
            .map(|i| if i <= 50 { 0.0 } else { 10.0 * (i - 50) as f64 })
            .collect();
        for window in [2, 5, 10, 30] {
            let s = steepest_window(&values, window).unwrap();
            assert_eq!(s, brute_window(&values, window));
            assert!(s < 50 && 50 < s + window, "window {window} at {s}");
        }
        let curve = KDistanceCurve { values, min_pts: 3 };
        let zone = slope_zone(&curve, 10, 5).unwrap();
        assert_eq!(zone.lo, 0.0);
        assert_eq!(zone.hi, 10.0);
        assert_eq!(zone.candidate_eps, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
    }

    #[test]
    fn zone_sampling() {
        assert_eq!(SlopeZone::new(0.5, 0.85, 1).unwrap().candidate_eps, vec![0.675]);
        let z = SlopeZone::new(0.5, 0.85, 8).unwrap();
        assert_eq!(z.candidate_eps.len(), 8);
        assert_eq!(*z.candidate_eps.last().unwrap(), 0.85);
        assert!(matches!(SlopeZone::new(1.0, 1.0, 3), Err(SearchError::DegenerateZone { .. })));
        assert_eq!(SlopeZone::new(0.0, 1.0, 0), Err(SearchError::NoCandidates));
        let constant = KDistanceCurve { values: vec![2.0; 20], min_pts: 2 };
        assert!(matches!(slope_zone(&constant, 4, 3), Err(SearchError::DegenerateZone { .. })));
        assert!(matches!(slope_zone(&constant, 20, 3), Err(SearchError::InvalidWindow { .. })));
    }

    #[test]
    fn min_pts_range_is_half_open() {
        assert_eq!(min_pts_candidates(2, 1).unwrap(), vec![3, 4]);
        assert_eq!(min_pts_candidates(4, 2).unwrap(), vec![5, 7]);
        assert_eq!(min_pts_candidates(2, 0), Err(SearchError::InvalidStep));
    }

    fn blobs() -> Points {
        let mut rows = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)] {
            for i in 0..12 {
                let a = i as f64 * 0.52;
                rows.push(vec![cx + 0.4 * a.cos(), cy + 0.4 * a.sin()]);
            }
        }
        Points::from_rows(&rows).unwrap()
    }

    #[test]
    fn three_blobs_grid_matches_exhaustive_loop() {
        let pts = blobs();
        let truth: Vec<i32> = (0..36).map(|i| i / 12).collect();
        let eps = [0.2, 1.0, 3.0];
        let mins = [3, 4, 5];
        let result = grid_search_points(&pts, Some(&truth), &eps, &mins).unwrap();
        assert_eq!(result.cells.len(), 9);

        let mut best: Option<(f64, usize, f64)> = None;
        for &e in &eps {
            for &m in &mins {
                let run = dbscan(&pts, DbscanParams::new(e, m).unwrap()).unwrap();
                let sil = if run.assignment.n_clusters() < 2 {
                    -1.0
                } else {
                    silhouette(&pts, &run.assignment, NoisePolicy::OwnCluster).unwrap().mean
                };
                let v = v_measure(&truth, run.assignment.labels(), 1.0).unwrap().v;
                let score = (sil + v) / 2.0;
                if score > best.map_or(LABELED_FLOOR, |b| b.2) {
                    best = Some((e, m, score));
                }
            }
        }
        let (e, m, score) = best.unwrap();
        let cell = result.best_cell().unwrap();
        assert_eq!((cell.eps, cell.min_pts), (e, m));
        assert!((cell.combined - score).abs() < 1e-12);
        assert_eq!(cell.n_clusters, 3);
    }

    #[test]
    fn single_cell_is_returned() {
        let pts = blobs();
        let r = grid_search_points(&pts, None, &[0.01], &[3]).unwrap();
        assert_eq!(r.best, Some(0));
        assert!(r.cells[0].degenerate);
        assert_eq!(r.cells[0].silhouette, -1.0);
    }

    #[test]
    fn all_degenerate_grid_has_no_best() {
        let pts = blobs();
        let r = grid_search_points(&pts, None, &[0.01, 100.0], &[3, 4]).unwrap();
        assert!(r.cells.iter().all(|c| c.degenerate));
        assert_eq!(r.best, None);
        assert_eq!(r.best_score(), UNLABELED_FLOOR);
    }

    #[test]
    fn duplicate_candidates_evaluated_once() {
        let pts = blobs();
        let r = grid_search_points(&pts, None, &[1.0, 1.0, 0.5], &[3, 3]).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells[0].eps < r.cells[1].eps);
    }

    #[test]
    fn selection_ignores_arrival_order() {
        let cell = |eps, min_pts, combined| GridCell {
            eps,
            min_pts,
            n_clusters: 2,
            noise: 0,
            silhouette: combined,
            v_measure: None,
            combined,
            degenerate: false,
        };
        let cells = vec![cell(0.9, 3, 0.5), cell(0.1, 4, 0.5), cell(0.1, 3, 0.5), cell(0.5, 3, 0.2)];
        assert_eq!(select_best(&cells, false), Some(2));
        let mut reversed = cells.clone();
        reversed.reverse();
        assert_eq!(select_best(&reversed, false), Some(1));
    }

    #[test]
    fn truth_length_checked() {
        let pts = blobs();
        assert!(matches!(
            grid_search_points(&pts, Some(&[0, 1]), &[1.0], &[3]),
            Err(SearchError::TruthMismatch { .. })
        ));
    }

    #[test]
    fn grid_on_embeddings_uses_reduced_space() {
        let pts = blobs();
        let data: Vec<f32> = pts
            .rows()
            .flat_map(|r| [r[0] as f32, r[1] as f32, 0.0, (r[0] * 0.01) as f32])
            .collect();
        let ids = (0..pts.len()).map(|i| format!("d{i}")).collect();
        let emb = EmbeddingMatrix::new(4, data, ids).unwrap();
        let curve = k_distance_curve(&emb.to_points(), 3).unwrap();
        assert!(kneedle_knee(&curve, 1.0).is_ok());
        let zone = SlopeZone::new(0.5, 2.0, 3).unwrap();
        let r = grid_search_dbscan_params(&emb, None, 2, 1, &zone).unwrap();
        assert_eq!(r.cells.len(), 6);
        assert_eq!(r.best_cell().unwrap().n_clusters, 3);
    }

    proptest! {
        #[test]
        fn knee_lies_on_curve(mut values in proptest::collection::vec(0.0f64..100.0, 3..60)) {
            values.sort_by(f64::total_cmp);
            let lo = values[0];
            let hi = values[values.len() - 1];
            let curve = KDistanceCurve { values, min_pts: 2 };
            if let Some(k) = kneedle_knee(&curve, 1.0).unwrap() {
                prop_assert!(k.index < curve.len());
                prop_assert_eq!(k.y, curve.values[k.index]);
                prop_assert!(lo <= k.y && k.y <= hi);
            }
        }

        #[test]
        fn zone_candidates_sorted_within_bounds(lo in -5.0f64..5.0, width in 1e-3f64..10.0, n in 1usize..20) {
            let z = SlopeZone::new(lo, lo + width, n).unwrap();
            prop_assert_eq!(z.candidate_eps.len(), n);
            prop_assert!(z.candidate_eps.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(z.candidate_eps.iter().all(|e| z.lo <= *e && *e <= z.hi));
        }

        #[test]
        fn more_cells_never_lower_best(scores in proptest::collection::vec(-1.0f64..1.0, 1..20), extra in -1.0f64..1.0) {
            let cells: Vec<GridCell> = scores.iter().enumerate().map(|(i, &s)| GridCell {
                eps: i as f64, min_pts: 3, n_clusters: 2, noise: 0,
                silhouette: s, v_measure: None, combined: s, degenerate: false,
            }).collect();
            let before = select_best(&cells, false).map_or(UNLABELED_FLOOR, |i| cells[i].combined);
            let mut more = cells.clone();
            more.push(GridCell { eps: 99.0, combined: extra, silhouette: extra, ..cells[0].clone() });
            let after = select_best(&more, false).map_or(UNLABELED_FLOOR, |i| more[i].combined);
            prop_assert!(after >= before);
            let best = select_best(&more, false).map(|i| more[i].combined);
            let max = more.iter().map(|c| c.combined).fold(f64::NEG_INFINITY, f64::max);
            if max > UNLABELED_FLOOR {
                prop_assert_eq!(best, Some(max));
            }
        }
    }
}
