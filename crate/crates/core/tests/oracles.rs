mod common;

use std::collections::BTreeSet;

use convcluster::cluster::{dbscan, kmeans, DbscanParams, KMeansParams};
use convcluster::metrics::{silhouette_labels, v_measure, NoisePolicy};
use convcluster::numeric::{pca_fit_transform, Points};
use rand::Rng;

#[test]
fn pca_matches_jacobi_eigensolver() {
    let mut rng = common::rng(17);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let base: f64 = rng.random_range(-3.0..3.0);
            (0..10).map(|j| base * (j as f64 + 1.0) * 0.3 + rng.random_range(-1.0..1.0) * (10 - j) as f64 * 0.2).collect()
        })
        .collect();
    let (model, reduced) = pca_fit_transform(&Points::from_rows(&rows).unwrap(), 3).unwrap();
    let (values, vectors) = common::jacobi_eigen(common::covariance(&rows));
    let total: f64 = values.iter().sum();
    for c in 0..3 {
        let dot: f64 = model.components[c].iter().zip(&vectors[c]).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-6, "component {c}: |dot| = {}", dot.abs());
        assert!((model.explained_variance[c] - values[c]).abs() < 1e-6 * values[0]);
        assert!((model.explained_variance_ratio[c] - values[c] / total).abs() < 1e-6);
    }
    let mean: Vec<f64> = (0..10).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / 50.0).collect();
    for (i, row) in rows.iter().enumerate() {
        for c in 0..3 {
            let proj: f64 = row.iter().zip(&mean).zip(&model.components[c]).map(|((x, m), v)| (x - m) * v).sum();
            assert!((proj - reduced.row(i)[c]).abs() < 1e-9);
        }
    }
}

#[test]
fn dbscan_matches_reference_implementations() {
    let mut rng = common::rng(5);
    for _ in 0..60 {
        let n = rng.random_range(1..120);
        let dim = rng.random_range(1..4);
        let k = rng.random_range(1..5);
        let rows = common::random_points(&mut rng, n, dim, k);
        let eps = rng.random_range(0.2..3.0);
        let min_pts = rng.random_range(1..8);
        let got = dbscan(&Points::from_rows(&rows).unwrap(), DbscanParams::new(eps, min_pts).unwrap()).unwrap();
        let core = common::core_flags(&rows, eps, min_pts);
        assert_eq!(got.core, core);
        let partition = common::core_partition(&rows, &core, eps);
        let mine: Vec<BTreeSet<usize>> = (0..got.assignment.n_clusters())
            .map(|c| got.assignment.members(c).into_iter().filter(|&i| core[i]).collect())
            .collect();
        assert_eq!(mine, partition);
        assert_eq!(got.assignment.labels(), common::sequential_dbscan(&rows, eps, min_pts));
    }
}

#[test]
fn kmeans_reaches_a_lloyd_fixed_point_above_the_optimum() {
    let mut rng = common::rng(23);
    for _ in 0..30 {
        let mut xs: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..10.0)).collect();
        xs.sort_by(f64::total_cmp);
        // on a line the optimal 2-partition is a prefix split
        let best = (1..xs.len())
            .map(|s| {
                let sse = |part: &[f64]| {
                    let m = part.iter().sum::<f64>() / part.len() as f64;
                    part.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                };
                sse(&xs[..s]) + sse(&xs[s..])
            })
            .fold(f64::INFINITY, f64::min);
        let run = kmeans(&Points::from_scalars(&xs), KMeansParams::new(2, 7)).unwrap();
        assert!(run.inertia >= best - 1e-9);
        // converged: every point sits with its nearest centroid, centroids are member means
        for (i, x) in xs.iter().enumerate() {
            let own = run.assignment.labels()[i] as usize;
            let d = |c: usize| (x - run.centroids[c][0]).abs();
            assert!(d(own) <= d(1 - own) + 1e-9);
        }
        for c in 0..2 {
            let members = run.assignment.members(c);
            let mean = members.iter().map(|&i| xs[i]).sum::<f64>() / members.len() as f64;
            assert!((mean - run.centroids[c][0]).abs() < 1e-3);
        }
    }
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = common::rng(99);
    for _ in 0..100 {
        let n = rng.random_range(2..40);
        let rows = common::random_points(&mut rng, n, 2, 3);
        let labels: Vec<i32> = (0..n).map(|_| rng.random_range(-1..3)).collect();
        let truth: Vec<i32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let pts = Points::from_rows(&rows).unwrap();
        match (silhouette_labels(&pts, &labels, NoisePolicy::OwnCluster), common::silhouette_mean(&rows, &labels)) {
            (Ok(r), Some(m)) => assert!((r.mean - m).abs() < 1e-9),
            (Err(_), None) => {}
            (a, b) => panic!("disagree: {a:?} vs {b:?}"),
        }
        let got = v_measure(&truth, &labels, 1.0).unwrap();
        let (h, c, v) = common::v_measure(&truth, &labels);
        assert!((got.homogeneity - h).abs() < 1e-9);
        assert!((got.completeness - c).abs() < 1e-9);
        assert!((got.v - v).abs() < 1e-9);
    }
}
