//! End-to-end clustering run: preprocess, embed, DBSCAN parameter search,
//! denoise, K-Means with the DBSCAN cluster count, reports and plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{dbscan, kmeans, ClusterAssignment, ClusterError, DbscanParams, KMeansParams, NOISE};
use crate::corpus::{
    preprocess, profile_and_pad, read_records, CorpusRecord, Document, IdentitySegmenter, PreprocessOptions,
    StopwordList, DEFAULT_COVERAGE,
};
use crate::embed::{EmbedderChoice, EmbeddingMatrix, EmbeddingProvider, FileEmbedder, HashEmbedder};
use crate::ingest::SenderRole;
use crate::metrics::{silhouette, NoisePolicy, SilhouetteReport};
use crate::numeric::{euclidean, k_distance_curve, pca_fit_transform, KDistanceCurve, Points, DEFAULT_COMPONENTS};
use crate::search::{
    grid_search_points, kneedle_knee, min_pts_candidates, slope_zone, GridSearchResult, Knee, SlopeZone,
    DEFAULT_SENSITIVITY,
};

/// Smallest corpus a run accepts.
pub const MIN_DOCUMENTS: usize = 10;
/// Representatives listed per cluster.
pub const REPRESENTATIVES: usize = 5;
pub const REPORT_FILE: &str = "report.json";

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("insufficient corpus: {found} documents, need at least {MIN_DOCUMENTS}")]
    InsufficientCorpus { found: usize },
    #[error("empty after denoise: every point is noise")]
    EmptyAfterDenoise,
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("need at least 2 clusters for K-Means, DBSCAN found {0}")]
    TooFewClusters(usize),
    #[error("no grid cell produced a valid clustering")]
    NoValidCell,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, PipelineError>;
}

impl<T, E: Into<BoxError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            source: e.into(),
        })
    }
}

/// Number of clusters, noise excluded.
pub fn cluster_count_from_dbscan(a: &ClusterAssignment) -> usize {
    a.n_clusters()
}

/// Drops noise rows. The map gives each kept row's original index.
pub fn denoise(emb: &EmbeddingMatrix, a: &ClusterAssignment) -> Result<(EmbeddingMatrix, Vec<usize>), PipelineError> {
    if a.len() != emb.rows() {
        return Err(PipelineError::LengthMismatch {
            labels: a.len(),
            rows: emb.rows(),
        });
    }
    let keep: Vec<usize> = (0..a.len()).filter(|&i| a.labels()[i] != NOISE).collect();
    if keep.is_empty() {
        return Err(PipelineError::EmptyAfterDenoise);
    }
    Ok((emb.select_rows(&keep), keep))
}

fn centroids(points: &Points, labels: &[i32], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; points.dim()]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            counts[l as usize] += 1;
            for (s, v) in sums[l as usize].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
    }
    for (sum, &c) in sums.iter_mut().zip(&counts) {
        sum.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    sums
}

/// Merges clusters holding fewer than `min_core_points` core points.
///
/// Each round joins the closest centroid pair that involves an undersized
/// cluster, then recounts. Stops when every cluster qualifies or one is left.
pub fn merge_small_clusters(
    points: &Points,
    a: &ClusterAssignment,
    min_core_points: usize,
    core: &[bool],
) -> Result<ClusterAssignment, PipelineError> {
    if a.len() != points.len() || core.len() != points.len() {
        return Err(PipelineError::LengthMismatch {
            labels: a.len().min(core.len()),
            rows: points.len(),
        });
    }
    let mut current = a.clone();
    loop {
        let k = current.n_clusters();
        if k <= 1 {
            return Ok(current);
        }
        let labels = current.labels();
        let mut cores = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= 0 && core[i] {
                cores[l as usize] += 1;
            }
        }
        let cents = centroids(points, labels, k);
        let mut pair: Option<(usize, usize, f64)> = None;
        for u in (0..k).filter(|&u| cores[u] < min_core_points) {
            for x in (0..k).filter(|&x| x != u) {
                let d = euclidean(&cents[u], &cents[x]);
                if pair.is_none_or(|p| d < p.2) {
                    pair = Some((u, x, d));
                }
            }
        }
        let Some((u, x, _)) = pair else {
            return Ok(current);
        };
        let (keep, gone) = (u.min(x) as i32, u.max(x) as i32);
        let merged = labels.iter().map(|&l| if l == gone { keep } else { l }).collect();
        current = ClusterAssignment::from_labels(merged)?;
    }
}

/// Run settings, readable from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub embedder: EmbedderChoice,
    pub hash_dims: usize,
    pub hash_seed: u64,
    pub n_components: usize,
    pub step: usize,
    /// Slope-zone window; a tenth of the corpus when unset.
    pub window: Option<usize>,
    pub n_candidates: usize,
    /// Explicit `(lo, hi, n)` eps zone instead of the slope-zone scan.
    pub zone: Option<(f64, f64, usize)>,
    pub sensitivity: f64,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// Merge DBSCAN clusters with fewer core points than this.
    pub min_core_points: Option<usize>,
    pub coverage: f64,
    pub stopwords: Option<PathBuf>,
    pub sender: Option<SenderRole>,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            embedder: EmbedderChoice::Hash,
            hash_dims: 256,
            hash_seed: 0,
            n_components: DEFAULT_COMPONENTS,
            step: 1,
            window: None,
            n_candidates: 10,
            zone: None,
            sensitivity: DEFAULT_SENSITIVITY,
            kmeans_seed: 42,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-4,
            min_core_points: None,
            coverage: DEFAULT_COVERAGE,
            stopwords: None,
            sender: None,
            output_dir: None,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| PipelineError::Config {
        line,
        message: format!("{key}: {e}"),
    })
}

fn optional(value: &str) -> Option<&str> {
    (!matches!(value, "" | "none")).then_some(value)
}

impl FromStr for PipelineConfig {
    type Err = PipelineError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = PipelineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(PipelineError::Config {
                    line,
                    message: format!("expected key = value, got {trimmed:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "embedder" => cfg.embedder = parse_value(line, key, value)?,
                "hash_dims" => cfg.hash_dims = parse_value(line, key, value)?,
                "hash_seed" => cfg.hash_seed = parse_value(line, key, value)?,
                "n_components" => cfg.n_components = parse_value(line, key, value)?,
                "step" => cfg.step = parse_value(line, key, value)?,
                "window" => cfg.window = optional(value).map(|v| parse_value(line, key, v)).transpose()?,
                "n_candidates" => cfg.n_candidates = parse_value(line, key, value)?,
                "zone" => {
                    cfg.zone = optional(value)
                        .map(|v| parse_zone(v).map_err(|message| PipelineError::Config { line, message }))
                        .transpose()?
                }
                "sensitivity" => cfg.sensitivity = parse_value(line, key, value)?,
                "kmeans_seed" => cfg.kmeans_seed = parse_value(line, key, value)?,
                "kmeans_max_iter" => cfg.kmeans_max_iter = parse_value(line, key, value)?,
                "kmeans_tol" => cfg.kmeans_tol = parse_value(line, key, value)?,
                "min_core_points" => {
                    cfg.min_core_points = optional(value).map(|v| parse_value(line, key, v)).transpose()?
                }
                "coverage" => cfg.coverage = parse_value(line, key, value)?,
                "stopwords" => cfg.stopwords = optional(value).map(PathBuf::from),
                "sender" => {
                    cfg.sender = match optional(value) {
                        None => None,
                        Some("client") => Some(SenderRole::Client),
                        Some("admin") => Some(SenderRole::Admin),
                        Some(other) => {
                            return Err(PipelineError::Config {
                                line,
                                message: format!("sender must be client or admin, got {other:?}"),
                            })
                        }
                    }
                }
                "output_dir" => cfg.output_dir = optional(value).map(PathBuf::from),
                _ => {
                    return Err(PipelineError::Config {
                        line,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `lo,hi,n`.
pub fn parse_zone(text: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(format!("zone must be lo,hi,n, got {text:?}"));
    };
    let lo: f64 = lo.parse().map_err(|e| format!("zone lo: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("zone hi: {e}"))?;
    let n: usize = n.parse().map_err(|e| format!("zone n: {e}"))?;
    SlopeZone::new(lo, hi, n).map_err(|e| e.to_string())?;
    Ok((lo, hi, n))
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_owned(),
            source,
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_owned()));
        if self.n_components == 0 {
            return bad("n_components must be positive");
        }
        if self.step == 0 {
            return bad("step must be positive");
        }
        if self.window.is_some_and(|w| w < 2) {
            return bad("window must be at least 2");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be positive");
        }
        if !(self.sensitivity >= 0.0 && self.sensitivity.is_finite()) {
            return bad("sensitivity must be non-negative");
        }
        if self.kmeans_max_iter == 0 {
            return bad("kmeans_max_iter must be positive");
        }
        if !(self.kmeans_tol >= 0.0 && self.kmeans_tol.is_finite()) {
            return bad("kmeans_tol must be non-negative");
        }
        if self.min_core_points == Some(0) {
            return bad("min_core_points must be positive");
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return bad("coverage must be in (0, 1]");
        }
        if self.embedder == EmbedderChoice::Hash && self.hash_dims < crate::embed::MIN_HASH_DIMS {
            return bad("hash_dims too small");
        }
        Ok(())
    }

    fn provider(&self) -> Result<Box<dyn EmbeddingProvider>, crate::embed::EmbedError> {
        Ok(match &self.embedder {
            EmbedderChoice::Hash => Box::new(HashEmbedder {
                dims: self.hash_dims,
                seed: self.hash_seed,
            }),
            EmbedderChoice::File(path) => Box::new(FileEmbedder::open(path)?),
        })
    }

    fn kmeans_params(&self, k: usize) -> KMeansParams {
        KMeansParams {
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            ..KMeansParams::new(k, self.kmeans_seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanSummary {
    pub eps: f64,
    pub min_pts: usize,
    /// Clusters before any small-cluster merge.
    pub raw_clusters: usize,
    pub n_clusters: usize,
    pub noise: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSummary {
    pub rows: usize,
    pub inertia: f64,
    pub iterations: usize,
    /// Mean silhouette in the embedding space.
    pub silhouette: f64,
    /// Mean silhouette of the same labels in the PCA space.
    pub silhouette_reduced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub id: String,
    pub text: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: i32,
    pub size: usize,
    pub representatives: Vec<Representative>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub label: i32,
}

/// Everything one run produced. Serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub documents: usize,
    pub padding_length: usize,
    pub embedder: String,
    pub dims: usize,
    pub n_components: usize,
    pub explained_variance_ratio: Vec<f64>,
    pub kdistance: KDistanceCurve,
    pub knee: Option<Knee>,
    pub zone: SlopeZone,
    pub grid: GridSearchResult,
    pub dbscan: DbscanSummary,
    /// K handed to K-Means, the DBSCAN cluster count.
    pub k: usize,
    pub noise_removed: usize,
    pub original: KMeansSummary,
    pub denoised: KMeansSummary,
    /// Final K-Means labels on the denoised rows.
    pub assignment: ClusterAssignment,
    /// Doc id per denoised row.
    pub doc_ids: Vec<String>,
    /// Original row index per denoised row.
    pub index_map: Vec<usize>,
    pub silhouette: SilhouetteReport,
    pub clusters: Vec<ClusterSummary>,
    /// First two PCA coordinates of the denoised rows.
    pub scatter: Vec<ScatterPoint>,
}

impl ClusterReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn mean_silhouette(points: &Points, a: &ClusterAssignment) -> Result<SilhouetteReport, PipelineError> {
    silhouette(points, a, NoisePolicy::OwnCluster).stage("silhouette")
}

fn summarize(points: &Points, reduced: &Points, k: usize, cfg: &PipelineConfig) -> Result<(KMeansSummary, crate::cluster::KMeansResult, SilhouetteReport), PipelineError> {
    let run = kmeans(points, cfg.kmeans_params(k)).stage("kmeans")?;
    let full = mean_silhouette(points, &run.assignment)?;
    let low = mean_silhouette(reduced, &run.assignment)?;
    let summary = KMeansSummary {
        rows: points.len(),
        inertia: run.inertia,
        iterations: run.iterations,
        silhouette: full.mean,
        silhouette_reduced: low.mean,
    };
    Ok((summary, run, full))
}

fn default_window(n: usize) -> usize {
    (n / 10).clamp(2, n.saturating_sub(1).max(2))
}

/// Runs the pipeline on already preprocessed documents.
pub fn run_documents(docs: &[Document], cfg: &PipelineConfig) -> Result<ClusterReport, PipelineError> {
    cfg.validate()?;
    if docs.len() < MIN_DOCUMENTS {
        return Err(PipelineError::InsufficientCorpus { found: docs.len() }).stage("preprocess");
    }
    let stats = profile_and_pad(docs, cfg.coverage).stage("preprocess")?;
    let provider = cfg.provider().stage("embed")?;
    let emb = provider.embed(docs).stage("embed")?;
    let points = emb.to_points();

    let (pca, reduced) = pca_fit_transform(&points, cfg.n_components).stage("pca")?;
    let curve = k_distance_curve(&reduced, cfg.n_components + 1).stage("kdistance")?;
    let knee = kneedle_knee(&curve, cfg.sensitivity).stage("kdistance")?;
    let zone = match cfg.zone {
        Some((lo, hi, n)) => SlopeZone::new(lo, hi, n),
        None => slope_zone(&curve, cfg.window.unwrap_or_else(|| default_window(curve.len())), cfg.n_candidates),
    }
    .stage("zone")?;

    let truth: Option<Vec<i32>> = docs.iter().map(|d| d.label).collect();
    let min_pts = min_pts_candidates(cfg.n_components, cfg.step).stage("search")?;
    let grid = grid_search_points(&reduced, truth.as_deref(), &zone.candidate_eps, &min_pts).stage("search")?;
    let best = grid.best_cell().ok_or(PipelineError::NoValidCell).stage("search")?;

    let run = dbscan(&reduced, DbscanParams::new(best.eps, best.min_pts)?).stage("dbscan")?;
    let raw_clusters = run.assignment.n_clusters();
    let assignment = match cfg.min_core_points {
        Some(m) => merge_small_clusters(&reduced, &run.assignment, m, &run.core).stage("merge")?,
        None => run.assignment.clone(),
    };
    let k = cluster_count_from_dbscan(&assignment);
    if k < 2 {
        return Err(PipelineError::TooFewClusters(k)).stage("dbscan");
    }

    let (clean, index_map) = denoise(&emb, &assignment).stage("denoise")?;
    let clean_points = clean.to_points();
    let clean_reduced = reduced.select_rows(&index_map);
    let (original, _, _) = summarize(&points, &reduced, k, cfg)?;
    let (denoised, final_run, final_silhouette) = summarize(&clean_points, &clean_reduced, k, cfg)?;

    let clusters = (0..final_run.assignment.n_clusters())
        .map(|c| {
            let mut members: Vec<(f64, usize)> = final_run
                .assignment
                .members(c)
                .into_iter()
                .map(|i| (euclidean(clean_points.row(i), &final_run.centroids[c]), i))
                .collect();
            members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ClusterSummary {
                cluster: c as i32,
                size: members.len(),
                representatives: members
                    .iter()
                    .take(REPRESENTATIVES)
                    .map(|&(distance, i)| Representative {
                        id: clean.doc_ids()[i].clone(),
                        text: docs[index_map[i]].text.clone(),
                        distance,
                    })
                    .collect(),
            }
        })
        .collect();
    let scatter = (0..clean_reduced.len())
        .map(|i| {
            let row = clean_reduced.row(i);
            ScatterPoint {
                id: clean.doc_ids()[i].clone(),
                x: row[0],
                y: row.get(1).copied().unwrap_or(0.0),
                label: final_run.assignment.labels()[i],
            }
        })
        .collect();

    Ok(ClusterReport {
        documents: docs.len(),
        padding_length: stats.padding_length,
        embedder: cfg.embedder.to_string(),
        dims: emb.dims(),
        n_components: cfg.n_components,
        explained_variance_ratio: pca.explained_variance_ratio,
        kdistance: curve,
        knee,
        zone,
        dbscan: DbscanSummary {
            eps: best.eps,
            min_pts: best.min_pts,
            raw_clusters,
            n_clusters: k,
            noise: assignment.noise_count(),
        },
        grid,
        k,
        noise_removed: assignment.noise_count(),
        original,
        denoised,
        assignment: final_run.assignment,
        doc_ids: clean.doc_ids().to_vec(),
        index_map,
        silhouette: final_silhouette,
        clusters,
        scatter,
    })
}

/// Reads a JSONL corpus, runs every stage and, when `output_dir` is set,
/// writes `report.json` and the plot data there.
pub fn run_pipeline(corpus: &Path, cfg: &PipelineConfig) -> Result<ClusterReport, PipelineError> {
    cfg.validate()?;
    let records = read_records(corpus).stage("read")?;
    let docs = preprocess_records(&records, cfg)?;
    let report = run_documents(&docs, cfg)?;
    if let Some(dir) = &cfg.output_dir {
        write_report(&report, dir).stage("report")?;
        emit_plot_data(&report, dir).stage("plot")?;
    }
    Ok(report)
}

pub fn preprocess_records(records: &[CorpusRecord], cfg: &PipelineConfig) -> Result<Vec<Document>, PipelineError> {
    let mut stopwords = StopwordList::default();
    if let Some(path) = &cfg.stopwords {
        stopwords = stopwords.extended(&StopwordList::from_file(path).stage("preprocess")?);
    }
    let options = PreprocessOptions {
        stopwords,
        sender: cfg.sender,
    };
    Ok(preprocess(records, &options, &IdentitySegmenter))
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, PipelineError> {
    fs::write(&path, contents).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_owned(),
        source,
    })
}

pub fn write_report(report: &ClusterReport, dir: &Path) -> Result<PathBuf, PipelineError> {
    ensure_dir(dir)?;
    write_file(dir.join(REPORT_FILE), &report.to_json())
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn color(label: i32) -> &'static str {
    if label < 0 {
        "#000000"
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

struct Scale {
    lo: f64,
    span: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Scale {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let span = if hi > lo { hi - lo } else { 1.0 };
        Scale { lo, span, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / self.span * (self.to - self.from)
    }
}

fn svg(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"black\"/>\n\
         {body}</svg>\n",
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN,
    )
}

fn silhouette_files(report: &ClusterReport) -> (String, String) {
    let mut csv = String::from("cluster,rank,silhouette\n");
    let mut body = String::new();
    let n = report.silhouette.per_sample.len().max(1) as f64;
    let x = Scale::new([-1.0, 1.0].into_iter(), MARGIN, SVG_W - MARGIN);
    let bar = (SVG_H - 2.0 * MARGIN) / n;
    let mut row = 0.0;
    for (cluster, values) in &report.silhouette.per_cluster {
        for (rank, v) in values.iter().enumerate() {
            let _ = writeln!(csv, "{cluster},{rank},{v}");
            let (a, b) = (x.map(0.0), x.map(*v));
            let _ = writeln!(
                body,
                "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{}\"/>",
                a.min(b),
                MARGIN + row * bar,
                (b - a).abs(),
                bar,
                color(*cluster)
            );
            row += 1.0;
        }
    }
    let zero = x.map(0.0);
    let _ = writeln!(
        body,
        "<line x1=\"{zero:.3}\" y1=\"{MARGIN}\" x2=\"{zero:.3}\" y2=\"{}\" stroke=\"gray\"/>",
        SVG_H - MARGIN
    );
    let _ = writeln!(
        body,
        "<line x1=\"{m:.3}\" y1=\"{MARGIN}\" x2=\"{m:.3}\" y2=\"{}\" stroke=\"red\" stroke-dasharray=\"4\"/>",
        SVG_H - MARGIN,
        m = x.map(report.silhouette.mean)
    );
    (csv, svg(&format!("silhouette, mean {:.4}", report.silhouette.mean), &body))
}

fn scatter_files(report: &ClusterReport) -> (String, String) {
    let mut csv = String::from("id,x,y,label\n");
    let mut body = String::new();
    let x = Scale::new(report.scatter.iter().map(|p| p.x), MARGIN, SVG_W - MARGIN);
    let y = Scale::new(report.scatter.iter().map(|p| p.y), SVG_H - MARGIN, MARGIN);
    for p in &report.scatter {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let _ = w.write_record([p.id.clone(), p.x.to_string(), p.y.to_string(), p.label.to_string()]);
        csv.push_str(&String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default());
        let _ = writeln!(
            body,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"{}\"/>",
            x.map(p.x),
            y.map(p.y),
            color(p.label)
        );
    }
    (csv, svg(&format!("PCA scatter, K = {}", report.k), &body))
}

fn kdistance_files(report: &ClusterReport) -> (String, String) {
    let values = &report.kdistance.values;
    let mut csv = String::from("rank,distance\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(csv, "{i},{v}");
    }
    let x = Scale::new([0.0, values.len().saturating_sub(1) as f64].into_iter(), MARGIN, SVG_W - MARGIN);
    let y = Scale::new(values.iter().copied(), SVG_H - MARGIN, MARGIN);
    let mut points = String::new();
    for (i, v) in values.iter().enumerate() {
        let _ = write!(points, "{:.3},{:.3} ", x.map(i as f64), y.map(*v));
    }
    let mut body = format!("<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\"/>\n", points.trim_end());
    for eps in [report.zone.lo, report.zone.hi] {
        let _ = writeln!(
            body,
            "<line x1=\"{MARGIN}\" y1=\"{v:.3}\" x2=\"{}\" y2=\"{v:.3}\" stroke=\"orange\" stroke-dasharray=\"4\"/>",
            SVG_W - MARGIN,
            v = y.map(eps)
        );
    }
    if let Some(k) = report.knee {
        let _ = writeln!(
            body,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"5\" fill=\"red\"/>",
            x.map(k.index as f64),
            y.map(k.y)
        );
    }
    (
        csv,
        svg(&format!("{}-distance, eps = {}", report.kdistance.min_pts, report.dbscan.eps), &body),
    )
}

/// Writes CSV data and an SVG sketch for the silhouette plot, the PCA scatter
/// and the k-distance curve. Returns the paths written.
pub fn emit_plot_data(report: &ClusterReport, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for (name, (csv, svg)) in [
        ("silhouette", silhouette_files(report)),
        ("scatter", scatter_files(report)),
        ("kdistance", kdistance_files(report)),
    ] {
        written.push(write_file(dir.join(format!("{name}.csv")), &csv)?);
        written.push(write_file(dir.join(format!("{name}.svg")), &svg)?);
    }
    Ok(written)
}

/// One row of the original-versus-denoised comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub min_pts: usize,
    pub n_clusters: usize,
    pub noise: usize,
    /// K-Means silhouette on all rows, absent when fewer than 2 clusters.
    pub original_silhouette: Option<f64>,
    /// K-Means silhouette after dropping DBSCAN noise.
    pub denoised_silhouette: Option<f64>,
}

/// For each (eps, MinPts): DBSCAN in PCA space, then K-Means with that
/// cluster count on the full and the denoised embeddings.
pub fn sweep(
    emb: &EmbeddingMatrix,
    settings: &[(f64, usize)],
    cfg: &PipelineConfig,
) -> Result<Vec<SweepRow>, PipelineError> {
    let points = emb.to_points();
    let (_, reduced) = pca_fit_transform(&points, cfg.n_components).stage("pca")?;
    settings
        .iter()
        .map(|&(eps, min_pts)| {
            let run = dbscan(&reduced, DbscanParams::new(eps, min_pts)?).stage("dbscan")?;
            let k = cluster_count_from_dbscan(&run.assignment);
            let mut row = SweepRow {
                eps,
                min_pts,
                n_clusters: k,
                noise: run.assignment.noise_count(),
                original_silhouette: None,
                denoised_silhouette: None,
            };
            if k < 2 {
                return Ok(row);
            }
            let score = |pts: &Points| -> Result<Option<f64>, PipelineError> {
                match kmeans(pts, cfg.kmeans_params(k)) {
                    Ok(r) => Ok(Some(mean_silhouette(pts, &r.assignment)?.mean)),
                    Err(ClusterError::TooFewDistinctPoints { .. } | ClusterError::InvalidK { .. }) => Ok(None),
                    Err(e) => Err(e).stage("kmeans"),
                }
            };
            row.original_silhouette = score(&points)?;
            let (clean, _) = denoise(emb, &run.assignment).stage("denoise")?;
            row.denoised_silhouette = score(&clean.to_points())?;
            Ok(row)
        })
        .collect()
}

const TOPICS: [[&str; 12]; 3] = [
    [
        "giao_hàng", "phí_ship", "bao_lâu", "nhận_hàng", "vận_chuyển", "đơn_hàng", "ngày_mai", "địa_chỉ",
        "tỉnh", "nội_thành", "shipper", "mã_vận_đơn",
    ],
    [
        "giá", "bao_nhiêu", "giảm_giá", "khuyến_mãi", "tiền", "rẻ", "combo", "voucher", "thanh_toán",
        "chuyển_khoản", "trả_góp", "hoá_đơn",
    ],
    [
        "size", "mặc", "vừa", "cân_nặng", "chiều_cao", "áo", "quần", "rộng", "chật", "đổi_size", "số_đo",
        "form",
    ],
];

/// Deterministic labelled corpus of three topics with disjoint vocabularies,
/// for tests and demos.
pub fn synthetic_topic_corpus(per_topic: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_topic * TOPICS.len());
    for i in 0..per_topic {
        for (t, vocab) in TOPICS.iter().enumerate() {
            let len = rng.random_range(6..=10);
            let words: Vec<&str> = (0..len).map(|_| *vocab.choose(&mut rng).expect("vocab")).collect();
            out.push(CorpusRecord {
                id: Some(format!("t{t}-{i:04}")),
                text: words.join(" "),
                label: Some(t as i32),
                ..CorpusRecord::default()
            });
        }
    }
    out
}
