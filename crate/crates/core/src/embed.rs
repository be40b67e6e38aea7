//! Sentence embedding matrices, their on-disk formats and embedding providers.
//!
//! The binary `.emb` layout is:
//!
//! ```text
//! b"EMB1" | u32 rows | u32 dims | rows*dims f32 (row-major) | rows * (u32 len, utf-8 id)
//! ```
//!
//! with every integer and float little-endian.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::Document;
use crate::numeric::Points;

pub const MAGIC: &[u8; 4] = b"EMB1";

/// Smallest dimensionality accepted by [`hash_embed`].
pub const MIN_HASH_DIMS: usize = 8;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding dimensionality must be positive")]
    ZeroDims,
    #[error("expected {expected} values for {rows}x{dims}, got {actual}")]
    Shape {
        rows: usize,
        dims: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{rows} rows but {ids} document ids")]
    IdCount { rows: usize, ids: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("vectors have different lengths ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("document {0:?} has no tokens to embed")]
    EmptyDocument(String),
    #[error("hash embedding needs at least {MIN_HASH_DIMS} dimensions, got {0}")]
    TooFewDims(usize),
    #[error("no embedding for document {0:?}")]
    MissingDocument(String),
    #[error("{path}: format error at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown embedder {0:?} (expected \"hash\" or \"file:<path>\")")]
    UnknownEmbedder(String),
}

/// Dense `rows x dims` matrix of f32 sentence features with one document id
/// per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
    doc_ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(dims: usize, data: Vec<f32>, doc_ids: Vec<String>) -> Result<Self, EmbedError> {
        if dims == 0 {
            return Err(EmbedError::ZeroDims);
        }
        let rows = doc_ids.len();
        let expected = rows * dims;
        if data.len() != expected {
            return Err(EmbedError::Shape {
                rows,
                dims,
                expected,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite {
                row: pos / dims,
                col: pos % dims,
            });
        }
        Ok(EmbeddingMatrix {
            rows,
            dims,
            data,
            doc_ids,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Widens to f64 for the numeric routines.
    pub fn to_points(&self) -> Points {
        Points::new(self.dims, self.data.iter().map(|&v| f64::from(v)).collect())
            .expect("matrix shape already validated")
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            ids.push(self.doc_ids[i].clone());
        }
        EmbeddingMatrix {
            rows: indices.len(),
            dims: self.dims,
            data,
            doc_ids: ids,
        }
    }

    pub fn cosine(&self, i: usize, j: usize) -> Result<f64, EmbedError> {
        let a: Vec<f64> = self.row(i).iter().map(|&v| v.into()).collect();
        let b: Vec<f64> = self.row(j).iter().map(|&v| v.into()).collect();
        cosine_similarity(&a, &b)
    }
}

/// `a . b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

// FNV-1a over the bytes, keyed by the seed, then a splitmix64 finalizer.
fn feature_hash(feature: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in feature.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn hash_row(doc: &Document, dims: usize, seed: u64) -> Result<Vec<f32>, EmbedError> {
    let tokens: Vec<&str> = doc.tokens().collect();
    if tokens.is_empty() {
        return Err(EmbedError::EmptyDocument(doc.id.clone()));
    }
    let mut row = vec![0f64; dims];
    let mut add = |feature: &str| {
        let h = feature_hash(feature, seed);
        let bucket = (h % dims as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        row[bucket] += sign;
    };
    for t in &tokens {
        add(t);
    }
    for pair in tokens.windows(2) {
        add(&format!("{}\u{1f}{}", pair[0], pair[1]));
    }
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every feature cancelled out; fall back to the first unigram bucket
        let h = feature_hash(tokens[0], seed);
        row[(h % dims as u64) as usize] = 1.0;
        return Ok(row.into_iter().map(|v| v as f32).collect());
    }
    Ok(row.into_iter().map(|v| (v / norm) as f32).collect())
}

/// Signed feature hashing of token unigrams and bigrams into `dims` buckets,
/// each row L2-normalized.
pub fn hash_embed(docs: &[Document], dims: usize, seed: u64) -> Result<EmbeddingMatrix, EmbedError> {
    if dims < MIN_HASH_DIMS {
        return Err(EmbedError::TooFewDims(dims));
    }
    let mut data = Vec::with_capacity(docs.len() * dims);
    for doc in docs {
        data.extend(hash_row(doc, dims, seed)?);
    }
    EmbeddingMatrix::new(dims, data, docs.iter().map(|d| d.id.clone()).collect())
}

/// Source of sentence embeddings. Output rows align with the input documents.
pub trait EmbeddingProvider {
    fn name(&self) -> &str;
    fn dims(&self) -> usize;
    fn embed(&self, docs: &[Document]) -> Result<EmbeddingMatrix, EmbedError>;
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dims: usize,
    pub seed: u64,
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, docs: &[Document]) -> Result<EmbeddingMatrix, EmbedError> {
        hash_embed(docs, self.dims, self.seed)
    }
}

/// Looks documents up by id in a precomputed embedding file.
#[derive(Debug, Clone)]
pub struct FileEmbedder {
    matrix: EmbeddingMatrix,
    index: HashMap<String, usize>,
}

impl FileEmbedder {
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        Ok(FileEmbedder::from_matrix(read_embeddings(path)?))
    }

    pub fn from_matrix(matrix: EmbeddingMatrix) -> Self {
        let index = matrix
            .doc_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        FileEmbedder { matrix, index }
    }
}

impl EmbeddingProvider for FileEmbedder {
    fn name(&self) -> &str {
        "file"
    }

    fn dims(&self) -> usize {
        self.matrix.dims()
    }

    fn embed(&self, docs: &[Document]) -> Result<EmbeddingMatrix, EmbedError> {
        let rows = docs
            .iter()
            .map(|d| {
                self.index
                    .get(&d.id)
                    .copied()
                    .ok_or_else(|| EmbedError::MissingDocument(d.id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.matrix.select_rows(&rows))
    }
}

/// Embedder selection as given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderChoice {
    Hash,
    File(PathBuf),
}

impl FromStr for EmbedderChoice {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" => Ok(EmbedderChoice::Hash),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(EmbedderChoice::File(PathBuf::from(path))),
                _ => Err(EmbedError::UnknownEmbedder(s.to_owned())),
            },
        }
    }
}

impl std::fmt::Display for EmbedderChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbedderChoice::Hash => f.write_str("hash"),
            EmbedderChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes `.emb` binary, or CSV when the path ends in `.csv`.
pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<(), EmbedError> {
    if is_csv(path) {
        return write_csv(m, path);
    }
    let io_err = |source| EmbedError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    out.write_all(&encode(m)).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Reads `.emb` binary, or CSV when the path ends in `.csv`.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    if is_csv(path) {
        return read_csv(path);
    }
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| EmbedError::Io {
            path: path.to_owned(),
            source,
        })?;
    decode(&bytes).map_err(|(offset, message)| EmbedError::Format {
        path: path.to_owned(),
        offset,
        message,
    })
}

/// Serializes to the `.emb` byte layout.
pub fn encode(m: &EmbeddingMatrix) -> Vec<u8> {
    let ids_len: usize = m.doc_ids.iter().map(|id| 4 + id.len()).sum();
    let mut buf = Vec::with_capacity(12 + m.data.len() * 4 + ids_len);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(m.dims as u32).to_le_bytes());
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for id in &m.doc_ids {
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
    }
    buf
}

/// Parses the `.emb` byte layout. Errors carry the byte offset.
pub fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix, (usize, String)> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8], (usize, String)> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| (*pos, format!("truncated {what}: need {n} bytes, {} left", bytes.len() - *pos)))?;
        let slice = &bytes[*pos..end];
        *pos = end;
        Ok(slice)
    };
    let u32_at = |pos: &mut usize, what: &str| -> Result<u32, (usize, String)> {
        let b = take(pos, 4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };

    if take(&mut pos, 4, "magic")? != MAGIC {
        return Err((0, "magic mismatch, expected EMB1".into()));
    }
    let rows = u32_at(&mut pos, "row count")? as usize;
    let dims = u32_at(&mut pos, "dimension")? as usize;
    if dims == 0 {
        return Err((8, "dimension is zero".into()));
    }
    let payload = rows
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| (4, format!("{rows}x{dims} overflows the addressable size")))?;
    if payload > bytes.len() - pos {
        return Err((
            pos,
            format!(
                "truncated payload: {rows}x{dims} floats need {payload} bytes, {} left",
                bytes.len() - pos
            ),
        ));
    }
    let data: Vec<f32> = take(&mut pos, payload, "payload")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut ids = Vec::with_capacity(rows);
    for _ in 0..rows {
        let len = u32_at(&mut pos, "id length")? as usize;
        let start = pos;
        let raw = take(&mut pos, len, "document id")?;
        let id = std::str::from_utf8(raw).map_err(|e| (start, format!("document id is not utf-8: {e}")))?;
        ids.push(id.to_owned());
    }
    if pos != bytes.len() {
        return Err((pos, format!("{} trailing bytes", bytes.len() - pos)));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err((12 + i * 4, "non-finite value".into()));
    }
    Ok(EmbeddingMatrix {
        rows,
        dims,
        data,
        doc_ids: ids,
    })
}

fn write_csv(m: &EmbeddingMatrix, path: &Path) -> Result<(), EmbedError> {
    let csv_err = |e: csv::Error| EmbedError::Csv {
        path: path.to_owned(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header = std::iter::once("id".to_owned()).chain((0..m.dims).map(|i| format!("dim{i}")));
    w.write_record(header).map_err(csv_err)?;
    for i in 0..m.rows {
        let record = std::iter::once(m.doc_ids[i].clone()).chain(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(record).map_err(csv_err)?;
    }
    w.flush().map_err(|source| EmbedError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_csv(path: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let err = |message: String| EmbedError::Csv {
        path: path.to_owned(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header = r.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.get(0) != Some("id") || header.len() < 2 {
        return Err(err("header must be id,dim0,...".into()));
    }
    let dims = header.len() - 1;
    let mut data = Vec::new();
    let mut ids = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        if record.len() != dims + 1 {
            return Err(err(format!("row {}: expected {} fields", line + 1, dims + 1)));
        }
        ids.push(record[0].to_owned());
        for field in record.iter().skip(1) {
            data.push(
                field
                    .parse::<f32>()
                    .map_err(|e| err(format!("row {}: {e}", line + 1)))?,
            );
        }
    }
    EmbeddingMatrix::new(dims, data, ids)
}
