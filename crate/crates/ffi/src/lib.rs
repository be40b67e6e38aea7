//! C ABI over the clustering kernels.
//!
//! Every fallible call returns a [`CcStatus`]. On failure the message is
//! available from [`cc_last_error_message`] on the same thread. Objects are
//! handed out as opaque pointers and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use convcluster::cluster::{dbscan, kmeans, ClusterAssignment, DbscanParams, KMeansParams};
use convcluster::embed::{cosine_similarity, read_embeddings, write_embeddings, EmbedError, EmbeddingMatrix};
use convcluster::metrics::{silhouette_labels, v_measure, MetricsError, NoisePolicy};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// The requested quantity is not defined for this input.
    Undefined = 5,
    Panic = 6,
}

/// Embedding matrix with one doc id per row.
pub struct CcEmbedding {
    inner: EmbeddingMatrix,
}

/// Cluster labels, `-1` for noise.
pub struct CcAssignment {
    inner: ClusterAssignment,
    core: Option<Vec<bool>>,
    inertia: Option<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (CcStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CcStatus::Panic
        }
    }
}

fn invalid(e: impl ToString) -> Failure {
    (CcStatus::InvalidArgument, e.to_string())
}

fn embed_failure(e: EmbedError) -> Failure {
    let status = match e {
        EmbedError::Io { .. } => CcStatus::Io,
        EmbedError::Format { .. } => CcStatus::Format,
        _ => CcStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn metrics_failure(e: MetricsError) -> Failure {
    let status = match e {
        MetricsError::SilhouetteUndefined(_) => CcStatus::Undefined,
        _ => CcStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err((CcStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn to_path(p: *const c_char) -> Result<PathBuf, Failure> {
    non_null(p, "path")?;
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn embedding<'a>(p: *const CcEmbedding) -> Result<&'a EmbeddingMatrix, Failure> {
    non_null(p, "embedding")?;
    Ok(&(*p).inner)
}

fn hand_out<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `rows * dims` row-major floats. `ids` may be null, in which case
/// rows are named by their index.
///
/// # Safety
/// `data` must hold `rows * dims` floats; `ids`, when non-null, `rows` valid
/// NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_embedding_new(
    rows: usize,
    dims: usize,
    data: *const f32,
    ids: *const *const c_char,
    out: *mut *mut CcEmbedding,
) -> CcStatus {
    guard(|| {
        non_null(out, "out")?;
        let len = rows.checked_mul(dims).ok_or_else(|| invalid("rows * dims overflows"))?;
        let values = slice(data, len, "data")?.to_vec();
        let names = if ids.is_null() {
            (0..rows).map(|i| i.to_string()).collect()
        } else {
            slice(ids, rows, "ids")?
                .iter()
                .map(|&p| {
                    non_null(p, "id")?;
                    CStr::from_ptr(p)
                        .to_str()
                        .map(str::to_owned)
                        .map_err(|_| invalid("id is not UTF-8"))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let inner = EmbeddingMatrix::new(dims, values, names).map_err(embed_failure)?;
        hand_out(out, CcEmbedding { inner });
        Ok(())
    })
}

/// Reads a `.emb` file, or CSV when the path ends in `.csv`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_embedding_read(path: *const c_char, out: *mut *mut CcEmbedding) -> CcStatus {
    guard(|| {
        non_null(out, "out")?;
        let inner = read_embeddings(&to_path(path)?).map_err(embed_failure)?;
        hand_out(out, CcEmbedding { inner });
        Ok(())
    })
}

/// # Safety
/// `emb` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cc_embedding_write(emb: *const CcEmbedding, path: *const c_char) -> CcStatus {
    guard(|| write_embeddings(embedding(emb)?, &to_path(path)?).map_err(embed_failure))
}

/// Row count, 0 for null.
///
/// # Safety
/// `emb` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cc_embedding_rows(emb: *const CcEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.rows())
}

/// Column count, 0 for null.
///
/// # Safety
/// `emb` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cc_embedding_dims(emb: *const CcEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.dims())
}

/// # Safety
/// `emb` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cc_embedding_free(emb: *mut CcEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_cosine(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> CcStatus {
    guard(|| {
        non_null(out, "out")?;
        let v = cosine_similarity(slice(a, len, "a")?, slice(b, len, "b")?).map_err(embed_failure)?;
        *out = v;
        Ok(())
    })
}

/// DBSCAN over the embedding rows.
///
/// # Safety
/// `emb` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_dbscan(
    emb: *const CcEmbedding,
    eps: f64,
    min_pts: usize,
    out: *mut *mut CcAssignment,
) -> CcStatus {
    guard(|| {
        non_null(out, "out")?;
        let points = embedding(emb)?.to_points();
        let params = DbscanParams::new(eps, min_pts).map_err(invalid)?;
        let run = dbscan(&points, params).map_err(invalid)?;
        hand_out(
            out,
            CcAssignment {
                inner: run.assignment,
                core: Some(run.core),
                inertia: None,
            },
        );
        Ok(())
    })
}

/// K-Means with k-means++ seeding.
///
/// # Safety
/// `emb` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_kmeans(
    emb: *const CcEmbedding,
    k: usize,
    seed: u64,
    out: *mut *mut CcAssignment,
) -> CcStatus {
    guard(|| {
        non_null(out, "out")?;
        let run = kmeans(&embedding(emb)?.to_points(), KMeansParams::new(k, seed)).map_err(invalid)?;
        hand_out(
            out,
            CcAssignment {
                inner: run.assignment,
                core: None,
                inertia: Some(run.inertia),
            },
        );
        Ok(())
    })
}

/// Number of labelled points, 0 for null.
///
/// # Safety
/// `a` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cc_assignment_len(a: *const CcAssignment) -> usize {
    a.as_ref().map_or(0, |a| a.inner.len())
}

/// Clusters excluding noise, 0 for null.
///
/// # Safety
/// `a` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cc_assignment_n_clusters(a: *const CcAssignment) -> usize {
    a.as_ref().map_or(0, |a| a.inner.n_clusters())
}

/// Copies the labels into `out`, which must hold `cc_assignment_len` ints.
///
/// # Safety
/// `a` must come from this library; `out` must hold `len` ints.
#[no_mangle]
pub unsafe extern "C" fn cc_assignment_labels(a: *const CcAssignment, out: *mut i32, len: usize) -> CcStatus {
    guard(|| {
        non_null(a, "assignment")?;
        non_null(out, "out")?;
        let labels = (*a).inner.labels();
        if len != labels.len() {
            return Err(invalid(format!("buffer holds {len}, need {}", labels.len())));
        }
        ptr::copy_nonoverlapping(labels.as_ptr(), out, len);
        Ok(())
    })
}

/// Copies DBSCAN core flags (1 core, 0 not) into `out`. Undefined for
/// K-Means results.
///
/// # Safety
/// `a` must come from this library; `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cc_assignment_core(a: *const CcAssignment, out: *mut u8, len: usize) -> CcStatus {
    guard(|| {
        non_null(a, "assignment")?;
        non_null(out, "out")?;
        let core = (*a)
            .core
            .as_ref()
            .ok_or_else(|| (CcStatus::Undefined, "no core flags for this assignment".to_owned()))?;
        if len != core.len() {
            return Err(invalid(format!("buffer holds {len}, need {}", core.len())));
        }
        for (i, &c) in core.iter().enumerate() {
            *out.add(i) = u8::from(c);
        }
        Ok(())
    })
}

/// K-Means inertia. Undefined for DBSCAN results.
///
/// # Safety
/// `a` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_assignment_inertia(a: *const CcAssignment, out: *mut f64) -> CcStatus {
    guard(|| {
        non_null(a, "assignment")?;
        non_null(out, "out")?;
        *out = (*a)
            .inertia
            .ok_or_else(|| (CcStatus::Undefined, "no inertia for this assignment".to_owned()))?;
        Ok(())
    })
}

/// # Safety
/// `a` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cc_assignment_free(a: *mut CcAssignment) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Mean silhouette of `labels` over the embedding rows, noise as its own
/// cluster. Returns `Undefined` with fewer than 2 groups.
///
/// # Safety
/// `emb` must come from this library; `labels` must hold `len` ints.
#[no_mangle]
pub unsafe extern "C" fn cc_silhouette(
    emb: *const CcEmbedding,
    labels: *const i32,
    len: usize,
    out_mean: *mut f64,
) -> CcStatus {
    guard(|| {
        non_null(out_mean, "out_mean")?;
        let points = embedding(emb)?.to_points();
        let labels = slice(labels, len, "labels")?;
        let report = silhouette_labels(&points, labels, NoisePolicy::OwnCluster).map_err(metrics_failure)?;
        *out_mean = report.mean;
        Ok(())
    })
}

/// Homogeneity, completeness and V-measure. Any output pointer may be null.
///
/// # Safety
/// `truth` and `pred` must hold `len` ints; non-null outputs writable.
#[no_mangle]
pub unsafe extern "C" fn cc_v_measure(
    truth: *const i32,
    pred: *const i32,
    len: usize,
    beta: f64,
    out_homogeneity: *mut f64,
    out_completeness: *mut f64,
    out_v: *mut f64,
) -> CcStatus {
    guard(|| {
        let r = v_measure(slice(truth, len, "truth")?, slice(pred, len, "pred")?, beta).map_err(metrics_failure)?;
        for (p, v) in [(out_homogeneity, r.homogeneity), (out_completeness, r.completeness), (out_v, r.v)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}
