//! C ABI for the divscore metric kernels.
//!
//! Matrices cross the boundary as opaque `DsMatrix` handles created by
//! `ds_matrix_new` or `ds_divt_read` and released with `ds_matrix_free`.
//! Every fallible call returns a `DsStatus`; on failure the message is
//! available from `ds_last_error_message` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use divscore::dataio::{decode_tensor, encode_tensor, TensorFile};
use divscore::divmetrics::{fid, inception_score, semantic_diversity, vendi_score, ProbMatrix};
use divscore::numeric::Matrix;
use divscore::{stats, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Codec = 3,
    Io = 4,
    Numeric = 5,
    Panic = 6,
}

/// Row-major `f64` matrix.
pub struct DsMatrix(Matrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DsStatus {
    match e {
        _ if e.is_io() => DsStatus::Io,
        Error::Codec(_) => DsStatus::Codec,
        Error::NoConvergence { .. } | Error::NotPositiveSemidefinite { .. } => DsStatus::Numeric,
        _ => DsStatus::InvalidInput,
    }
}

struct Fail(DsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DsStatus::Panic
        }
    }
}

unsafe fn matrix_ref<'a>(m: *const DsMatrix, what: &str) -> Result<&'a Matrix, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail(DsStatus::InvalidInput, "path is not UTF-8".into()))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = v;
    Ok(())
}

fn boxed(m: Matrix) -> *mut DsMatrix {
    Box::into_raw(Box::new(DsMatrix(m)))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut DsMatrix,
) -> DsStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(DsStatus::InvalidInput, "rows * cols overflows".into()))?;
        let values = slice(data, n, "data")?.to_vec();
        let m = Matrix::new(rows, cols, values)?;
        if !m.all_finite() {
            return Err(Fail(DsStatus::InvalidInput, "matrix has non-finite values".into()));
        }
        put(out, boxed(m))
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_matrix_free(m: *mut DsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_matrix_rows(m: *const DsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_matrix_cols(m: *const DsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Row-major values, valid while the handle lives.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_matrix_data(m: *const DsMatrix) -> *const f64 {
    m.as_ref().map_or(ptr::null(), |m| m.0.as_slice().as_ptr())
}

/// Reads a DIVT tensor file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_divt_read(path: *const c_char, out: *mut *mut DsMatrix) -> DsStatus {
    guard(|| {
        let path = path_arg(path)?;
        let bytes = std::fs::read(path)
            .map_err(|e| Fail(DsStatus::Io, format!("{}: {e}", path.display())))?;
        let t = decode_tensor(&bytes).map_err(Error::from)?;
        put(out, boxed(t.to_matrix()))
    })
}

/// Decodes DIVT bytes held in memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_divt_decode(
    bytes: *const u8,
    len: usize,
    out: *mut *mut DsMatrix,
) -> DsStatus {
    guard(|| {
        let t = decode_tensor(slice(bytes, len, "bytes")?).map_err(Error::from)?;
        put(out, boxed(t.to_matrix()))
    })
}

/// Writes `m` as a DIVT file (values narrowed to `f32`).
///
/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ds_divt_write(m: *const DsMatrix, path: *const c_char) -> DsStatus {
    guard(|| {
        let m = matrix_ref(m, "matrix")?;
        let path = path_arg(path)?;
        let t = TensorFile::from_matrix(m).map_err(Error::from)?;
        std::fs::write(path, encode_tensor(&t))
            .map_err(|e| Fail(DsStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// Vendi Score of the rows of `features` under the cosine kernel.
///
/// # Safety
/// `features` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_vendi_score(features: *const DsMatrix, out: *mut f64) -> DsStatus {
    guard(|| put(out, vendi_score(matrix_ref(features, "features")?)?))
}

/// Fréchet distance between Gaussian fits of two feature sets.
///
/// # Safety
/// Both handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_fid(
    eval: *const DsMatrix,
    reference: *const DsMatrix,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let v = fid(matrix_ref(eval, "eval")?, matrix_ref(reference, "reference")?)?;
        put(out, v.value)
    })
}

/// Inception Score of class-probability rows, averaged over `splits`.
///
/// # Safety
/// `probs` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_inception_score(
    probs: *const DsMatrix,
    splits: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let p = ProbMatrix::new(matrix_ref(probs, "probs")?.clone())?;
        put(out, inception_score(&p, splits)?.value)
    })
}

/// Mean pairwise cosine similarity of the rows (lower is more diverse).
///
/// # Safety
/// `embeddings` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_semantic_diversity(
    embeddings: *const DsMatrix,
    out: *mut f64,
) -> DsStatus {
    guard(|| put(out, semantic_diversity(matrix_ref(embeddings, "embeddings")?)?.value))
}

/// Binary ROC AUC; nonzero `labels` are positives.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&b| b != 0).collect();
        put(out, stats::auc(s, &l)?)
    })
}

/// Spearman rank correlation; NaN when either input is constant.
///
/// # Safety
/// `x` and `y` must hold `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_spearman(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut f64,
) -> DsStatus {
    guard(|| {
        let r = stats::spearman(slice(x, n, "x")?, slice(y, n, "y")?)?;
        put(out, r.unwrap_or(f64::NAN))
    })
}
