//! C ABI over beamkit.
//!
//! Signals cross the boundary as channel-major `double` buffers
//! (`channels × len`, channel 0 first). Every fallible call returns a
//! [`BkStatus`]; the message of the last failure on the calling thread is
//! available from [`bk_last_error`]. Handles are opaque and must be released
//! with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use beamkit::beamform::{oracle_separate, OracleConfig, OracleMethod, Statistics};
use beamkit::dsp::MultichannelSignal;
use beamkit::metrics::si_sdr;
use beamkit::nn::{MaskSource, Pipeline};
use beamkit::scene::{ArrayGeometry, Scene, SceneSpec};
use beamkit::Error;
use ndarray::Array2;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Invalid configuration or arguments rejected by the library.
    Config = 3,
    /// Unreadable, malformed or inconsistent input data.
    Data = 4,
    /// Singular system or non-finite values.
    Numerical = 5,
    Panic = 6,
}

/// Array geometry handle.
pub struct BkGeometry(ArrayGeometry);

/// Trained pipeline handle, loaded from a checkpoint.
pub struct BkPipeline(Pipeline);

struct Failure {
    status: BkStatus,
    message: String,
}

impl Failure {
    fn new(status: BkStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(BkStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) => BkStatus::Config,
            Error::Singular { .. } | Error::NonFinite(_) => BkStatus::Numerical,
            _ => BkStatus::Data,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BkStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::new(BkStatus::Panic, format!("internal panic: {msg}")))
    });
    let (status, message) = match outcome {
        Ok(()) => (BkStatus::Ok, String::new()),
        Err(f) => (f.status, f.message),
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
    status
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    // SAFETY: the caller guarantees `len` writable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::new(BkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn signal(p: *const f64, channels: usize, len: usize, sample_rate: u32, what: &str) -> Result<MultichannelSignal, Failure> {
    if len == 0 {
        return Err(Failure::new(BkStatus::InvalidArgument, format!("{what} is empty")));
    }
    let n = channels
        .checked_mul(len)
        .ok_or_else(|| Failure::new(BkStatus::InvalidArgument, format!("{what} size overflows")))?;
    let data = unsafe { slice(p, n, what) }?;
    let a = Array2::from_shape_vec((channels, len), data.to_vec()).expect("length checked");
    Ok(MultichannelSignal::new(a, sample_rate)?)
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last failure message of this thread into `buf` (truncated,
/// always NUL-terminated when `cap > 0`). Returns the full message length
/// without the terminator; 0 after a successful call.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bk_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            // SAFETY: `n + 1 <= cap` bytes are writable.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// The default eight-element linear array. Never null.
#[no_mangle]
pub extern "C" fn bk_geometry_default() -> *mut BkGeometry {
    Box::into_raw(Box::new(BkGeometry(ArrayGeometry::default_linear8())))
}

/// A linear array from element coordinates (metres) and `n_pairs` pairs
/// given as `2 * n_pairs` zero-based indices.
///
/// # Safety
/// `positions` holds `channels` values, `pairs` holds `2 * n_pairs` values
/// (may be null when `n_pairs` is 0), `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bk_geometry_new(
    positions: *const f64,
    channels: usize,
    pairs: *const usize,
    n_pairs: usize,
    reference: usize,
    sound_speed: f64,
    out: *mut *mut BkGeometry,
) -> BkStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let positions = unsafe { slice(positions, channels, "positions") }?.to_vec();
        let flat = if n_pairs == 0 {
            &[][..]
        } else {
            unsafe { slice(pairs, 2 * n_pairs, "pairs") }?
        };
        let pairs = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let g = ArrayGeometry::new(positions, pairs, reference, sound_speed)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(BkGeometry(g))) };
        Ok(())
    })
}

/// Number of elements, 0 for a null handle.
///
/// # Safety
/// `geometry` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bk_geometry_channels(geometry: *const BkGeometry) -> usize {
    unsafe { geometry.as_ref() }.map_or(0, |g| g.0.channels())
}

/// # Safety
/// `geometry` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_geometry_free(geometry: *mut BkGeometry) {
    if !geometry.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(geometry) });
    }
}

/// Scale-invariant SDR in dB, clamped to ±80.
///
/// # Safety
/// `estimate` and `reference` hold `len` values; `out_db` is writable.
#[no_mangle]
pub unsafe extern "C" fn bk_si_sdr(estimate: *const f64, reference: *const f64, len: usize, out_db: *mut f64) -> BkStatus {
    guard(|| {
        let est = unsafe { slice(estimate, len, "estimate") }?;
        let reference = unsafe { slice(reference, len, "reference") }?;
        let out = unsafe { slice_mut(out_db, 1, "out_db") }?;
        out[0] = si_sdr(est, reference)?;
        Ok(())
    })
}

/// Runs an oracle method (`"ibm"`, `"td-eq-mcwf"`, ...) on one scene given
/// its mixture and source images and writes the `len`-sample reference
/// channel estimate to `out`. With `oracle_statistics` false, beamformers
/// use ratio-masked mixtures instead of the true images.
///
/// # Safety
/// `mixture`, `target`, `interferer` hold `channels × len` values with
/// `channels` the geometry's element count; `out` holds `len` values.
#[no_mangle]
pub unsafe extern "C" fn bk_oracle_separate(
    geometry: *const BkGeometry,
    method: *const c_char,
    oracle_statistics: bool,
    mixture: *const f64,
    target: *const f64,
    interferer: *const f64,
    len: usize,
    sample_rate: u32,
    target_doa: f64,
    interferer_doa: f64,
    out: *mut f64,
) -> BkStatus {
    guard(|| {
        let geometry = unsafe { geometry.as_ref() }.ok_or_else(|| Failure::null("geometry"))?;
        let method: OracleMethod = unsafe { string(method, "method") }?.parse()?;
        let m = geometry.0.channels();
        let scene = Scene {
            mixture: unsafe { signal(mixture, m, len, sample_rate, "mixture") }?,
            target: unsafe { signal(target, m, len, sample_rate, "target") }?,
            interferer: unsafe { signal(interferer, m, len, sample_rate, "interferer") }?,
            spec: SceneSpec {
                target_doa,
                interferer_doa,
                sir_db: 0.0,
                seed: 0,
                duration_s: len as f64 / sample_rate as f64,
            },
            geometry: geometry.0.clone(),
        };
        let statistics = if oracle_statistics { Statistics::Oracle } else { Statistics::RatioMasked };
        let est = oracle_separate(&scene, method, &OracleConfig::default(), statistics)?;
        let dst = unsafe { slice_mut(out, len, "out") }?;
        dst.copy_from_slice(est.channel(0).as_slice().expect("contiguous row"));
        Ok(())
    })
}

/// Loads a checkpoint written by `beamkit train`.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_load(path: *const c_char, out: *mut *mut BkPipeline) -> BkStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let path = unsafe { string(path, "path") }?;
        let (pipeline, _) = beamkit::io::load_checkpoint(Path::new(path))?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(BkPipeline(pipeline))) };
        Ok(())
    })
}

/// Channels the pipeline expects, 0 for a null handle.
///
/// # Safety
/// `pipeline` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_channels(pipeline: *const BkPipeline) -> usize {
    unsafe { pipeline.as_ref() }.map_or(0, |p| p.0.geometry().channels())
}

/// Separates the target arriving from `target_doa` degrees and writes the
/// `len`-sample reference-channel estimate to `out`.
///
/// # Safety
/// `mixture` holds `channels × len` values with `channels` from
/// [`bk_pipeline_channels`]; `out` holds `len` values.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_separate(
    pipeline: *const BkPipeline,
    mixture: *const f64,
    len: usize,
    sample_rate: u32,
    target_doa: f64,
    out: *mut f64,
) -> BkStatus {
    guard(|| {
        let p = &unsafe { pipeline.as_ref() }.ok_or_else(|| Failure::null("pipeline"))?.0;
        let y = unsafe { signal(mixture, p.geometry().channels(), len, sample_rate, "mixture") }?;
        let input = p.prepare(&y, target_doa, None, None)?;
        let est = p.separate(&input, MaskSource::Estimator)?;
        let dst = unsafe { slice_mut(out, len, "out") }?;
        dst.copy_from_slice(&est);
        Ok(())
    })
}

/// # Safety
/// `pipeline` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_pipeline_free(pipeline: *mut BkPipeline) {
    if !pipeline.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(pipeline) });
    }
}
