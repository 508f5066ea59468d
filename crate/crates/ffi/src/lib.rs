//! C ABI for `franson-core`.
//!
//! Objects cross the boundary as opaque handles created by `franson_*_new`,
//! `franson_*_load` or a run function, and released with the matching
//! `franson_*_free`. Every fallible call returns a [`FransonStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`franson_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use franson_core::analysis::{extract_overlap, OverlapResult};
use franson_core::engine::{run_simulation, TimeTagStream};
use franson_core::optics::{coincidence_rates, CouplerParams};
use franson_core::pipeline::{run_phase_scan, ScanResult};
use franson_core::{load_config, Error, ExperimentConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FransonStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Parse = 4,
    Io = 5,
    Degenerate = 6,
    Contract = 7,
    Resource = 8,
    UnknownChannel = 9,
    OutOfRange = 10,
    Panic = 11,
}

/// Experiment configuration.
pub struct FransonConfig(ExperimentConfig);

/// Time-ordered detector clicks of one simulation.
pub struct FransonStream(TimeTagStream);

/// Result of a phase scan.
pub struct FransonScan(ScanResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FransonTag {
    pub time_ps: i64,
    pub channel: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FransonOverlap {
    pub v13: f64,
    pub g: f64,
    pub gamma_squared: f64,
    pub gamma: f64,
    pub out_of_range: bool,
    pub exceeds_nonlocality_threshold: bool,
}

impl From<OverlapResult> for FransonOverlap {
    fn from(o: OverlapResult) -> Self {
        Self {
            v13: o.v13,
            g: o.g,
            gamma_squared: o.gamma_squared,
            gamma: o.gamma,
            out_of_range: o.out_of_range,
            exceeds_nonlocality_threshold: o.exceeds_nonlocality_threshold,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FransonStatus {
    match e {
        Error::Validation { .. } => FransonStatus::Validation,
        Error::Contract(_) => FransonStatus::Contract,
        Error::Degenerate(_) => FransonStatus::Degenerate,
        Error::Parse { .. } => FransonStatus::Parse,
        Error::UnknownChannel(_) => FransonStatus::UnknownChannel,
        Error::Resource { .. } => FransonStatus::Resource,
        Error::Io { .. } => FransonStatus::Io,
    }
}

struct Failure(FransonStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FransonStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FransonStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FransonStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FransonStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FransonStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn franson_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn franson_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration holding the documented defaults.
#[no_mangle]
pub extern "C" fn franson_config_new() -> *mut FransonConfig {
    Box::into_raw(Box::new(FransonConfig(ExperimentConfig::default())))
}

/// Loads a flat `key = value` configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn franson_config_load(path: *const c_char, out: *mut *mut FransonConfig) -> FransonStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = load_config(Path::new(path))?;
        put(out, Box::into_raw(Box::new(FransonConfig(cfg))), "out")
    })
}

/// Sets one configuration key, e.g. `source.g2_zero` to `0.02`, and
/// revalidates. On failure the configuration is unchanged.
///
/// # Safety
/// `config` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn franson_config_set(
    config: *mut FransonConfig,
    key: *const c_char,
    value: *const c_char,
) -> FransonStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        let mut next = cfg.0.clone();
        next.set(key, value)
            .map_err(|m| Failure(FransonStatus::Validation, format!("{key}: {m}")))?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn franson_config_free(config: *mut FransonConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Normalized coincidence probabilities of pairs (1,3), (1,4), (2,3), (2,4)
/// written to `out[0..4]`.
///
/// # Safety
/// `out` must point to four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn franson_coincidence_rates(
    reflectance_a: f64,
    reflectance_b: f64,
    phase_diff: f64,
    overlap: f64,
    out: *mut f64,
) -> FransonStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = CouplerParams::new(reflectance_a)?;
        let b = CouplerParams::new(reflectance_b)?;
        let rates = coincidence_rates(&a, &b, phase_diff, overlap)?.as_array();
        ptr::copy_nonoverlapping(rates.as_ptr(), out, 4);
        Ok(())
    })
}

/// Wavefunction overlap from the corrected (1,3) visibility and g2(0).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn franson_extract_overlap(v13: f64, g2_zero: f64, out: *mut FransonOverlap) -> FransonStatus {
    guard(|| put(out, extract_overlap(v13, g2_zero)?.into(), "out"))
}

/// Simulates `n_cycles` cycles with the configuration's optics as given.
///
/// # Safety
/// `config` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn franson_simulate(
    config: *const FransonConfig,
    n_cycles: u64,
    seed: u64,
    out: *mut *mut FransonStream,
) -> FransonStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let stream = run_simulation(&cfg.0, n_cycles, seed)?;
        put(out, Box::into_raw(Box::new(FransonStream(stream))), "out")
    })
}

/// Number of clicks in the stream; 0 for a null handle.
///
/// # Safety
/// `stream` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn franson_stream_len(stream: *const FransonStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.tags.len())
}

/// Copies click `index` into `out`.
///
/// # Safety
/// `stream` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn franson_stream_get(
    stream: *const FransonStream,
    index: usize,
    out: *mut FransonTag,
) -> FransonStatus {
    guard(|| {
        let s = handle(stream, "stream")?;
        let t = s.0.tags.get(index).ok_or_else(|| {
            Failure(
                FransonStatus::OutOfRange,
                format!("index {index} outside stream of {} clicks", s.0.tags.len()),
            )
        })?;
        put(
            out,
            FransonTag {
                time_ps: t.time,
                channel: t.channel,
            },
            "out",
        )
    })
}

/// Clicks on `channel` (1..=4).
///
/// # Safety
/// `stream` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn franson_stream_count(stream: *const FransonStream, channel: u8) -> usize {
    stream.as_ref().map_or(0, |s| s.0.count_on(channel))
}

/// # Safety
/// `stream` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn franson_stream_free(stream: *mut FransonStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Full phase scan in the configured mode. With a non-null `out_dir` the
/// result files are written there as well.
///
/// # Safety
/// `config` must come from this library, `out_dir` be null or a
/// NUL-terminated string, and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn franson_scan(
    config: *const FransonConfig,
    out_dir: *const c_char,
    out: *mut *mut FransonScan,
) -> FransonStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(str_arg(out_dir, "out_dir")?))
        };
        let result = run_phase_scan(&cfg.0, dir)?;
        put(out, Box::into_raw(Box::new(FransonScan(result))), "out")
    })
}

/// Raw and background-corrected visibility of pair `(i, j)`. `v2` is NaN
/// when the corrected fit is unavailable.
///
/// # Safety
/// `scan` must come from this library; `v1` and `v2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn franson_scan_visibility(
    scan: *const FransonScan,
    i: u8,
    j: u8,
    v1: *mut f64,
    v2: *mut f64,
) -> FransonStatus {
    guard(|| {
        let s = handle(scan, "scan")?;
        let fit = s.0.fit((i, j)).ok_or(Failure(
            FransonStatus::UnknownChannel,
            format!("pair ({i},{j}) is not a cross pair"),
        ))?;
        put(v1, fit.visibility_raw, "v1")?;
        put(v2, fit.visibility_corrected.unwrap_or(f64::NAN), "v2")
    })
}

/// Overlap extracted by the scan.
///
/// # Safety
/// `scan` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn franson_scan_overlap(scan: *const FransonScan, out: *mut FransonOverlap) -> FransonStatus {
    guard(|| {
        let s = handle(scan, "scan")?;
        let o = s.0.summary.overlap.ok_or(Failure(
            FransonStatus::Degenerate,
            "scan has no overlap estimate".to_string(),
        ))?;
        put(out, o.into(), "out")
    })
}

/// # Safety
/// `scan` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn franson_scan_free(scan: *mut FransonScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}
