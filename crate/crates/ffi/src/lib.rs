//! C ABI over the `ringpair` toolkit.
//!
//! Every function returns an [`RpStatus`]; on failure a description is kept
//! for the calling thread and can be read with [`rp_last_error_message`].
//! Streams and correlograms are opaque handles created and released by this
//! library. Results are written through caller-provided out-pointers. Panics
//! never cross the boundary; they are reported as [`RpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ringpair::fitmodels::{self, CorrelationKind, G2ModelParams};
use ringpair::scenario::{self, ScenarioConfig};
use ringpair::tcspc::{self, CorrelogramData};
use ringpair::{Error, TimeTagStream};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    NullPointer = 1,
    ParameterDomain = 2,
    ContractViolation = 3,
    DegenerateInput = 4,
    InsufficientStatistics = 5,
    NonConvergence = 6,
    NoCrossing = 7,
    Numeric = 8,
    Config = 9,
    Io = 10,
    InvalidUtf8 = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// Which correlation peak a model or fit refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpCorrelationKind {
    /// Degenerate pairs split 50/50 onto two detectors.
    SelfDegenerate = 0,
    /// Signal and idler on separate detectors.
    CrossNondegenerate = 1,
}

impl From<RpCorrelationKind> for CorrelationKind {
    fn from(k: RpCorrelationKind) -> Self {
        match k {
            RpCorrelationKind::SelfDegenerate => CorrelationKind::SelfDegenerate,
            RpCorrelationKind::CrossNondegenerate => CorrelationKind::CrossNondegenerate,
        }
    }
}

/// Opaque time-tag stream (seconds, sorted).
pub struct RpStream(TimeTagStream);

/// Opaque coincidence histogram.
pub struct RpCorrelogram(CorrelogramData);

/// Fitted correlation peak. Times in seconds, rates and bandwidths in Hz.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RpG2Fit {
    pub pair_rate: f64,
    pub pair_rate_error: f64,
    pub coherence_time: f64,
    pub coherence_time_error: f64,
    pub smearing: f64,
    pub bandwidth: f64,
    pub bandwidth_error: f64,
    pub reduced_chi2: f64,
    pub iterations: u64,
}

/// Heralded zero-delay autocorrelation with its coincidence counts.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RpHeraldedG2 {
    pub value: f64,
    pub heralds: u64,
    pub with_a: u64,
    pub with_b: u64,
    pub with_both: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RpStatus {
    match e {
        Error::ParameterDomain { .. } => RpStatus::ParameterDomain,
        Error::ContractViolation(_) => RpStatus::ContractViolation,
        Error::DegenerateInput(_) => RpStatus::DegenerateInput,
        Error::InsufficientStatistics { .. } => RpStatus::InsufficientStatistics,
        Error::NonConvergence { .. } => RpStatus::NonConvergence,
        Error::NoCrossing { .. } => RpStatus::NoCrossing,
        Error::Numeric(_) => RpStatus::Numeric,
        Error::Config(_) | Error::Parse { .. } => RpStatus::Config,
        Error::Io { .. } => RpStatus::Io,
        Error::Stage { source, .. } => status_of(source),
    }
}

/// Failure inside a call: a status plus the message stored for the thread.
struct Failure(RpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RpStatus::NullPointer, format!("`{what}` is a null pointer"))
}

/// Runs `f`, converting errors and panics into a status and the thread's error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RpStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            RpStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `len` tags (seconds, non-decreasing, within `[0, duration]`) into a new stream.
///
/// # Safety
/// `tags` must point to `len` readable doubles (it may be null when `len` is 0);
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_stream_new(tags: *const f64, len: usize, duration: f64, out: *mut *mut RpStream) -> RpStatus {
    guard(|| {
        let slice = if len == 0 {
            &[][..]
        } else if tags.is_null() {
            return Err(null("tags"));
        } else {
            std::slice::from_raw_parts(tags, len)
        };
        let stream = TimeTagStream::new(slice.to_vec(), duration, "ffi")?;
        put(out, Box::into_raw(Box::new(RpStream(stream))), "out")
    })
}

/// Number of tags in a stream (0 for a null handle).
///
/// # Safety
/// `stream` must be null or a handle from [`rp_stream_new`].
#[no_mangle]
pub unsafe extern "C" fn rp_stream_len(stream: *const RpStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// Releases a stream. Null is ignored.
///
/// # Safety
/// `stream` must be null or a handle from [`rp_stream_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_stream_free(stream: *mut RpStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Histogram of `t_b - t_a` over `[-max_delay, max_delay]` with bins of `bin_width` seconds.
///
/// # Safety
/// `a` and `b` must be valid stream handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_correlate(
    a: *const RpStream,
    b: *const RpStream,
    bin_width: f64,
    max_delay: f64,
    out: *mut *mut RpCorrelogram,
) -> RpStatus {
    guard(|| {
        let (a, b) = (get(a, "a")?, get(b, "b")?);
        let c = tcspc::correlate(&a.0, &b.0, bin_width, max_delay)?;
        put(out, Box::into_raw(Box::new(RpCorrelogram(c))), "out")
    })
}

/// Number of bins in a correlogram (0 for a null handle).
///
/// # Safety
/// `c` must be null or a handle from [`rp_correlate`].
#[no_mangle]
pub unsafe extern "C" fn rp_correlogram_len(c: *const RpCorrelogram) -> usize {
    c.as_ref().map_or(0, |c| c.0.counts.len())
}

/// Copies bin-centre delays (seconds) and counts into caller buffers of `capacity` entries.
/// Either output may be null to skip it.
///
/// # Safety
/// `c` must be a valid handle; non-null outputs must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn rp_correlogram_bins(
    c: *const RpCorrelogram,
    delays: *mut f64,
    counts: *mut u64,
    capacity: usize,
) -> RpStatus {
    guard(|| {
        let c = &get(c, "correlogram")?.0;
        let n = c.counts.len();
        if capacity < n {
            return Err(Failure(
                RpStatus::BufferTooSmall,
                format!("buffer holds {capacity} bins, correlogram has {n}"),
            ));
        }
        if !delays.is_null() {
            ptr::copy_nonoverlapping(c.delays.as_ptr(), delays, n);
        }
        if !counts.is_null() {
            ptr::copy_nonoverlapping(c.counts.as_ptr(), counts, n);
        }
        Ok(())
    })
}

/// Releases a correlogram. Null is ignored.
///
/// # Safety
/// `c` must be null or a handle from [`rp_correlate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_correlogram_free(c: *mut RpCorrelogram) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Normalized `g2` and its Poisson errors, written into buffers of `capacity` entries
/// (`errors` may be null).
///
/// # Safety
/// `c` must be a valid handle; `values` (and `errors` when non-null) must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_g2_normalize(
    c: *const RpCorrelogram,
    values: *mut f64,
    errors: *mut f64,
    capacity: usize,
) -> RpStatus {
    guard(|| {
        let c = &get(c, "correlogram")?.0;
        if values.is_null() {
            return Err(null("values"));
        }
        let g = tcspc::g2_normalize(c)?;
        if capacity < g.len() {
            return Err(Failure(
                RpStatus::BufferTooSmall,
                format!("buffer holds {capacity} values, curve has {}", g.len()),
            ));
        }
        ptr::copy_nonoverlapping(g.values.as_ptr(), values, g.len());
        if !errors.is_null() {
            ptr::copy_nonoverlapping(g.errors.as_ptr(), errors, g.len());
        }
        Ok(())
    })
}

/// Model `g2(delay)` for pair rate (Hz), coherence time and smearing width (seconds).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_g2_model(
    delay: f64,
    pair_rate: f64,
    coherence_time: f64,
    smearing: f64,
    kind: RpCorrelationKind,
    out: *mut f64,
) -> RpStatus {
    guard(|| {
        let p = G2ModelParams {
            pair_rate,
            coherence_time,
            smearing,
            kind: kind.into(),
        };
        p.validate()?;
        put(out, fitmodels::g2_model(delay, &p), "out")
    })
}

/// Smearing width from detector jitter and bin width (seconds).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_tau_w(jitter_sigma: f64, bin_width: f64, out: *mut f64) -> RpStatus {
    guard(|| put(out, fitmodels::tau_w(jitter_sigma, bin_width)?, "out"))
}

/// Normalizes and fits a correlogram with the smearing implied by `jitter_sigma`.
///
/// # Safety
/// `c` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_fit_g2(
    c: *const RpCorrelogram,
    kind: RpCorrelationKind,
    jitter_sigma: f64,
    out: *mut RpG2Fit,
) -> RpStatus {
    guard(|| {
        let c = &get(c, "correlogram")?.0;
        let curve = tcspc::g2_normalize(c)?;
        let smearing = fitmodels::tau_w(jitter_sigma, c.bin_width)?;
        let kind = kind.into();
        let init = fitmodels::initial_guess(&curve, kind, smearing)?;
        let f = fitmodels::fit_g2(&curve, kind, &init)?;
        put(
            out,
            RpG2Fit {
                pair_rate: f.params.pair_rate,
                pair_rate_error: f.pair_rate_error,
                coherence_time: f.params.coherence_time,
                coherence_time_error: f.coherence_time_error,
                smearing,
                bandwidth: f.bandwidth,
                bandwidth_error: f.bandwidth_error,
                reduced_chi2: f.residual_norm * f.residual_norm,
                iterations: f.iterations as u64,
            },
            "out",
        )
    })
}

/// Heralded `g2(0)` within a coincidence window of `window` seconds (full width).
///
/// # Safety
/// Stream arguments must be valid handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_heralded_g2(
    herald: *const RpStream,
    a: *const RpStream,
    b: *const RpStream,
    window: f64,
    out: *mut RpHeraldedG2,
) -> RpStatus {
    guard(|| {
        let (h, a, b) = (get(herald, "herald")?, get(a, "a")?, get(b, "b")?);
        let r = tcspc::heralded_g2(&h.0, &a.0, &b.0, window)?;
        put(
            out,
            RpHeraldedG2 {
                value: r.value,
                heralds: r.heralds,
                with_a: r.with_a,
                with_b: r.with_b,
                with_both: r.with_both,
            },
            "out",
        )
    })
}

/// Runs a scenario from its TOML text and returns the JSON summary as a new
/// string, to be released with [`rp_string_free`].
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_run_scenario(config_toml: *const c_char, out_json: *mut *mut c_char) -> RpStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let text = CStr::from_ptr(config_toml)
            .to_str()
            .map_err(|e| Failure(RpStatus::InvalidUtf8, format!("configuration is not UTF-8: {e}")))?;
        let cfg = ScenarioConfig::from_toml(text)?;
        let summary = scenario::run_scenario(&cfg)?;
        let json = serde_json::to_string(&summary).expect("summary serializes");
        let c = CString::new(json).expect("JSON has no NUL bytes");
        put(out_json, c.into_raw(), "out_json")
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
