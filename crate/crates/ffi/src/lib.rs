//! C ABI over `isac-core`.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free` function. Every entry point returns an
//! [`IsacStatus`] (or a null handle) and records a message retrievable with
//! [`isac_last_error`] on the calling thread. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use isac_core::array_channel::steering_vector;
use isac_core::dictionary::ambiguity_set;
use isac_core::doppler::{crb_reference, estimate_doppler, DopplerSeries};
use isac_core::error::IsacError;
use isac_core::experiments::presets::radar_nmse;
use isac_core::experiments::{run_experiment, write_records, Algorithm, ExperimentConfig, MetricRecord, Preset};
use isac_core::linalg::{CVec, C64};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Unreliable = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacAlgorithm {
    OmpSr = 0,
    Omp = 1,
    BlockOmp = 2,
}

/// Opaque experiment configuration.
pub struct IsacConfig(ExperimentConfig);

/// Opaque aggregated metric records.
pub struct IsacRecords {
    records: Vec<MetricRecord>,
    strings: Vec<[CString; 3]>,
}

/// Borrowed view of one record; the strings live as long as the
/// [`IsacRecords`] they came from.
#[repr(C)]
pub struct IsacRecord {
    pub experiment: *const c_char,
    pub sweep_name: *const c_char,
    pub metric: *const c_char,
    pub sweep_value: f64,
    pub mean: f64,
    pub std: f64,
    pub trials: u64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &IsacError) -> IsacStatus {
    match e {
        IsacError::InvalidParameter(_) | IsacError::DimensionMismatch(_) | IsacError::IndexOutOfRange { .. } => {
            IsacStatus::InvalidArgument
        }
        IsacError::Config(_) | IsacError::UnknownPreset(_) => IsacStatus::Config,
        IsacError::Numerical { .. } => IsacStatus::Numerical,
        IsacError::Unreliable(_) => IsacStatus::Unreliable,
        IsacError::Io(_) | IsacError::Csv(_) => IsacStatus::Io,
    }
}

struct Fail(IsacStatus, String);

impl From<IsacError> for Fail {
    fn from(e: IsacError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IsacStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IsacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IsacStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            IsacStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(IsacStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread; empty after a success. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn isac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn isac_config_default() -> *mut IsacConfig {
    catch_unwind(|| Box::into_raw(Box::new(IsacConfig(ExperimentConfig::default())))).unwrap_or(ptr::null_mut())
}

/// Parses a TOML configuration into `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_config_from_toml(text: *const c_char, out: *mut *mut IsacConfig) -> IsacStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = ExperimentConfig::from_toml_str(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(IsacConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn isac_config_free(cfg: *mut IsacConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_config_set_trials(cfg: *mut IsacConfig, trials: usize) -> IsacStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        if trials == 0 {
            return Err(Fail(IsacStatus::InvalidArgument, "trials must be at least 1".into()));
        }
        cfg.0.run.trials = trials;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_config_set_seed(cfg: *mut IsacConfig, seed: u64) -> IsacStatus {
    guard(|| {
        out_arg(cfg, "cfg")?.0.run.seed = seed;
        Ok(())
    })
}

/// Runs a preset (`"fig6"`, ..., `"ase"`) and stores its records in `*out`.
///
/// # Safety
/// `cfg` must be a live handle, `preset` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_run_preset(cfg: *const IsacConfig, preset: *const c_char, out: *mut *mut IsacRecords) -> IsacStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let preset: Preset = str_arg(preset, "preset")?.parse()?;
        let records = run_experiment(&cfg.0, preset)?;
        let strings = records
            .iter()
            .map(|r| {
                let c = |s: &str| CString::new(s).unwrap_or_default();
                [c(&r.experiment), c(&r.sweep_name), c(&r.metric)]
            })
            .collect();
        *out = Box::into_raw(Box::new(IsacRecords { records, strings }));
        Ok(())
    })
}

/// Number of records; 0 for a null handle.
///
/// # Safety
/// `recs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_records_len(recs: *const IsacRecords) -> usize {
    recs.as_ref().map_or(0, |r| r.records.len())
}

/// # Safety
/// `recs` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_records_get(recs: *const IsacRecords, index: usize, out: *mut IsacRecord) -> IsacStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let recs = recs.as_ref().ok_or_else(|| null("records"))?;
        let (r, s) = recs
            .records
            .get(index)
            .zip(recs.strings.get(index))
            .ok_or_else(|| Fail(IsacStatus::InvalidArgument, format!("record {index} out of range")))?;
        *out = IsacRecord {
            experiment: s[0].as_ptr(),
            sweep_name: s[1].as_ptr(),
            metric: s[2].as_ptr(),
            sweep_value: r.sweep_value,
            mean: r.mean,
            std: r.std,
            trials: r.trials,
            seed: r.seed,
        };
        Ok(())
    })
}

/// Writes the records as CSV to `path`.
///
/// # Safety
/// `recs` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn isac_records_write_csv(recs: *const IsacRecords, path: *const c_char) -> IsacStatus {
    guard(|| {
        let recs = recs.as_ref().ok_or_else(|| null("records"))?;
        let file = std::fs::File::create(Path::new(str_arg(path, "path")?)).map_err(IsacError::from)?;
        write_records(std::io::BufWriter::new(file), &recs.records)?;
        Ok(())
    })
}

/// # Safety
/// `recs` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn isac_records_free(recs: *mut IsacRecords) {
    if !recs.is_null() {
        drop(Box::from_raw(recs));
    }
}

/// Unit-norm ULA steering vector at virtual angle `mu`; writes `count`
/// interleaved (re, im) pairs to `out`, which must hold `2·count` doubles.
///
/// # Safety
/// `out` must point to `2·count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isac_steering_vector(mu: f64, count: usize, spacing: f64, out: *mut f64) -> IsacStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if count == 0 || !(spacing > 0.0) || !mu.is_finite() {
            return Err(Fail(IsacStatus::InvalidArgument, "need count >= 1, spacing > 0 and finite mu".into()));
        }
        let v = steering_vector(mu, count, spacing);
        let dst = std::slice::from_raw_parts_mut(out, 2 * count);
        for (d, z) in dst.chunks_exact_mut(2).zip(v.iter()) {
            d[0] = z.re;
            d[1] = z.im;
        }
        Ok(())
    })
}

/// Aliases of `mu` inside (−1, 1) for element spacing `spacing`
/// (wavelengths). `*len` receives the set size; if it exceeds `capacity`
/// nothing is written and `BufferTooSmall` is returned.
///
/// # Safety
/// `out` must hold `capacity` doubles (may be null when `capacity` is 0);
/// `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isac_ambiguity_set(mu: f64, spacing: f64, out: *mut f64, capacity: usize, len: *mut usize) -> IsacStatus {
    guard(|| {
        let len = out_arg(len, "len")?;
        if !(spacing > 0.0) || !(-1.0..1.0).contains(&mu) {
            return Err(Fail(IsacStatus::InvalidArgument, "need spacing > 0 and mu in [-1, 1)".into()));
        }
        let set = ambiguity_set(mu, spacing);
        *len = set.len();
        if set.len() > capacity {
            return Err(Fail(IsacStatus::BufferTooSmall, format!("{} values do not fit in {capacity}", set.len())));
        }
        if !set.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, set.len()).copy_from_slice(&set);
        }
        Ok(())
    })
}

/// Doppler estimate (Hz) from `p_d` impulse-pilot samples given as
/// interleaved (re, im) pairs spaced `interval` seconds apart.
///
/// # Safety
/// `samples` must hold `2·p_d` doubles and `f_hat` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isac_estimate_doppler(samples: *const f64, p_d: usize, interval: f64, f_hat: *mut f64) -> IsacStatus {
    guard(|| {
        let f_hat = out_arg(f_hat, "f_hat")?;
        if samples.is_null() {
            return Err(null("samples"));
        }
        let raw = std::slice::from_raw_parts(samples, 2 * p_d);
        let samples: CVec = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        *f_hat = estimate_doppler(&DopplerSeries { samples, interval, noise_power: 0.0 })?;
        Ok(())
    })
}

/// Frequency CRB `6/(snr·P(P²−1))` in normalised units.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isac_crb_reference(snr: f64, p_d: usize, out: *mut f64) -> IsacStatus {
    guard(|| {
        *out_arg(out, "out")? = crb_reference(snr, p_d)?;
        Ok(())
    })
}

/// Radar CIR NMSE of one algorithm (an [`IsacAlgorithm`] value) on the
/// realisation drawn from `seed`.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isac_radar_nmse(cfg: *const IsacConfig, algorithm: u32, seed: u64, out: *mut f64) -> IsacStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        cfg.0.validate()?;
        let alg = match algorithm {
            x if x == IsacAlgorithm::OmpSr as u32 => Algorithm::OmpSr,
            x if x == IsacAlgorithm::Omp as u32 => Algorithm::Omp,
            x if x == IsacAlgorithm::BlockOmp as u32 => Algorithm::BlockOmp,
            other => return Err(Fail(IsacStatus::InvalidArgument, format!("unknown algorithm {other}"))),
        };
        *out = radar_nmse(&cfg.0, alg, seed)?;
        Ok(())
    })
}
