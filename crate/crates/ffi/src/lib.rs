//! C ABI over the simulator: build a configuration, run one replication
//! and read back its summary numbers.
//!
//! Handles are opaque heap pointers owned by the caller and released with
//! the matching `*_free`. Every call returns a [`VsStatus`]; on failure the
//! message is available from [`vs_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vanet_sec::config::{parse_config, ExperimentConfig};
use vanet_sec::metrics::{crash_fraction, pdr_curve, processing_stats, PdrPoint, ProcessingMoments, PDR_BIN_M};
use vanet_sec::security::{self, PacketKind};
use vanet_sec::sim::run_replication;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Simulation = 4,
    NotAvailable = 5,
    OutOfRange = 6,
    Panic = 99,
}

/// Packet kind selector for [`vs_result_processing`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsKind {
    Long = 0,
    Short = 1,
    Plain = 2,
}

/// Per-slot received/processed statistics of one packet kind.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VsKindStats {
    pub mu_r: f64,
    pub sigma_r: f64,
    pub mu_p: f64,
    pub sigma_p: f64,
}

/// Opaque experiment configuration.
pub struct VsConfig {
    inner: ExperimentConfig,
}

/// Opaque outcome of one replication.
pub struct VsResult {
    pdr: Vec<PdrPoint>,
    processing: ProcessingMoments,
    crash_pct: Option<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn guard<F: FnOnce() -> Result<(), (VsStatus, String)>>(f: F) -> VsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside vanet-sec");
            VsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VsStatus, String)> {
    if p.is_null() {
        return Err((VsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (VsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn null(what: &str) -> (VsStatus, String) {
    (VsStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on this thread.
#[no_mangle]
pub extern "C" fn vs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parse a `key = value` configuration document.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_config_parse(text: *const c_char, out: *mut *mut VsConfig) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let inner = parse_config(text).map_err(|e| (VsStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(VsConfig { inner }));
        Ok(())
    })
}

/// Set one key, e.g. `"scheme"` to `"BP"`. The configuration is left
/// unchanged if the result does not validate.
///
/// # Safety
/// `cfg` must come from [`vs_config_parse`]; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vs_config_set(cfg: *mut VsConfig, key: *const c_char, value: *const c_char) -> VsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        cfg.inner = cfg.inner.with_overrides([(key, value)]).map_err(|e| (VsStatus::Config, e.to_string()))?;
        Ok(())
    })
}

/// Transmit power calibrated to the configured nominal range, dBm.
///
/// # Safety
/// `cfg` must come from [`vs_config_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_config_tx_power_dbm(cfg: *const VsConfig, out: *mut f64) -> VsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = cfg.inner.tx_power_dbm();
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from [`vs_config_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vs_config_free(cfg: *mut VsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run one replication with the given seed.
///
/// # Safety
/// `cfg` must come from [`vs_config_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_run_replication(cfg: *const VsConfig, seed: u64, out: *mut *mut VsResult) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let o = run_replication(&cfg.inner, seed).map_err(|e| (VsStatus::Simulation, e.to_string()))?;
        let crash_pct = match &o.crash {
            Some(r) => Some(crash_fraction(r).map_err(|e| (VsStatus::Simulation, e.to_string()))?),
            None => None,
        };
        let res = VsResult {
            pdr: pdr_curve(&o.pdr),
            processing: processing_stats(&o.ledgers, o.window),
            crash_pct,
        };
        *out = Box::into_raw(Box::new(res));
        Ok(())
    })
}

/// Percentage of crashed platoon members. `VS_STATUS_NOT_AVAILABLE` when
/// the emergency was disabled.
///
/// # Safety
/// `res` must come from [`vs_run_replication`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_result_crash_pct(res: *const VsResult, out: *mut f64) -> VsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = res.crash_pct.ok_or((VsStatus::NotAvailable, "no emergency in this run".to_owned()))?;
        Ok(())
    })
}

/// Number of distance bins with at least one attempt.
///
/// # Safety
/// `res` must come from [`vs_run_replication`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_result_pdr_len(res: *const VsResult, out: *mut usize) -> VsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = res.pdr.len();
        Ok(())
    })
}

/// Bin `i` of the PDR curve: centre distance in metres and delivery ratio.
///
/// # Safety
/// `res` must come from [`vs_run_replication`]; `distance_m` and `pdr`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_result_pdr_get(
    res: *const VsResult,
    i: usize,
    distance_m: *mut f64,
    pdr: *mut f64,
) -> VsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        let d = distance_m.as_mut().ok_or_else(|| null("distance_m"))?;
        let p = pdr.as_mut().ok_or_else(|| null("pdr"))?;
        let pt = res.pdr.get(i).ok_or((VsStatus::OutOfRange, format!("bin {i} of {}", res.pdr.len())))?;
        *d = pt.bin_m;
        *p = pt.pdr;
        Ok(())
    })
}

/// Per-slot processing statistics of one packet kind.
///
/// # Safety
/// `res` must come from [`vs_run_replication`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_result_processing(res: *const VsResult, kind: VsKind, out: *mut VsKindStats) -> VsStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("res"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let k = match kind {
            VsKind::Long => PacketKind::Long,
            VsKind::Short => PacketKind::Short,
            VsKind::Plain => PacketKind::Plain,
        };
        let s = res.processing.kind(k);
        *out = VsKindStats { mu_r: s.mu_r, sigma_r: s.sigma_r, mu_p: s.mu_p, sigma_p: s.sigma_p };
        Ok(())
    })
}

/// # Safety
/// `res` must be null or come from [`vs_run_replication`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vs_result_free(res: *mut VsResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Mean frame size in bytes for the configured scheme, alpha and payload.
///
/// # Safety
/// `cfg` must come from [`vs_config_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_avg_packet_size(cfg: *const VsConfig, out: *mut u32) -> VsStatus {
    guard(|| {
        let c = &cfg.as_ref().ok_or_else(|| null("cfg"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = security::avg_packet_size(c.scheme, c.alpha, c.payload_bytes, &c.costs);
        Ok(())
    })
}

/// Messages of cost `verify_ms` that fit in one slot at `gamma_hz`.
#[no_mangle]
pub extern "C" fn vs_slot_capacity(verify_ms: f64, gamma_hz: f64) -> f64 {
    security::slot_capacity(verify_ms, gamma_hz)
}

/// Width of a PDR distance bin in metres.
#[no_mangle]
pub extern "C" fn vs_pdr_bin_m() -> f64 {
    PDR_BIN_M
}
