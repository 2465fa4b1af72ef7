//! C ABI over the `qrefresh` simulator.
//!
//! Traces and execution logs are opaque handles owned by the caller and
//! released with their `*_free` function. Every fallible call returns a
//! [`QrStatus`]; on failure [`qr_last_error`] describes the problem. Strings
//! passed in are NUL-terminated UTF-8. No function unwinds across the ABI.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qrefresh::policy::PolicyConfig;
use qrefresh::sim::{write_log, SimError};
use qrefresh::trace::{load_trace, save_trace, TraceError};
use qrefresh::tracegen::{generate_trace, GeneratorConfig, GeneratorError};
use qrefresh::{compute_metrics, run_simulation, ChangeTrace, ExecutionLog, MetricsReport, RunConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Audit = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Metric row for one run. `effectivity_pct` is `100 * relevant / total_qe`
/// (0 when nothing ran).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QrMetrics {
    pub total_qe: u64,
    pub irrelevant: u64,
    pub relevant: u64,
    pub effectivity_pct: f64,
    pub abs_delay: u64,
    pub max_delay: u64,
    pub abs_miss: u64,
    pub max_miss: u64,
}

impl From<&MetricsReport> for QrMetrics {
    fn from(m: &MetricsReport) -> Self {
        QrMetrics {
            total_qe: m.total_qe,
            irrelevant: m.irrelevant,
            relevant: m.relevant,
            effectivity_pct: m.effectivity_pct(),
            abs_delay: m.abs_delay,
            max_delay: m.max_delay,
            abs_miss: m.abs_miss,
            max_miss: m.max_miss,
        }
    }
}

/// A validated change trace.
pub struct QrTrace(ChangeTrace);

/// The execution log of one simulation run.
pub struct QrLog(ExecutionLog);

/// Pass as `budget_ms` for an unlimited budget.
pub const QR_BUDGET_UNLIMITED: u64 = u64::MAX;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(QrStatus, String);

impl Failure {
    fn new(status: QrStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        let status = match e {
            TraceError::Io(_) => QrStatus::Io,
            _ => QrStatus::Parse,
        };
        Failure::new(status, e)
    }
}

impl From<GeneratorError> for Failure {
    fn from(e: GeneratorError) -> Self {
        let status = match e {
            GeneratorError::Io(_) => QrStatus::Io,
            _ => QrStatus::Config,
        };
        Failure::new(status, e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::Io(_) => QrStatus::Io,
            SimError::MalformedLog { .. } => QrStatus::Parse,
            _ => QrStatus::Config,
        };
        Failure::new(status, e)
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting failures and panics into a status code.
fn guard<F>(f: F) -> QrStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            set_last_error(&format!("internal error: {msg}"));
            QrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(QrStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(QrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(QrStatus::NullPointer, format!("{name} is NULL")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(QrStatus::NullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qr_trace_load(path: *const c_char, out: *mut *mut QrTrace) -> QrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let trace = load_trace(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(QrTrace(trace)));
        Ok(())
    })
}

/// Generates a synthetic trace. `settings` is NULL or `key=value` lines
/// applied over the defaults before `seed`, `n_queries` and `n_revisions`.
///
/// # Safety
/// `settings` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qr_trace_generate(
    seed: u64,
    n_queries: u32,
    n_revisions: u32,
    settings: *const c_char,
    out: *mut *mut QrTrace,
) -> QrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let mut cfg = GeneratorConfig::default();
        if !settings.is_null() {
            cfg.apply_str(str_arg(settings, "settings")?)?;
        }
        cfg.seed = seed;
        cfg.n_queries = n_queries as usize;
        cfg.n_revisions = n_revisions as usize;
        let trace = generate_trace(&cfg)?;
        *out = Box::into_raw(Box::new(QrTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qr_trace_save(trace: *const QrTrace, path: *const c_char) -> QrStatus {
    guard(|| {
        let trace = ref_arg(trace, "trace")?;
        save_trace(&trace.0, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qr_trace_free(trace: *mut QrTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of queries, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_trace_n_queries(trace: *const QrTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.n_queries())
}

/// Number of revisions after the initial one, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_trace_n_revisions(trace: *const QrTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.n_revisions())
}

/// Ground-truth number of result changes, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_trace_total_changes(trace: *const QrTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.total_changes())
}

fn simulate(trace: &ChangeTrace, policy: &str, budget_ms: u64) -> Result<ExecutionLog, Failure> {
    let cfg: PolicyConfig = policy
        .parse()
        .map_err(|e| Failure::new(QrStatus::Config, e))?;
    Ok(run_simulation(trace, &RunConfig::new(cfg, budget_ms))?)
}

fn metrics(trace: &ChangeTrace, log: &ExecutionLog) -> Result<QrMetrics, Failure> {
    let report = compute_metrics(log, trace).map_err(|e| Failure::new(QrStatus::Audit, e))?;
    Ok(QrMetrics::from(&report))
}

/// Replays `trace` under `policy` (e.g. `"cr:lambda=0.5"`) with a per-slot
/// budget and writes the resulting metrics to `out`.
///
/// # Safety
/// Pointers must be valid; `policy` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qr_simulate(
    trace: *const QrTrace,
    policy: *const c_char,
    budget_ms: u64,
    out: *mut QrMetrics,
) -> QrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let trace = ref_arg(trace, "trace")?;
        let log = simulate(&trace.0, str_arg(policy, "policy")?, budget_ms)?;
        *out = metrics(&trace.0, &log)?;
        Ok(())
    })
}

/// Like [`qr_simulate`] but hands back the execution log.
///
/// # Safety
/// Pointers must be valid; `policy` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qr_run(
    trace: *const QrTrace,
    policy: *const c_char,
    budget_ms: u64,
    out: *mut *mut QrLog,
) -> QrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let trace = ref_arg(trace, "trace")?;
        let log = simulate(&trace.0, str_arg(policy, "policy")?, budget_ms)?;
        *out = Box::into_raw(Box::new(QrLog(log)));
        Ok(())
    })
}

/// Audits `log` against `trace` and computes its metrics.
///
/// # Safety
/// Pointers must be valid handles from this library.
#[no_mangle]
pub unsafe extern "C" fn qr_log_metrics(
    trace: *const QrTrace,
    log: *const QrLog,
    out: *mut QrMetrics,
) -> QrStatus {
    guard(|| {
        out_arg(out, "out")?;
        let trace = ref_arg(trace, "trace")?;
        let log = ref_arg(log, "log")?;
        *out = metrics(&trace.0, &log.0)?;
        Ok(())
    })
}

/// Number of slots in the log, or 0 for NULL.
///
/// # Safety
/// `log` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_log_n_slots(log: *const QrLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.slots.len())
}

/// Copies the query ids executed in `slot` (1-based) into `buf`, in
/// execution order. `*len` receives the full count even when it exceeds
/// `cap`, in which case only `cap` ids are written.
///
/// # Safety
/// `buf` must hold `cap` elements (or be NULL with `cap == 0`); `len` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn qr_log_executed(
    log: *const QrLog,
    slot: usize,
    buf: *mut u32,
    cap: usize,
    len: *mut usize,
) -> QrStatus {
    guard(|| {
        out_arg(len, "len")?;
        let log = ref_arg(log, "log")?;
        if slot == 0 || slot > log.0.slots.len() {
            return Err(Failure::new(
                QrStatus::OutOfRange,
                format!("slot {slot} outside 1..={}", log.0.slots.len()),
            ));
        }
        let executed = &log.0.slots[slot - 1].schedule.executed;
        *len = executed.len();
        if cap > 0 {
            out_arg(buf, "buf")?;
            for (k, q) in executed.iter().take(cap).enumerate() {
                *buf.add(k) = q.0;
            }
        }
        Ok(())
    })
}

/// Writes the line-oriented audit file for `log`.
///
/// # Safety
/// `log` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qr_log_save(log: *const QrLog, path: *const c_char) -> QrStatus {
    guard(|| {
        let log = ref_arg(log, "log")?;
        let path = str_arg(path, "path")?;
        let file = std::fs::File::create(path).map_err(|e| Failure::new(QrStatus::Io, e))?;
        write_log(&log.0, std::io::BufWriter::new(file)).map_err(|e| Failure::new(QrStatus::Io, e))?;
        Ok(())
    })
}

/// # Safety
/// `log` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qr_log_free(log: *mut QrLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}
