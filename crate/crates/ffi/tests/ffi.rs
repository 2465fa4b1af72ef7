use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use qrefresh::trace::load_trace;
use qrefresh::{compute_metrics, run_simulation, PolicyConfig, RunConfig};
use qrefresh_ffi::*;

fn last_error() -> String {
    let p = qr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generated(seed: u64) -> *mut QrTrace {
    let settings = CString::new("static_fraction = 0.5\nresult_size = 4\n").unwrap();
    let mut t = ptr::null_mut();
    let status = unsafe { qr_trace_generate(seed, 30, 40, settings.as_ptr(), &mut t) };
    assert_eq!(status, QrStatus::Ok);
    assert!(!t.is_null());
    t
}

#[test]
fn generate_save_load_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let t = generated(7);
    unsafe {
        assert_eq!(qr_trace_n_queries(t), 30);
        assert_eq!(qr_trace_n_revisions(t), 40);
        assert_eq!(qr_trace_save(t, cpath.as_ptr()), QrStatus::Ok);

        let mut loaded = ptr::null_mut();
        assert_eq!(qr_trace_load(cpath.as_ptr(), &mut loaded), QrStatus::Ok);
        assert_eq!(qr_trace_total_changes(loaded), qr_trace_total_changes(t));

        let trace = load_trace(&path).unwrap();
        for (spec, budget) in [("rr", 500u64), ("cr:lambda=0.5", 800), ("ttl:max=8", QR_BUDGET_UNLIMITED), ("cv", 300)] {
            let policy = CString::new(spec).unwrap();
            let mut m = QrMetrics::default();
            assert_eq!(qr_simulate(loaded, policy.as_ptr(), budget, &mut m), QrStatus::Ok);
            let cfg: PolicyConfig = spec.parse().unwrap();
            let expected = compute_metrics(&run_simulation(&trace, &RunConfig::new(cfg, budget)).unwrap(), &trace).unwrap();
            assert_eq!(m.total_qe, expected.total_qe, "{spec}");
            assert_eq!(m.relevant, expected.relevant);
            assert_eq!((m.abs_delay, m.max_delay), (expected.abs_delay, expected.max_delay));
            assert_eq!((m.abs_miss, m.max_miss), (expected.abs_miss, expected.max_miss));
            assert!((m.effectivity_pct - expected.effectivity_pct()).abs() < 1e-12);
        }
        qr_trace_free(loaded);
        qr_trace_free(t);
    }
}

#[test]
fn run_exposes_schedules() {
    let t = generated(3);
    let policy = CString::new("sjf").unwrap();
    let mut log = ptr::null_mut();
    unsafe {
        assert_eq!(qr_run(t, policy.as_ptr(), 600, &mut log), QrStatus::Ok);
        assert_eq!(qr_log_n_slots(log), 40);
        let mut m = QrMetrics::default();
        assert_eq!(qr_log_metrics(t, log, &mut m), QrStatus::Ok);

        let mut total = 0;
        for slot in 1..=40 {
            let mut len = 0;
            assert_eq!(qr_log_executed(log, slot, ptr::null_mut(), 0, &mut len), QrStatus::Ok);
            let mut buf = vec![u32::MAX; len];
            let mut again = 0;
            assert_eq!(qr_log_executed(log, slot, buf.as_mut_ptr(), len, &mut again), QrStatus::Ok);
            assert_eq!(again, len);
            assert!(buf.iter().all(|&q| q < 30));
            total += len as u64;
        }
        assert_eq!(total, m.total_qe);

        let mut len = 0;
        assert_eq!(qr_log_executed(log, 41, ptr::null_mut(), 0, &mut len), QrStatus::OutOfRange);
        assert_eq!(qr_log_executed(log, 0, ptr::null_mut(), 0, &mut len), QrStatus::OutOfRange);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("run.log").to_str().unwrap()).unwrap();
        assert_eq!(qr_log_save(log, path.as_ptr()), QrStatus::Ok);
        assert!(std::fs::metadata(dir.path().join("run.log")).unwrap().len() > 0);

        qr_log_free(log);
        qr_trace_free(t);
    }
}

#[test]
fn errors_are_reported() {
    let t = generated(1);
    let mut m = QrMetrics::default();
    unsafe {
        let bad = CString::new("fifo").unwrap();
        assert_eq!(qr_simulate(t, bad.as_ptr(), 100, &mut m), QrStatus::Config);
        assert!(!last_error().is_empty());

        let rr = CString::new("rr").unwrap();
        assert_eq!(qr_simulate(t, rr.as_ptr(), 0, &mut m), QrStatus::Config);
        assert!(last_error().contains("budget"));

        assert_eq!(qr_simulate(ptr::null(), rr.as_ptr(), 100, &mut m), QrStatus::NullPointer);
        assert!(last_error().contains("trace"));
        assert_eq!(qr_simulate(t, ptr::null(), 100, &mut m), QrStatus::NullPointer);
        assert_eq!(qr_simulate(t, rr.as_ptr(), 100, ptr::null_mut()), QrStatus::NullPointer);

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(qr_simulate(t, invalid.as_ptr().cast(), 100, &mut m), QrStatus::InvalidUtf8);

        let missing = CString::new("/nonexistent/dir/t.trace").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(qr_trace_load(missing.as_ptr(), &mut out), QrStatus::Io);
        assert!(out.is_null());

        let dir = tempfile::tempdir().unwrap();
        let garbage = dir.path().join("bad.trace");
        std::fs::write(&garbage, "not a trace\n").unwrap();
        let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
        assert_eq!(qr_trace_load(garbage.as_ptr(), &mut out), QrStatus::Parse);
        assert!(last_error().contains("line 1"));

        let settings = CString::new("churn = 2").unwrap();
        assert_eq!(qr_trace_generate(1, 5, 5, settings.as_ptr(), &mut out), QrStatus::Config);

        assert_eq!(qr_simulate(t, rr.as_ptr(), 100, &mut m), QrStatus::Ok);
        assert!(qr_last_error().is_null());

        assert_eq!(qr_trace_n_queries(ptr::null()), 0);
        qr_trace_free(ptr::null_mut());
        qr_log_free(ptr::null_mut());
        qr_trace_free(t);
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(qr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qrefresh.h");
    let text = std::fs::read_to_string(&header).unwrap();
    let source = include_str!("../src/lib.rs");
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["typedef struct QrTrace QrTrace", "typedef struct QrLog QrLog", "QR_STATUS_OK = 0", "QR_BUDGET_UNLIMITED"] {
        assert!(text.contains(ty), "{ty}");
    }

    // compile a C caller against the header when a compiler is around
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("caller.c");
    std::fs::write(
        &src,
        "#include \"qrefresh.h\"\n\
         int main(void) {\n\
           QrTrace *t = NULL; QrMetrics m;\n\
           if (qr_trace_generate(1, 4, 4, NULL, &t) != QR_STATUS_OK) return 1;\n\
           QrStatus s = qr_simulate(t, \"rr\", QR_BUDGET_UNLIMITED, &m);\n\
           qr_trace_free(t);\n\
           return s == QR_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
