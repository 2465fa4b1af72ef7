mod common;

use std::time::Duration;

use common::{select_json, MockEndpoint, Reply, JSON};
use qrefresh::recorder::{
    record_revision, EndpointConfig, QueryRegistration, RecorderError, SparqlClient, TraceRecorder,
};
use qrefresh::trace::load_trace;
use qrefresh::{compute_metrics, run_simulation, PolicyConfig, PolicyKind, QueryId, RunConfig};

const UNORDERED: &str = "SELECT ?x WHERE { ?x a <http://ex.org/C> }";
const ORDERED: &str = "SELECT ?x WHERE { ?x a <http://ex.org/D> } ORDER BY ?x";

fn client(url: &str, delay_ms: u64, retries: u32) -> SparqlClient {
    SparqlClient::new(EndpointConfig {
        endpoint_url: url.to_owned(),
        timeout_ms: 5_000,
        delay_ms,
        max_retries: retries,
    })
}

fn registrations() -> Vec<QueryRegistration> {
    vec![
        QueryRegistration::new(0, UNORDERED, false).unwrap(),
        QueryRegistration::new(1, ORDERED, true).unwrap(),
    ]
}

#[test]
fn records_changes_failures_and_simulates() {
    // Revision 0: both answer. Revision 1: both permuted. Revision 2: the
    // unordered query fails on every attempt.
    let mock = MockEndpoint::start(|_, query| {
        thread_local!(static CALLS: std::cell::Cell<[usize; 2]> = const { std::cell::Cell::new([0, 0]) });
        let q = usize::from(query.contains("ORDER BY"));
        let n = CALLS.with(|c| {
            let mut v = c.get();
            v[q] += 1;
            c.set(v);
            v[q] - 1
        });
        match (q, n) {
            (0, 0) => Reply::ok(JSON, select_json(&["a", "b", "c"])),
            (0, 1) => Reply::ok(JSON, select_json(&["c", "a", "b"])),
            (0, _) => Reply::status(503),
            (1, 0) => Reply::ok(JSON, select_json(&["x", "y", "z"])),
            _ => Reply::ok(JSON, select_json(&["z", "x", "y"])),
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.trace");
    let regs = registrations();
    let mut c = client(&mock.url, 0, 1);
    let mut progress = TraceRecorder::open(&path, regs.len()).unwrap();
    for _ in 0..3 {
        record_revision(&mut c, &regs, &mut progress).unwrap();
    }

    let trace = load_trace(&path).unwrap();
    assert_eq!(trace.n_revisions(), 2);
    assert!(!trace.is_changed(QueryId(0), 1), "permuted unordered rows are not a change");
    assert!(trace.is_changed(QueryId(1), 1), "reordered ordered rows are a change");
    assert!(trace.record(QueryId(0), 2).is_failed());
    assert!(!trace.record(QueryId(1), 2).is_failed());
    assert!(!trace.is_changed(QueryId(0), 2));
    assert_eq!(trace.total_changes(), 1);
    // one success, then one retry for the failure
    assert_eq!(mock.requests().len(), 7);

    for kind in PolicyKind::ALL {
        for budget in [1, u64::MAX] {
            let log = run_simulation(&trace, &RunConfig::new(PolicyConfig::new(kind), budget)).unwrap();
            let m = compute_metrics(&log, &trace).unwrap();
            assert!(m.relevant <= 1);
        }
    }
}

#[test]
fn failed_initial_revision_is_rejected() {
    let mock = MockEndpoint::start(|_, _| Reply::status(500));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.trace");
    let regs = registrations();
    let mut progress = TraceRecorder::open(&path, regs.len()).unwrap();
    let err = record_revision(&mut client(&mock.url, 0, 0), &regs, &mut progress).unwrap_err();
    assert!(matches!(err, RecorderError::InitialExecutionFailed(0)), "{err:?}");
    assert!(!path.exists());
}

#[test]
fn politeness_delay_between_requests() {
    let mock = MockEndpoint::start(|_, _| Reply::ok(JSON, select_json(&["a"])));
    let reg = QueryRegistration::new(0, UNORDERED, false).unwrap();
    let mut c = client(&mock.url, 120, 0);
    for _ in 0..4 {
        c.execute_query(&reg).unwrap();
    }
    let seen = mock.requests();
    assert_eq!(seen.len(), 4);
    for w in seen.windows(2) {
        let gap = w[1].arrived.duration_since(w[0].answered);
        assert!(gap >= Duration::from_millis(120), "gap {gap:?}");
    }
}

#[test]
fn long_queries_are_posted() {
    let mock = MockEndpoint::start(|_, _| Reply::ok(JSON, select_json(&["a"])));
    let filler = "x".repeat(2_500);
    let text = format!("SELECT ?x WHERE {{ ?x a <http://ex.org/C> }} # {filler}");
    let reg = QueryRegistration::new(0, text.clone(), false).unwrap();
    let (snap, ms) = client(&mock.url, 0, 0).execute_query(&reg).unwrap();
    assert_eq!(snap.len(), 1);
    assert!(ms >= 1);
    let seen = mock.requests();
    assert_eq!(seen[0].method, "POST");
    assert_eq!(seen[0].query, text);
    assert!(seen[0].accept.contains("sparql-results"));
}

#[test]
fn ask_and_construct_forms() {
    let mock = MockEndpoint::start(|_, query| {
        if query.starts_with("ASK") {
            Reply::ok(JSON, r#"{"head":{},"boolean":true}"#)
        } else {
            Reply::ok(
                "application/n-triples",
                "_:b1 <http://ex.org/p> \"v\" .\n<http://ex.org/s> <http://ex.org/p> _:b1 .\n",
            )
        }
    });
    let mut c = client(&mock.url, 0, 0);
    let ask = QueryRegistration::new(0, "ASK { ?s ?p ?o }", false).unwrap();
    let (snap, _) = c.execute_query(&ask).unwrap();
    assert_eq!(snap.len(), 1);
    let construct = QueryRegistration::new(1, "CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }", false).unwrap();
    let (snap, _) = c.execute_query(&construct).unwrap();
    assert_eq!(snap.len(), 2);
}

#[test]
fn recording_resumes_from_existing_file() {
    let mock = MockEndpoint::start(|n, _| Reply::ok(JSON, select_json(&[if n < 4 { "a" } else { "b" }])));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.trace");
    let regs = registrations();
    {
        let mut progress = TraceRecorder::open(&path, regs.len()).unwrap();
        let mut c = client(&mock.url, 0, 0);
        record_revision(&mut c, &regs, &mut progress).unwrap();
        record_revision(&mut c, &regs, &mut progress).unwrap();
    }
    let mut progress = TraceRecorder::open(&path, regs.len()).unwrap();
    assert_eq!(progress.recorded_revisions(), 2);
    let trace = record_revision(&mut client(&mock.url, 0, 0), &regs, &mut progress).unwrap();
    assert_eq!(trace.n_revisions(), 2);
    assert!(trace.is_changed(QueryId(0), 2));
    assert!(matches!(
        TraceRecorder::open(&path, 3),
        Err(RecorderError::QueryCountMismatch { .. })
    ));
}
