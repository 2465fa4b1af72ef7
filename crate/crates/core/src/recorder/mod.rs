//! Recording change traces from a live SPARQL endpoint.
//!
//! Each poll executes every registered query once, sequentially and with a
//! polite pause between requests, and appends one revision column to the
//! trace on disk. The trace file is rewritten atomically after every poll,
//! so an interrupted recording resumes from the last complete revision.

mod canon;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use log::{debug, warn};
use thiserror::Error;

use crate::trace::{
    load_trace, save_trace, ChangeTrace, ExecutionRecord, QueryId, ResultId, ResultSnapshot, TraceError,
};

pub use canon::{canonicalize_result, parse_ntriples, parse_response, snapshot_from_raw, RawResponse, ResponseFormat, Term};

#[derive(Debug, Error)]
pub enum RecorderError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {0}")]
    Http(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("query list line {line}: {reason}")]
    Registration { line: usize, reason: String },
    #[error("initial execution of query {0} failed; the first revision must succeed for every query")]
    InitialExecutionFailed(u32),
    #[error("trace has {trace} queries but {registered} are registered")]
    QueryCountMismatch { trace: usize, registered: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ureq::Error> for RecorderError {
    fn from(e: ureq::Error) -> Self {
        match e {
            ureq::Error::StatusCode(code) => RecorderError::Http(code),
            ureq::Error::Timeout(_) => RecorderError::Timeout,
            other => RecorderError::Transport(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub endpoint_url: String,
    pub timeout_ms: u64,
    /// Minimum pause between the end of one request and the start of the next.
    pub delay_ms: u64,
    pub max_retries: u32,
}

impl EndpointConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        EndpointConfig {
            endpoint_url: endpoint_url.into(),
            timeout_ms: 60_000,
            delay_ms: 100,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryForm {
    Select,
    Ask,
    Construct,
    Describe,
}

impl QueryForm {
    pub fn name(self) -> &'static str {
        match self {
            QueryForm::Select => "SELECT",
            QueryForm::Ask => "ASK",
            QueryForm::Construct => "CONSTRUCT",
            QueryForm::Describe => "DESCRIBE",
        }
    }

    fn accept(self) -> &'static str {
        match self {
            QueryForm::Select | QueryForm::Ask => {
                "application/sparql-results+json, application/sparql-results+xml;q=0.8"
            }
            QueryForm::Construct | QueryForm::Describe => "application/n-triples, text/plain;q=0.8",
        }
    }

    /// The query form named by the first keyword after the prologue
    /// (`BASE`/`PREFIX` declarations and comments).
    pub fn detect(query: &str) -> Option<QueryForm> {
        let mut rest = query;
        loop {
            rest = rest.trim_start();
            if rest.starts_with('#') {
                rest = rest.split_once('\n').map_or("", |(_, r)| r);
                continue;
            }
            let word: String = rest
                .chars()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect::<String>()
                .to_ascii_uppercase();
            match word.as_str() {
                "PREFIX" | "BASE" => {
                    // Skip to the closing '>' of the IRI.
                    rest = rest.split_once('>').map_or("", |(_, r)| r);
                }
                _ => return word.parse().ok(),
            }
        }
    }
}

impl fmt::Display for QueryForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryForm {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SELECT" => Ok(QueryForm::Select),
            "ASK" => Ok(QueryForm::Ask),
            "CONSTRUCT" => Ok(QueryForm::Construct),
            "DESCRIBE" => Ok(QueryForm::Describe),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRegistration {
    pub query_id: u32,
    pub query_text: String,
    pub form: QueryForm,
    /// The query orders its solutions (ORDER BY); only valid for SELECT.
    pub ordered: bool,
}

impl QueryRegistration {
    pub fn new(query_id: u32, query_text: impl Into<String>, ordered: bool) -> Result<Self, String> {
        let query_text = query_text.into();
        let form = QueryForm::detect(&query_text).ok_or("cannot determine query form")?;
        let reg = QueryRegistration {
            query_id,
            query_text,
            form,
            ordered,
        };
        reg.validate()?;
        Ok(reg)
    }

    fn validate(&self) -> Result<(), String> {
        if QueryForm::detect(&self.query_text) != Some(self.form) {
            return Err(format!("query text does not start with {}", self.form));
        }
        if self.ordered && self.form != QueryForm::Select {
            return Err("only SELECT queries can be ordered".to_owned());
        }
        Ok(())
    }

    /// `<id>\t<form>\t<ordered>\t<query-text-base64>`
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.query_id,
            self.form,
            u8::from(self.ordered),
            BASE64.encode(&self.query_text)
        )
    }
}

/// Parses a query list. Ids must run densely from 0 in file order.
pub fn parse_registrations(text: &str) -> Result<Vec<QueryRegistration>, RecorderError> {
    let mut regs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| RecorderError::Registration {
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, form, ordered, text] = fields[..] else {
            return Err(bad("expected 4 tab-separated fields".to_owned()));
        };
        let query_id: u32 = id.trim().parse().map_err(|_| bad(format!("invalid id {id:?}")))?;
        if query_id as usize != regs.len() {
            return Err(bad(format!("expected query id {}, found {query_id}", regs.len())));
        }
        let form: QueryForm = form.parse().map_err(|_| bad(format!("unknown form {form:?}")))?;
        let ordered = match ordered.trim() {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(bad(format!("invalid ordered flag {other:?}"))),
        };
        let bytes = BASE64
            .decode(text.trim())
            .map_err(|e| bad(format!("invalid base64: {e}")))?;
        let query_text = String::from_utf8(bytes).map_err(|_| bad("query text is not UTF-8".to_owned()))?;
        let reg = QueryRegistration {
            query_id,
            query_text,
            form,
            ordered,
        };
        reg.validate().map_err(bad)?;
        regs.push(reg);
    }
    Ok(regs)
}

pub fn load_registrations(path: impl AsRef<Path>) -> Result<Vec<QueryRegistration>, RecorderError> {
    parse_registrations(&std::fs::read_to_string(path)?)
}

/// Sequential SPARQL protocol client enforcing the politeness pause.
pub struct SparqlClient {
    cfg: EndpointConfig,
    agent: ureq::Agent,
    last_request_end: Option<Instant>,
}

/// Queries longer than this are sent as a POST form instead of a GET.
const MAX_GET_QUERY_LEN: usize = 2_000;

impl SparqlClient {
    pub fn new(cfg: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms.max(1))))
            .http_status_as_error(true)
            .build()
            .into();
        SparqlClient {
            cfg,
            agent,
            last_request_end: None,
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn wait_politely(&self) {
        if let Some(end) = self.last_request_end {
            let delay = Duration::from_millis(self.cfg.delay_ms);
            let elapsed = end.elapsed();
            if elapsed < delay {
                thread::sleep(delay - elapsed);
            }
        }
    }

    fn fetch(&self, reg: &QueryRegistration) -> Result<(String, Option<String>), RecorderError> {
        let url = self.cfg.endpoint_url.as_str();
        let accept = reg.form.accept();
        let mut response = if reg.query_text.len() > MAX_GET_QUERY_LEN {
            self.agent
                .post(url)
                .header("Accept", accept)
                .send_form([("query", reg.query_text.as_str())])?
        } else {
            self.agent
                .get(url)
                .query("query", &reg.query_text)
                .header("Accept", accept)
                .call()?
        };
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let body = response.body_mut().read_to_string()?;
        Ok((body, content_type))
    }

    /// One attempt: returns the canonical snapshot and the wall-clock time
    /// from sending the request to finishing the parse.
    pub fn execute_query(&mut self, reg: &QueryRegistration) -> Result<(ResultSnapshot, u64), RecorderError> {
        self.wait_politely();
        let started = Instant::now();
        let fetched = self.fetch(reg);
        self.last_request_end = Some(Instant::now());
        let (body, content_type) = fetched?;
        let snapshot = canonicalize_result(&body, content_type.as_deref(), reg)?;
        let duration_ms = (started.elapsed().as_millis() as u64).max(1);
        Ok((snapshot, duration_ms))
    }

    /// Retries up to `max_retries` times. On exhaustion returns the last
    /// error along with the total time spent.
    pub fn execute_with_retries(
        &mut self,
        reg: &QueryRegistration,
    ) -> Result<(ResultSnapshot, u64), (RecorderError, u64)> {
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            match self.execute_query(reg) {
                Ok(ok) => return Ok(ok),
                Err(e) if attempt < self.cfg.max_retries => {
                    debug!("query {} attempt {} failed: {e}", reg.query_id, attempt + 1);
                    attempt += 1;
                }
                Err(e) => return Err((e, (started.elapsed().as_millis() as u64).max(1))),
            }
        }
    }
}

/// A trace being recorded, one revision column at a time.
pub struct TraceRecorder {
    path: PathBuf,
    n_queries: usize,
    records: Vec<ExecutionRecord>,
    results: Vec<ResultSnapshot>,
    interned: HashMap<ResultSnapshot, ResultId>,
    revisions: usize,
}

impl TraceRecorder {
    /// Opens `path`, resuming the recording if the file already holds a
    /// trace for the same number of queries.
    pub fn open(path: impl Into<PathBuf>, n_queries: usize) -> Result<Self, RecorderError> {
        let path = path.into();
        let mut rec = TraceRecorder {
            path,
            n_queries,
            records: Vec::new(),
            results: Vec::new(),
            interned: HashMap::new(),
            revisions: 0,
        };
        if rec.path.exists() {
            let trace = load_trace(&rec.path)?;
            if trace.n_queries() != n_queries {
                return Err(RecorderError::QueryCountMismatch {
                    trace: trace.n_queries(),
                    registered: n_queries,
                });
            }
            rec.results = trace.results().to_vec();
            for (idx, snap) in rec.results.iter().enumerate() {
                rec.interned.entry(snap.clone()).or_insert(ResultId(idx as u32));
            }
            rec.records = trace.records().to_vec();
            rec.revisions = trace.n_revisions() + 1;
        }
        Ok(rec)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of complete revision columns recorded so far.
    pub fn recorded_revisions(&self) -> usize {
        self.revisions
    }

    fn intern(&mut self, snapshot: ResultSnapshot) -> ResultId {
        if let Some(&id) = self.interned.get(&snapshot) {
            return id;
        }
        let id = ResultId(self.results.len() as u32);
        self.results.push(snapshot.clone());
        self.interned.insert(snapshot, id);
        id
    }

    /// Appends one revision column and persists the trace. Returns the
    /// validated trace including the new column.
    pub fn append_revision(
        &mut self,
        column: Vec<(u64, Option<ResultSnapshot>)>,
    ) -> Result<ChangeTrace, RecorderError> {
        assert_eq!(column.len(), self.n_queries, "column must cover every query");
        let revision = self.revisions;
        if revision == 0 {
            if let Some(q) = column.iter().position(|(_, s)| s.is_none()) {
                return Err(RecorderError::InitialExecutionFailed(q as u32));
            }
        }
        let mut new_records = Vec::with_capacity(column.len());
        for (q, (duration_ms, snapshot)) in column.into_iter().enumerate() {
            let result = snapshot.map(|s| self.intern(s));
            new_records.push(ExecutionRecord {
                query: QueryId(q as u32),
                revision,
                duration_ms: duration_ms.max(1),
                result,
            });
        }
        let mut records = self.records.clone();
        records.extend(new_records);
        let trace = ChangeTrace::new(self.n_queries, revision, records, self.results.clone())?;
        save_trace(&trace, &self.path)?;
        self.records = trace.records().to_vec();
        self.revisions = revision + 1;
        Ok(trace)
    }
}

/// Polls every registered query once and appends the revision. Failed
/// executions become failed-execution entries; the first revision must
/// succeed for every query.
pub fn record_revision(
    client: &mut SparqlClient,
    registrations: &[QueryRegistration],
    progress: &mut TraceRecorder,
) -> Result<ChangeTrace, RecorderError> {
    if registrations.len() != progress.n_queries {
        return Err(RecorderError::QueryCountMismatch {
            trace: progress.n_queries,
            registered: registrations.len(),
        });
    }
    let mut column = Vec::with_capacity(registrations.len());
    for reg in registrations {
        match client.execute_with_retries(reg) {
            Ok((snapshot, duration_ms)) => column.push((duration_ms, Some(snapshot))),
            Err((e, duration_ms)) => {
                warn!("query {} failed after retries: {e}", reg.query_id);
                column.push((duration_ms, None));
            }
        }
    }
    progress.append_revision(column)
}
