//! Line-oriented text serialization of [`ChangeTrace`].
//!
//! ```text
//! TRACE v1 queries=<N> revisions=<n>
//! R <result-id> ordered=<0|1>\t<token>\t<token>...
//! E <query-id> <revision> <duration_ms> <result-id | ->
//! ```
//!
//! Tokens are percent-encoded for `%`, tab, newline and other control
//! characters. A result id of `-` marks a failed execution. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};

use super::{ChangeTrace, ExecutionRecord, QueryId, ResultId, ResultSnapshot, TraceError};

const TOKEN_ESCAPES: &AsciiSet = &CONTROLS.add(b'%');
const FAILED: &str = "-";

pub fn write_trace<W: Write>(trace: &ChangeTrace, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(
        w,
        "TRACE v1 queries={} revisions={}",
        trace.n_queries(),
        trace.n_revisions()
    )?;
    for (idx, snap) in trace.results().iter().enumerate() {
        write!(w, "R r{idx} ordered={}", u8::from(snap.is_ordered()))?;
        for tok in snap.tokens() {
            write!(w, "\t{}", utf8_percent_encode(tok, TOKEN_ESCAPES))?;
        }
        writeln!(w)?;
    }
    for rec in trace.records() {
        match rec.result {
            Some(r) => writeln!(
                w,
                "E {} {} {} r{}",
                rec.query, rec.revision, rec.duration_ms, r.0
            )?,
            None => writeln!(
                w,
                "E {} {} {} {FAILED}",
                rec.query, rec.revision, rec.duration_ms
            )?,
        }
    }
    w.flush()
}

/// Writes the trace atomically: a sibling temp file is renamed over `path`,
/// so readers only ever see a complete file.
pub fn save_trace(trace: &ChangeTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let file = fs::File::create(&tmp)?;
        write_trace(trace, &file)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<ChangeTrace, TraceError> {
    let file = fs::File::open(path)?;
    read_trace(BufReader::new(file))
}

pub fn parse_trace(text: &str) -> Result<ChangeTrace, TraceError> {
    read_trace(text.as_bytes())
}

fn malformed(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn parse_header(line_no: usize, line: &str) -> Result<(usize, usize), TraceError> {
    let bad = |reason: &str| TraceError::MalformedHeader {
        line: line_no,
        reason: reason.to_owned(),
    };
    let mut parts = line.split_whitespace();
    if parts.next() != Some("TRACE") {
        return Err(bad("expected `TRACE v1 queries=<N> revisions=<n>`"));
    }
    if parts.next() != Some("v1") {
        return Err(bad("unsupported version"));
    }
    let mut field = |key: &str| -> Result<usize, TraceError> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&format!("missing or invalid `{key}`")))
    };
    let queries = field("queries=")?;
    let revisions = field("revisions=")?;
    if parts.next().is_some() {
        return Err(bad("trailing fields"));
    }
    Ok((queries, revisions))
}

fn parse_result(line_no: usize, line: &str) -> Result<(String, ResultSnapshot), TraceError> {
    let mut fields = line.split('\t');
    let head = fields.next().unwrap_or_default();
    let mut head_parts = head.split(' ');
    let (Some("R"), Some(id), Some(flag), None) = (
        head_parts.next(),
        head_parts.next(),
        head_parts.next(),
        head_parts.next(),
    ) else {
        return Err(malformed(line_no, "expected `R <id> ordered=<0|1>`"));
    };
    if id.is_empty() || id == FAILED {
        return Err(malformed(line_no, "invalid result id"));
    }
    let ordered = match flag {
        "ordered=0" => false,
        "ordered=1" => true,
        _ => return Err(malformed(line_no, "expected ordered=0 or ordered=1")),
    };
    let tokens = fields
        .map(|f| {
            percent_decode_str(f)
                .decode_utf8()
                .map(|s| s.into_owned())
                .map_err(|_| malformed(line_no, "token is not valid UTF-8 after decoding"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let snap = if ordered {
        ResultSnapshot::ordered(tokens)
    } else {
        ResultSnapshot::unordered(tokens)
    }
    .map_err(|e| malformed(line_no, e.to_string()))?;
    Ok((id.to_owned(), snap))
}

struct PendingRecord {
    line: usize,
    query: u32,
    revision: usize,
    duration_ms: u64,
    result: Option<String>,
}

fn parse_execution(line_no: usize, line: &str) -> Result<PendingRecord, TraceError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let [_, q, rev, dur, rid] = parts[..] else {
        return Err(malformed(
            line_no,
            "expected `E <query-id> <revision> <duration_ms> <result-id>`",
        ));
    };
    let query = q
        .parse()
        .map_err(|_| malformed(line_no, format!("invalid query id {q:?}")))?;
    let revision = rev
        .parse()
        .map_err(|_| malformed(line_no, format!("invalid revision {rev:?}")))?;
    let duration_ms: u64 = dur
        .parse()
        .map_err(|_| malformed(line_no, format!("invalid duration {dur:?}")))?;
    if duration_ms == 0 {
        return Err(malformed(line_no, "duration must be positive"));
    }
    Ok(PendingRecord {
        line: line_no,
        query,
        revision,
        duration_ms,
        result: (rid != FAILED).then(|| rid.to_owned()),
    })
}

pub fn read_trace<R: BufRead>(input: R) -> Result<ChangeTrace, TraceError> {
    let mut header = None;
    let mut ids: HashMap<String, ResultId> = HashMap::new();
    let mut results = Vec::new();
    let mut pending = Vec::new();
    let mut seen = HashMap::new();

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if header.is_none() {
            header = Some(parse_header(line_no, line)?);
            continue;
        }
        match line.as_bytes()[0] {
            b'R' => {
                let (id, snap) = parse_result(line_no, line)?;
                if ids.contains_key(&id) {
                    return Err(TraceError::DuplicateResult { line: line_no, id });
                }
                ids.insert(id, ResultId(results.len() as u32));
                results.push(snap);
            }
            b'E' => {
                let rec = parse_execution(line_no, line)?;
                if let Some(_first) = seen.insert((rec.query, rec.revision), line_no) {
                    return Err(TraceError::DuplicateRecord {
                        line: line_no,
                        query: rec.query,
                        revision: rec.revision,
                    });
                }
                pending.push(rec);
            }
            _ => return Err(malformed(line_no, "unknown line kind")),
        }
    }

    let (n_queries, n_revisions) = header.ok_or(TraceError::MalformedHeader {
        line: 0,
        reason: "empty trace file".to_owned(),
    })?;

    let mut records = Vec::with_capacity(pending.len());
    for rec in pending {
        if rec.query as usize >= n_queries || rec.revision > n_revisions {
            return Err(malformed(
                rec.line,
                format!(
                    "record (query {}, revision {}) outside header bounds",
                    rec.query, rec.revision
                ),
            ));
        }
        let result = match rec.result {
            None => None,
            Some(id) => Some(*ids.get(&id).ok_or(TraceError::DanglingResult {
                line: rec.line,
                query: rec.query,
                revision: rec.revision,
                id,
            })?),
        };
        records.push(ExecutionRecord {
            query: QueryId(rec.query),
            revision: rec.revision,
            duration_ms: rec.duration_ms,
            result,
        });
    }
    ChangeTrace::new(n_queries, n_revisions, records, results)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "TRACE v1 queries=2 revisions=2
R r0 ordered=0\ta\tb
R r1 ordered=1\tx%09y\tz
R r2 ordered=0\ta
E 0 0 10 r0
E 0 1 11 r0
E 0 2 12 r2
E 1 0 5 r1
E 1 1 5 -
E 1 2 6 r1
";

    #[test]
    fn parses_and_round_trips() {
        let t = parse_trace(SMALL).unwrap();
        assert_eq!(t.n_queries(), 2);
        assert_eq!(t.n_revisions(), 2);
        assert_eq!(t.result(ResultId(1)).tokens(), ["x\ty", "z"]);
        assert!(t.record(QueryId(1), 1).is_failed());
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), SMALL);
        assert_eq!(read_trace(&buf[..]).unwrap(), t);
    }

    #[test]
    fn missing_record_is_incomplete_grid() {
        let text = SMALL.replace("E 1 2 6 r1\n", "");
        assert_eq!(
            parse_trace(&text).unwrap_err(),
            TraceError::IncompleteGrid {
                query: 1,
                revision: 2
            }
        );
    }

    #[test]
    fn dangling_result_names_record() {
        let text = SMALL.replace("E 0 2 12 r2", "E 0 2 12 r99");
        match parse_trace(&text).unwrap_err() {
            TraceError::DanglingResult {
                line,
                query,
                revision,
                id,
            } => {
                assert_eq!((line, query, revision, id.as_str()), (7, 0, 2, "r99"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_header() {
        let text = SMALL.replace("queries=2", "queries=two");
        assert!(matches!(
            parse_trace(&text),
            Err(TraceError::MalformedHeader { line: 1, .. })
        ));
        assert!(matches!(
            parse_trace(""),
            Err(TraceError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn duplicate_record_rejected() {
        let text = format!("{SMALL}E 0 1 11 r0\n");
        assert!(matches!(
            parse_trace(&text),
            Err(TraceError::DuplicateRecord { line: 11, .. })
        ));
    }

    #[test]
    fn zero_duration_rejected() {
        let text = SMALL.replace("E 0 1 11 r0", "E 0 1 0 r0");
        assert!(matches!(
            parse_trace(&text),
            Err(TraceError::MalformedRecord { line: 6, .. })
        ));
    }

    #[test]
    fn failed_initial_execution_rejected() {
        let text = SMALL.replace("E 1 0 5 r1", "E 1 0 5 -");
        assert_eq!(
            parse_trace(&text).unwrap_err(),
            TraceError::MissingInitialResult { query: 1 }
        );
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        let t = parse_trace(SMALL).unwrap();
        save_trace(&t, &path).unwrap();
        assert_eq!(load_trace(&path).unwrap(), t);
        assert!(!dir.path().join("t.trace.tmp").exists());
    }
}
