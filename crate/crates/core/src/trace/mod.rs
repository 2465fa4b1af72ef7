//! Change traces: the replayable record of every registered query's result
//! fingerprint and execution time at every dataset revision.
//!
//! A trace is a complete grid of `n_queries × (n_revisions + 1)` execution
//! records. Revision 0 is the initial state that every scheduler gets for
//! free; revisions `1..=n_revisions` are the slots a scheduler plans for.

mod format;
mod snapshot;

use std::fmt;

use thiserror::Error;

pub use format::{load_trace, parse_trace, read_trace, save_trace, write_trace};
pub use snapshot::{jaccard_distance, result_changed, ResultSnapshot, SnapshotError};

/// Dense query identifier, `0..n_queries` within a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryId(pub u32);

impl QueryId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into a trace's result table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResultId(pub u32);

/// One cell of the grid. `result == None` marks a failed execution (the
/// recorder could not obtain a result); its duration is still what the
/// attempt cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionRecord {
    pub query: QueryId,
    pub revision: usize,
    pub duration_ms: u64,
    pub result: Option<ResultId>,
}

impl ExecutionRecord {
    pub fn is_failed(&self) -> bool {
        self.result.is_none()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duplicate result id {id:?}")]
    DuplicateResult { line: usize, id: String },
    #[error("line {line}: duplicate execution record for query {query} revision {revision}")]
    DuplicateRecord {
        line: usize,
        query: u32,
        revision: usize,
    },
    #[error("line {line}: record (query {query}, revision {revision}) references unknown result id {id:?}")]
    DanglingResult {
        line: usize,
        query: u32,
        revision: usize,
        id: String,
    },
    #[error("incomplete grid: missing record for query {query} revision {revision}")]
    IncompleteGrid { query: u32, revision: usize },
    #[error("record (query {query}, revision {revision}) out of bounds")]
    OutOfBounds { query: u32, revision: usize },
    #[error("record (query {query}, revision {revision}) has zero duration")]
    ZeroDuration { query: u32, revision: usize },
    #[error("query {query} has no successful execution at revision 0")]
    MissingInitialResult { query: u32 },
    #[error("query {query}: result {result} disagrees with the query's ordered flag")]
    MixedOrdering { query: u32, result: u32 },
    #[error("result id {0} is not in the result table")]
    UnknownResult(u32),
    #[error("slot {slot} out of range 1..={n_revisions}")]
    SlotOutOfRange { slot: usize, n_revisions: usize },
    #[error("invalid snapshot: {0}")]
    Snapshot(#[from] SnapshotError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TraceError {
    fn from(e: std::io::Error) -> Self {
        TraceError::Io(e.to_string())
    }
}

/// Immutable, validated change trace.
///
/// Besides the raw grid the trace keeps two derived grids: the *effective*
/// result of every cell (a failed cell inherits the query's previous result)
/// and the ground-truth change flag `q ∈ C_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeTrace {
    n_queries: usize,
    n_revisions: usize,
    records: Vec<ExecutionRecord>,
    results: Vec<ResultSnapshot>,
    effective: Vec<ResultId>,
    changed: Vec<bool>,
}

impl ChangeTrace {
    /// Builds a trace from an unordered set of records, validating that the
    /// grid is complete and consistent.
    pub fn new(
        n_queries: usize,
        n_revisions: usize,
        records: Vec<ExecutionRecord>,
        results: Vec<ResultSnapshot>,
    ) -> Result<Self, TraceError> {
        let width = n_revisions + 1;
        let mut grid: Vec<Option<ExecutionRecord>> = vec![None; n_queries * width];
        for rec in records {
            if rec.query.index() >= n_queries || rec.revision > n_revisions {
                return Err(TraceError::OutOfBounds {
                    query: rec.query.0,
                    revision: rec.revision,
                });
            }
            if rec.duration_ms == 0 {
                return Err(TraceError::ZeroDuration {
                    query: rec.query.0,
                    revision: rec.revision,
                });
            }
            if let Some(r) = rec.result {
                if r.0 as usize >= results.len() {
                    return Err(TraceError::UnknownResult(r.0));
                }
            }
            let cell = &mut grid[rec.query.index() * width + rec.revision];
            if cell.is_some() {
                return Err(TraceError::DuplicateRecord {
                    line: 0,
                    query: rec.query.0,
                    revision: rec.revision,
                });
            }
            *cell = Some(rec);
        }
        let mut records = Vec::with_capacity(grid.len());
        for (idx, cell) in grid.into_iter().enumerate() {
            match cell {
                Some(rec) => records.push(rec),
                None => {
                    return Err(TraceError::IncompleteGrid {
                        query: (idx / width) as u32,
                        revision: idx % width,
                    })
                }
            }
        }
        Self::from_grid(n_queries, n_revisions, records, results)
    }

    /// `records` must already be in row-major `(query, revision)` order.
    fn from_grid(
        n_queries: usize,
        n_revisions: usize,
        records: Vec<ExecutionRecord>,
        results: Vec<ResultSnapshot>,
    ) -> Result<Self, TraceError> {
        let width = n_revisions + 1;
        debug_assert_eq!(records.len(), n_queries * width);
        let mut effective = Vec::with_capacity(records.len());
        let mut changed = Vec::with_capacity(records.len());
        for q in 0..n_queries {
            let row = &records[q * width..(q + 1) * width];
            let first = row[0]
                .result
                .ok_or(TraceError::MissingInitialResult { query: q as u32 })?;
            let ordered = results[first.0 as usize].is_ordered();
            let mut current = first;
            effective.push(current);
            changed.push(false);
            for rec in &row[1..] {
                let next = match rec.result {
                    Some(r) => {
                        if results[r.0 as usize].is_ordered() != ordered {
                            return Err(TraceError::MixedOrdering {
                                query: q as u32,
                                result: r.0,
                            });
                        }
                        r
                    }
                    None => current,
                };
                let flag = next != current
                    && results[next.0 as usize].differs_from(&results[current.0 as usize]);
                effective.push(next);
                changed.push(flag);
                current = next;
            }
        }
        Ok(ChangeTrace {
            n_queries,
            n_revisions,
            records,
            results,
            effective,
            changed,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    /// Number of schedulable slots; revisions run `0..=n_revisions`.
    pub fn n_revisions(&self) -> usize {
        self.n_revisions
    }

    pub fn query_ids(&self) -> impl Iterator<Item = QueryId> + '_ {
        (0..self.n_queries as u32).map(QueryId)
    }

    pub fn results(&self) -> &[ResultSnapshot] {
        &self.results
    }

    pub fn records(&self) -> &[ExecutionRecord] {
        &self.records
    }

    #[inline]
    fn cell(&self, q: QueryId, revision: usize) -> usize {
        assert!(
            q.index() < self.n_queries && revision <= self.n_revisions,
            "cell (query {q}, revision {revision}) outside trace"
        );
        q.index() * (self.n_revisions + 1) + revision
    }

    pub fn record(&self, q: QueryId, revision: usize) -> &ExecutionRecord {
        &self.records[self.cell(q, revision)]
    }

    pub fn duration_ms(&self, q: QueryId, revision: usize) -> u64 {
        self.record(q, revision).duration_ms
    }

    pub fn result(&self, id: ResultId) -> &ResultSnapshot {
        &self.results[id.0 as usize]
    }

    /// The result a successful execution at `revision` would have returned.
    /// For a failed cell this is the most recent successful result.
    pub fn effective_result_id(&self, q: QueryId, revision: usize) -> ResultId {
        self.effective[self.cell(q, revision)]
    }

    pub fn snapshot_at(&self, q: QueryId, revision: usize) -> &ResultSnapshot {
        self.result(self.effective_result_id(q, revision))
    }

    /// Ground truth `q ∈ C_i`. Always false at revision 0.
    #[inline]
    pub fn is_changed(&self, q: QueryId, revision: usize) -> bool {
        self.changed[self.cell(q, revision)]
    }

    /// Slots `1..=n` at which the query's result changed, ascending.
    pub fn change_slots(&self, q: QueryId) -> Vec<usize> {
        (1..=self.n_revisions)
            .filter(|&i| self.is_changed(q, i))
            .collect()
    }

    /// Total number of `(q, i)` pairs with `q ∈ C_i`.
    pub fn total_changes(&self) -> usize {
        self.changed.iter().filter(|&&c| c).count()
    }

    /// Summed duration of every query at one revision.
    pub fn slot_total_ms(&self, revision: usize) -> u64 {
        self.query_ids()
            .map(|q| self.duration_ms(q, revision))
            .sum()
    }

    pub fn max_slot_total_ms(&self) -> u64 {
        (0..=self.n_revisions)
            .map(|i| self.slot_total_ms(i))
            .max()
            .unwrap_or(0)
    }
}

/// Queries whose result at slot `i` differs from the one at `i − 1`.
pub fn changed_set(trace: &ChangeTrace, i: usize) -> Result<Vec<QueryId>, TraceError> {
    if i == 0 || i > trace.n_revisions() {
        return Err(TraceError::SlotOutOfRange {
            slot: i,
            n_revisions: trace.n_revisions(),
        });
    }
    Ok(trace.query_ids().filter(|&q| trace.is_changed(q, i)).collect())
}
