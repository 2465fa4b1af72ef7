//! Evaluation metrics over an execution log and the ground-truth trace.
//!
//! For an execution of `q` at slot `e` whose previous successful execution
//! was at `p`, let `S` be the ground-truth change slots of `q` in `(p, e]`.
//! The execution is relevant iff `S` is non-empty; it contributes a delay of
//! `e − min S` slots and `|S| − 1` misses. Changes after a query's last
//! execution are counted as misses at the end of the run.

use std::fmt;

use thiserror::Error;

use crate::sim::{replay_check, ExecutionLog};
use crate::trace::{result_changed, ChangeTrace, QueryId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("execution log is inconsistent with the trace")]
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub total_qe: u64,
    pub irrelevant: u64,
    pub relevant: u64,
    /// `relevant / total_qe`, 0 when nothing ran.
    pub effectivity: f64,
    pub abs_delay: u64,
    pub max_delay: u64,
    pub abs_miss: u64,
    pub max_miss: u64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 8] = [
        "total_qe",
        "irrelevant",
        "relevant",
        "eff_pct",
        "abs_delay",
        "max_delay",
        "abs_miss",
        "max_miss",
    ];

    /// Assembles a report from raw counts; `irrelevant` and `effectivity`
    /// are derived.
    pub fn from_counts(
        total_qe: u64,
        relevant: u64,
        abs_delay: u64,
        max_delay: u64,
        abs_miss: u64,
        max_miss: u64,
    ) -> Self {
        MetricsReport {
            total_qe,
            irrelevant: total_qe - relevant,
            relevant,
            effectivity: if total_qe == 0 {
                0.0
            } else {
                relevant as f64 / total_qe as f64
            },
            abs_delay,
            max_delay,
            abs_miss,
            max_miss,
        }
    }

    pub fn effectivity_pct(&self) -> f64 {
        self.effectivity * 100.0
    }

    /// The eight metric columns as strings, in table order.
    pub fn fields(&self) -> [String; 8] {
        [
            self.total_qe.to_string(),
            self.irrelevant.to_string(),
            self.relevant.to_string(),
            format!("{:.4}", self.effectivity_pct()),
            self.abs_delay.to_string(),
            self.max_delay.to_string(),
            self.abs_miss.to_string(),
            self.max_miss.to_string(),
        ]
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fields().join(","))
    }
}

pub fn compute_metrics(log: &ExecutionLog, trace: &ChangeTrace) -> Result<MetricsReport, MetricsError> {
    if !replay_check(log, trace) {
        return Err(MetricsError::Audit);
    }
    let n = trace.n_queries();
    let change_slots: Vec<Vec<usize>> = trace.query_ids().map(|q| trace.change_slots(q)).collect();
    // Index of the first change slot not yet detected, per query.
    let mut cursor = vec![0usize; n];
    let mut misses = vec![0u64; n];
    let (mut total, mut relevant, mut abs_delay, mut max_delay) = (0u64, 0u64, 0u64, 0u64);

    for (slot, obs) in log.executions() {
        if obs.outcome.is_none() {
            continue;
        }
        let q = obs.query.index();
        total += 1;
        let changes = &change_slots[q];
        let start = cursor[q];
        let end = start + changes[start..].partition_point(|&c| c <= slot);
        if end > start {
            relevant += 1;
            let delay = (slot - changes[start]) as u64;
            abs_delay += delay;
            max_delay = max_delay.max(delay);
            misses[q] += (end - start - 1) as u64;
        }
        cursor[q] = end;
    }
    for q in 0..n {
        misses[q] += (change_slots[q].len() - cursor[q]) as u64;
    }
    Ok(MetricsReport::from_counts(
        total,
        relevant,
        abs_delay,
        max_delay,
        misses.iter().sum(),
        misses.iter().copied().max().unwrap_or(0),
    ))
}

/// Independent recomputation by exhaustive scan: every `(query, slot)` pair
/// is examined directly against the raw snapshots, with no incremental
/// state. Intended for small instances.
pub fn brute_force_metrics(log: &ExecutionLog, trace: &ChangeTrace) -> MetricsReport {
    let n_slots = trace.n_revisions();
    let changed = |q: QueryId, c: usize| {
        result_changed(trace.snapshot_at(q, c - 1), trace.snapshot_at(q, c)).unwrap_or(true)
    };
    let executed_at = |q: QueryId, slot: usize| {
        log.slots.iter().any(|s| {
            s.schedule.slot == slot
                && s.observations
                    .iter()
                    .any(|o| o.query == q && o.outcome.is_some())
        })
    };

    let (mut total, mut relevant, mut abs_delay, mut max_delay) = (0u64, 0u64, 0u64, 0u64);
    let (mut abs_miss, mut max_miss) = (0u64, 0u64);
    for q in trace.query_ids() {
        let mut query_miss = 0u64;
        for e in 1..=n_slots {
            if !executed_at(q, e) {
                continue;
            }
            total += 1;
            let p = (0..e).rev().find(|&j| j == 0 || executed_at(q, j)).unwrap_or(0);
            let s: Vec<usize> = (p + 1..=e).filter(|&c| changed(q, c)).collect();
            if let Some(&first) = s.first() {
                relevant += 1;
                let delay = (e - first) as u64;
                abs_delay += delay;
                max_delay = max_delay.max(delay);
                query_miss += s.len() as u64 - 1;
            }
        }
        let last = (0..=n_slots).rev().find(|&j| j == 0 || executed_at(q, j)).unwrap_or(0);
        query_miss += (last + 1..=n_slots).filter(|&c| changed(q, c)).count() as u64;
        abs_miss += query_miss;
        max_miss = max_miss.max(query_miss);
    }
    MetricsReport::from_counts(total, relevant, abs_delay, max_delay, abs_miss, max_miss)
}
