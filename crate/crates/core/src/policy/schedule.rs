use std::cmp::Ordering;

use crate::trace::{ChangeTrace, QueryId};

use super::{
    rank_cr, rank_dj, rank_ljf, rank_rr, rank_sjf, ttl_update, PolicyConfig, PolicyError,
    PolicyKind, QueryHistory, TtlEntry,
};

/// The executions chosen for one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub slot: usize,
    pub executed: Vec<QueryId>,
    pub spent_ms: u64,
    /// Selected but unexecuted queries that go first in the next slot (TTL).
    pub carryover: Vec<QueryId>,
}

/// An undetected result change known to the clairvoyant policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PendingChange {
    pub slot: usize,
    pub query: QueryId,
}

/// Mutable scheduler state carried between slots (selective policies only).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub ttl: Vec<TtlEntry>,
    pub carryover: Vec<QueryId>,
    /// Sorted by `(slot, query)`.
    pub pending: Vec<PendingChange>,
}

impl PolicyState {
    pub fn new(n_queries: usize) -> Self {
        PolicyState {
            ttl: vec![TtlEntry::initial(); n_queries],
            carryover: Vec::new(),
            pending: Vec::new(),
        }
    }

    /// Enqueues the slot's ground-truth changes for the clairvoyant policy.
    /// No other policy looks at the trace's results.
    pub fn begin_slot(&mut self, cfg: &PolicyConfig, trace: &ChangeTrace, slot: usize) {
        if cfg.kind == PolicyKind::Clairvoyant {
            self.pending.extend(
                trace
                    .query_ids()
                    .filter(|&q| trace.is_changed(q, slot))
                    .map(|query| PendingChange { slot, query }),
            );
        }
    }

    /// Folds the slot's outcomes back into the state. `outcomes` yields
    /// `(query, Some(changed))` for successful executions and `None` for
    /// failed ones, which leave the query's state untouched.
    pub fn commit<I>(&mut self, cfg: &PolicyConfig, schedule: &Schedule, outcomes: I)
    where
        I: IntoIterator<Item = (QueryId, Option<bool>)>,
    {
        let mut detected = Vec::new();
        for (q, outcome) in outcomes {
            let Some(changed) = outcome else { continue };
            match cfg.kind {
                PolicyKind::TimeToLive => {
                    let entry = &mut self.ttl[q.index()];
                    *entry = ttl_update(*entry, changed, cfg, schedule.slot);
                }
                PolicyKind::Clairvoyant => detected.push(q),
                _ => {}
            }
        }
        if !detected.is_empty() {
            self.pending.retain(|p| !detected.contains(&p.query));
        }
        self.carryover = schedule.carryover.clone();
    }
}

/// Executes `candidates` in order while the slot's actual durations fit in
/// the budget, stopping at the first one that would overflow. Returns the
/// executed prefix length.
fn budget_walk(
    trace: &ChangeTrace,
    slot: usize,
    budget_ms: u64,
    candidates: &[QueryId],
) -> (usize, u64) {
    let mut spent = 0u64;
    for (n, &q) in candidates.iter().enumerate() {
        let next = spent.saturating_add(trace.duration_ms(q, slot));
        if next > budget_ms {
            return (n, spent);
        }
        spent = next;
    }
    (candidates.len(), spent)
}

fn cmp_rank(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn ranked_candidates(
    cfg: &PolicyConfig,
    slot: usize,
    histories: &[QueryHistory],
) -> Vec<QueryId> {
    let mut scored: Vec<(f64, usize, QueryId)> = histories
        .iter()
        .enumerate()
        .map(|(idx, h)| {
            let rank = match cfg.kind {
                PolicyKind::RoundRobin => rank_rr(slot, h),
                PolicyKind::ShortestJobFirst => rank_sjf(slot, h, cfg.lambda, cfg.median_window),
                PolicyKind::LongestJobFirst => rank_ljf(slot, h, cfg.lambda, cfg.median_window),
                PolicyKind::ChangeRate => rank_cr(slot, h, cfg.lambda),
                PolicyKind::DynamicsJaccard => rank_dj(slot, h, cfg.lambda),
                PolicyKind::TimeToLive | PolicyKind::Clairvoyant => {
                    unreachable!("selective policies are not ranked")
                }
            };
            (rank, slot - h.last_exec(), QueryId(idx as u32))
        })
        .collect();
    let descending = cfg.kind.ranks_descending();
    scored.sort_by(|a, b| {
        let by_rank = if descending {
            cmp_rank(b.0, a.0)
        } else {
            cmp_rank(a.0, b.0)
        };
        by_rank.then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
    });
    scored.into_iter().map(|(_, _, q)| q).collect()
}

fn ttl_candidates(slot: usize, state: &PolicyState) -> Vec<QueryId> {
    let mut due: Vec<(usize, QueryId)> = state
        .ttl
        .iter()
        .enumerate()
        .map(|(idx, e)| (e, QueryId(idx as u32)))
        .filter(|(e, q)| e.due_at <= slot && !state.carryover.contains(q))
        .map(|(e, q)| (slot - e.due_at, q))
        .collect();
    due.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    state
        .carryover
        .iter()
        .copied()
        .chain(due.into_iter().map(|(_, q)| q))
        .collect()
}

/// Runs pending queries, oldest undetected change first, while the budget
/// allows. Unexecuted queries simply stay pending.
pub fn select_clairvoyant(
    pending: &[PendingChange],
    trace: &ChangeTrace,
    slot: usize,
    budget_ms: u64,
) -> Schedule {
    let mut order = pending.to_vec();
    order.sort();
    let mut candidates: Vec<QueryId> = Vec::new();
    for p in order {
        if !candidates.contains(&p.query) {
            candidates.push(p.query);
        }
    }
    let (n, spent_ms) = budget_walk(trace, slot, budget_ms, &candidates);
    candidates.truncate(n);
    Schedule {
        slot,
        executed: candidates,
        spent_ms,
        carryover: Vec::new(),
    }
}

/// Builds the schedule for `slot` from what the policy may know: histories
/// of executions before `slot` and the policy state.
pub fn build_schedule(
    cfg: &PolicyConfig,
    slot: usize,
    budget_ms: u64,
    trace: &ChangeTrace,
    histories: &[QueryHistory],
    state: &PolicyState,
) -> Result<Schedule, PolicyError> {
    cfg.validate()?;
    if cfg.kind == PolicyKind::Clairvoyant {
        return Ok(select_clairvoyant(&state.pending, trace, slot, budget_ms));
    }
    let candidates = match cfg.kind {
        PolicyKind::TimeToLive => ttl_candidates(slot, state),
        _ => ranked_candidates(cfg, slot, histories),
    };
    let (n, spent_ms) = budget_walk(trace, slot, budget_ms, &candidates);
    let carryover = if cfg.kind.is_selective() {
        candidates[n..].to_vec()
    } else {
        Vec::new()
    };
    let mut executed = candidates;
    executed.truncate(n);
    Ok(Schedule {
        slot,
        executed,
        spent_ms,
        carryover,
    })
}
