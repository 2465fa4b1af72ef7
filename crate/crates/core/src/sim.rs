//! Slot-by-slot trace replay.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::policy::{build_schedule, PolicyConfig, PolicyError, PolicyState, QueryHistory, Schedule};
use crate::trace::{jaccard_distance, ChangeTrace, QueryId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("budget must be positive")]
    ZeroBudget,
    #[error("policy configuration: {0}")]
    Policy(#[from] PolicyError),
    #[error("line {line}: malformed execution log: {reason}")]
    MalformedLog { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub policy: PolicyConfig,
    pub budget_ms: u64,
}

impl RunConfig {
    pub fn new(policy: PolicyConfig, budget_ms: u64) -> Self {
        RunConfig { policy, budget_ms }
    }
}

/// What one execution revealed. `outcome` is `None` for a failed execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub query: QueryId,
    pub duration_ms: u64,
    pub outcome: Option<ChangeObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeObservation {
    pub changed: bool,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotLog {
    pub schedule: Schedule,
    /// Aligned with `schedule.executed`.
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionLog {
    pub n_queries: usize,
    pub budget_ms: u64,
    /// Slots `1..=n` in order.
    pub slots: Vec<SlotLog>,
}

impl ExecutionLog {
    pub fn executions(&self) -> impl Iterator<Item = (usize, &Observation)> + '_ {
        self.slots
            .iter()
            .flat_map(|s| s.observations.iter().map(move |o| (s.schedule.slot, o)))
    }
}

/// Replays `trace` under one policy and budget.
pub fn run_simulation(trace: &ChangeTrace, cfg: &RunConfig) -> Result<ExecutionLog, SimError> {
    if cfg.budget_ms == 0 {
        return Err(SimError::ZeroBudget);
    }
    cfg.policy.validate()?;
    let policy = &cfg.policy;
    let mut histories: Vec<QueryHistory> = trace
        .query_ids()
        .map(|q| QueryHistory::initial(trace.duration_ms(q, 0)))
        .collect();
    let mut state = PolicyState::new(trace.n_queries());
    let mut slots = Vec::with_capacity(trace.n_revisions());

    for slot in 1..=trace.n_revisions() {
        state.begin_slot(policy, trace, slot);
        let schedule = build_schedule(policy, slot, cfg.budget_ms, trace, &histories, &state)?;
        assert!(schedule.spent_ms <= cfg.budget_ms, "budget exceeded in slot {slot}");

        let mut observations = Vec::with_capacity(schedule.executed.len());
        for &q in &schedule.executed {
            let rec = trace.record(q, slot);
            let outcome = rec.result.map(|r| {
                let history = &mut histories[q.index()];
                let prev = trace.snapshot_at(q, history.last_exec());
                let cur = trace.result(r);
                let obs = ChangeObservation {
                    changed: prev.differs_from(cur),
                    jaccard: jaccard_distance(prev, cur),
                };
                history.push(slot, rec.duration_ms, obs.changed, obs.jaccard);
                obs
            });
            observations.push(Observation {
                query: q,
                duration_ms: rec.duration_ms,
                outcome,
            });
        }
        state.commit(
            policy,
            &schedule,
            observations
                .iter()
                .map(|o| (o.query, o.outcome.map(|c| c.changed))),
        );
        slots.push(SlotLog {
            schedule,
            observations,
        });
    }

    Ok(ExecutionLog {
        n_queries: trace.n_queries(),
        budget_ms: cfg.budget_ms,
        slots,
    })
}

/// Audits a log against the trace: contiguous slots, budget respected, and
/// every recorded observation equal to a recomputation from raw snapshots.
pub fn replay_check(log: &ExecutionLog, trace: &ChangeTrace) -> bool {
    if log.n_queries != trace.n_queries() || log.slots.len() != trace.n_revisions() {
        return false;
    }
    let mut last_exec = vec![0usize; trace.n_queries()];
    for (k, slot_log) in log.slots.iter().enumerate() {
        let slot = k + 1;
        let s = &slot_log.schedule;
        if s.slot != slot || s.executed.len() != slot_log.observations.len() {
            return false;
        }
        let mut seen = vec![false; trace.n_queries()];
        let mut spent = 0u64;
        for (&q, obs) in s.executed.iter().zip(&slot_log.observations) {
            if q != obs.query || q.index() >= trace.n_queries() || seen[q.index()] {
                return false;
            }
            seen[q.index()] = true;
            let rec = trace.record(q, slot);
            if obs.duration_ms != rec.duration_ms {
                return false;
            }
            spent += rec.duration_ms;
            match (rec.result, obs.outcome) {
                (None, None) => {}
                (Some(r), Some(o)) => {
                    let prev = trace.snapshot_at(q, last_exec[q.index()]);
                    let cur = trace.result(r);
                    if o.changed != prev.differs_from(cur) || o.jaccard != jaccard_distance(prev, cur) {
                        return false;
                    }
                    last_exec[q.index()] = slot;
                }
                _ => return false,
            }
        }
        if spent != s.spent_ms || spent > log.budget_ms {
            return false;
        }
    }
    true
}

/// Writes the audit file: a header, then per slot an `S` line and one
/// `X <slot> <query-id> <duration_ms> <changed:0|1> <jaccard>` line per
/// execution in execution order (`-` fields for failed executions) and a
/// `C` line listing carried-over queries when there are any.
pub fn write_log<W: Write>(log: &ExecutionLog, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "LOG v1 queries={} slots={} budget_ms={}",
        log.n_queries,
        log.slots.len(),
        log.budget_ms
    )?;
    for s in &log.slots {
        let slot = s.schedule.slot;
        writeln!(w, "S {slot} {}", s.schedule.spent_ms)?;
        for o in &s.observations {
            match o.outcome {
                Some(c) => writeln!(
                    w,
                    "X {slot} {} {} {} {}",
                    o.query,
                    o.duration_ms,
                    u8::from(c.changed),
                    c.jaccard
                )?,
                None => writeln!(w, "X {slot} {} {} - -", o.query, o.duration_ms)?,
            }
        }
        if !s.schedule.carryover.is_empty() {
            let ids: Vec<String> = s.schedule.carryover.iter().map(|q| q.to_string()).collect();
            writeln!(w, "C {slot} {}", ids.join(" "))?;
        }
    }
    Ok(())
}

pub fn read_log<R: BufRead>(input: R) -> Result<ExecutionLog, SimError> {
    fn bad(line: usize, reason: &str) -> SimError {
        SimError::MalformedLog {
            line,
            reason: reason.to_owned(),
        }
    }
    fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, SimError> {
        s.parse().map_err(|_| bad(line, &format!("invalid number {s:?}")))
    }

    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty log"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let ["LOG", "v1", q, n, b] = fields[..] else {
        return Err(bad(1, "expected `LOG v1 queries=<N> slots=<n> budget_ms=<B>`"));
    };
    let field = |s: &str, key: &str| -> Result<u64, SimError> {
        s.strip_prefix(key)
            .ok_or_else(|| bad(1, &format!("missing {key}")))
            .and_then(|v| num(1, v))
    };
    let n_queries = field(q, "queries=")? as usize;
    let n_slots = field(n, "slots=")? as usize;
    let budget_ms = field(b, "budget_ms=")?;

    let mut slots: Vec<SlotLog> = Vec::with_capacity(n_slots);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.first().copied() {
            None => continue,
            Some("S") => {
                let [_, slot, spent] = parts[..] else {
                    return Err(bad(line_no, "expected `S <slot> <spent_ms>`"));
                };
                slots.push(SlotLog {
                    schedule: Schedule {
                        slot: num(line_no, slot)?,
                        executed: Vec::new(),
                        spent_ms: num(line_no, spent)?,
                        carryover: Vec::new(),
                    },
                    observations: Vec::new(),
                });
            }
            Some("X") => {
                let [_, slot, q, dur, changed, jac] = parts[..] else {
                    return Err(bad(line_no, "expected 6 fields on X line"));
                };
                let current = slots
                    .last_mut()
                    .filter(|s| s.schedule.slot == num::<usize>(line_no, slot).unwrap_or(0))
                    .ok_or_else(|| bad(line_no, "X line outside its slot"))?;
                let query = QueryId(num(line_no, q)?);
                let outcome = match (changed, jac) {
                    ("-", "-") => None,
                    (c, j) => Some(ChangeObservation {
                        changed: match c {
                            "0" => false,
                            "1" => true,
                            _ => return Err(bad(line_no, "changed flag must be 0 or 1")),
                        },
                        jaccard: num(line_no, j)?,
                    }),
                };
                current.schedule.executed.push(query);
                current.observations.push(Observation {
                    query,
                    duration_ms: num(line_no, dur)?,
                    outcome,
                });
            }
            Some("C") => {
                let current = slots
                    .last_mut()
                    .ok_or_else(|| bad(line_no, "C line before any slot"))?;
                for q in &parts[2..] {
                    current.schedule.carryover.push(QueryId(num(line_no, q)?));
                }
            }
            Some(_) => return Err(bad(line_no, "unknown line kind")),
        }
    }
    Ok(ExecutionLog {
        n_queries,
        budget_ms,
        slots,
    })
}
