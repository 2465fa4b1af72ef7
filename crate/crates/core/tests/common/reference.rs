//! A second, deliberately naive scheduler written from the policy
//! definitions alone. It shares no code with the library's policy module and
//! recomputes change observations directly from token lists.

use std::collections::HashMap;

use qrefresh::policy::TtlOnChange;
use qrefresh::{ChangeTrace, PolicyConfig, PolicyKind, QueryId, ResultSnapshot};

struct Obs {
    slot: usize,
    duration: u64,
    changed: bool,
    jaccard: f64,
}

fn counts(s: &ResultSnapshot) -> HashMap<&str, u64> {
    let mut m = HashMap::new();
    for t in s.elements() {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

pub fn naive_jaccard(a: &ResultSnapshot, b: &ResultSnapshot) -> f64 {
    let (ca, cb) = (counts(a), counts(b));
    let mut inter = 0u64;
    let mut union = 0u64;
    for (k, &x) in &ca {
        let y = cb.get(k).copied().unwrap_or(0);
        inter += x.min(y);
        union += x.max(y);
    }
    for (k, &y) in &cb {
        if !ca.contains_key(k) {
            union += y;
        }
    }
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

pub fn naive_changed(a: &ResultSnapshot, b: &ResultSnapshot) -> bool {
    match (a.sequence(), b.sequence()) {
        (Some(x), Some(y)) => x != y,
        _ => a.elements() != b.elements(),
    }
}

fn median_of_recent(h: &[Obs], window: usize) -> u64 {
    let take = window.min(h.len());
    let mut d: Vec<u64> = h[h.len() - take..].iter().map(|o| o.duration).collect();
    d.sort();
    d[(d.len() - 1) / 2]
}

fn rank(cfg: &PolicyConfig, i: usize, h: &[Obs]) -> f64 {
    let last = h.last().unwrap().slot;
    let age = (i - last) as f64;
    let decayed = |f: &dyn Fn(&Obs) -> f64| -> f64 {
        h[1..]
            .iter()
            .map(|o| (-cfg.lambda * (i - o.slot) as f64).exp() * f(o))
            .sum()
    };
    match cfg.kind {
        PolicyKind::RoundRobin => 1.0 / age,
        PolicyKind::ShortestJobFirst => {
            (-cfg.lambda * age).exp() * median_of_recent(h, cfg.median_window) as f64
        }
        PolicyKind::LongestJobFirst => {
            (-cfg.lambda * age).exp() / median_of_recent(h, cfg.median_window) as f64
        }
        PolicyKind::ChangeRate => decayed(&|o| if o.changed { 1.0 } else { -1.0 }),
        PolicyKind::DynamicsJaccard => decayed(&|o| o.jaccard),
        _ => unreachable!(),
    }
}

/// Executed queries per slot `1..=n`, in execution order.
pub fn reference_schedules(trace: &ChangeTrace, cfg: &PolicyConfig, budget: u64) -> Vec<Vec<QueryId>> {
    let n = trace.n_queries();
    let mut hist: Vec<Vec<Obs>> = (0..n)
        .map(|q| {
            vec![Obs {
                slot: 0,
                duration: trace.duration_ms(QueryId(q as u32), 0),
                changed: false,
                jaccard: 0.0,
            }]
        })
        .collect();
    let mut ttl = vec![1u32; n];
    let mut due = vec![1usize; n];
    let mut carry: Vec<usize> = Vec::new();
    let mut pending: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::new();

    for i in 1..=trace.n_revisions() {
        let order: Vec<usize> = match cfg.kind {
            PolicyKind::TimeToLive => {
                let mut d: Vec<usize> = (0..n).filter(|q| due[*q] <= i && !carry.contains(q)).collect();
                d.sort_by_key(|&q| (std::cmp::Reverse(i - due[q]), q));
                carry.iter().copied().chain(d).collect()
            }
            PolicyKind::Clairvoyant => {
                for q in 0..n {
                    if trace.is_changed(QueryId(q as u32), i) {
                        pending.push((i, q));
                    }
                }
                pending.sort();
                let mut v: Vec<usize> = Vec::new();
                for &(_, q) in &pending {
                    if !v.contains(&q) {
                        v.push(q);
                    }
                }
                v
            }
            _ => {
                let mut v: Vec<(f64, usize, usize)> = (0..n)
                    .map(|q| (rank(cfg, i, &hist[q]), i - hist[q].last().unwrap().slot, q))
                    .collect();
                let desc = matches!(cfg.kind, PolicyKind::ChangeRate | PolicyKind::DynamicsJaccard);
                v.sort_by(|a, b| {
                    let r = if desc { b.0.partial_cmp(&a.0) } else { a.0.partial_cmp(&b.0) };
                    r.unwrap().then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
                });
                v.into_iter().map(|t| t.2).collect()
            }
        };

        let mut spent = 0u64;
        let mut executed = Vec::new();
        for &q in &order {
            let d = trace.duration_ms(QueryId(q as u32), i);
            if spent.checked_add(d).is_none_or(|s| s > budget) {
                break;
            }
            spent += d;
            executed.push(q);
        }
        if cfg.kind == PolicyKind::TimeToLive {
            carry = order[executed.len()..].to_vec();
        }

        for &q in &executed {
            let id = QueryId(q as u32);
            let rec = trace.record(id, i);
            let Some(r) = rec.result else { continue };
            let last = hist[q].last().unwrap().slot;
            let prev = trace.snapshot_at(id, last);
            let cur = trace.result(r);
            let changed = naive_changed(prev, cur);
            hist[q].push(Obs {
                slot: i,
                duration: rec.duration_ms,
                changed,
                jaccard: naive_jaccard(prev, cur),
            });
            match cfg.kind {
                PolicyKind::TimeToLive => {
                    ttl[q] = if !changed {
                        (ttl[q] * 2).min(cfg.ttl_max)
                    } else if cfg.ttl_on_change == TtlOnChange::Reset {
                        1
                    } else {
                        (ttl[q] / 2).max(1)
                    };
                    due[q] = i + ttl[q] as usize;
                }
                PolicyKind::Clairvoyant => pending.retain(|p| p.1 != q),
                _ => {}
            }
        }
        out.push(executed.into_iter().map(|q| QueryId(q as u32)).collect());
    }
    out
}
