//! Random small traces and run configurations.

use rand::seq::SliceRandom;
use rand::Rng;

use qrefresh::policy::TtlOnChange;
use qrefresh::trace::{ExecutionRecord, ResultId};
use qrefresh::{ChangeTrace, PolicyConfig, PolicyKind, QueryId, ResultSnapshot};

const ALPHABET: [&str; 5] = ["a", "b", "c", "d", "e"];

fn random_snapshot<R: Rng>(rng: &mut R, ordered: bool) -> ResultSnapshot {
    let len = rng.gen_range(0..=4);
    let tokens: Vec<&str> = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
    if ordered {
        ResultSnapshot::ordered(tokens).unwrap()
    } else {
        ResultSnapshot::unordered(tokens).unwrap()
    }
}

/// Up to `max_q` queries and `max_rev` revisions, with repeated tokens,
/// reverts, ordered queries, and failed executions after revision 0.
pub fn random_trace<R: Rng>(rng: &mut R, max_q: usize, max_rev: usize) -> ChangeTrace {
    let n_q = rng.gen_range(1..=max_q);
    let n_rev = rng.gen_range(1..=max_rev);
    let mut results = Vec::new();
    let mut records = Vec::new();
    for q in 0..n_q {
        let ordered = rng.gen_bool(0.3);
        let change_p = rng.gen_range(0.0..0.8);
        let base = rng.gen_range(1..=20u64);
        let mut current = None;
        for rev in 0..=n_rev {
            let failed = rev > 0 && rng.gen_bool(0.1);
            if current.is_none() || (!failed && rng.gen_bool(change_p)) {
                results.push(random_snapshot(rng, ordered));
                current = Some(ResultId(results.len() as u32 - 1));
            }
            records.push(ExecutionRecord {
                query: QueryId(q as u32),
                revision: rev,
                duration_ms: base + rng.gen_range(0..=base / 2),
                result: if failed { None } else { current },
            });
        }
    }
    ChangeTrace::new(n_q, n_rev, records, results).expect("valid random trace")
}

pub fn random_policy<R: Rng>(rng: &mut R, kind: PolicyKind) -> PolicyConfig {
    let mut cfg = PolicyConfig::new(kind);
    if rng.gen_bool(0.5) {
        cfg.lambda = *[0.0, 0.25, 0.5, 1.0, 2.0].choose(rng).unwrap();
    }
    cfg.median_window = rng.gen_range(1..=6);
    cfg.ttl_max = *[1, 2, 4, 8, 16].choose(rng).unwrap();
    if rng.gen_bool(0.5) {
        cfg.ttl_on_change = TtlOnChange::Reset;
    }
    cfg
}

/// Up to `max_levels` distinct budgets, always including the unlimited one
/// and otherwise spread from tiny up to the largest slot total.
pub fn random_budgets<R: Rng>(rng: &mut R, trace: &ChangeTrace, max_levels: usize) -> Vec<u64> {
    let top = trace.max_slot_total_ms().max(1);
    let mut v = vec![u64::MAX];
    for _ in 1..rng.gen_range(1..=max_levels) {
        v.push(rng.gen_range(1..=top));
    }
    v.sort();
    v.dedup();
    v
}
