//! Ranking functions for the non-selective policies.
//!
//! RR, SJF and LJF rank ascending (smaller value runs first); CR and DJ rank
//! descending (larger accumulated change evidence runs first).

use super::{PolicyError, QueryHistory};

#[inline]
fn age(i: usize, h: &QueryHistory) -> f64 {
    debug_assert!(i > h.last_exec());
    (i - h.last_exec()) as f64
}

/// `1 / (i − lastExec)`.
pub fn rank_rr(i: usize, h: &QueryHistory) -> f64 {
    1.0 / age(i, h)
}

/// Lower median of the most recent `window` observed durations.
pub fn estimate_runtime(h: &QueryHistory, window: usize) -> u64 {
    let durations = h.durations();
    let window = window.max(1).min(durations.len());
    let mut recent = durations[durations.len() - window..].to_vec();
    recent.sort_unstable();
    recent[(recent.len() - 1) / 2]
}

/// `e^(−λ·age) · median`.
pub fn rank_sjf(i: usize, h: &QueryHistory, lambda: f64, window: usize) -> f64 {
    (-lambda * age(i, h)).exp() * estimate_runtime(h, window) as f64
}

/// `e^(−λ·age) / median`.
pub fn rank_ljf(i: usize, h: &QueryHistory, lambda: f64, window: usize) -> f64 {
    (-lambda * age(i, h)).exp() / estimate_runtime(h, window) as f64
}

/// `+1` if the execution at slot `j` revealed a change relative to the
/// execution before it, `−1` otherwise. The initial slot-0 execution has no
/// predecessor and therefore no indicator.
pub fn change_indicator(h: &QueryHistory, j: usize) -> Result<i8, PolicyError> {
    match h.prev_execs().binary_search(&j) {
        Ok(k) if k > 0 => Ok(if h.change_flags()[k] { 1 } else { -1 }),
        _ => Err(PolicyError::NotAnExecution(j)),
    }
}

/// `Σ_j e^(−λ(i−j)) · change(j)` over executions after slot 0.
pub fn rank_cr(i: usize, h: &QueryHistory, lambda: f64) -> f64 {
    h.observations()
        .map(|(j, changed, _)| {
            let indicator = if changed { 1.0 } else { -1.0 };
            (-lambda * (i - j) as f64).exp() * indicator
        })
        .sum()
}

/// `Σ_j e^(−λ(i−j)) · jaccard(j)` over executions after slot 0.
pub fn rank_dj(i: usize, h: &QueryHistory, lambda: f64) -> f64 {
    h.observations()
        .map(|(j, _, d)| (-lambda * (i - j) as f64).exp() * d)
        .sum()
}
