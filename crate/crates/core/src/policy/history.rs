/// What a scheduler has observed about one query before the current slot.
///
/// Entry `k` describes the `k`-th successful execution: its slot, its
/// duration, whether its result differed from the previous execution's, and
/// the Jaccard distance between the two. Entry 0 is always the initial
/// execution at slot 0, which has no predecessor (`false`, `0.0`).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryHistory {
    prev_execs: Vec<usize>,
    durations: Vec<u64>,
    change_flags: Vec<bool>,
    jaccard_obs: Vec<f64>,
}

impl QueryHistory {
    pub fn initial(duration_ms: u64) -> Self {
        QueryHistory {
            prev_execs: vec![0],
            durations: vec![duration_ms],
            change_flags: vec![false],
            jaccard_obs: vec![0.0],
        }
    }

    /// Appends an observation. Panics if `slot` does not come after the
    /// last recorded execution.
    pub fn push(&mut self, slot: usize, duration_ms: u64, changed: bool, jaccard: f64) {
        assert!(
            slot > self.last_exec(),
            "execution slot {slot} not after last execution {}",
            self.last_exec()
        );
        self.prev_execs.push(slot);
        self.durations.push(duration_ms);
        self.change_flags.push(changed);
        self.jaccard_obs.push(jaccard);
    }

    pub fn last_exec(&self) -> usize {
        *self.prev_execs.last().expect("history always holds slot 0")
    }

    pub fn prev_execs(&self) -> &[usize] {
        &self.prev_execs
    }

    pub fn durations(&self) -> &[u64] {
        &self.durations
    }

    pub fn change_flags(&self) -> &[bool] {
        &self.change_flags
    }

    pub fn jaccard_obs(&self) -> &[f64] {
        &self.jaccard_obs
    }

    pub fn len(&self) -> usize {
        self.prev_execs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prev_execs.is_empty()
    }

    /// Observations after slot 0, as `(slot, changed, jaccard)`.
    pub(crate) fn observations(&self) -> impl Iterator<Item = (usize, bool, f64)> + '_ {
        self.prev_execs
            .iter()
            .zip(&self.change_flags)
            .zip(&self.jaccard_obs)
            .skip(1)
            .map(|((&j, &c), &d)| (j, c, d))
    }

    /// The history as it stood before slot `slot`.
    pub fn truncated(&self, slot: usize) -> QueryHistory {
        let keep = self.prev_execs.partition_point(|&j| j < slot).max(1);
        QueryHistory {
            prev_execs: self.prev_execs[..keep].to_vec(),
            durations: self.durations[..keep].to_vec(),
            change_flags: self.change_flags[..keep].to_vec(),
            jaccard_obs: self.jaccard_obs[..keep].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_keeps_earlier_slots() {
        let mut h = QueryHistory::initial(4);
        h.push(2, 5, true, 0.5);
        h.push(5, 6, false, 0.0);
        let t = h.truncated(5);
        assert_eq!(t.prev_execs(), &[0, 2]);
        assert_eq!(t.durations(), &[4, 5]);
        assert_eq!(h.truncated(1).prev_execs(), &[0]);
        assert_eq!(h.truncated(100), h);
    }

    #[test]
    #[should_panic]
    fn push_must_advance() {
        let mut h = QueryHistory::initial(1);
        h.push(3, 1, false, 0.0);
        h.push(3, 1, false, 0.0);
    }
}
