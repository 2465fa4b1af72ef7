use super::{PolicyConfig, TtlOnChange};

/// Adaptive time-to-live of one query, in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TtlEntry {
    pub ttl: u32,
    pub due_at: usize,
}

impl TtlEntry {
    /// Every query starts with a TTL of 1 after its initial execution.
    pub fn initial() -> Self {
        TtlEntry { ttl: 1, due_at: 1 }
    }
}

/// Applies one execution outcome at `slot`: a change halves (or resets) the
/// TTL, no change doubles it up to `ttl_max`.
pub fn ttl_update(entry: TtlEntry, changed: bool, cfg: &PolicyConfig, slot: usize) -> TtlEntry {
    let max = cfg.ttl_max.max(1);
    let ttl = match (changed, cfg.ttl_on_change) {
        (true, TtlOnChange::Halve) => (entry.ttl / 2).max(1),
        (true, TtlOnChange::Reset) => 1,
        (false, _) => entry.ttl.saturating_mul(2).min(max),
    };
    TtlEntry {
        ttl,
        due_at: slot + ttl as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    fn cfg(max: u32, on_change: TtlOnChange) -> PolicyConfig {
        PolicyConfig {
            ttl_max: max,
            ttl_on_change: on_change,
            ..PolicyConfig::new(PolicyKind::TimeToLive)
        }
    }

    #[test]
    fn doubles_up_to_cap() {
        let c = cfg(32, TtlOnChange::Halve);
        let mut e = TtlEntry::initial();
        let mut seen = vec![e.ttl];
        for slot in 1..=6 {
            e = ttl_update(e, false, &c, slot);
            seen.push(e.ttl);
        }
        assert_eq!(seen, [1, 2, 4, 8, 16, 32, 32]);
        assert_eq!(e.due_at, 6 + 32);
    }

    #[test]
    fn change_resets_or_halves() {
        let full = TtlEntry { ttl: 32, due_at: 40 };
        assert_eq!(ttl_update(full, true, &cfg(32, TtlOnChange::Reset), 40).ttl, 1);
        assert_eq!(ttl_update(full, true, &cfg(32, TtlOnChange::Halve), 40).ttl, 16);
        let one = TtlEntry { ttl: 1, due_at: 3 };
        let e = ttl_update(one, true, &cfg(32, TtlOnChange::Halve), 3);
        assert_eq!((e.ttl, e.due_at), (1, 4));
    }
}
