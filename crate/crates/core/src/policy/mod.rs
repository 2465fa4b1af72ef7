//! Refresh scheduling policies.
//!
//! Five non-selective policies rank every query each slot (RR, SJF, LJF, CR,
//! DJ); two selective ones pick a subset (TTL and the clairvoyant oracle CV).
//! All of them hand an ordered candidate list to the same budget walk in
//! [`build_schedule`].

mod history;
mod rank;
mod schedule;
mod ttl;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use history::QueryHistory;
pub use rank::{
    change_indicator, estimate_runtime, rank_cr, rank_dj, rank_ljf, rank_rr, rank_sjf,
};
pub use schedule::{build_schedule, select_clairvoyant, PendingChange, PolicyState, Schedule};
pub use ttl::{ttl_update, TtlEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("unknown policy {0:?} (expected rr, sjf, ljf, cr, dj, ttl or cv)")]
    UnknownPolicy(String),
    #[error("policy {policy}: unknown parameter {key:?}")]
    UnknownParameter { policy: String, key: String },
    #[error("policy {policy}: invalid value {value:?} for {key}")]
    InvalidParameter {
        policy: String,
        key: String,
        value: String,
    },
    #[error("slot {0} is not a past execution")]
    NotAnExecution(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    RoundRobin,
    ShortestJobFirst,
    LongestJobFirst,
    ChangeRate,
    DynamicsJaccard,
    TimeToLive,
    Clairvoyant,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::RoundRobin,
        PolicyKind::ShortestJobFirst,
        PolicyKind::LongestJobFirst,
        PolicyKind::ChangeRate,
        PolicyKind::DynamicsJaccard,
        PolicyKind::TimeToLive,
        PolicyKind::Clairvoyant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::RoundRobin => "rr",
            PolicyKind::ShortestJobFirst => "sjf",
            PolicyKind::LongestJobFirst => "ljf",
            PolicyKind::ChangeRate => "cr",
            PolicyKind::DynamicsJaccard => "dj",
            PolicyKind::TimeToLive => "ttl",
            PolicyKind::Clairvoyant => "cv",
        }
    }

    pub fn is_selective(self) -> bool {
        matches!(self, PolicyKind::TimeToLive | PolicyKind::Clairvoyant)
    }

    /// CR and DJ run the highest score first; the others the lowest.
    pub fn ranks_descending(self) -> bool {
        matches!(self, PolicyKind::ChangeRate | PolicyKind::DynamicsJaccard)
    }

    fn default_lambda(self) -> f64 {
        match self {
            PolicyKind::ShortestJobFirst | PolicyKind::LongestJobFirst => 0.5,
            PolicyKind::DynamicsJaccard => 1.0,
            _ => 0.0,
        }
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtlOnChange {
    Halve,
    Reset,
}

pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
pub const DEFAULT_TTL_MAX: u32 = 32;

/// Policy selection plus every tunable. Fields that do not apply to `kind`
/// are carried along and ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub lambda: f64,
    pub median_window: usize,
    pub ttl_max: u32,
    pub ttl_on_change: TtlOnChange,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            lambda: kind.default_lambda(),
            median_window: DEFAULT_MEDIAN_WINDOW,
            ttl_max: DEFAULT_TTL_MAX,
            ttl_on_change: TtlOnChange::Halve,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_ttl(mut self, max: u32, on_change: TtlOnChange) -> Self {
        self.ttl_max = max;
        self.ttl_on_change = on_change;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let invalid = |key: &str, value: String| PolicyError::InvalidParameter {
            policy: self.kind.name().to_owned(),
            key: key.to_owned(),
            value,
        };
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid("lambda", self.lambda.to_string()));
        }
        if self.median_window == 0 {
            return Err(invalid("window", "0".to_owned()));
        }
        if self.ttl_max == 0 {
            return Err(invalid("max", "0".to_owned()));
        }
        Ok(())
    }

    /// Canonical `name[:k=v,...]` spelling, listing only the parameters the
    /// policy uses. Parses back to an equivalent config.
    pub fn label(&self) -> String {
        let mut params = Vec::new();
        match self.kind {
            PolicyKind::ShortestJobFirst | PolicyKind::LongestJobFirst => {
                params.push(format!("lambda={}", self.lambda));
                if self.median_window != DEFAULT_MEDIAN_WINDOW {
                    params.push(format!("window={}", self.median_window));
                }
            }
            PolicyKind::ChangeRate | PolicyKind::DynamicsJaccard => {
                params.push(format!("lambda={}", self.lambda));
            }
            PolicyKind::TimeToLive => {
                params.push(format!("max={}", self.ttl_max));
                if self.ttl_on_change == TtlOnChange::Reset {
                    params.push("on_change=reset".to_owned());
                }
            }
            PolicyKind::RoundRobin | PolicyKind::Clairvoyant => {}
        }
        if params.is_empty() {
            self.kind.name().to_owned()
        } else {
            format!("{}:{}", self.kind.name(), params.join(","))
        }
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `name[:k=v,...]`, e.g. `cr:lambda=0.5` or `ttl:max=32,on_change=reset`.
impl FromStr for PolicyConfig {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p),
            None => (s.trim(), ""),
        };
        let mut cfg = PolicyConfig::new(name.parse()?);
        for kv in params.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (key, value) = kv.split_once('=').unwrap_or((kv, ""));
            let (key, value) = (key.trim(), value.trim());
            let invalid = || PolicyError::InvalidParameter {
                policy: name.to_owned(),
                key: key.to_owned(),
                value: value.to_owned(),
            };
            match key {
                "lambda" => cfg.lambda = value.parse().map_err(|_| invalid())?,
                "window" | "k" => cfg.median_window = value.parse().map_err(|_| invalid())?,
                "max" => cfg.ttl_max = value.parse().map_err(|_| invalid())?,
                "on_change" => {
                    cfg.ttl_on_change = match value {
                        "halve" => TtlOnChange::Halve,
                        "reset" => TtlOnChange::Reset,
                        _ => return Err(invalid()),
                    }
                }
                _ => {
                    return Err(PolicyError::UnknownParameter {
                        policy: name.to_owned(),
                        key: key.to_owned(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
