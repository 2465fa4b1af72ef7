//! Seeded synthetic change traces.
//!
//! Each query draws a per-slot change probability from a mixture: a share of
//! static queries that never change, a share of hot queries with a fixed high
//! probability, and a Pareto-tailed remainder. Base durations are
//! log-uniform with multiplicative per-slot jitter, optionally skewed
//! towards long durations for queries that can change. A change replaces a
//! `churn` fraction of the result's tokens with fresh ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::trace::{ChangeTrace, ExecutionRecord, QueryId, ResultId, ResultSnapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("invalid generator setting {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("line {line}: {reason}")]
    ConfigFile { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

fn invalid(key: &str, reason: impl Into<String>) -> GeneratorError {
    GeneratorError::Invalid {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_queries: usize,
    pub n_revisions: usize,
    /// Share of queries whose result never changes.
    pub static_fraction: f64,
    /// Share of queries changing with `hot_probability` per slot.
    pub hot_fraction: f64,
    pub hot_probability: f64,
    /// The remaining queries change with probability
    /// `min(1, tail_scale · X)`, `X ~ Pareto(1, tail_shape)`.
    pub tail_shape: f64,
    pub tail_scale: f64,
    pub min_ms: u64,
    pub max_ms: u64,
    /// Per-slot duration factor is uniform in `[1 − jitter, 1 + jitter]`.
    pub jitter: f64,
    /// Queries that can change draw their base duration from the upper
    /// `1 − bias` share of the log-duration range. 0 draws every query from
    /// the full range.
    pub change_duration_bias: f64,
    /// Fraction of tokens replaced per change; at least one token is.
    pub churn: f64,
    pub result_size: usize,
    /// Share of queries whose results are ordered sequences.
    pub ordered_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 42,
            n_queries: 200,
            n_revisions: 300,
            static_fraction: 0.6,
            hot_fraction: 0.03,
            hot_probability: 0.5,
            tail_shape: 1.2,
            tail_scale: 0.004,
            min_ms: 5,
            max_ms: 5_000,
            jitter: 0.2,
            change_duration_bias: 0.0,
            churn: 0.3,
            result_size: 8,
            ordered_fraction: 0.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        for (key, p) in [
            ("static_fraction", self.static_fraction),
            ("hot_fraction", self.hot_fraction),
            ("hot_probability", self.hot_probability),
            ("churn", self.churn),
            ("ordered_fraction", self.ordered_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(key, "must lie in [0, 1]"));
            }
        }
        if self.static_fraction + self.hot_fraction > 1.0 {
            return Err(invalid("hot_fraction", "static_fraction + hot_fraction exceeds 1"));
        }
        if !(self.tail_shape.is_finite() && self.tail_shape > 0.0) {
            return Err(invalid("tail_shape", "must be positive"));
        }
        if !(self.tail_scale.is_finite() && self.tail_scale >= 0.0) {
            return Err(invalid("tail_scale", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.change_duration_bias) {
            return Err(invalid("change_duration_bias", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(invalid("jitter", "must lie in [0, 1)"));
        }
        if self.min_ms == 0 {
            return Err(invalid("min_ms", "must be at least 1"));
        }
        if self.max_ms < self.min_ms {
            return Err(invalid("max_ms", "must be at least min_ms"));
        }
        if self.result_size == 0 {
            return Err(invalid("result_size", "must be at least 1"));
        }
        Ok(())
    }

    /// Sets one field from its `key=value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), GeneratorError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, GeneratorError> {
            value
                .parse()
                .map_err(|_| invalid(key, format!("cannot parse {value:?}")))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "queries" | "n_queries" => self.n_queries = parse(key, value)?,
            "revisions" | "n_revisions" => self.n_revisions = parse(key, value)?,
            "static_fraction" => self.static_fraction = parse(key, value)?,
            "hot_fraction" => self.hot_fraction = parse(key, value)?,
            "hot_probability" => self.hot_probability = parse(key, value)?,
            "tail_shape" => self.tail_shape = parse(key, value)?,
            "tail_scale" => self.tail_scale = parse(key, value)?,
            "min_ms" => self.min_ms = parse(key, value)?,
            "max_ms" => self.max_ms = parse(key, value)?,
            "jitter" => self.jitter = parse(key, value)?,
            "change_duration_bias" => self.change_duration_bias = parse(key, value)?,
            "churn" => self.churn = parse(key, value)?,
            "result_size" => self.result_size = parse(key, value)?,
            "ordered_fraction" => self.ordered_fraction = parse(key, value)?,
            _ => return Err(invalid(key, "unknown setting")),
        }
        Ok(())
    }

    /// Applies a `key=value` file (one per line, `#` comments) over `self`.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<(), GeneratorError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GeneratorError::Io(e.to_string()))?;
        self.apply_str(&text)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<(), GeneratorError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(GeneratorError::ConfigFile {
                line: idx + 1,
                reason: "expected key=value".to_owned(),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| GeneratorError::ConfigFile {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
        }
        Ok(())
    }
}

/// Per-query parameters drawn before the grid is filled.
#[derive(Debug, Clone, Copy)]
pub struct QueryProfile {
    pub change_probability: f64,
    pub base_ms: f64,
    pub ordered: bool,
}

fn draw_profile(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> QueryProfile {
    let u: f64 = rng.gen();
    let change_probability = if u < cfg.static_fraction {
        0.0
    } else if u < cfg.static_fraction + cfg.hot_fraction {
        cfg.hot_probability
    } else {
        let v: f64 = 1.0 - rng.gen::<f64>();
        (cfg.tail_scale * v.powf(-1.0 / cfg.tail_shape)).min(1.0)
    };
    let (mut lo, hi) = ((cfg.min_ms as f64).ln(), (cfg.max_ms as f64).ln());
    if change_probability > 0.0 {
        lo += cfg.change_duration_bias * (hi - lo);
    }
    let base_ms = if hi > lo {
        rng.gen_range(lo..=hi).exp()
    } else {
        cfg.min_ms as f64
    };
    let ordered = rng.gen::<f64>() < cfg.ordered_fraction;
    QueryProfile {
        change_probability,
        base_ms,
        ordered,
    }
}

/// Draws the per-query profiles for `cfg` (same stream as [`generate_trace`]).
pub fn query_profiles(cfg: &GeneratorConfig) -> Vec<QueryProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_queries).map(|_| draw_profile(cfg, &mut rng)).collect()
}

pub fn generate_trace(cfg: &GeneratorConfig) -> Result<ChangeTrace, GeneratorError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let profiles: Vec<QueryProfile> = (0..cfg.n_queries)
        .map(|_| draw_profile(cfg, &mut rng))
        .collect();

    let mut counter = 0u64;
    let mut fresh = || {
        counter += 1;
        format!("e{counter}")
    };
    let replaced = ((cfg.churn * cfg.result_size as f64).round() as usize).clamp(1, cfg.result_size);

    let mut results = Vec::new();
    let mut records = Vec::with_capacity(cfg.n_queries * (cfg.n_revisions + 1));
    for (q, profile) in profiles.iter().enumerate() {
        let mut tokens: Vec<String> = (0..cfg.result_size).map(|_| fresh()).collect();
        let snapshot = |tokens: &[String]| {
            if profile.ordered {
                ResultSnapshot::ordered(tokens.iter().cloned())
            } else {
                ResultSnapshot::unordered(tokens.iter().cloned())
            }
            .expect("generated tokens are non-empty")
        };
        results.push(snapshot(&tokens));
        let mut current = ResultId(results.len() as u32 - 1);
        for rev in 0..=cfg.n_revisions {
            if rev > 0 && rng.gen::<f64>() < profile.change_probability {
                for pos in index::sample(&mut rng, cfg.result_size, replaced) {
                    tokens[pos] = fresh();
                }
                results.push(snapshot(&tokens));
                current = ResultId(results.len() as u32 - 1);
            }
            let factor = 1.0 + cfg.jitter * rng.gen_range(-1.0..=1.0);
            let duration_ms = ((profile.base_ms * factor).round() as u64).max(1);
            records.push(ExecutionRecord {
                query: QueryId(q as u32),
                revision: rev,
                duration_ms,
                result: Some(current),
            });
        }
    }
    ChangeTrace::new(cfg.n_queries, cfg.n_revisions, records, results)
        .map_err(|e| GeneratorError::Invalid {
            key: "trace".to_owned(),
            reason: e.to_string(),
        })
}

/// `key=value` rendering of every setting, loadable with [`GeneratorConfig::apply_str`].
pub fn config_to_string(cfg: &GeneratorConfig) -> String {
    let entries: BTreeMap<&str, String> = [
        ("seed", cfg.seed.to_string()),
        ("n_queries", cfg.n_queries.to_string()),
        ("n_revisions", cfg.n_revisions.to_string()),
        ("static_fraction", cfg.static_fraction.to_string()),
        ("hot_fraction", cfg.hot_fraction.to_string()),
        ("hot_probability", cfg.hot_probability.to_string()),
        ("tail_shape", cfg.tail_shape.to_string()),
        ("tail_scale", cfg.tail_scale.to_string()),
        ("min_ms", cfg.min_ms.to_string()),
        ("max_ms", cfg.max_ms.to_string()),
        ("jitter", cfg.jitter.to_string()),
        ("change_duration_bias", cfg.change_duration_bias.to_string()),
        ("churn", cfg.churn.to_string()),
        ("result_size", cfg.result_size.to_string()),
        ("ordered_fraction", cfg.ordered_fraction.to_string()),
    ]
    .into_iter()
    .collect();
    entries
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}
