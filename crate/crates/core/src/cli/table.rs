//! Experiment matrices and their table renderings.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::CliError;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::policy::PolicyConfig;
use crate::sim::{run_simulation, ExecutionLog, RunConfig};
use crate::trace::ChangeTrace;

/// Per-slot execution budget as given on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Budget {
    /// Larger than any slot's total duration.
    Unlimited,
    Millis(u64),
}

impl Budget {
    pub fn as_ms(self) -> u64 {
        match self {
            Budget::Unlimited => u64::MAX,
            Budget::Millis(ms) => ms,
        }
    }
}

impl Ord for Budget {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_ms().cmp(&other.as_ms())
    }
}

impl PartialOrd for Budget {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Budget::Unlimited => f.write_str("inf"),
            Budget::Millis(ms) if ms % 1000 == 0 => write!(f, "{}s", ms / 1000),
            Budget::Millis(ms) => write!(f, "{ms}ms"),
        }
    }
}

/// `inf`, `<n>ms`, `<x>s`, or a bare number of seconds.
impl FromStr for Budget {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || CliError::Usage(format!("invalid budget {s:?} (expected inf, <sec>s or <ms>ms)"));
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Budget::Unlimited);
        }
        let ms = if let Some(v) = s.strip_suffix("ms") {
            v.trim().parse::<u64>().map_err(|_| bad())?
        } else {
            let secs: f64 = s.strip_suffix('s').unwrap_or(s).trim().parse().map_err(|_| bad())?;
            if !(secs.is_finite() && secs >= 0.0) {
                return Err(bad());
            }
            (secs * 1000.0).round() as u64
        };
        if ms == 0 {
            return Err(bad());
        }
        Ok(Budget::Millis(ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Tsv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "tsv" => Ok(TableFormat::Tsv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(CliError::Usage(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrix {
    pub policies: Vec<PolicyConfig>,
    pub budgets: Vec<Budget>,
}

impl ExperimentMatrix {
    pub fn new(policies: Vec<PolicyConfig>, budgets: Vec<Budget>) -> Result<Self, CliError> {
        if policies.is_empty() {
            return Err(CliError::Usage("at least one --policy is required".into()));
        }
        if budgets.is_empty() {
            return Err(CliError::Usage("at least one --budget is required".into()));
        }
        Ok(ExperimentMatrix { policies, budgets })
    }
}

/// One `(policy, budget)` cell of a matrix run.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub policy: String,
    pub budget: Budget,
    pub report: MetricsReport,
}

/// Runs every cell (in parallel) and returns rows sorted by budget, then
/// policy label. Logs are returned alongside in the same order.
pub fn run_matrix(
    trace: &ChangeTrace,
    matrix: &ExperimentMatrix,
) -> Result<Vec<(MatrixRow, ExecutionLog)>, CliError> {
    let cells: Vec<(&PolicyConfig, Budget)> = matrix
        .budgets
        .iter()
        .flat_map(|&b| matrix.policies.iter().map(move |p| (p, b)))
        .collect();
    let mut rows = cells
        .into_par_iter()
        .map(|(policy, budget)| {
            let log = run_simulation(trace, &RunConfig::new(policy.clone(), budget.as_ms()))?;
            let report = compute_metrics(&log, trace)?;
            Ok((
                MatrixRow {
                    policy: policy.label(),
                    budget,
                    report,
                },
                log,
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    rows.sort_by(|(a, _), (b, _)| a.budget.cmp(&b.budget).then_with(|| a.policy.cmp(&b.policy)));
    Ok(rows)
}

fn header() -> Vec<&'static str> {
    let mut h = vec!["policy", "budget"];
    h.extend(MetricsReport::COLUMNS);
    h
}

fn row_fields(row: &MatrixRow) -> Vec<String> {
    let mut f = vec![row.policy.clone(), row.budget.to_string()];
    f.extend(row.report.fields());
    f
}

pub fn format_table(rows: &[MatrixRow], format: TableFormat) -> String {
    match format {
        TableFormat::Csv | TableFormat::Tsv => {
            let delimiter = if format == TableFormat::Csv { b',' } else { b'\t' };
            let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
            w.write_record(header()).expect("in-memory write");
            for row in rows {
                w.write_record(row_fields(row)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
        }
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n", header().join(" | "));
            let aligns: Vec<&str> = header()
                .iter()
                .enumerate()
                .map(|(i, _)| if i < 2 { ":---" } else { "---:" })
                .collect();
            out.push_str(&format!("| {} |\n", aligns.join(" | ")));
            for row in rows {
                out.push_str(&format!("| {} |\n", row_fields(row).join(" | ")));
            }
            out
        }
    }
}

fn parse_fields(fields: &[String], line: usize) -> Result<MatrixRow, CliError> {
    let bad = |why: &str| CliError::Usage(format!("table line {line}: {why}"));
    if fields.len() != 10 {
        return Err(bad("expected 10 columns"));
    }
    let n = |i: usize| fields[i].trim().parse::<u64>().map_err(|_| bad("invalid count"));
    let report = MetricsReport::from_counts(n(2)?, n(4)?, n(6)?, n(7)?, n(8)?, n(9)?);
    if report.irrelevant != n(3)? {
        return Err(bad("irrelevant does not equal total - relevant"));
    }
    Ok(MatrixRow {
        policy: fields[0].trim().to_owned(),
        budget: fields[1].parse()?,
        report,
    })
}

/// Parses a table written by [`format_table`] back into rows.
pub fn parse_table(text: &str, format: TableFormat) -> Result<Vec<MatrixRow>, CliError> {
    match format {
        TableFormat::Csv | TableFormat::Tsv => {
            let delimiter = if format == TableFormat::Csv { b',' } else { b'\t' };
            let mut r = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(text.as_bytes());
            r.records()
                .enumerate()
                .map(|(i, rec)| {
                    let rec = rec.map_err(|e| CliError::Usage(format!("table: {e}")))?;
                    let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
                    parse_fields(&fields, i + 2)
                })
                .collect()
        }
        TableFormat::Markdown => text
            .lines()
            .enumerate()
            .skip(2)
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let fields: Vec<String> = l
                    .trim()
                    .trim_matches('|')
                    .split(" | ")
                    .map(|f| f.trim().to_owned())
                    .collect();
                parse_fields(&fields, i + 1)
            })
            .collect(),
    }
}

/// Per-revision change counts: `revision,changed_queries,cumulative_distinct_changed`.
pub fn inspect_csv(trace: &ChangeTrace) -> String {
    let mut seen = vec![false; trace.n_queries()];
    let mut distinct = 0usize;
    let mut out = String::from("revision,changed_queries,cumulative_distinct_changed\n");
    for i in 1..=trace.n_revisions() {
        let mut changed = 0;
        for q in trace.query_ids() {
            if trace.is_changed(q, i) {
                changed += 1;
                if !seen[q.index()] {
                    seen[q.index()] = true;
                    distinct += 1;
                }
            }
        }
        out.push_str(&format!("{i},{changed},{distinct}\n"));
    }
    out
}

/// Per-query change slots: `query,changes,slots` with slots joined by `;`.
pub fn per_query_csv(trace: &ChangeTrace) -> String {
    let mut out = String::from("query,changes,slots\n");
    for q in trace.query_ids() {
        let slots = trace.change_slots(q);
        let joined: Vec<String> = slots.iter().map(usize::to_string).collect();
        out.push_str(&format!("{q},{},{}\n", slots.len(), joined.join(";")));
    }
    out
}
