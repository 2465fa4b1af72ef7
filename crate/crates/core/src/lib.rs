//! Scheduling of refresh queries against a revisioned dataset under a
//! per-slot execution budget.
//!
//! The crate replays [`trace::ChangeTrace`]s (recorded with [`recorder`] or
//! synthesized with [`tracegen`]) through the policies in [`policy`], and
//! scores the resulting [`sim::ExecutionLog`] with [`metrics`].

pub mod cli;
pub mod metrics;
pub mod policy;
pub mod recorder;
pub mod sim;
pub mod trace;
pub mod tracegen;

pub use metrics::{brute_force_metrics, compute_metrics, MetricsReport};
pub use policy::{PolicyConfig, PolicyKind};
pub use sim::{replay_check, run_simulation, ExecutionLog, RunConfig};
pub use trace::{ChangeTrace, QueryId, ResultSnapshot};
