//! Experiment harness: configuration, the round loop, traces, reports and the
//! invariant suites behind `verify`.

pub mod config;
pub mod engine;
pub mod report;
pub mod trace;
pub mod verify;

use std::path::Path;

use thiserror::Error;

use crate::adversary::AttackError;
use crate::agent::AgentError;
use crate::graph::{generate_schedule, GraphError, ScheduleFile, ScheduleParams};
use crate::metrics::MetricsError;
use crate::oracle::OracleError;

pub use config::{ExperimentConfig, ScheduleSpec, SCHEMA_VERSION};
pub use engine::{run, run_with_loss, write_outputs, InvariantStats, RunOutput, RunSummary};
pub use trace::{Trace, TraceRow};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("round {t}: {source}")]
    Agent { t: u64, source: AgentError },
    #[error("round {t}: {source}")]
    Attack { t: u64, source: AttackError },
    #[error(transparent)]
    Oracle(OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed trace: {0}")]
    Trace(String),
}

impl SimError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        SimError::Io { path: path.display().to_string(), source }
    }

    /// Errors caused by the inputs rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(self, SimError::Config(_))
    }
}

impl From<GraphError> for SimError {
    fn from(e: GraphError) -> Self {
        SimError::Config(e.to_string())
    }
}

impl From<OracleError> for SimError {
    fn from(e: OracleError) -> Self {
        SimError::Config(e.to_string())
    }
}

/// Generates a schedule and returns it in file form.
pub fn gen_schedule(params: &ScheduleParams) -> Result<ScheduleFile, SimError> {
    Ok(ScheduleFile::from_schedule(&generate_schedule(params)?))
}
