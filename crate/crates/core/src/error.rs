use std::path::PathBuf;

use thiserror::Error;

use crate::model::{ContainerId, WorkerId};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("objective must be positive and finite, got {0}")]
    InvalidObjective(f64),
    #[error("performance must be positive and finite, got {0}")]
    InvalidPerf(f64),
    #[error("usage must be non-negative and finite, got {0}")]
    InvalidUsage(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("beta must lie in (0, 1], got {0}")]
    InvalidBeta(f64),
    #[error("total capacity must be positive, got {0}")]
    InvalidCapacity(f64),
    #[error("unknown class label {0:?}")]
    UnknownClass(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no objective registered for container {0}")]
    MissingObjective(ContainerId),
    #[error("no current limit for container {0}")]
    MissingLimit(ContainerId),
    #[error("duplicate snapshot for container {0}")]
    DuplicateSnapshot(ContainerId),
    #[error("aggregates do not match the snapshots they were computed from")]
    InconsistentAggregates,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("container {0} already exists")]
    DuplicateContainer(ContainerId),
    #[error("container {0} has not completed a batch yet")]
    NotMeasurable(ContainerId),
    #[error("plan for worker {plan} applied to worker {worker}")]
    WrongWorker { plan: WorkerId, worker: WorkerId },
    #[error("plan references unknown container {0}")]
    StalePlan(ContainerId),
    #[error("cpu share must be positive, got {0}")]
    InvalidShare(f64),
    #[error("tick length must be positive, got {0}")]
    InvalidTick(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no workers registered")]
    NoWorkers,
    #[error("container {0} is already registered")]
    DuplicateContainer(ContainerId),
    #[error("report from worker {worker} at t={time} precedes its last report at t={last}")]
    OutOfOrder {
        worker: WorkerId,
        time: f64,
        last: f64,
    },
    #[error("summaries come from different scenarios ({left} vs {right})")]
    FingerprintMismatch { left: String, right: String },
    #[error(transparent)]
    Worker(#[from] WorkerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed report row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("plot error: {0}")]
    Plot(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}
