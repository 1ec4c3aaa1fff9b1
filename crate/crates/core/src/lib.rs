//! QoE-differentiated CPU limit control for containerized inference.
//!
//! Every worker runs a feedback controller that compares each container's
//! measured seconds-per-batch with the objective its client asked for and
//! moves CPU limits from containers that beat their objective to those that
//! miss it. An adaptive listener stretches the control interval while the
//! worker settles and shortens it when the satisfied set shrinks.
//!
//! The crate also ships a deterministic virtual-time cluster simulator, an
//! even-share baseline and CSV reporting so the controller can be studied
//! without a container engine.

pub mod baseline;
pub mod cluster;
pub mod controller;
pub mod error;
pub mod listener;
pub mod model;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod worker;
pub mod workload;

pub use controller::{aggregate, classify, control_step, plan_limits};
pub use error::{ClusterError, ConfigError, ControlError, ModelError, ReportError, WorkerError};
pub use model::{
    quality, worker_quality, ClassAggregates, ContainerId, ContainerState, ControllerParams,
    LimitPlan, QosClass, QualitySnapshot, WorkerId, WorkerState,
};
pub use scenario::{load_config, run_scenario, ScenarioConfig, ScenarioOutcome};
