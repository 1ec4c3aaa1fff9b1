//! Domain types shared by the controller, the listener, the simulator and
//! reporting.
//!
//! All resource quantities are CPU cores and all performance quantities are
//! seconds per 100-image batch. A container's *quality* is its objective
//! minus its measured performance, so positive quality means the model runs
//! faster than its client asked for.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ControlError, ModelError};
use crate::listener::ListenerState;

/// Cluster-wide container identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContainerId(pub u32);

impl fmt::Display for ContainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Worker node identifier. Workers are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub u32);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Classification of a container relative to its objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QosClass {
    /// Outperforming: faster than the objective by more than the tolerance.
    G,
    /// Satisfied: within the tolerance band around the objective.
    S,
    /// Underperforming: slower than the objective by more than the tolerance.
    B,
}

impl QosClass {
    pub fn as_str(self) -> &'static str {
        match self {
            QosClass::G => "G",
            QosClass::S => "S",
            QosClass::B => "B",
        }
    }
}

impl fmt::Display for QosClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QosClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "G" => Ok(QosClass::G),
            "S" => Ok(QosClass::S),
            "B" => Ok(QosClass::B),
            other => Err(ModelError::UnknownClass(other.to_string())),
        }
    }
}

/// Tuning knobs for the limit controller on one worker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Tolerance band around the objective, as a fraction of it.
    pub alpha: f64,
    /// Gain of each multiplicative limit update.
    pub beta: f64,
    /// Total CPU capacity of the worker, in cores.
    pub total_capacity: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            beta: 0.10,
            total_capacity: 8.0,
        }
    }
}

impl ControllerParams {
    pub fn new(alpha: f64, beta: f64, total_capacity: f64) -> Result<Self, ModelError> {
        let params = Self {
            alpha,
            beta,
            total_capacity,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ModelError::InvalidAlpha(self.alpha));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(ModelError::InvalidBeta(self.beta));
        }
        if !(self.total_capacity > 0.0 && self.total_capacity.is_finite()) {
            return Err(ModelError::InvalidCapacity(self.total_capacity));
        }
        Ok(())
    }

    /// Lowest limit the controller may assign to a container on a worker
    /// currently hosting `containers` containers: `T_R / (2 |C|)`.
    pub fn floor(&self, containers: usize) -> f64 {
        self.total_capacity / (2.0 * containers.max(1) as f64)
    }
}

/// Per-container measurement at one control instant. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualitySnapshot {
    container_id: ContainerId,
    time: f64,
    usage: f64,
    perf: f64,
    quality: f64,
}

impl QualitySnapshot {
    /// Builds a snapshot, deriving quality from `objective` and `perf`.
    pub fn new(
        container_id: ContainerId,
        time: f64,
        usage: f64,
        perf: f64,
        objective: f64,
    ) -> Result<Self, ModelError> {
        if !(usage >= 0.0 && usage.is_finite()) {
            return Err(ModelError::InvalidUsage(usage));
        }
        Ok(Self {
            container_id,
            time,
            usage,
            perf,
            quality: quality(objective, perf)?,
        })
    }

    pub fn container_id(&self) -> ContainerId {
        self.container_id
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Average CPU cores consumed since the previous snapshot (`r_i`).
    pub fn usage(&self) -> f64 {
        self.usage
    }

    /// Smoothed seconds per batch (`p_i`).
    pub fn perf(&self) -> f64 {
        self.perf
    }

    /// `objective - perf` (`q_i`).
    pub fn quality(&self) -> f64 {
        self.quality
    }
}

/// One served model as seen by the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerState {
    pub id: ContainerId,
    pub model: String,
    pub objective: f64,
    pub perf: Option<f64>,
    pub usage: f64,
    pub limit: f64,
    pub class: Option<QosClass>,
}

impl ContainerState {
    pub fn new(
        id: ContainerId,
        model: impl Into<String>,
        objective: f64,
        limit: f64,
    ) -> Result<Self, ModelError> {
        if !(objective > 0.0 && objective.is_finite()) {
            return Err(ModelError::InvalidObjective(objective));
        }
        Ok(Self {
            id,
            model: model.into(),
            objective,
            perf: None,
            usage: 0.0,
            limit,
            class: None,
        })
    }

    pub fn quality(&self) -> Option<f64> {
        self.perf.map(|p| self.objective - p)
    }
}

/// Class membership and per-class sums over one worker's snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregates {
    pub members_g: Vec<ContainerId>,
    pub members_s: Vec<ContainerId>,
    pub members_b: Vec<ContainerId>,
    /// Sum of quality over G; never negative.
    pub q_g: f64,
    /// Sum of quality over B; never positive.
    pub q_b: f64,
    /// Size of S.
    pub q_s: usize,
    /// Sum of usage over G, in cores.
    pub r_g: f64,
    /// Sum of usage over B, in cores.
    pub r_b: f64,
}

impl ClassAggregates {
    pub fn class_of(&self, id: ContainerId) -> Option<QosClass> {
        if self.members_g.contains(&id) {
            Some(QosClass::G)
        } else if self.members_s.contains(&id) {
            Some(QosClass::S)
        } else if self.members_b.contains(&id) {
            Some(QosClass::B)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.members_g.len() + self.members_s.len() + self.members_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// New limits for one worker, produced by a controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPlan {
    pub worker_id: WorkerId,
    pub entries: BTreeMap<ContainerId, f64>,
    pub created_at: f64,
}

impl LimitPlan {
    pub fn empty(worker_id: WorkerId, created_at: f64) -> Self {
        Self {
            worker_id,
            entries: BTreeMap::new(),
            created_at,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Controller-facing view of one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub worker_id: WorkerId,
    pub containers: Vec<ContainerState>,
    pub params: ControllerParams,
    pub listener: ListenerState,
}

impl WorkerState {
    pub fn new(
        worker_id: WorkerId,
        containers: Vec<ContainerState>,
        params: ControllerParams,
    ) -> Self {
        Self {
            worker_id,
            containers,
            params,
            listener: ListenerState::default(),
        }
    }

    /// Snapshots of the measured containers plus the objective and limit
    /// tables the controller needs.
    #[allow(clippy::type_complexity)]
    pub fn control_inputs(
        &self,
        now: f64,
    ) -> Result<
        (
            Vec<QualitySnapshot>,
            BTreeMap<ContainerId, f64>,
            BTreeMap<ContainerId, f64>,
        ),
        ControlError,
    > {
        let mut snapshots = Vec::new();
        let mut objectives = BTreeMap::new();
        let mut limits = BTreeMap::new();
        for c in &self.containers {
            if limits.insert(c.id, c.limit).is_some() {
                return Err(ControlError::DuplicateSnapshot(c.id));
            }
            objectives.insert(c.id, c.objective);
            if let Some(perf) = c.perf {
                snapshots.push(QualitySnapshot::new(c.id, now, c.usage, perf, c.objective)?);
            }
        }
        Ok((snapshots, objectives, limits))
    }
}

/// `objective - perf`.
pub fn quality(objective: f64, perf: f64) -> Result<f64, ModelError> {
    if !(objective > 0.0 && objective.is_finite()) {
        return Err(ModelError::InvalidObjective(objective));
    }
    if !(perf > 0.0 && perf.is_finite()) {
        return Err(ModelError::InvalidPerf(perf));
    }
    Ok(objective - perf)
}

/// Sum of container qualities on one worker. Empty input gives zero.
pub fn worker_quality<'a, I>(snapshots: I) -> f64
where
    I: IntoIterator<Item = &'a QualitySnapshot>,
{
    snapshots.into_iter().map(|s| s.quality()).sum()
}
