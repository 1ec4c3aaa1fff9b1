//! QoE-driven limit controller.
//!
//! Each control step classifies the containers of one worker into
//! outperforming (G), satisfied (S) and underperforming (B) sets, then moves
//! CPU limits multiplicatively: G containers give up a slice proportional to
//! their share of the total G surplus, B containers receive a slice
//! proportional to their share of the total B deficit. S containers are left
//! alone.
//!
//! The size of every update scales with `R_G / T_R`, the fraction of the
//! worker's capacity currently consumed by G. When G is empty nothing moves.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::ControlError;
use crate::model::{
    ClassAggregates, ContainerId, ControllerParams, LimitPlan, QosClass, QualitySnapshot,
    WorkerState,
};

/// Classifies one container. Ties on the band edge count as satisfied.
pub fn classify(quality: f64, objective: f64, alpha: f64) -> Result<QosClass, ControlError> {
    if !(objective > 0.0 && objective.is_finite()) {
        return Err(crate::error::ModelError::InvalidObjective(objective).into());
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(crate::error::ModelError::InvalidAlpha(alpha).into());
    }
    let band = alpha * objective;
    Ok(if quality > band {
        QosClass::G
    } else if quality < -band {
        QosClass::B
    } else {
        QosClass::S
    })
}

/// Partitions the snapshots and accumulates per-class quality and usage.
pub fn aggregate(
    snapshots: &[QualitySnapshot],
    objectives: &BTreeMap<ContainerId, f64>,
    alpha: f64,
) -> Result<ClassAggregates, ControlError> {
    let mut agg = ClassAggregates::default();
    let mut seen = BTreeSet::new();
    for snap in snapshots {
        let id = snap.container_id();
        if !seen.insert(id) {
            return Err(ControlError::DuplicateSnapshot(id));
        }
        let objective = *objectives
            .get(&id)
            .ok_or(ControlError::MissingObjective(id))?;
        match classify(snap.quality(), objective, alpha)? {
            QosClass::G => {
                agg.members_g.push(id);
                agg.q_g += snap.quality();
                agg.r_g += snap.usage();
            }
            QosClass::B => {
                agg.members_b.push(id);
                agg.q_b += snap.quality();
                agg.r_b += snap.usage();
            }
            QosClass::S => {
                agg.members_s.push(id);
                agg.q_s += 1;
            }
        }
    }
    Ok(agg)
}

/// Computes the next limits for every G and B container.
///
/// `current_limits` must hold every container currently on the worker,
/// measured or not; its length is the `|C|` used for the lower bound.
pub fn plan_limits(
    plan: LimitPlan,
    current_limits: &BTreeMap<ContainerId, f64>,
    snapshots: &[QualitySnapshot],
    aggregates: &ClassAggregates,
    params: &ControllerParams,
) -> Result<LimitPlan, ControlError> {
    params.validate()?;
    if aggregates.len() != snapshots.len() {
        return Err(ControlError::InconsistentAggregates);
    }
    let mut plan = plan;
    let capacity = params.total_capacity;
    let floor = params.floor(current_limits.len());
    // Fraction of the worker consumed by G. Scales both branches. Measured
    // usage never exceeds the worker, so this stays within [0, 1].
    let g_fraction = aggregates.r_g / capacity;

    for snap in snapshots {
        let id = snap.container_id();
        let limit = *current_limits
            .get(&id)
            .ok_or(ControlError::MissingLimit(id))?;
        let class = aggregates
            .class_of(id)
            .ok_or(ControlError::InconsistentAggregates)?;
        let next = match class {
            QosClass::S => continue,
            QosClass::G => {
                if aggregates.q_g <= 0.0 {
                    return Err(ControlError::InconsistentAggregates);
                }
                let weight = snap.quality() / aggregates.q_g;
                (limit * (1.0 - weight * g_fraction * params.beta)).max(floor)
            }
            QosClass::B => {
                if aggregates.q_b >= 0.0 {
                    return Err(ControlError::InconsistentAggregates);
                }
                let weight = snap.quality() / aggregates.q_b;
                (limit * (1.0 + weight * g_fraction * params.beta)).min(capacity)
            }
        };
        plan.entries.insert(id, next);
    }
    Ok(plan)
}

/// One full controller pass over a worker: classify, aggregate, plan.
///
/// Containers without a completed measurement are left out of the
/// classification but still count towards `|C|`.
pub fn control_step(
    worker: &WorkerState,
    now: f64,
) -> Result<(LimitPlan, ClassAggregates), ControlError> {
    let (snapshots, objectives, limits) = worker.control_inputs(now)?;
    let aggregates = aggregate(&snapshots, &objectives, worker.params.alpha)?;
    let plan = plan_limits(
        LimitPlan::empty(worker.worker_id, now),
        &limits,
        &snapshots,
        &aggregates,
        &worker.params,
    )?;
    Ok((plan, aggregates))
}
