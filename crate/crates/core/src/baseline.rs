//! Objective-blind comparison policy: every container gets `T_R / |C|`.

use crate::model::{LimitPlan, WorkerState};

pub fn even_share_step(worker: &WorkerState, now: f64) -> LimitPlan {
    let mut plan = LimitPlan::empty(worker.worker_id, now);
    if worker.containers.is_empty() {
        return plan;
    }
    let share = worker.params.total_capacity / worker.containers.len() as f64;
    for c in &worker.containers {
        plan.entries.insert(c.id, share);
    }
    plan
}
