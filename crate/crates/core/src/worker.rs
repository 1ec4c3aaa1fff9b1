//! Simulated worker node.
//!
//! A worker executes batches for its containers under soft CPU limits,
//! keeps per-container performance history, runs the adaptive listener and
//! applies the limit plans its controller produces.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::even_share_step;
use crate::controller::{aggregate, control_step};
use crate::error::WorkerError;
use crate::listener::{ListenerConfig, ListenerState};
use crate::model::{
    ClassAggregates, ContainerId, ContainerState, ControllerParams, LimitPlan, QosClass,
    QualitySnapshot, WorkerId, WorkerState,
};
use crate::report::ReportRow;
use crate::workload::ModelProfile;

pub const DEFAULT_SMOOTHING_WINDOW: usize = 3;

/// Which policy drives the limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    #[default]
    Dqoes,
    Even,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerSpec {
    pub id: ContainerId,
    pub profile: ModelProfile,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchCompletion {
    pub container_id: ContainerId,
    pub finish_time: f64,
    pub duration: f64,
}

/// Why a control step ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    Scheduled,
    Arrival,
}

/// Everything one control step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlReport {
    pub time: f64,
    pub worker_id: WorkerId,
    pub trigger: Trigger,
    /// Listener asked for an immediate controller run.
    pub regression: bool,
    /// Control interval chosen for the next step.
    pub interval: f64,
    pub aggregates: ClassAggregates,
    pub plan: LimitPlan,
    /// Containers on the worker, measured or not.
    pub container_count: usize,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone)]
pub struct RunningContainer {
    state: ContainerState,
    profile: ModelProfile,
    batch_started: f64,
    /// Core-seconds completed on the current batch.
    batch_progress: f64,
    /// Core-seconds the current batch needs, jitter included. Drawn lazily.
    batch_work: Option<f64>,
    completed: Vec<(f64, f64)>,
    window: usize,
    usage_accum: f64,
    usage_since: f64,
}

impl RunningContainer {
    fn new(spec: ContainerSpec, limit: f64, now: f64, window: usize) -> Result<Self, WorkerError> {
        let state = ContainerState::new(spec.id, spec.profile.name.clone(), spec.objective, limit)?;
        Ok(Self {
            state,
            profile: spec.profile,
            batch_started: now,
            batch_progress: 0.0,
            batch_work: None,
            completed: Vec::new(),
            window: window.max(1),
            usage_accum: 0.0,
            usage_since: now,
        })
    }

    pub fn id(&self) -> ContainerId {
        self.state.id
    }

    pub fn state(&self) -> &ContainerState {
        &self.state
    }

    pub fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    pub fn limit(&self) -> f64 {
        self.state.limit
    }

    pub fn batch_progress(&self) -> f64 {
        self.batch_progress
    }

    /// `(finish_time, duration)` of every finished batch, oldest first.
    pub fn completed_batches(&self) -> &[(f64, f64)] {
        &self.completed
    }

    /// Mean duration of the most recent `window` batches.
    pub fn smoothed_perf(&self) -> Option<f64> {
        if self.completed.is_empty() {
            return None;
        }
        let start = self.completed.len().saturating_sub(self.window);
        let recent = &self.completed[start..];
        Some(recent.iter().map(|&(_, d)| d).sum::<f64>() / recent.len() as f64)
    }

    fn average_usage(&self, now: f64, current_share: f64) -> f64 {
        let elapsed = now - self.usage_since;
        if elapsed > 0.0 {
            self.usage_accum / elapsed
        } else {
            current_share
        }
    }

    /// Snapshot at `now`, or `NotMeasurable` before the first completed batch.
    pub fn measure(&self, now: f64, current_share: f64) -> Result<QualitySnapshot, WorkerError> {
        let perf = self
            .smoothed_perf()
            .ok_or(WorkerError::NotMeasurable(self.id()))?;
        Ok(QualitySnapshot::new(
            self.id(),
            now,
            self.average_usage(now, current_share),
            perf,
            self.state.objective,
        )?)
    }

    fn reset_usage_window(&mut self, now: f64) {
        self.usage_accum = 0.0;
        self.usage_since = now;
    }

    /// Advances execution by `dt` at a fixed `share`, starting at `start`.
    fn advance<R: Rng + ?Sized>(
        &mut self,
        start: f64,
        dt: f64,
        share: f64,
        rng: &mut R,
        out: &mut Vec<BatchCompletion>,
    ) {
        self.usage_accum += share * dt;
        if share <= 0.0 {
            return;
        }
        let mut elapsed = 0.0;
        loop {
            let work = match self.batch_work {
                Some(w) => w,
                None => {
                    let w = self.profile.work * (1.0 + self.profile.draw_noise(rng));
                    self.batch_work = Some(w);
                    w
                }
            };
            let needed = work - self.batch_progress;
            let available = share * (dt - elapsed);
            if available + 1e-9 < needed {
                self.batch_progress += available;
                return;
            }
            elapsed += needed / share;
            let finish = start + elapsed;
            let duration = finish - self.batch_started;
            self.completed.push((finish, duration));
            out.push(BatchCompletion {
                container_id: self.id(),
                finish_time: finish,
                duration,
            });
            self.batch_started = finish;
            self.batch_progress = 0.0;
            self.batch_work = None;
        }
    }
}

/// Splits capacity among soft limits. Limits are honoured as-is while they
/// fit; otherwise every container is scaled down by the same factor.
pub fn effective_shares(
    limits: &BTreeMap<ContainerId, f64>,
    total_capacity: f64,
) -> BTreeMap<ContainerId, f64> {
    let sum: f64 = limits.values().sum();
    if sum <= total_capacity {
        return limits.clone();
    }
    let scale = total_capacity / sum;
    limits.iter().map(|(&id, &l)| (id, l * scale)).collect()
}

#[derive(Debug, Clone)]
pub struct Worker {
    id: WorkerId,
    params: ControllerParams,
    controller: ControllerKind,
    window: usize,
    containers: BTreeMap<ContainerId, RunningContainer>,
    listener: ListenerState,
    clock: f64,
    next_control: f64,
    force_control: bool,
}

impl Worker {
    pub fn new(
        id: WorkerId,
        params: ControllerParams,
        listener: ListenerConfig,
        controller: ControllerKind,
    ) -> Self {
        Self {
            id,
            params,
            controller,
            window: DEFAULT_SMOOTHING_WINDOW,
            containers: BTreeMap::new(),
            listener: ListenerState::new(listener),
            clock: 0.0,
            next_control: listener.initial_interval,
            force_control: false,
        }
    }

    pub fn with_smoothing_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }

    pub fn id(&self) -> WorkerId {
        self.id
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.containers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.containers.is_empty()
    }

    pub fn listener(&self) -> &ListenerState {
        &self.listener
    }

    pub fn container(&self, id: ContainerId) -> Option<&RunningContainer> {
        self.containers.get(&id)
    }

    pub fn containers(&self) -> impl Iterator<Item = &RunningContainer> {
        self.containers.values()
    }

    pub fn limits(&self) -> BTreeMap<ContainerId, f64> {
        self.containers
            .iter()
            .map(|(&id, c)| (id, c.limit()))
            .collect()
    }

    pub fn shares(&self) -> BTreeMap<ContainerId, f64> {
        effective_shares(&self.limits(), self.params.total_capacity)
    }

    /// Adds one container; see [`Worker::submit_batch`].
    pub fn submit(&mut self, spec: ContainerSpec) -> Result<(), WorkerError> {
        self.submit_batch(vec![spec])
    }

    /// Adds containers that arrive at the same instant. Each new container
    /// starts with `T_R / |C|`, counting the whole group, and existing limits
    /// are left alone. The next control opportunity is forced.
    pub fn submit_batch(&mut self, specs: Vec<ContainerSpec>) -> Result<(), WorkerError> {
        if specs.is_empty() {
            return Ok(());
        }
        for (i, spec) in specs.iter().enumerate() {
            if self.containers.contains_key(&spec.id) || specs[..i].iter().any(|s| s.id == spec.id)
            {
                return Err(WorkerError::DuplicateContainer(spec.id));
            }
        }
        let limit = self.params.total_capacity / (self.containers.len() + specs.len()) as f64;
        let mut fresh = Vec::with_capacity(specs.len());
        for spec in specs {
            fresh.push(RunningContainer::new(spec, limit, self.clock, self.window)?);
        }
        for c in fresh {
            self.containers.insert(c.id(), c);
        }
        self.listener.notify_arrival();
        self.force_control = true;
        Ok(())
    }

    /// Replaces the limits named in `plan`, all or nothing.
    pub fn apply_plan(&mut self, plan: &LimitPlan) -> Result<(), WorkerError> {
        if plan.worker_id != self.id {
            return Err(WorkerError::WrongWorker {
                plan: plan.worker_id,
                worker: self.id,
            });
        }
        if let Some(id) = plan
            .entries
            .keys()
            .find(|id| !self.containers.contains_key(id))
        {
            return Err(WorkerError::StalePlan(*id));
        }
        for (id, &limit) in &plan.entries {
            if let Some(c) = self.containers.get_mut(id) {
                c.state.limit = limit;
            }
        }
        Ok(())
    }

    /// Removes a container. Plans computed before the removal become stale.
    pub fn remove(&mut self, id: ContainerId) -> Option<RunningContainer> {
        self.containers.remove(&id)
    }

    /// Runs every container for `dt` seconds at the current effective shares.
    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        dt: f64,
        rng: &mut R,
    ) -> Result<Vec<BatchCompletion>, WorkerError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(WorkerError::InvalidTick(dt));
        }
        let shares = self.shares();
        let start = self.clock;
        let mut out = Vec::new();
        for (id, c) in self.containers.iter_mut() {
            c.advance(start, dt, shares[id], rng, &mut out);
        }
        self.clock += dt;
        Ok(out)
    }

    pub fn measure(&self, id: ContainerId, now: f64) -> Result<QualitySnapshot, WorkerError> {
        let c = self.containers.get(&id).ok_or(WorkerError::StalePlan(id))?;
        let share = self.shares()[&id];
        c.measure(now, share)
    }

    /// Controller-facing view at `now`.
    pub fn state(&self, now: f64) -> WorkerState {
        let shares = self.shares();
        let containers = self
            .containers
            .values()
            .map(|c| {
                let mut s = c.state.clone();
                if let Ok(snap) = c.measure(now, shares[&c.id()]) {
                    s.perf = Some(snap.perf());
                    s.usage = snap.usage();
                }
                s
            })
            .collect();
        WorkerState {
            worker_id: self.id,
            containers,
            params: self.params,
            listener: self.listener,
        }
    }

    /// True when a control step is due at `now`.
    pub fn control_due(&self, now: f64) -> bool {
        self.force_control || now + 1e-9 >= self.next_control
    }

    pub fn next_control_time(&self) -> f64 {
        self.next_control
    }

    /// Measure, plan, apply and let the listener pick the next interval.
    /// Returns `None` when no container has finished a batch yet.
    pub fn control_loop_step(&mut self, now: f64) -> Result<Option<ControlReport>, WorkerError> {
        let trigger = if self.force_control {
            Trigger::Arrival
        } else {
            Trigger::Scheduled
        };
        self.force_control = false;

        let state = self.state(now);
        if state.containers.iter().all(|c| c.perf.is_none()) {
            self.next_control = now + self.listener.interval();
            return Ok(None);
        }

        let (plan, aggregates) = match self.controller {
            ControllerKind::Dqoes => control_step(&state, now)?,
            ControllerKind::Even => {
                let (snapshots, objectives, _) = state.control_inputs(now)?;
                let aggregates = aggregate(&snapshots, &objectives, self.params.alpha)?;
                (even_share_step(&state, now), aggregates)
            }
        };
        self.apply_plan(&plan)?;
        for c in self.containers.values_mut() {
            c.reset_usage_window(now);
        }

        let (listener, decision) =
            self.listener
                .observe(aggregates.q_g, aggregates.q_b, aggregates.q_s);
        self.listener = listener;
        self.next_control = now + decision.new_interval;

        let shares = self.shares();
        let mut rows = Vec::with_capacity(aggregates.len());
        for view in &state.containers {
            let (Some(perf), Some(class)) = (view.perf, aggregates.class_of(view.id)) else {
                continue;
            };
            let c = &self.containers[&view.id];
            rows.push(ReportRow {
                time: now,
                worker_id: self.id,
                container_id: view.id,
                model: c.profile.name.clone(),
                objective: view.objective,
                perf,
                quality: view.objective - perf,
                class,
                limit: c.limit(),
                share: shares[&view.id],
            });
        }
        for c in self.containers.values_mut() {
            c.state.class = aggregates.class_of(c.id());
        }

        Ok(Some(ControlReport {
            time: now,
            worker_id: self.id,
            trigger,
            regression: decision.run_controller_now,
            interval: decision.new_interval,
            aggregates,
            plan,
            container_count: self.containers.len(),
            rows,
        }))
    }

    /// Current class of a container as of the last control step.
    pub fn class_of(&self, id: ContainerId) -> Option<QosClass> {
        self.containers.get(&id).and_then(|c| c.state.class)
    }
}
