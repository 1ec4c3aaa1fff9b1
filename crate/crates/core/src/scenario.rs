//! Scenario configuration and the virtual-time simulation driver.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{place, ClusterSummary, ObjectiveRegistry};
use crate::error::{ClusterError, ConfigError};
use crate::listener::ListenerConfig;
use crate::model::{ContainerId, ControllerParams, WorkerId};
use crate::worker::{
    ContainerSpec, ControlReport, ControllerKind, Worker, DEFAULT_SMOOTHING_WINDOW,
};
use crate::workload::{
    builtin_profiles, make_schedule, ModelProfile, ScheduleKind, SubmissionSchedule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkersConfig {
    #[serde(default = "one")]
    pub count: usize,
    /// Cores per worker, used unless `capacities` is given.
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    /// Per-worker capacities; length must equal `count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn default_capacity() -> f64 {
    8.0
}

impl Default for WorkersConfig {
    fn default() -> Self {
        Self {
            count: 1,
            capacity: default_capacity(),
            capacities: None,
        }
    }
}

impl WorkersConfig {
    pub fn capacity_of(&self, index: usize) -> f64 {
        self.capacities
            .as_ref()
            .and_then(|c| c.get(index).copied())
            .unwrap_or(self.capacity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerEntry {
    pub profile: String,
    pub objective: f64,
    /// Overrides the schedule for this container.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submit_at: Option<f64>,
}

/// Draws `count` containers with random profiles and objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub count: usize,
    pub objective_range: [f64; 2],
    /// Profiles to pick from; all defined profiles when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub workers: WorkersConfig,
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default = "default_gain")]
    pub alpha: f64,
    #[serde(default = "default_gain")]
    pub beta: f64,
    #[serde(default)]
    pub listener: ListenerConfig,
    #[serde(default = "builtin_profiles")]
    pub profiles: Vec<ModelProfile>,
    #[serde(default)]
    pub containers: Vec<ContainerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorSpec>,
    #[serde(default)]
    pub schedule: ScheduleKind,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Simulation step, seconds.
    #[serde(default = "default_tick")]
    pub tick: f64,
    /// Batches averaged into one performance reading.
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_gain() -> f64 {
    0.1
}

fn default_tick() -> f64 {
    0.5
}

fn default_window() -> usize {
    DEFAULT_SMOOTHING_WINDOW
}

// Independent random streams derived from the scenario seed. Stream 0 is
// the submission schedule (see `make_schedule`).
const STREAM_GENERATOR: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A container with everything resolved: profile, objective, submit time.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedContainer {
    pub id: ContainerId,
    pub profile: ModelProfile,
    pub objective: f64,
    pub submit_at: f64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn controller_params(&self, worker_index: usize) -> ControllerParams {
        ControllerParams {
            alpha: self.alpha,
            beta: self.beta,
            total_capacity: self.workers.capacity_of(worker_index),
        }
    }

    fn profile(&self, name: &str) -> Option<&ModelProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    fn container_count(&self) -> usize {
        self.containers.len() + self.generate.as_ref().map_or(0, |g| g.count)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers.count == 0 {
            return Err(ConfigError::invalid(
                "workers.count",
                "at least one worker is required",
            ));
        }
        if let Some(caps) = &self.workers.capacities {
            if caps.len() != self.workers.count {
                return Err(ConfigError::invalid(
                    "workers.capacities",
                    "length must equal workers.count",
                ));
            }
        }
        for i in 0..self.workers.count {
            let c = self.workers.capacity_of(i);
            if !(c > 0.0 && c.is_finite()) {
                return Err(ConfigError::invalid(
                    "workers.capacity",
                    format!("worker {} has capacity {c}", i + 1),
                ));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError::invalid("alpha", "must lie in (0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(ConfigError::invalid("beta", "must lie in (0, 1]"));
        }
        self.listener.validate()?;
        if self.profiles.is_empty() {
            return Err(ConfigError::invalid(
                "profiles",
                "at least one profile is required",
            ));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            p.validate()?;
            if self.profiles[..i].iter().any(|q| q.name == p.name) {
                return Err(ConfigError::invalid(
                    "profiles",
                    format!("duplicate profile {:?}", p.name),
                ));
            }
        }
        for (i, c) in self.containers.iter().enumerate() {
            if self.profile(&c.profile).is_none() {
                return Err(ConfigError::invalid(
                    format!("containers[{i}].profile"),
                    format!("unknown profile {:?}", c.profile),
                ));
            }
            if !(c.objective > 0.0 && c.objective.is_finite()) {
                return Err(ConfigError::invalid(
                    format!("containers[{i}].objective"),
                    "must be positive",
                ));
            }
            if let Some(t) = c.submit_at {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(ConfigError::invalid(
                        format!("containers[{i}].submit_at"),
                        "must be non-negative",
                    ));
                }
            }
        }
        if let Some(g) = &self.generate {
            let [lo, hi] = g.objective_range;
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(ConfigError::invalid(
                    "generate.objective_range",
                    "need 0 < lo <= hi",
                ));
            }
            for name in &g.profiles {
                if self.profile(name).is_none() {
                    return Err(ConfigError::invalid(
                        "generate.profiles",
                        format!("unknown profile {name:?}"),
                    ));
                }
            }
        }
        if self.container_count() == 0 {
            return Err(ConfigError::invalid(
                "containers",
                "at least one container is required",
            ));
        }
        self.schedule().validate()?;
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(ConfigError::invalid("tick", "must be positive"));
        }
        if self.smoothing_window == 0 {
            return Err(ConfigError::invalid(
                "smoothing_window",
                "must be at least 1",
            ));
        }
        let last_submit = self
            .containers
            .iter()
            .filter_map(|c| c.submit_at)
            .fold(self.schedule().horizon(), f64::max);
        if !(self.duration > last_submit && self.duration.is_finite()) {
            return Err(ConfigError::invalid(
                "duration",
                format!("must exceed the last submission time {last_submit}"),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> SubmissionSchedule {
        SubmissionSchedule {
            kind: self.schedule,
            count: self.container_count(),
            seed: self.seed,
        }
    }

    /// Listed containers first, then generated ones; ids count from 1.
    pub fn resolve_containers(&self) -> Vec<ResolvedContainer> {
        let mut entries: Vec<(ModelProfile, f64, Option<f64>)> = self
            .containers
            .iter()
            .map(|c| {
                (
                    self.profile(&c.profile).cloned().expect("validated"),
                    c.objective,
                    c.submit_at,
                )
            })
            .collect();
        if let Some(g) = &self.generate {
            let pool: Vec<&ModelProfile> = if g.profiles.is_empty() {
                self.profiles.iter().collect()
            } else {
                g.profiles.iter().filter_map(|n| self.profile(n)).collect()
            };
            let mut rng = rng_for(self.seed, STREAM_GENERATOR);
            let [lo, hi] = g.objective_range;
            for _ in 0..g.count {
                let profile = pool[rng.gen_range(0..pool.len())].clone();
                let objective = if hi > lo {
                    rng.gen_range(lo..=hi).round().max(lo)
                } else {
                    lo
                };
                entries.push((profile, objective, None));
            }
        }
        let times = make_schedule(&self.schedule());
        entries
            .into_iter()
            .zip(times)
            .enumerate()
            .map(
                |(i, ((profile, objective, fixed), (_, t)))| ResolvedContainer {
                    id: ContainerId(i as u32 + 1),
                    profile,
                    objective,
                    submit_at: fixed.unwrap_or(t),
                },
            )
            .collect()
    }

    /// Hash of the canonical config with the controller choice and output
    /// location removed.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("controller");
            obj.remove("output");
            obj.remove("name");
        }
        // serde_json maps are ordered by key, so this is canonical.
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_json(&text)
}

/// Checks gathered while the simulation runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub ticks: usize,
    /// Largest `sum(shares) - T_R` seen on any worker at any tick.
    pub max_share_excess: f64,
    /// Largest `share - limit` seen for any container at any tick.
    pub max_share_over_limit: f64,
    pub batches: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub summary: ClusterSummary,
    pub reports: Vec<ControlReport>,
    pub registry: ObjectiveRegistry,
    pub stats: RunStats,
}

impl ScenarioOutcome {
    pub fn rows(&self) -> impl Iterator<Item = &crate::report::ReportRow> {
        self.reports.iter().flat_map(|r| r.rows.iter())
    }

    pub fn reports_for(&self, worker: WorkerId) -> impl Iterator<Item = &ControlReport> {
        self.reports.iter().filter(move |r| r.worker_id == worker)
    }
}

/// Builds the cluster, places containers as they arrive and advances
/// virtual time to `config.duration`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, ClusterError> {
    let mut workers: Vec<Worker> = (0..config.workers.count)
        .map(|i| {
            Worker::new(
                WorkerId(i as u32 + 1),
                config.controller_params(i),
                config.listener,
                config.controller,
            )
            .with_smoothing_window(config.smoothing_window)
        })
        .collect();
    if workers.is_empty() {
        return Err(ClusterError::NoWorkers);
    }

    let mut arrivals = config.resolve_containers();
    arrivals.sort_by(|a, b| a.submit_at.total_cmp(&b.submit_at).then(a.id.cmp(&b.id)));
    let mut registry = ObjectiveRegistry::new();
    for c in &arrivals {
        registry.register(c.id, c.profile.name.clone(), c.objective, c.submit_at)?;
    }

    let mut summary = ClusterSummary::new(config.fingerprint());
    for w in &workers {
        summary.add_worker(w.id());
    }
    let mut reports = Vec::new();
    let mut stats = RunStats::default();
    let mut noise = rng_for(config.seed, STREAM_NOISE);
    let mut pending = arrivals.into_iter().peekable();
    let steps = (config.duration / config.tick).ceil() as usize;

    for step in 0..steps {
        let now = step as f64 * config.tick;

        let mut batches: BTreeMap<usize, Vec<ContainerSpec>> = BTreeMap::new();
        while let Some(c) = pending.next_if(|c| c.submit_at <= now + 1e-9) {
            let loads = workers
                .iter()
                .enumerate()
                .map(|(i, w)| (w.id(), w.len() + batches.get(&i).map_or(0, Vec::len)));
            let target = place(loads)?;
            let index = (target.0 - 1) as usize;
            registry.assign(c.id, target);
            batches.entry(index).or_default().push(ContainerSpec {
                id: c.id,
                profile: c.profile,
                objective: c.objective,
            });
        }
        for (index, specs) in batches {
            workers[index].submit_batch(specs)?;
        }

        for w in workers.iter_mut() {
            if w.control_due(now) {
                if let Some(report) = w.control_loop_step(now)? {
                    summary.collect(&report)?;
                    reports.push(report);
                }
            }
        }

        for w in workers.iter_mut() {
            let limits = w.limits();
            let shares = w.shares();
            let total: f64 = shares.values().sum();
            stats.max_share_excess = stats
                .max_share_excess
                .max(total - w.params().total_capacity);
            for (id, share) in &shares {
                stats.max_share_over_limit = stats.max_share_over_limit.max(share - limits[id]);
            }
            stats.batches += w.tick(config.tick, &mut noise)?.len();
        }
        stats.ticks += 1;
    }

    Ok(ScenarioOutcome {
        summary,
        reports,
        registry,
        stats,
    })
}
