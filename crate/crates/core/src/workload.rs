//! Synthetic inference workload.
//!
//! A model profile carries the CPU work (core-seconds) one 100-image batch
//! needs. Batch time is that work divided by the CPU share the container
//! receives, perturbed by a bounded relative jitter.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, WorkerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub name: String,
    /// Core-seconds per batch.
    pub work: f64,
    /// Bound on the relative jitter of one batch.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.011;

fn default_noise_sigma() -> f64 {
    DEFAULT_NOISE_SIGMA
}

impl ModelProfile {
    pub fn new(name: impl Into<String>, work: f64, noise_sigma: f64) -> Self {
        Self {
            name: name.into(),
            work,
            noise_sigma,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |f: &str| format!("profiles[{}].{f}", self.name);
        if self.name.is_empty() {
            return Err(ConfigError::invalid("profiles.name", "must not be empty"));
        }
        if !(self.work > 0.0 && self.work.is_finite()) {
            return Err(ConfigError::invalid(field("work"), "must be positive"));
        }
        if !(0.0..0.2).contains(&self.noise_sigma) {
            return Err(ConfigError::invalid(
                field("noise_sigma"),
                "must lie in [0, 0.2)",
            ));
        }
        Ok(())
    }

    /// One jitter draw, uniform in `[-noise_sigma, noise_sigma]`.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.noise_sigma == 0.0 {
            0.0
        } else {
            rng.gen_range(-self.noise_sigma..=self.noise_sigma)
        }
    }
}

/// The five evaluated models. ResNet-50 is calibrated so that a 0.8-core
/// share yields 31.61 s per batch; the others are fixed constants spread over
/// [15, 45] core-seconds.
pub fn builtin_profiles() -> Vec<ModelProfile> {
    vec![
        ModelProfile::new("ResNet-50", 25.29, DEFAULT_NOISE_SIGMA),
        ModelProfile::new("VGG-16", 41.8, DEFAULT_NOISE_SIGMA),
        ModelProfile::new("NASNetMobile", 17.6, DEFAULT_NOISE_SIGMA),
        ModelProfile::new("InceptionV3", 31.2, DEFAULT_NOISE_SIGMA),
        ModelProfile::new("Xception", 36.4, DEFAULT_NOISE_SIGMA),
    ]
}

/// Seconds per batch at the given CPU share.
pub fn batch_time(
    profile: &ModelProfile,
    cpu_share: f64,
    noise_draw: f64,
) -> Result<f64, WorkerError> {
    if !(cpu_share > 0.0 && cpu_share.is_finite()) {
        return Err(WorkerError::InvalidShare(cpu_share));
    }
    Ok(profile.work / cpu_share * (1.0 + noise_draw))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleKind {
    /// Everything at t = 0.
    #[default]
    Burst,
    /// One container every `gap` seconds starting at t = 0.
    Fixed { gap: f64 },
    /// Uniform submission times within `window`.
    Random { window: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubmissionSchedule {
    pub kind: ScheduleKind,
    pub count: usize,
    pub seed: u64,
}

impl SubmissionSchedule {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.count == 0 {
            return Err(ConfigError::invalid(
                "containers",
                "at least one container is required",
            ));
        }
        match self.kind {
            ScheduleKind::Burst => {}
            ScheduleKind::Fixed { gap } => {
                if !(gap > 0.0 && gap.is_finite()) {
                    return Err(ConfigError::invalid("schedule.gap", "must be positive"));
                }
            }
            ScheduleKind::Random { window: [t0, t1] } => {
                if !(t0 >= 0.0 && t0 <= t1 && t1.is_finite()) {
                    return Err(ConfigError::invalid(
                        "schedule.window",
                        "need 0 <= t0 <= t1",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Latest submission time the schedule can produce.
    pub fn horizon(&self) -> f64 {
        match self.kind {
            ScheduleKind::Burst => 0.0,
            ScheduleKind::Fixed { gap } => gap * (self.count.saturating_sub(1)) as f64,
            ScheduleKind::Random { window } => window[1],
        }
    }
}

/// `(container index, submit time)` pairs, non-decreasing in time.
pub fn make_schedule(schedule: &SubmissionSchedule) -> Vec<(usize, f64)> {
    match schedule.kind {
        ScheduleKind::Burst => (0..schedule.count).map(|i| (i, 0.0)).collect(),
        ScheduleKind::Fixed { gap } => (0..schedule.count).map(|i| (i, gap * i as f64)).collect(),
        ScheduleKind::Random { window: [t0, t1] } => {
            let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
            let mut times: Vec<f64> = (0..schedule.count)
                .map(|_| if t1 > t0 { rng.gen_range(t0..=t1) } else { t0 })
                .collect();
            times.sort_by(f64::total_cmp);
            times.into_iter().enumerate().collect()
        }
    }
}
