//! Adaptive listener: decides how often the controller runs on a worker.
//!
//! The control interval backs off exponentially while the worker converges
//! (the G surplus shrinks and the B deficit shrinks) and is halved, with an
//! immediate controller run, when the satisfied set loses members or a new
//! container joins.

use crate::error::ConfigError;

/// Interval bounds and back-off threshold.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListenerConfig {
    pub initial_interval: f64,
    pub min_interval: f64,
    pub max_interval: f64,
    /// Consecutive converging observations needed before doubling.
    pub streak_threshold: u32,
}

impl Default for ListenerConfig {
    fn default() -> Self {
        Self {
            initial_interval: 10.0,
            min_interval: 5.0,
            max_interval: 80.0,
            streak_threshold: 2,
        }
    }
}

impl ListenerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.min_interval > 0.0 && self.min_interval.is_finite()) {
            return Err(ConfigError::invalid(
                "listener.min_interval",
                "must be positive",
            ));
        }
        if !(self.max_interval.is_finite() && self.max_interval >= self.min_interval) {
            return Err(ConfigError::invalid(
                "listener.max_interval",
                "must be finite and not below min_interval",
            ));
        }
        if !(self.initial_interval >= self.min_interval
            && self.initial_interval <= self.max_interval)
        {
            return Err(ConfigError::invalid(
                "listener.initial_interval",
                "must lie within [min_interval, max_interval]",
            ));
        }
        if self.streak_threshold == 0 {
            return Err(ConfigError::invalid(
                "listener.streak_threshold",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ListenerState {
    config: ListenerConfig,
    interval: f64,
    streak: u32,
    prev_q_g: f64,
    prev_q_b: f64,
    prev_q_s: usize,
    arrival_pending: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ListenerDecision {
    pub new_interval: f64,
    pub run_controller_now: bool,
}

impl Default for ListenerState {
    fn default() -> Self {
        Self::new(ListenerConfig::default())
    }
}

impl ListenerState {
    pub fn new(config: ListenerConfig) -> Self {
        Self {
            config,
            interval: config.initial_interval,
            streak: 0,
            // Nothing observed yet: any first reading counts as progress.
            prev_q_g: f64::INFINITY,
            prev_q_b: f64::NEG_INFINITY,
            prev_q_s: 0,
            arrival_pending: false,
        }
    }

    /// Restores a state mid-trajectory; mostly useful for tests.
    pub fn with_history(
        config: ListenerConfig,
        interval: f64,
        streak: u32,
        prev: (f64, f64, usize),
    ) -> Self {
        Self {
            config,
            interval: interval.clamp(config.min_interval, config.max_interval),
            streak,
            prev_q_g: prev.0,
            prev_q_b: prev.1,
            prev_q_s: prev.2,
            arrival_pending: false,
        }
    }

    pub fn config(&self) -> &ListenerConfig {
        &self.config
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn streak(&self) -> u32 {
        self.streak
    }

    pub fn previous(&self) -> (f64, f64, usize) {
        (self.prev_q_g, self.prev_q_b, self.prev_q_s)
    }

    pub fn arrival_pending(&self) -> bool {
        self.arrival_pending
    }

    /// Marks that a container joined; the next observation is treated as a
    /// regression.
    pub fn notify_arrival(&mut self) {
        self.arrival_pending = true;
    }

    /// Folds in one observation of the class sums and returns the successor
    /// state together with the decision.
    pub fn observe(&self, q_g: f64, q_b: f64, q_s: usize) -> (ListenerState, ListenerDecision) {
        let mut next = *self;
        next.prev_q_g = q_g;
        next.prev_q_b = q_b;
        next.prev_q_s = q_s;
        next.arrival_pending = false;

        // A sum already at zero counts as approaching it.
        let g_converging = q_g < self.prev_q_g || q_g == 0.0;
        let b_converging = q_b > self.prev_q_b || q_b == 0.0;

        let mut run_now = false;
        if self.arrival_pending {
            next.interval = (self.interval / 2.0).max(self.config.min_interval);
            next.streak = 0;
            run_now = true;
        } else if g_converging && b_converging {
            next.streak = self.streak + 1;
            if next.streak >= self.config.streak_threshold {
                next.interval = (self.interval * 2.0).min(self.config.max_interval);
                next.streak = 0;
            }
        } else if q_s < self.prev_q_s {
            next.interval = (self.interval / 2.0).max(self.config.min_interval);
            next.streak = 0;
            run_now = true;
        } else {
            next.streak = 0;
        }

        let decision = ListenerDecision {
            new_interval: next.interval,
            run_controller_now: run_now,
        };
        (next, decision)
    }
}
