//! Manager side: objective registry, spread placement and the cluster-wide
//! performance table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ClusterError;
use crate::model::{ContainerId, QosClass, WorkerId};
use crate::report::ReportRow;
use crate::worker::ControlReport;

/// Fraction of each worker's control steps, counted from the end, that form
/// the steady-state window.
pub const STEADY_STATE_FRACTION: f64 = 0.2;
/// Share of steady-state steps a container must spend in S to count as
/// satisfied.
pub const SATISFIED_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub model: String,
    pub objective: f64,
    pub submit_time: f64,
    pub worker: Option<WorkerId>,
}

/// Objectives collected from clients, keyed by container.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRegistry {
    entries: BTreeMap<ContainerId, RegistryEntry>,
}

impl ObjectiveRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        id: ContainerId,
        model: impl Into<String>,
        objective: f64,
        submit_time: f64,
    ) -> Result<(), ClusterError> {
        if !(objective > 0.0 && objective.is_finite()) {
            return Err(crate::error::ModelError::InvalidObjective(objective).into());
        }
        if self.entries.contains_key(&id) {
            return Err(ClusterError::DuplicateContainer(id));
        }
        self.entries.insert(
            id,
            RegistryEntry {
                model: model.into(),
                objective,
                submit_time,
                worker: None,
            },
        );
        Ok(())
    }

    pub fn assign(&mut self, id: ContainerId, worker: WorkerId) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.worker = Some(worker);
        }
    }

    pub fn get(&self, id: ContainerId) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ContainerId, &RegistryEntry)> {
        self.entries.iter()
    }
}

/// Spread placement: the worker with the fewest containers, lowest id on
/// ties.
pub fn place<I>(loads: I) -> Result<WorkerId, ClusterError>
where
    I: IntoIterator<Item = (WorkerId, usize)>,
{
    loads
        .into_iter()
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
        .ok_or(ClusterError::NoWorkers)
}

/// One control step on one worker, as recorded by the manager.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub outperform: usize,
    pub satisfied: usize,
    pub underperform: usize,
    pub q_g: f64,
    pub q_b: f64,
    /// Per measured container: class, quality and effective share.
    pub containers: BTreeMap<ContainerId, (QosClass, f64, f64)>,
}

impl StepRecord {
    pub fn from_rows(time: f64, rows: &[ReportRow]) -> Self {
        let mut rec = StepRecord {
            time,
            outperform: 0,
            satisfied: 0,
            underperform: 0,
            q_g: 0.0,
            q_b: 0.0,
            containers: BTreeMap::new(),
        };
        for row in rows {
            match row.class {
                QosClass::G => {
                    rec.outperform += 1;
                    rec.q_g += row.quality;
                }
                QosClass::S => rec.satisfied += 1,
                QosClass::B => {
                    rec.underperform += 1;
                    rec.q_b += row.quality;
                }
            }
            rec.containers
                .insert(row.container_id, (row.class, row.quality, row.share));
        }
        rec
    }

    pub fn measured(&self) -> usize {
        self.outperform + self.satisfied + self.underperform
    }
}

/// Steady-state outcome for one worker.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerCensus {
    pub satisfied: usize,
    pub outperform: usize,
    pub underperform: usize,
    /// Sum over containers of mean |quality| across the window.
    pub abs_quality: f64,
    /// Steady-state class of each container.
    pub classes: BTreeMap<ContainerId, QosClass>,
    /// Mean effective share of each container across the window.
    pub mean_shares: BTreeMap<ContainerId, f64>,
    /// Steps in the window.
    pub window_steps: usize,
}

impl WorkerCensus {
    pub fn total(&self) -> usize {
        self.satisfied + self.outperform + self.underperform
    }
}

/// Cluster-wide performance table fed by worker reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub fingerprint: String,
    workers: BTreeMap<WorkerId, Vec<StepRecord>>,
}

impl ClusterSummary {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        Self {
            fingerprint: fingerprint.into(),
            workers: BTreeMap::new(),
        }
    }

    /// Registers a worker so that it shows up even before its first report.
    pub fn add_worker(&mut self, id: WorkerId) {
        self.workers.entry(id).or_default();
    }

    pub fn collect(&mut self, report: &ControlReport) -> Result<(), ClusterError> {
        self.collect_rows(report.worker_id, report.time, &report.rows)
    }

    pub fn collect_rows(
        &mut self,
        worker: WorkerId,
        time: f64,
        rows: &[ReportRow],
    ) -> Result<(), ClusterError> {
        let steps = self.workers.entry(worker).or_default();
        if let Some(last) = steps.last() {
            if time < last.time {
                return Err(ClusterError::OutOfOrder {
                    worker,
                    time,
                    last: last.time,
                });
            }
        }
        steps.push(StepRecord::from_rows(time, rows));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.workers.values().all(|s| s.is_empty())
    }

    pub fn worker_ids(&self) -> impl Iterator<Item = WorkerId> + '_ {
        self.workers.keys().copied()
    }

    pub fn steps(&self, worker: WorkerId) -> &[StepRecord] {
        self.workers.get(&worker).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Latest step on `worker` at or before `time`.
    pub fn at(&self, worker: WorkerId, time: f64) -> Option<&StepRecord> {
        self.steps(worker).iter().rev().find(|s| s.time <= time)
    }

    /// Total satisfied containers over time, summing each worker's latest
    /// step at every instant any worker reported.
    pub fn satisfied_trajectory(&self) -> Vec<(f64, usize)> {
        let mut times: Vec<f64> = self.workers.values().flatten().map(|s| s.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
            .into_iter()
            .map(|t| {
                let total = self
                    .workers
                    .keys()
                    .filter_map(|&w| self.at(w, t))
                    .map(|s| s.satisfied)
                    .sum();
                (t, total)
            })
            .collect()
    }

    /// Steady-state census of one worker.
    pub fn census(&self, worker: WorkerId) -> WorkerCensus {
        let steps = self.steps(worker);
        let mut census = WorkerCensus::default();
        if steps.is_empty() {
            return census;
        }
        let window =
            ((steps.len() as f64 * STEADY_STATE_FRACTION).ceil() as usize).clamp(1, steps.len());
        let tail = &steps[steps.len() - window..];
        census.window_steps = window;

        #[derive(Default)]
        struct Tally {
            g: usize,
            s: usize,
            b: usize,
            abs_q: f64,
            share: f64,
        }
        let mut tallies: BTreeMap<ContainerId, Tally> = BTreeMap::new();
        for step in tail {
            for (&id, &(class, q, share)) in &step.containers {
                let t = tallies.entry(id).or_default();
                match class {
                    QosClass::G => t.g += 1,
                    QosClass::S => t.s += 1,
                    QosClass::B => t.b += 1,
                }
                t.abs_q += q.abs();
                t.share += share;
            }
        }
        for (id, t) in tallies {
            let n = t.g + t.s + t.b;
            let class = if t.s as f64 >= SATISFIED_FRACTION * n as f64 {
                QosClass::S
            } else if t.g > t.b {
                QosClass::G
            } else {
                QosClass::B
            };
            match class {
                QosClass::G => census.outperform += 1,
                QosClass::S => census.satisfied += 1,
                QosClass::B => census.underperform += 1,
            }
            census.classes.insert(id, class);
            census.abs_quality += t.abs_q / n as f64;
            census.mean_shares.insert(id, t.share / n as f64);
        }
        census
    }

    pub fn census_all(&self) -> BTreeMap<WorkerId, WorkerCensus> {
        self.workers.keys().map(|&w| (w, self.census(w))).collect()
    }

    pub fn total_satisfied(&self) -> usize {
        self.census_all().values().map(|c| c.satisfied).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(worker: u32, id: u32, time: f64, class: QosClass) -> ReportRow {
        ReportRow {
            time,
            worker_id: WorkerId(worker),
            container_id: ContainerId(id),
            model: "ResNet-50".into(),
            objective: 40.0,
            perf: 40.0,
            quality: 0.0,
            class,
            limit: 0.8,
            share: 0.8,
        }
    }

    #[test]
    fn placement_examples() {
        let loads = [3, 2, 2, 4]
            .into_iter()
            .enumerate()
            .map(|(i, n)| (WorkerId(i as u32 + 1), n));
        assert_eq!(place(loads).unwrap(), WorkerId(2));
        let empty = (1..=4).map(|i| (WorkerId(i), 0));
        assert_eq!(place(empty).unwrap(), WorkerId(1));
        assert_eq!(place(std::iter::empty()), Err(ClusterError::NoWorkers));
    }

    #[test]
    fn spread_forty_over_four() {
        let mut counts = [0usize; 4];
        for _ in 0..40 {
            let w = place(
                counts
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| (WorkerId(i as u32 + 1), n)),
            )
            .unwrap();
            counts[(w.0 - 1) as usize] += 1;
        }
        assert_eq!(counts, [10; 4]);
    }

    #[test]
    fn registry_rejects_duplicates_and_bad_objectives() {
        let mut r = ObjectiveRegistry::new();
        r.register(ContainerId(1), "VGG-16", 40.0, 0.0).unwrap();
        assert_eq!(
            r.register(ContainerId(1), "VGG-16", 40.0, 0.0),
            Err(ClusterError::DuplicateContainer(ContainerId(1)))
        );
        assert!(r.register(ContainerId(2), "VGG-16", 0.0, 0.0).is_err());
    }

    #[test]
    fn collect_counts_satisfied() {
        let mut s = ClusterSummary::new("x");
        let rows: Vec<_> = (1..=10)
            .map(|i| row(1, i, 10.0, if i <= 8 { QosClass::S } else { QosClass::B }))
            .collect();
        s.collect_rows(WorkerId(1), 10.0, &rows).unwrap();
        let step = &s.steps(WorkerId(1))[0];
        assert_eq!(step.satisfied, 8);
        assert_eq!(step.measured(), 10);
        assert_eq!(s.census(WorkerId(1)).satisfied, 8);
    }

    #[test]
    fn empty_summary() {
        let s = ClusterSummary::new("x");
        assert!(s.is_empty());
        assert!(s.satisfied_trajectory().is_empty());
        assert_eq!(s.total_satisfied(), 0);
    }

    #[test]
    fn workers_tracked_independently() {
        let mut s = ClusterSummary::new("x");
        s.collect_rows(WorkerId(1), 10.0, &[row(1, 1, 10.0, QosClass::S)])
            .unwrap();
        s.collect_rows(
            WorkerId(2),
            12.0,
            &[row(2, 2, 12.0, QosClass::B), row(2, 3, 12.0, QosClass::S)],
        )
        .unwrap();
        assert_eq!(s.census(WorkerId(1)).satisfied, 1);
        assert_eq!(s.census(WorkerId(2)).satisfied, 1);
        assert_eq!(s.census(WorkerId(2)).underperform, 1);
        assert_eq!(s.satisfied_trajectory(), vec![(10.0, 1), (12.0, 2)]);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut s = ClusterSummary::new("x");
        s.collect_rows(WorkerId(1), 10.0, &[]).unwrap();
        assert!(matches!(
            s.collect_rows(WorkerId(1), 5.0, &[]),
            Err(ClusterError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn census_uses_tail_window() {
        let mut s = ClusterSummary::new("x");
        // 10 steps: B for the first 8, S for the last 2 -> window of 2 -> S.
        for k in 0..10 {
            let class = if k < 8 { QosClass::B } else { QosClass::S };
            let t = k as f64 * 10.0;
            s.collect_rows(WorkerId(1), t, &[row(1, 1, t, class)])
                .unwrap();
        }
        let c = s.census(WorkerId(1));
        assert_eq!(c.window_steps, 2);
        assert_eq!(c.satisfied, 1);
        assert_eq!(c.total(), 1);
    }
}
