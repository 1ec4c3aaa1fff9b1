//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use qoe_sched::listener::{ListenerConfig, ListenerState};
use qoe_sched::model::{
    ContainerId, ContainerState, ControllerParams, QosClass, WorkerId, WorkerState,
};
use qoe_sched::report::{self, Ratio};
use qoe_sched::worker::{ControllerKind, Trigger};
use qoe_sched::{control_step, load_config, run_scenario, ScenarioConfig, ScenarioOutcome};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(cfg: &ScenarioConfig) -> ScenarioOutcome {
    run_scenario(cfg).expect("scenario runs")
}

fn objective_of(outcome: &ScenarioOutcome, id: ContainerId) -> f64 {
    outcome.registry.get(id).expect("registered").objective
}

// ---------------------------------------------------------------------------
// Reference controller, written straight from the algorithm listing with
// nothing shared with the library beyond the input types.

#[derive(Debug)]
struct OracleInput {
    objective: f64,
    perf: f64,
    usage: f64,
    limit: f64,
}

fn oracle_limits(cs: &[OracleInput], alpha: f64, beta: f64, t_r: f64) -> Vec<f64> {
    let mut set_g = Vec::new();
    let mut set_b = Vec::new();
    let (mut q_g, mut q_b, mut r_g) = (0.0, 0.0, 0.0);
    for (i, c) in cs.iter().enumerate() {
        let q = c.objective - c.perf;
        if q > alpha * c.objective {
            set_g.push(i);
            q_g += q;
            r_g += c.usage;
        } else if q < -alpha * c.objective {
            set_b.push(i);
            q_b += q;
        }
    }
    let mut out: Vec<f64> = cs.iter().map(|c| c.limit).collect();
    let lower = t_r / (2.0 * cs.len() as f64);
    for &i in &set_g {
        let q = cs[i].objective - cs[i].perf;
        let mut l = cs[i].limit * (1.0 - (q / q_g) * (r_g / t_r) * beta);
        if l < lower {
            l = lower;
        }
        out[i] = l;
    }
    for &i in &set_b {
        let q = cs[i].objective - cs[i].perf;
        let mut l = cs[i].limit * (1.0 + (q / q_b) * (r_g / t_r) * beta);
        if l > t_r {
            l = t_r;
        }
        out[i] = l;
    }
    out
}

fn random_inputs() -> impl Strategy<Value = Vec<OracleInput>> {
    prop::collection::vec(
        (5.0f64..=95.0, 5.0f64..=120.0, 0.0f64..=1.0, 0.0f64..=1.0),
        1..=10,
    )
    .prop_map(|raw| {
        let n = raw.len() as f64;
        let lower = 8.0 / (2.0 * n);
        raw.into_iter()
            .map(|(objective, perf, u, l)| {
                let limit = lower + l * (8.0 - lower);
                OracleInput {
                    objective,
                    perf,
                    usage: u * limit,
                    limit,
                }
            })
            .collect()
    })
}

fn worker_from(cs: &[OracleInput], params: ControllerParams) -> WorkerState {
    let containers = cs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut s =
                ContainerState::new(ContainerId(i as u32 + 1), "ResNet-50", c.objective, c.limit)
                    .unwrap();
            s.perf = Some(c.perf);
            s.usage = c.usage;
            s
        })
        .collect();
    WorkerState::new(WorkerId(1), containers, params)
}

fn applied(cs: &[OracleInput], plan: &BTreeMap<ContainerId, f64>) -> Vec<f64> {
    cs.iter()
        .enumerate()
        .map(|(i, c)| {
            plan.get(&ContainerId(i as u32 + 1))
                .copied()
                .unwrap_or(c.limit)
        })
        .collect()
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(
            proptest::test_runner::RngAlgorithm::ChaCha,
        ),
    )
}

fn c1_oracle_equivalence() -> Verdict {
    let params = ControllerParams::default();
    let worst = Cell::new(0.0f64);
    let result = runner(1000).run(&random_inputs(), |cs| {
        let (plan, _) = control_step(&worker_from(&cs, params), 0.0)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let got = applied(&cs, &plan.entries);
        let want = oracle_limits(&cs, params.alpha, params.beta, params.total_capacity);
        for (g, w) in got.iter().zip(&want) {
            let rel = (g - w).abs() / w.abs();
            worst.set(worst.get().max(rel));
            prop_assert!(rel <= 1e-9, "limit {g} vs oracle {w}");
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok(format!(
            "1000 random states, max relative error {:.1e}",
            worst.get()
        )),
        Err(e) => Err(e.to_string()),
    }
}

// ---------------------------------------------------------------------------

fn c2_unachievable() -> Verdict {
    let outcome = run(&scenario("burst_unachievable.json"));
    let census = outcome.summary.census(WorkerId(1));
    let all_b = census.classes.values().all(|&c| c == QosClass::B) && census.classes.len() == 10;
    let shares: Vec<f64> = census.mean_shares.values().copied().collect();
    let mean_share = shares.iter().sum::<f64>() / shares.len() as f64;
    let spread = shares
        .iter()
        .map(|s| (s - mean_share).abs() / mean_share)
        .fold(0.0, f64::max);
    let tail = steady_rows(&outcome, WorkerId(1));
    let perf = tail.iter().map(|r| r.0).sum::<f64>() / tail.len() as f64;
    let detail = format!(
        "classes all B: {all_b}, share spread {:.2}%, mean perf {perf:.2}s",
        spread * 100.0
    );
    if all_b && spread <= 0.05 && (perf - 31.61).abs() <= 0.1 * 31.61 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// (perf, share) of every row inside the steady-state window.
fn steady_rows(outcome: &ScenarioOutcome, worker: WorkerId) -> Vec<(f64, f64)> {
    let steps = outcome.summary.steps(worker);
    let window = outcome.summary.census(worker).window_steps;
    let start = steps[steps.len() - window].time;
    outcome
        .reports_for(worker)
        .filter(|r| r.time >= start)
        .flat_map(|r| r.rows.iter().map(|row| (row.perf, row.share)))
        .collect()
}

fn c3_achievable() -> Verdict {
    let outcome = run(&scenario("burst_achievable.json"));
    let steps = outcome.summary.steps(WorkerId(1));
    let Some(first) = steps.iter().position(|s| s.satisfied == 10) else {
        return Err("satisfied count never reached 10".into());
    };
    let reached = steps[first].time;
    let after = &steps[first..];
    let held = after.iter().filter(|s| s.satisfied == 10).count() as f64 / after.len() as f64;
    let detail = format!(
        "all 10 in S at t={reached}s, held for {:.1}% of later steps",
        held * 100.0
    );
    if reached <= 600.0 && held >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c4_varied() -> Verdict {
    let outcome = run(&scenario("burst_varied.json"));
    let census = outcome.summary.census(WorkerId(1));
    let (top, top_share) = census
        .mean_shares
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(id, s)| (*id, *s))
        .unwrap();
    let strictly = census
        .mean_shares
        .iter()
        .filter(|(id, _)| **id != top)
        .all(|(_, s)| *s < top_share);
    let top_objective = objective_of(&outcome, top);
    let detail = format!(
        "largest share {top_share:.2} held by o={top_objective}, steady |S|={}",
        census.satisfied
    );
    if top_objective == 5.0 && strictly && (7..=8).contains(&census.satisfied) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c5_fixed() -> Verdict {
    let outcome = run(&scenario("fixed_varied.json"));
    let last_arrival = outcome
        .registry
        .iter()
        .map(|(_, e)| e.submit_time)
        .fold(0.0, f64::max);
    let quiet: Vec<f64> = outcome
        .reports
        .iter()
        .filter(|r| r.time < last_arrival && r.plan.is_empty())
        .map(|r| r.time)
        .collect();
    let census = outcome.summary.census(WorkerId(1));
    // The two tightest objectives are the ones no feasible split can meet.
    let mut by_objective: Vec<(ContainerId, f64)> = outcome
        .registry
        .iter()
        .map(|(id, e)| (*id, e.objective))
        .collect();
    by_objective.sort_by(|a, b| a.1.total_cmp(&b.1));
    let unachievable: Vec<ContainerId> = by_objective.iter().take(2).map(|p| p.0).collect();
    let mut by_share: Vec<(ContainerId, f64)> =
        census.mean_shares.iter().map(|(k, v)| (*k, *v)).collect();
    by_share.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top_two: Vec<ContainerId> = by_share.iter().take(2).map(|p| p.0).collect();
    let unach_b = unachievable
        .iter()
        .all(|id| census.classes.get(id) == Some(&QosClass::B));
    let unach_top = unachievable.len() == 2 && unachievable.iter().all(|id| top_two.contains(id));
    let detail = format!(
        "idle steps before {last_arrival}s: {}, steady |S|={}, unachievable in B: {unach_b}, hold top two shares: {unach_top}",
        quiet.len(),
        census.satisfied
    );
    if quiet.is_empty() && census.satisfied == 8 && unach_b && unach_top {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c6_cluster() -> Verdict {
    let base = scenario("cluster.json");
    let mut passing = 0;
    let mut notes = Vec::new();
    for seed in 1..=5 {
        let mut dqoes = base.clone();
        dqoes.seed = seed;
        dqoes.controller = ControllerKind::Dqoes;
        let mut even = dqoes.clone();
        even.controller = ControllerKind::Even;
        let a = run(&dqoes);
        let b = run(&even);
        let cmp = report::compare(&a.summary, &b.summary).map_err(|e| e.to_string())?;
        let per_worker = cmp
            .workers
            .iter()
            .all(|w| w.satisfied >= w.baseline_satisfied);
        let ratio_ok = cmp.total >= 4 * cmp.baseline_total;
        if per_worker && ratio_ok {
            passing += 1;
        }
        let ratio = match cmp.ratio {
            Ratio::Finite(r) => format!("{r:.2}x"),
            Ratio::AtLeast(n) => format!(">={n}x"),
        };
        notes.push(format!(
            "seed {seed}: {}/{} {ratio}{}",
            cmp.total,
            cmp.baseline_total,
            if per_worker {
                ""
            } else {
                " (worker below baseline)"
            }
        ));
    }
    let detail = format!("{passing}/5 seeds pass [{}]", notes.join(", "));
    if passing >= 3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c7_listener() -> Verdict {
    let cfg = scenario("burst_achievable_inject.json");
    let inject_at = cfg
        .containers
        .iter()
        .filter_map(|c| c.submit_at)
        .fold(f64::NAN, f64::max);
    let outcome = run(&cfg);
    let before: Vec<_> = outcome
        .reports
        .iter()
        .filter(|r| r.time < inject_at)
        .collect();
    let max = cfg.listener.max_interval;
    let Some(first_max) = before.iter().position(|r| r.interval == max) else {
        return Err("interval never reached its maximum before injection".into());
    };
    let stays = before[first_max..].iter().all(|r| r.interval == max);
    let next = outcome.reports.iter().find(|r| r.time >= inject_at);
    let Some(next) = next else {
        return Err("no control step after injection".into());
    };
    let previous_interval = before.last().map(|r| r.interval).unwrap_or(max);
    let forced = next.trigger == Trigger::Arrival && (next.time - inject_at).abs() < 1e-9;
    let halved = next.interval == (previous_interval / 2.0).max(cfg.listener.min_interval);

    let listener_prop = listener_arrival_property();
    let detail = format!(
        "max interval from t={}s, stays: {stays}; control at t={} ({:?}), interval {} -> {}; arrival property: {}",
        before[first_max].time,
        next.time,
        next.trigger,
        previous_interval,
        next.interval,
        listener_prop.as_deref().unwrap_or("ok")
    );
    if stays && forced && halved && listener_prop.is_none() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// From any converged listener state, an arrival makes the very next
/// observation run the controller with half the interval.
fn listener_arrival_property() -> Option<String> {
    let config = ListenerConfig::default();
    let mut runner = runner(256);
    let strategy = (
        0u32..4,
        0u32..3,
        0.0f64..50.0,
        -50.0f64..=0.0,
        0usize..12,
        0.0f64..1.0,
    );
    runner
        .run(&strategy, |(k, streak, q_g, q_b, q_s, frac)| {
            let interval = (config.initial_interval * 2f64.powi(k as i32 - 1))
                .clamp(config.min_interval, config.max_interval);
            let mut state = ListenerState::with_history(config, interval, streak, (q_g, q_b, q_s));
            state.notify_arrival();
            let (_, decision) = state.observe(q_g * frac, q_b * frac, q_s);
            prop_assert!(decision.run_controller_now);
            prop_assert_eq!(
                decision.new_interval,
                (interval / 2.0).max(config.min_interval)
            );
            Ok(())
        })
        .err()
        .map(|e| e.to_string())
}

fn c8_invariants() -> Verdict {
    let params = ControllerParams::default();
    let mut runner = runner(500);
    let unit = runner
        .run(&random_inputs(), |cs| {
            let worker = worker_from(&cs, params);
            let (plan, agg) =
                control_step(&worker, 0.0).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let mut seen = BTreeMap::new();
            for id in agg
                .members_g
                .iter()
                .chain(&agg.members_s)
                .chain(&agg.members_b)
            {
                prop_assert!(seen.insert(*id, ()).is_none(), "{id} in two classes");
            }
            prop_assert_eq!(seen.len(), cs.len());
            let lower = params.floor(cs.len());
            for (id, l) in &plan.entries {
                prop_assert!(
                    *l >= lower - 1e-12 && *l <= params.total_capacity + 1e-12,
                    "{id}: {l}"
                );
            }
            for id in &agg.members_s {
                prop_assert!(!plan.entries.contains_key(id), "S member {id} planned");
            }
            Ok(())
        })
        .err()
        .map(|e| e.to_string());
    if let Some(e) = unit {
        return Err(format!("controller invariants: {e}"));
    }

    let names = [
        "burst_unachievable.json",
        "burst_achievable.json",
        "burst_varied.json",
        "fixed_varied.json",
        "burst_achievable_inject.json",
        "cluster.json",
    ];
    let mut excess = 0.0f64;
    for name in names {
        let cfg = scenario(name);
        let outcome = run(&cfg);
        excess = excess.max(outcome.stats.max_share_excess);
        for r in &outcome.reports {
            let lower = cfg
                .controller_params((r.worker_id.0 - 1) as usize)
                .floor(r.container_count);
            for row in &r.rows {
                let planned = r.plan.entries.get(&row.container_id);
                if let Some(l) = planned {
                    if *l < lower - 1e-12 || *l > 8.0 + 1e-12 {
                        return Err(format!(
                            "{name}: planned limit {l} out of bounds at t={}",
                            r.time
                        ));
                    }
                }
                if row.class == QosClass::S && planned.is_some() {
                    return Err(format!(
                        "{name}: S container {} replanned",
                        row.container_id
                    ));
                }
            }
        }
    }
    if excess > 1e-9 {
        return Err(format!("effective shares exceeded capacity by {excess}"));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = scenario("cluster.json");
    let mut bytes = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("run{i}.csv"));
        report::export_csv(run(&cfg).rows(), &path).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    if bytes[0] != bytes[1] {
        return Err("re-run produced a different CSV".into());
    }
    Ok(format!(
        "500 random states, {} scenarios, max share excess {excess:.1e}, identical CSV on re-run ({} bytes)",
        names.len(),
        bytes[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 oracle equivalence", c1_oracle_equivalence),
        ("2 unachievable identical objectives", c2_unachievable),
        ("3 achievable identical objectives", c3_achievable),
        ("4 varied objectives", c4_varied),
        ("5 fixed schedule", c5_fixed),
        ("6 cluster comparison", c6_cluster),
        ("7 listener behaviour", c7_listener),
        ("8 invariant suite", c8_invariants),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
