use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;
use taskloom_core::orchestrator::ControllerConfig;
use taskloom_core::reasoner::{Script, ScriptRule};
use taskloom_core::trajectory::Recorder;
use taskloom_eval::bench::{expected_answer, task_script, Backend, BenchExecutor};
use taskloom_eval::manifest::{bundled_manifest, Behaviour, BenchTask, Scenario};
use taskloom_eval::record::Status;
use taskloom_eval::runner::{run_benchmark, Attempt, RunError, RunOptions, TaskExecutor};
use taskloom_eval::sample::{draw_sample, SampleName, SampleSpec, DEFAULT_SEED};
use taskloom_eval::trajectory_store::{audit, TrajectoryStore};

fn opts(workers: usize, sample: SampleSpec) -> RunOptions {
    RunOptions {
        run_id: "r1".into(),
        agent_version: "test".into(),
        sample,
        workers,
    }
}

fn scripted() -> Box<dyn TaskExecutor> {
    Box::new(BenchExecutor::scripted())
}

/// One representative per (scenario kind, behaviour) pair.
fn representatives() -> Vec<BenchTask> {
    let mut seen = BTreeMap::new();
    for t in bundled_manifest() {
        let kind = serde_json::to_value(t.scenario).unwrap()["kind"].as_str().unwrap().to_string();
        seen.entry((kind, format!("{:?}", t.behaviour))).or_insert(t);
    }
    seen.into_values().collect()
}

#[test]
fn every_scenario_and_behaviour_ends_as_intended() {
    let tasks = representatives();
    assert_eq!(tasks.len(), 15, "manifest should exercise every combination");
    let mut exec = BenchExecutor::scripted();
    for t in &tasks {
        let a = exec.execute(t, Recorder::new("r", &t.task_id));
        let want = match t.behaviour {
            Behaviour::Clean => Status::Success,
            _ => Status::Failure,
        };
        assert_eq!(a.status, want, "{} {:?}: {:?}", t.task_id, t.behaviour, a.detail);
        assert!(a.steps > 0 || t.behaviour != Behaviour::Clean, "{}", t.task_id);
        if t.behaviour == Behaviour::Clean {
            assert_eq!(a.detail.as_deref(), Some(expected_answer(t).as_str()));
        }
    }
}

#[test]
fn loop_scenario_reports_one_total_per_order() {
    let t = bundled_manifest()
        .into_iter()
        .find(|t| matches!(t.scenario, Scenario::OrderTotals { .. }) && t.behaviour == Behaviour::Clean)
        .unwrap();
    let a = BenchExecutor::scripted().execute(&t, Recorder::new("r", &t.task_id));
    assert_eq!(a.status, Status::Success, "{:?}", a.detail);
    assert!(a.detail.unwrap().contains("total=[25"));
}

#[test]
fn worker_count_does_not_change_results() {
    let m = bundled_manifest();
    let spec = SampleSpec::ladder(SampleName::Nano, DEFAULT_SEED);
    let tasks = draw_sample(&m, &spec).unwrap();
    let runs: Vec<_> = [1, 4, 8]
        .into_iter()
        .map(|w| run_benchmark(&tasks, scripted, &opts(w, spec.clone()), None).unwrap())
        .collect();
    assert!(runs[0].record.covers_exactly(&tasks));
    for r in &runs[1..] {
        assert_eq!(r.record.timeless_results(), runs[0].record.timeless_results());
        assert_eq!(r.scripts, runs[0].scripts);
    }
    let passed = runs[0].record.results.values().filter(|r| r.passed()).count();
    assert!(passed > 0 && passed < tasks.len());
}

#[test]
fn zero_workers_and_duplicates_are_rejected() {
    let m = bundled_manifest();
    let spec = SampleSpec::ladder(SampleName::Initial, 1);
    let err = run_benchmark(&m[..2], scripted, &opts(0, spec.clone()), None).err();
    assert_eq!(err, Some(RunError::NoWorkers));
    let twice = vec![m[0].clone(), m[0].clone()];
    let err = run_benchmark(&twice, scripted, &opts(2, spec), None).err();
    assert_eq!(err, Some(RunError::DuplicateTask(m[0].task_id.clone())));
}

struct Flaky(BenchExecutor);

impl TaskExecutor for Flaky {
    fn execute(&mut self, task: &BenchTask, recorder: Recorder) -> Attempt {
        if task.task_id.ends_with("-1") {
            panic!("injected fault in {}", task.task_id);
        }
        self.0.execute(task, recorder)
    }
}

#[test]
fn a_panicking_task_is_isolated() {
    let m = bundled_manifest();
    let tasks: Vec<BenchTask> = m[..20].to_vec();
    let spec = SampleSpec::ladder(SampleName::Initial, 1);
    let out = run_benchmark(&tasks, || Box::new(Flaky(BenchExecutor::scripted())), &opts(3, spec), None).unwrap();
    assert!(out.record.covers_exactly(&tasks));
    let serial = run_benchmark(&tasks, scripted, &opts(1, SampleSpec::ladder(SampleName::Initial, 1)), None).unwrap();
    for (id, r) in &out.record.results {
        if id.ends_with("-1") {
            assert_eq!(r.status, Status::Error);
            assert!(r.detail.as_deref().unwrap().contains("injected fault"));
        } else {
            assert_eq!(r.status, serial.record.results[id].status, "{id}");
        }
    }
}

#[test]
fn trajectories_are_stored_and_audited() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TrajectoryStore::new(dir.path(), false));
    let m = bundled_manifest();
    let tasks = m[..10].to_vec();
    let out = run_benchmark(&tasks, scripted, &opts(4, SampleSpec::ladder(SampleName::Initial, 1)), Some(store.clone()))
        .unwrap();
    assert!(out.record.results.values().all(|r| r.status != Status::Error));
    for t in &tasks {
        let events = store.load("r1", &t.task_id).unwrap();
        assert!(!events.is_empty());
        audit(&events, "r1", &t.task_id).unwrap();
    }
}

#[test]
fn a_broken_store_marks_tasks_as_errors() {
    let dir = tempfile::tempdir().unwrap();
    // A plain file where the run directory should be makes every append fail.
    std::fs::write(dir.path().join("r1"), b"not a directory").unwrap();
    let store = Arc::new(TrajectoryStore::new(dir.path(), false));
    let m = bundled_manifest();
    let out = run_benchmark(&m[..3], scripted, &opts(2, SampleSpec::ladder(SampleName::Initial, 1)), Some(store)).unwrap();
    for r in out.record.results.values() {
        assert_eq!(r.status, Status::Error);
        assert!(r.detail.as_deref().unwrap().starts_with("trajectory store"));
    }
}

#[test]
fn the_step_cap_bounds_a_sub_task_that_never_succeeds() {
    let t = bundled_manifest()
        .into_iter()
        .find(|t| matches!(t.scenario, Scenario::OrderCount { .. }) && t.behaviour == Behaviour::Stuck)
        .unwrap();
    // Keep asking for another attempt; only the cap can end the sub-task.
    let mut script = Script::default()
        .rule(ScriptRule::new("judge", json!({"revision": "retry_program", "hint": "try again"})));
    script.extend(task_script(&t));
    for cap in [1, 2] {
        let mut config = ControllerConfig::default();
        config.api.step_cap = cap;
        config.replan_budget = 0;
        let exec = BenchExecutor::new(Backend::Scripted, config).unwrap();
        let a = exec.run_with_script(&t, script.clone(), Recorder::new("r", &t.task_id));
        assert_eq!(a.status, Status::Failure, "{:?}", a.detail);
        assert_eq!(a.steps, cap);
    }
}
