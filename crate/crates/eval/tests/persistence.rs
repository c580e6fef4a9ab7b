use std::sync::Arc;

use serde_json::{json, Map};
use taskloom_core::fixtures::{demo_documents, demo_server};
use taskloom_core::registry::{Registry, ReqwestTransport};
use taskloom_eval::bench::BenchExecutor;
use taskloom_eval::classify::{ClassificationStore, ClassifyError, NewClassification, Taxonomy};
use taskloom_eval::fixtures::{full_run, FULL_RUN_ID};
use taskloom_eval::manifest::bundled_manifest;
use taskloom_eval::replay::{replay, ReplayError};
use taskloom_eval::runner::{run_benchmark, RunOptions, TaskExecutor};
use taskloom_eval::sample::{draw_sample, SampleName, SampleSpec};
use taskloom_eval::store::RunStore;
use taskloom_eval::trajectory_store::TrajectoryStore;

fn label(task: &str, label: &str) -> NewClassification {
    NewClassification {
        run_id: FULL_RUN_ID.into(),
        task_id: task.into(),
        label: label.into(),
        note: String::new(),
        author: "qa".into(),
    }
}

#[test]
fn classifications_survive_a_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let run = full_run();
    let task = run.results.keys().next().unwrap().clone();
    {
        let store = ClassificationStore::open(&path, Taxonomy::default()).unwrap();
        store.record(label(&task, "shortlist-miss"), &run).unwrap();
        assert!(matches!(store.record(label(&task, "nope"), &run), Err(ClassifyError::UnknownLabel(_))));
        assert!(matches!(store.record(label("ghost", "plan-error"), &run), Err(ClassifyError::UnknownTask { .. })));
    }
    let store = ClassificationStore::open(&path, Taxonomy::default()).unwrap();
    let list = store.list(FULL_RUN_ID);
    assert_eq!(list.len(), 1);
    assert_eq!(list[0].label, "shortlist-miss");
}

#[test]
fn a_custom_taxonomy_replaces_the_default() {
    let run = full_run();
    let task = run.results.keys().next().unwrap().clone();
    let store = ClassificationStore::in_memory(Taxonomy {
        labels: vec!["timeout".into()],
    });
    assert!(store.record(label(&task, "timeout"), &run).is_ok());
    assert!(store.record(label(&task, "plan-error"), &run).is_err());
}

#[test]
fn runs_reload_from_disk_in_start_order() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = RunStore::open(dir.path()).unwrap();
        let mut late = full_run();
        late.run_id = "late".into();
        late.started_at = late.started_at + chrono::Duration::days(1);
        store.save(late).unwrap();
        store.save(full_run()).unwrap();
        let mut bad = full_run();
        bad.run_id = "../escape".into();
        assert!(store.save(bad).is_err());
    }
    let store = RunStore::open(dir.path()).unwrap();
    let ids: Vec<String> = store.list().into_iter().map(|r| r.run_id).collect();
    assert_eq!(ids, vec![FULL_RUN_ID.to_string(), "late".to_string()]);
    assert_eq!(store.get(FULL_RUN_ID).unwrap(), full_run());
}

#[test]
fn a_recorded_run_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let runs = RunStore::open(dir.path()).unwrap();
    let trajectories = Arc::new(TrajectoryStore::new(dir.path(), true));
    let manifest = bundled_manifest();
    let spec = SampleSpec::ladder(SampleName::Initial, 3);
    let tasks = draw_sample(&manifest, &spec).unwrap();
    let opts = RunOptions {
        run_id: "rec".into(),
        agent_version: "v1".into(),
        sample: spec,
        workers: 4,
    };
    let factory = || Box::new(BenchExecutor::scripted()) as Box<dyn TaskExecutor>;
    let out = run_benchmark(&tasks, factory, &opts, Some(trajectories.clone())).unwrap();
    for (task, script) in &out.scripts {
        runs.save_script("rec", task, script).unwrap();
    }
    runs.save(out.record.clone()).unwrap();

    let exec = BenchExecutor::scripted();
    for t in &tasks {
        let report = replay(&runs, &trajectories, &manifest, &exec, "rec", &t.task_id).unwrap();
        assert!(report.identical(), "{report:?}");
        assert_eq!(report.status, out.record.results[&t.task_id].status);
        assert!(report.recorded_events > 0);
    }
    assert!(matches!(
        replay(&runs, &trajectories, &manifest, &exec, "ghost", &tasks[0].task_id),
        Err(ReplayError::UnknownRun(_))
    ));
    assert!(matches!(
        replay(&runs, &trajectories, &manifest, &exec, "rec", "ghost"),
        Err(ReplayError::UnknownTask(_))
    ));

    // A tampered trace is caught.
    let t = &tasks[0].task_id;
    let path = trajectories.path("rec", t);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut e: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    e["payload"] = json!({"edited": true});
    lines[1] = e.to_string();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let report = replay(&runs, &TrajectoryStore::new(dir.path(), true), &manifest, &exec, "rec", t).unwrap();
    assert_eq!(report.first_divergence, Some(1));
}

#[test]
fn mock_apps_answer_over_real_http() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = taskloom_eval::gateway::router(Arc::new(demo_server()));
    rt.spawn(async move { axum::serve(listener, app).await });

    let registry = Registry::new(Arc::new(ReqwestTransport::new().unwrap()));
    for (app, doc) in demo_documents() {
        registry.ingest_spec(doc, app, &format!("http://{addr}/{app}.mock")).unwrap();
    }
    let mut args = Map::new();
    args.insert("user".into(), json!("u-alice"));
    let r = registry.invoke("shop-api.list_orders", &args).unwrap();
    assert!(r.is_success(), "{r:?}");
    assert_eq!(r.body["items"].as_array().unwrap().len(), 5);

    let mut args = Map::new();
    args.insert("user_id".into(), json!("u1"));
    let r = registry.invoke("payments.get_balance", &args).unwrap();
    assert_eq!(r.body["balance"], json!(120.5));

    let mut args = Map::new();
    args.insert("user".into(), json!("u-nobody"));
    let r = registry.invoke("shop-api.list_orders", &args).unwrap();
    assert!(!r.is_success());
}
