use std::collections::{BTreeMap, BTreeSet};

use chrono::Utc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskloom_eval::fixtures::{full_run, levels_run, LEVEL_ROWS};
use taskloom_eval::metrics::{compute_metrics, EmptyRunError};
use taskloom_eval::record::{RunRecord, Split, Status, TaskResult};
use taskloom_eval::sample::{SampleName, SampleSpec};

fn run(results: BTreeMap<String, TaskResult>) -> RunRecord {
    RunRecord {
        run_id: "r".into(),
        agent_version: "v".into(),
        sample: SampleSpec::ladder(SampleName::Full, 0),
        results,
        started_at: Utc::now(),
        finished_at: Utc::now(),
    }
}

fn random_run(rng: &mut ChaCha8Rng) -> RunRecord {
    let n = rng.random_range(1..120);
    let templates = rng.random_range(1..30);
    let results = (0..n)
        .map(|i| {
            let status = match rng.random_range(0..3) {
                0 => Status::Success,
                1 => Status::Failure,
                _ => Status::Error,
            };
            let r = TaskResult {
                status,
                steps: rng.random_range(0..20),
                duration_ms: 1.0,
                template_id: format!("t{}", rng.random_range(0..templates)),
                level: if rng.random_bool(0.9) { Some(rng.random_range(1..=3)) } else { None },
                split: match rng.random_range(0..3) {
                    0 => None,
                    1 => Some(Split::Normal),
                    _ => Some(Split::Challenge),
                },
                detail: None,
            };
            (format!("task-{i}"), r)
        })
        .collect();
    run(results)
}

/// Straightforward recount: (tasks, successes, templates, fully passed templates, step sum).
fn tally<'a>(rows: impl Iterator<Item = &'a TaskResult>) -> (usize, usize, usize, usize, u64) {
    let rows: Vec<&TaskResult> = rows.collect();
    let templates: BTreeSet<&str> = rows.iter().map(|r| r.template_id.as_str()).collect();
    let passed = templates
        .iter()
        .filter(|t| rows.iter().filter(|r| r.template_id == **t).all(|r| r.status == Status::Success))
        .count();
    let ok = rows.iter().filter(|r| r.status == Status::Success).count();
    let steps = rows.iter().map(|r| u64::from(r.steps)).sum();
    (rows.len(), ok, templates.len(), passed, steps)
}

/// Reported figures are rounded to two decimals.
const HALF_CENT: f64 = 0.005 + 1e-9;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn matches_an_independent_tally_on_random_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let r = random_run(&mut rng);
        let m = compute_metrics(&r).unwrap();
        let (n, ok, t, tp, steps) = tally(r.results.values());
        assert_eq!((m.overall.tasks, m.overall.successes), (n, ok));
        assert_eq!((m.overall.templates, m.overall.templates_passed), (t, tp));
        assert!(close(m.overall.task_completion_rate, 100.0 * ok as f64 / n as f64, HALF_CENT));
        assert!(close(m.overall.scenario_completion_rate, 100.0 * tp as f64 / t as f64, HALF_CENT));
        assert!(close(m.overall.avg_interactions, steps as f64 / n as f64, HALF_CENT));
        for level in 1..=3u8 {
            let in_level = || r.results.values().filter(move |x| x.level == Some(level));
            let Some(splits) = m.per_level.get(&level) else {
                assert_eq!(in_level().count(), 0);
                continue;
            };
            assert_eq!(splits["all"].tasks, in_level().count());
            for split in [Split::Normal, Split::Challenge] {
                let (n, ok, t, tp, _) = tally(in_level().filter(|x| x.split == Some(split)));
                match splits.get(split.as_str()) {
                    None => assert_eq!(n, 0),
                    Some(s) => assert_eq!((s.tasks, s.successes, s.templates, s.templates_passed), (n, ok, t, tp)),
                }
            }
        }
    }
}

#[test]
fn errors_count_against_completion() {
    let mk = |status| TaskResult {
        status,
        steps: 3,
        duration_ms: 0.0,
        template_id: "t".into(),
        level: Some(1),
        split: None,
        detail: None,
    };
    let r = run(BTreeMap::from([("a".to_string(), mk(Status::Success)), ("b".to_string(), mk(Status::Error))]));
    let m = compute_metrics(&r).unwrap();
    assert_eq!(m.overall.task_completion_rate, 50.0);
    assert_eq!(m.overall.scenario_completion_rate, 0.0);
}

#[test]
fn an_empty_run_is_an_error() {
    assert_eq!(compute_metrics(&run(BTreeMap::new())), Err(EmptyRunError("r".into())));
}

#[test]
fn full_fixture_completion_rate() {
    let m = compute_metrics(&full_run()).unwrap();
    assert_eq!(m.overall.tasks, 812);
    assert!(close(m.overall.task_completion_rate, 61.7, 0.1), "{}", m.overall.task_completion_rate);
}

#[test]
fn level_fixture_reproduces_every_row() {
    let m = compute_metrics(&levels_run()).unwrap();
    for row in LEVEL_ROWS {
        let s = &m.per_level[&row.level][row.split.as_str()];
        assert_eq!((s.tasks, s.successes), (row.tasks, row.tasks_passed), "{row:?}");
        assert_eq!((s.templates, s.templates_passed), (row.templates, row.templates_passed), "{row:?}");
        assert!(close(s.avg_interactions, row.avg_interactions, 0.1), "{row:?}: {}", s.avg_interactions);
        let tcr = 100.0 * row.tasks_passed as f64 / row.tasks as f64;
        let scr = 100.0 * row.templates_passed as f64 / row.templates as f64;
        assert!(close(s.task_completion_rate, tcr, 0.1));
        assert!(close(s.scenario_completion_rate, scr, 0.1));
    }
    let normal3 = &m.per_level[&3]["normal"];
    assert!(close(normal3.scenario_completion_rate, 38.1, 0.1));
    assert!(close(m.per_level[&1]["normal"].avg_interactions, 5.94, 0.1));
}

#[test]
fn summary_serializes_flat() {
    let m = compute_metrics(&full_run()).unwrap();
    let v = serde_json::to_value(&m).unwrap();
    assert!(v["task_completion_rate"].is_number());
    assert!(v["per_level"]["1"]["all"]["tasks"].is_number());
}
