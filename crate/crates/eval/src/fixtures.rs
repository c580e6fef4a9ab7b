//! Canned run records with known aggregate figures.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifest::bundled_manifest;
use crate::record::{RunRecord, Split, Status, TaskResult};
use crate::sample::{SampleName, SampleSpec, Selection, DEFAULT_SEED};

pub const FULL_RUN_ID: &str = "fixture-full";
pub const FULL_RUN_SUCCESSES: usize = 501;
pub const LEVELS_RUN_ID: &str = "fixture-levels";

/// One row of the per-level table: template and task tallies plus the mean
/// number of interactions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRow {
    pub split: Split,
    pub level: u8,
    pub templates: usize,
    pub templates_passed: usize,
    pub tasks: usize,
    pub tasks_passed: usize,
    pub avg_interactions: f64,
}

const fn row(split: Split, level: u8, t: usize, tp: usize, n: usize, np: usize, avg: f64) -> LevelRow {
    LevelRow {
        split,
        level,
        templates: t,
        templates_passed: tp,
        tasks: n,
        tasks_passed: np,
        avg_interactions: avg,
    }
}

/// Three instances per template throughout.
pub const LEVEL_ROWS: [LevelRow; 6] = [
    row(Split::Normal, 1, 19, 16, 57, 52, 5.94),
    row(Split::Normal, 2, 16, 11, 48, 37, 10.36),
    row(Split::Normal, 3, 21, 8, 63, 34, 12.69),
    row(Split::Challenge, 1, 24, 21, 72, 66, 4.65),
    row(Split::Challenge, 2, 50, 21, 150, 88, 8.33),
    row(Split::Challenge, 3, 65, 25, 195, 86, 11.86),
];

fn stamp(minute: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, minute, 0).single().expect("valid timestamp")
}

/// All 812 manifest tasks, 501 of them successful.
pub fn full_run() -> RunRecord {
    let manifest = bundled_manifest();
    let mut rng = ChaCha8Rng::seed_from_u64(617);
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.shuffle(&mut rng);
    let mut results = BTreeMap::new();
    for (rank, &i) in order.iter().enumerate() {
        let t = &manifest[i];
        let passed = rank < FULL_RUN_SUCCESSES;
        results.insert(
            t.task_id.clone(),
            TaskResult {
                status: if passed {
                    Status::Success
                } else if rank % 17 == 0 {
                    Status::Error
                } else {
                    Status::Failure
                },
                steps: rng.random_range(2..=14),
                duration_ms: rng.random_range(50.0..900.0),
                template_id: t.template_id.clone(),
                level: t.level,
                split: None,
                detail: None,
            },
        );
    }
    RunRecord {
        run_id: FULL_RUN_ID.into(),
        agent_version: "fixture".into(),
        sample: SampleSpec::ladder(SampleName::Full, DEFAULT_SEED),
        results,
        started_at: stamp(0),
        finished_at: stamp(30),
    }
}

/// A run whose per-level, per-split tallies equal [`LEVEL_ROWS`]. Step
/// counts sum to the nearest integer of mean × tasks.
pub fn levels_run() -> RunRecord {
    let mut results = BTreeMap::new();
    for r in LEVEL_ROWS {
        let failing = r.templates - r.templates_passed;
        // Successes left over after the fully passing templates, spread at
        // most two per failing template so each of those keeps a failure.
        let mut spare = r.tasks_passed - 3 * r.templates_passed;
        assert!(spare <= 2 * failing, "row {r:?} cannot be built");
        let total_steps = (r.avg_interactions * r.tasks as f64).round() as u32;
        let base = total_steps / r.tasks as u32;
        let mut extra = total_steps % r.tasks as u32;
        let mut k = 0;
        for t in 0..r.templates {
            let template_id = format!("{}-l{}-{t:02}", r.split.as_str(), r.level);
            let wins = if t < r.templates_passed {
                3
            } else {
                let w = spare.min(2);
                spare -= w;
                w
            };
            for i in 0..3 {
                let steps = base + u32::from(extra > 0);
                extra = extra.saturating_sub(1);
                results.insert(
                    format!("{template_id}-{i}"),
                    TaskResult {
                        status: if i < wins { Status::Success } else { Status::Failure },
                        steps,
                        duration_ms: 100.0 + k as f64,
                        template_id: template_id.clone(),
                        level: Some(r.level),
                        split: Some(r.split),
                        detail: None,
                    },
                );
                k += 1;
            }
        }
        assert_eq!(spare, 0);
    }
    let size = results.len();
    RunRecord {
        run_id: LEVELS_RUN_ID.into(),
        agent_version: "fixture".into(),
        sample: SampleSpec {
            name: SampleName::Full,
            size,
            selection: Selection::AllTasks,
            seed: 0,
        },
        results,
        started_at: stamp(40),
        finished_at: stamp(50),
    }
}
