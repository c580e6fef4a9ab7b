//! Completion rates and interaction counts, whole-run and sliced by
//! level and split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{RunRecord, TaskResult};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("run `{0}` has no results")]
pub struct EmptyRunError(pub String);

/// Figures for one set of tasks. Rates are percentages and, like the
/// average, rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub tasks: usize,
    pub successes: usize,
    pub templates: usize,
    pub templates_passed: usize,
    pub task_completion_rate: f64,
    pub scenario_completion_rate: f64,
    pub avg_interactions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub run_id: String,
    #[serde(flatten)]
    pub overall: Slice,
    /// Level → split → slice. The `all` split pools every task of the level.
    pub per_level: BTreeMap<u8, BTreeMap<String, Slice>>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn slice<'a>(rows: impl IntoIterator<Item = &'a TaskResult>) -> Slice {
    let mut tasks = 0;
    let mut successes = 0;
    let mut steps = 0u64;
    let mut templates: BTreeMap<&str, bool> = BTreeMap::new();
    for r in rows {
        tasks += 1;
        steps += u64::from(r.steps);
        if r.passed() {
            successes += 1;
        }
        let all = templates.entry(&r.template_id).or_insert(true);
        *all &= r.passed();
    }
    let passed = templates.values().filter(|p| **p).count();
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { round2(100.0 * n as f64 / d as f64) };
    Slice {
        tasks,
        successes,
        templates: templates.len(),
        templates_passed: passed,
        task_completion_rate: pct(successes, tasks),
        scenario_completion_rate: pct(passed, templates.len()),
        avg_interactions: if tasks == 0 { 0.0 } else { round2(steps as f64 / tasks as f64) },
    }
}

pub fn compute_metrics(run: &RunRecord) -> Result<MetricsSummary, EmptyRunError> {
    if run.results.is_empty() {
        return Err(EmptyRunError(run.run_id.clone()));
    }
    let mut groups: BTreeMap<u8, BTreeMap<String, Vec<&TaskResult>>> = BTreeMap::new();
    for r in run.results.values() {
        let Some(level) = r.level else { continue };
        let by_split = groups.entry(level).or_default();
        by_split.entry("all".into()).or_default().push(r);
        if let Some(split) = r.split {
            by_split.entry(split.as_str().into()).or_default().push(r);
        }
    }
    let per_level = groups
        .into_iter()
        .map(|(level, splits)| (level, splits.into_iter().map(|(s, rows)| (s, slice(rows))).collect()))
        .collect();
    Ok(MetricsSummary {
        run_id: run.run_id.clone(),
        overall: slice(run.results.values()),
        per_level,
    })
}
