//! Re-executes a recorded task from its saved reasoner script and checks
//! that the new trace matches the stored one.

use serde::Serialize;
use taskloom_core::trajectory::Recorder;
use thiserror::Error;

use crate::bench::BenchExecutor;
use crate::manifest::BenchTask;
use crate::record::Status;
use crate::store::RunStore;
use crate::trajectory_store::{StoreError, TrajectoryStore};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("task `{0}` is not in the manifest")]
    UnknownTask(String),
    #[error("no saved script for {run}/{task}")]
    NoScript { run: String, task: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub run_id: String,
    pub task_id: String,
    pub status: Status,
    pub recorded_events: usize,
    pub replayed_events: usize,
    /// Index of the first differing canonical line, if any.
    pub first_divergence: Option<usize>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_divergence.is_none()
    }
}

pub fn replay(
    runs: &RunStore,
    trajectories: &TrajectoryStore,
    manifest: &[BenchTask],
    executor: &BenchExecutor,
    run_id: &str,
    task_id: &str,
) -> Result<ReplayReport, ReplayError> {
    if !runs.contains(run_id) {
        return Err(ReplayError::UnknownRun(run_id.into()));
    }
    let task = manifest
        .iter()
        .find(|t| t.task_id == task_id)
        .ok_or_else(|| ReplayError::UnknownTask(task_id.into()))?;
    let script = runs.load_script(run_id, task_id)?.ok_or_else(|| ReplayError::NoScript {
        run: run_id.into(),
        task: task_id.into(),
    })?;
    let recorded = trajectories.load(run_id, task_id)?;
    let attempt = executor.run_with_script(task, script, Recorder::new(run_id, task_id));
    let old: Vec<String> = recorded.iter().map(|e| e.canonical_line()).collect();
    let new: Vec<String> = attempt.events.iter().map(|e| e.canonical_line()).collect();
    let first_divergence = old
        .iter()
        .zip(&new)
        .position(|(a, b)| a != b)
        .or_else(|| (old.len() != new.len()).then(|| old.len().min(new.len())));
    Ok(ReplayReport {
        run_id: run_id.into(),
        task_id: task_id.into(),
        status: attempt.status,
        recorded_events: old.len(),
        replayed_events: new.len(),
        first_divergence,
    })
}
