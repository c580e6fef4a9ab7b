//! Parallel benchmark runner. Workers pull tasks from a shared queue; each
//! task runs in isolation, so a panic or a broken trajectory sink marks
//! that task `error` and the run continues.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::Utc;
use taskloom_core::reasoner::Script;
use taskloom_core::trajectory::{Recorder, TrajectoryEvent, TrajectorySink};
use thiserror::Error;

use crate::manifest::BenchTask;
use crate::record::{RunRecord, Status, TaskResult};
use crate::sample::SampleSpec;

/// What an executor reports for one task.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub status: Status,
    pub steps: u32,
    pub detail: Option<String>,
    pub events: Vec<TrajectoryEvent>,
    /// Reasoner output that reproduces the attempt, when one is known.
    pub script: Option<Script>,
}

pub trait TaskExecutor {
    fn execute(&mut self, task: &BenchTask, recorder: Recorder) -> Attempt;
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub run_id: String,
    pub agent_version: String,
    pub sample: SampleSpec,
    pub workers: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("task id `{0}` appears twice in the sample")]
    DuplicateTask(String),
}

pub struct RunOutput {
    pub record: RunRecord,
    /// Per-task replay scripts, for executors that provide them.
    pub scripts: BTreeMap<String, Script>,
}

/// Forwards to the real sink and remembers the first failure, which the
/// recorder itself only logs.
struct Guarded {
    inner: Arc<dyn TrajectorySink>,
    error: Mutex<Option<String>>,
}

impl TrajectorySink for Guarded {
    fn append(&self, event: &TrajectoryEvent) -> Result<(), String> {
        let r = self.inner.append(event);
        if let Err(e) = &r {
            self.error.lock().expect("sink error slot").get_or_insert_with(|| e.clone());
        }
        r
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

/// Runs every task once on `opts.workers` threads. `factory` builds one
/// executor per worker, and a fresh one after a task panics.
pub fn run_benchmark<F>(
    tasks: &[BenchTask],
    factory: F,
    opts: &RunOptions,
    sink: Option<Arc<dyn TrajectorySink>>,
) -> Result<RunOutput, RunError>
where
    F: Fn() -> Box<dyn TaskExecutor> + Sync,
{
    if opts.workers == 0 {
        return Err(RunError::NoWorkers);
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in tasks {
        if !seen.insert(t.task_id.as_str()) {
            return Err(RunError::DuplicateTask(t.task_id.clone()));
        }
    }
    let started_at = Utc::now();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(BTreeMap::new());
    let scripts = Mutex::new(BTreeMap::new());
    std::thread::scope(|scope| {
        for _ in 0..opts.workers.min(tasks.len().max(1)) {
            scope.spawn(|| {
                let mut executor = factory();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(task) = tasks.get(i) else { break };
                    let guard = sink.as_ref().map(|s| {
                        Arc::new(Guarded {
                            inner: s.clone(),
                            error: Mutex::new(None),
                        })
                    });
                    let mut recorder = Recorder::new(&opts.run_id, &task.task_id);
                    if let Some(g) = &guard {
                        recorder = recorder.with_sink(g.clone());
                    }
                    let clock = Instant::now();
                    let outcome = catch_unwind(AssertUnwindSafe(|| executor.execute(task, recorder)));
                    let duration_ms = clock.elapsed().as_secs_f64() * 1000.0;
                    let (status, steps, detail) = match outcome {
                        Ok(a) => {
                            if let Some(s) = a.script {
                                scripts.lock().expect("scripts").insert(task.task_id.clone(), s);
                            }
                            let sink_error = guard.and_then(|g| g.error.lock().expect("sink error slot").take());
                            match sink_error {
                                Some(e) => (Status::Error, a.steps, Some(format!("trajectory store: {e}"))),
                                None => (a.status, a.steps, a.detail),
                            }
                        }
                        Err(p) => {
                            tracing::error!(task = %task.task_id, "executor panicked");
                            executor = factory();
                            (Status::Error, 0, Some(format!("panic: {}", panic_message(p.as_ref()))))
                        }
                    };
                    results.lock().expect("results").insert(
                        task.task_id.clone(),
                        TaskResult {
                            status,
                            steps,
                            duration_ms,
                            template_id: task.template_id.clone(),
                            level: task.level,
                            split: task.split,
                            detail,
                        },
                    );
                }
            });
        }
    });
    Ok(RunOutput {
        record: RunRecord {
            run_id: opts.run_id.clone(),
            agent_version: opts.agent_version.clone(),
            sample: opts.sample.clone(),
            results: results.into_inner().expect("results"),
            started_at,
            finished_at: Utc::now(),
        },
        scripts: scripts.into_inner().expect("scripts"),
    })
}
