//! Perceive-act records emitted while a task executes.
//!
//! Every agent writes through a [`Recorder`], which numbers events per
//! `(run_id, task_id)` and forwards them to an optional [`TrajectorySink`]
//! (the evaluation harness plugs its durable store in here).

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    PlanController,
    ApiPlanner,
    Shortlister,
    CodeAgent,
    BrowserPlanner,
    ActionAgent,
    ExtractionAgent,
    Judge,
    Context,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::PlanController => "plan_controller",
            AgentRole::ApiPlanner => "api_planner",
            AgentRole::Shortlister => "shortlister",
            AgentRole::CodeAgent => "code_agent",
            AgentRole::BrowserPlanner => "browser_planner",
            AgentRole::ActionAgent => "action_agent",
            AgentRole::ExtractionAgent => "extraction_agent",
            AgentRole::Judge => "judge",
            AgentRole::Context => "context",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Observation,
    Decision,
    Action,
    Result,
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub run_id: String,
    pub task_id: String,
    pub seq: u64,
    pub agent: AgentRole,
    pub kind: EventKind,
    pub payload: Value,
    pub wall_ms: f64,
}

impl TrajectoryEvent {
    /// Canonical single-line encoding with the wall-clock field zeroed, used
    /// for determinism comparisons.
    pub fn canonical_line(&self) -> String {
        let mut e = self.clone();
        e.wall_ms = 0.0;
        serde_json::to_string(&e).expect("trajectory events always serialize")
    }
}

/// Destination for trajectory events, e.g. a durable store.
pub trait TrajectorySink: Send + Sync {
    fn append(&self, event: &TrajectoryEvent) -> Result<(), String>;
}

/// Per-task event recorder. Not shared between tasks.
pub struct Recorder {
    run_id: String,
    task_id: String,
    next_seq: u64,
    started: Instant,
    events: Vec<TrajectoryEvent>,
    sink: Option<Arc<dyn TrajectorySink>>,
    sink_error: Option<String>,
}

impl Recorder {
    pub fn new(run_id: impl Into<String>, task_id: impl Into<String>) -> Self {
        Recorder {
            run_id: run_id.into(),
            task_id: task_id.into(),
            next_seq: 0,
            started: Instant::now(),
            events: Vec::new(),
            sink: None,
            sink_error: None,
        }
    }

    pub fn with_sink(mut self, sink: Arc<dyn TrajectorySink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn record(&mut self, agent: AgentRole, kind: EventKind, payload: Value) {
        let event = TrajectoryEvent {
            run_id: self.run_id.clone(),
            task_id: self.task_id.clone(),
            seq: self.next_seq,
            agent,
            kind,
            payload,
            wall_ms: self.started.elapsed().as_secs_f64() * 1000.0,
        };
        self.next_seq += 1;
        if let Some(sink) = &self.sink {
            if let Err(e) = sink.append(&event) {
                tracing::warn!(task = %self.task_id, error = %e, "trajectory sink rejected event");
                self.sink_error.get_or_insert(e);
            }
        }
        self.events.push(event);
    }

    pub fn events(&self) -> &[TrajectoryEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TrajectoryEvent> {
        self.events
    }

    /// First error reported by the sink, if any.
    pub fn sink_error(&self) -> Option<&str> {
        self.sink_error.as_deref()
    }
}

/// Canonical encoding of a whole trajectory, one event per line.
pub fn canonical_trace(events: &[TrajectoryEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.canonical_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Mutex;

    struct Collect(Mutex<Vec<u64>>);
    impl TrajectorySink for Collect {
        fn append(&self, event: &TrajectoryEvent) -> Result<(), String> {
            self.0.lock().unwrap().push(event.seq);
            Ok(())
        }
    }

    #[test]
    fn sequences_are_dense_and_forwarded() {
        let sink = Arc::new(Collect(Mutex::new(Vec::new())));
        let mut r = Recorder::new("r1", "t1").with_sink(sink.clone());
        for i in 0..4 {
            r.record(AgentRole::Context, EventKind::Decision, json!({ "i": i }));
        }
        let seqs: Vec<u64> = r.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3]);
        assert_eq!(*sink.0.lock().unwrap(), seqs);
    }

    #[test]
    fn canonical_line_drops_wall_clock() {
        let mut r = Recorder::new("r", "t");
        r.record(AgentRole::Judge, EventKind::Reflection, json!(null));
        let mut e = r.events()[0].clone();
        let a = e.canonical_line();
        e.wall_ms = 1234.5;
        assert_eq!(a, e.canonical_line());
        assert!(a.contains("\"agent\":\"judge\""));
    }
}
