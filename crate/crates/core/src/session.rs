//! Per-task execution context shared by the controller and its sub-agents.

use serde_json::{json, Value};

use crate::plan::Task;
use crate::reasoner::{PromptBundle, PromptBundleBuilder, ReasonerError, ReasonerHandle, Schema};
use crate::trajectory::{AgentRole, EventKind, Recorder};
use crate::variables::VariableStore;

pub struct TaskSession {
    pub task: Task,
    pub recorder: Recorder,
    /// Fragments from context enrichment, injected into every planner prompt.
    pub guidance: Vec<(String, String)>,
    cursor: u64,
}

impl TaskSession {
    pub fn new(task: Task, recorder: Recorder) -> Self {
        TaskSession {
            task,
            recorder,
            guidance: Vec::new(),
            cursor: 0,
        }
    }

    /// Prompt builder carrying the task id and the next reasoner cursor.
    pub fn prompt(&mut self, agent: &str) -> PromptBundleBuilder {
        let cursor = self.cursor;
        self.cursor += 1;
        PromptBundle::builder(agent, self.task.id.clone(), cursor)
    }

    pub fn record(&mut self, agent: AgentRole, kind: EventKind, payload: Value) {
        self.recorder.record(agent, kind, payload);
    }

    /// Sends a bundle and returns the validated structured value. Failures are
    /// recorded before being returned.
    pub fn ask(&mut self, reasoner: &ReasonerHandle, role: AgentRole, bundle: PromptBundle) -> Result<Value, ReasonerError> {
        match reasoner.complete(&bundle) {
            Ok(out) => Ok(out.structured_value),
            Err(e) => {
                self.record(
                    role,
                    EventKind::Result,
                    json!({"reasoner_error": e.to_string(), "fingerprint": bundle.step_fingerprint}),
                );
                Err(e)
            }
        }
    }
}

/// Shorthand for an object schema with every field optional except `required`.
pub fn schema_of(fields: &[(&str, Schema)], required: &[&str]) -> Schema {
    Schema::object(
        fields
            .iter()
            .map(|(n, s)| (*n, s.clone(), required.contains(n))),
    )
}

/// Prompt fragment listing bound variables with their types and a short preview.
pub fn variables_fragment(vars: &VariableStore) -> String {
    if vars.is_empty() {
        return "(none)".into();
    }
    vars.iter()
        .map(|v| {
            let mut preview = crate::value::render(&v.value);
            if preview.chars().count() > 120 {
                preview = preview.chars().take(119).collect::<String>() + "…";
            }
            format!("{}: {} = {preview}", v.name, v.type_tag)
        })
        .collect::<Vec<_>>()
        .join("\n")
}
