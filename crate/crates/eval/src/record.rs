use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::manifest::BenchTask;
use crate::sample::SampleSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Normal,
    Challenge,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Normal => "normal",
            Split::Challenge => "challenge",
        }
    }
}

/// `failure` is the agent's doing (gave up, wrong answer); `error` is the
/// harness's (panic, broken store). Rates count both as not passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Failure,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub status: Status,
    pub steps: u32,
    pub duration_ms: f64,
    pub template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Final answer or failure reason, for drill-down.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl TaskResult {
    pub fn passed(&self) -> bool {
        self.status == Status::Success
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub agent_version: String,
    pub sample: SampleSpec,
    pub results: BTreeMap<String, TaskResult>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunRecord {
    /// Whether the result keys are exactly the sampled task ids.
    pub fn covers_exactly(&self, tasks: &[BenchTask]) -> bool {
        let want: BTreeSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
        want.len() == tasks.len() && self.results.keys().map(String::as_str).eq(want.iter().copied())
    }

    /// The results with timing removed, for equivalence checks.
    pub fn timeless_results(&self) -> BTreeMap<String, TaskResult> {
        self.results
            .iter()
            .map(|(k, r)| {
                let mut r = r.clone();
                r.duration_ms = 0.0;
                (k.clone(), r)
            })
            .collect()
    }
}
