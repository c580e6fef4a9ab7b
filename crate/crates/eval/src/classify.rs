//! Human root-cause labels on failed tasks.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::RunRecord;

pub const DEFAULT_LABELS: [&str; 8] = [
    "grounding-failure",
    "popup-obstruction",
    "shortlist-miss",
    "variable-loss",
    "reflection-miss",
    "plan-error",
    "extraction-error",
    "harness-error",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub labels: Vec<String>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy {
            labels: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Taxonomy {
    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}

/// What a client submits; the server stamps `created_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewClassification {
    pub run_id: String,
    pub task_id: String,
    pub label: String,
    #[serde(default)]
    pub note: String,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorClassification {
    pub run_id: String,
    pub task_id: String,
    pub label: String,
    pub note: String,
    pub author: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("run `{run}` has no task `{task}`")]
    UnknownTask { run: String, task: String },
    #[error("label `{0}` is not in the taxonomy")]
    UnknownLabel(String),
    #[error("`{0}` must not be empty")]
    Empty(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub struct ClassificationStore {
    path: Option<PathBuf>,
    taxonomy: Taxonomy,
    items: Mutex<Vec<ErrorClassification>>,
}

impl ClassificationStore {
    pub fn in_memory(taxonomy: Taxonomy) -> Self {
        ClassificationStore {
            path: None,
            taxonomy,
            items: Mutex::new(Vec::new()),
        }
    }

    /// Appends go to a line-per-record file; existing lines are loaded.
    pub fn open(path: impl Into<PathBuf>, taxonomy: Taxonomy) -> Result<Self, ClassifyError> {
        let path = path.into();
        let mut items = Vec::new();
        if let Ok(text) = fs::read_to_string(&path) {
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match serde_json::from_str(line) {
                    Ok(c) => items.push(c),
                    Err(e) => tracing::warn!(error = %e, "skipping unreadable classification line"),
                }
            }
        }
        Ok(ClassificationStore {
            path: Some(path),
            taxonomy,
            items: Mutex::new(items),
        })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// Validates against the run the label is for and stores it.
    pub fn record(&self, c: NewClassification, run: &RunRecord) -> Result<ErrorClassification, ClassifyError> {
        if c.author.trim().is_empty() {
            return Err(ClassifyError::Empty("author"));
        }
        if c.label.trim().is_empty() {
            return Err(ClassifyError::Empty("label"));
        }
        if !self.taxonomy.contains(&c.label) {
            return Err(ClassifyError::UnknownLabel(c.label));
        }
        if !run.results.contains_key(&c.task_id) {
            return Err(ClassifyError::UnknownTask {
                run: c.run_id,
                task: c.task_id,
            });
        }
        let stored = ErrorClassification {
            run_id: c.run_id,
            task_id: c.task_id,
            label: c.label,
            note: c.note,
            author: c.author,
            created_at: Utc::now(),
        };
        let mut items = self.items.lock().expect("classification lock");
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            let mut line = serde_json::to_vec(&stored).expect("classifications serialize");
            line.push(b'\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(&line)?;
            f.sync_data()?;
        }
        items.push(stored.clone());
        Ok(stored)
    }

    /// Every label recorded for `run_id`, oldest first.
    pub fn list(&self, run_id: &str) -> Vec<ErrorClassification> {
        self.items
            .lock()
            .expect("classification lock")
            .iter()
            .filter(|c| c.run_id == run_id)
            .cloned()
            .collect()
    }
}
