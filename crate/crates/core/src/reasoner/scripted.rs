use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PromptBundle, Reasoner, ReasonerError, ReasonerOutput};

/// Canned structured outputs.
///
/// Lookup order: exact fingerprint entry, then the first matching rule, then
/// the default. Every step is a pure function of the bundle content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub entries: BTreeMap<String, Value>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    /// Substrings that must all occur in the instructions or fragments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    /// Substrings none of which may occur.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent: Vec<String>,
    pub output: Value,
}

impl ScriptRule {
    pub fn new(agent: &str, output: Value) -> Self {
        ScriptRule {
            agent: Some(agent.to_string()),
            task: None,
            contains: Vec::new(),
            absent: Vec::new(),
            output,
        }
    }

    pub fn when(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn unless(mut self, needle: impl Into<String>) -> Self {
        self.absent.push(needle.into());
        self
    }

    pub fn for_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    fn matches(&self, bundle: &PromptBundle, haystack: &str) -> bool {
        if let Some(agent) = &self.agent {
            if agent != &bundle.agent {
                return false;
            }
        }
        if let Some(task) = &self.task {
            if task != &bundle.task_id {
                return false;
            }
        }
        self.contains.iter().all(|n| haystack.contains(n.as_str()))
            && !self.absent.iter().any(|n| haystack.contains(n.as_str()))
    }
}

impl Script {
    pub fn from_json(text: &str) -> Result<Script, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    pub fn rule(mut self, rule: ScriptRule) -> Self {
        self.rules.push(rule);
        self
    }

    /// Appends all rules and entries of `other` after this script's own.
    pub fn extend(&mut self, other: Script) {
        self.entries.extend(other.entries);
        self.rules.extend(other.rules);
        if self.default.is_none() {
            self.default = other.default;
        }
    }

    pub fn lookup(&self, bundle: &PromptBundle) -> Option<&Value> {
        if let Some(v) = self.entries.get(&bundle.step_fingerprint) {
            return Some(v);
        }
        let haystack = bundle.haystack();
        self.rules
            .iter()
            .find(|r| r.matches(bundle, &haystack))
            .map(|r| &r.output)
            .or(self.default.as_ref())
    }
}

pub struct ScriptedReasoner {
    script: Script,
    id: String,
}

impl ScriptedReasoner {
    pub fn new(script: Script) -> Self {
        ScriptedReasoner {
            script,
            id: "scripted".to_string(),
        }
    }

    pub fn script(&self) -> &Script {
        &self.script
    }
}

impl Reasoner for ScriptedReasoner {
    fn complete(&self, bundle: &PromptBundle) -> Result<ReasonerOutput, ReasonerError> {
        let value = self
            .script
            .lookup(bundle)
            .ok_or_else(|| ReasonerError::ScriptMiss {
                fingerprint: bundle.step_fingerprint.clone(),
                agent: bundle.agent.clone(),
            })?;
        bundle
            .output_schema
            .validate(value)
            .map_err(|e| ReasonerError::SchemaViolation {
                attempts: 1,
                message: e.to_string(),
            })?;
        Ok(ReasonerOutput {
            structured_value: value.clone(),
            raw_text: value.to_string(),
            attempt_count: 1,
            backend_id: self.id.clone(),
        })
    }

    fn backend_id(&self) -> &str {
        &self.id
    }
}
