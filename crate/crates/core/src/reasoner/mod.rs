//! Uniform interface to language-model backends.
//!
//! Agents assemble a [`PromptBundle`], hand it to a [`Reasoner`], and get back a
//! [`ReasonerOutput`] whose structured value has already been validated against
//! the bundle's output schema. Two backends ship: a remote chat-completion
//! client and a deterministic scripted backend keyed by bundle fingerprints.

mod remote;
pub mod schema;
mod scripted;

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use remote::{ChatMessage, ChatRequest, ChatTransport, HttpChatTransport, RemoteReasoner};
pub use schema::{Schema, SchemaError};
pub use scripted::{Script, ScriptRule, ScriptedReasoner};

/// Default number of repair re-prompts after a schema violation.
pub const DEFAULT_RETRY_BUDGET: u32 = 2;
/// Default cap on concurrent in-flight remote requests.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
/// Environment variable holding the remote backend credential.
pub const API_KEY_ENV: &str = "AGENT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    /// Name of the agent issuing the request, e.g. `plan_controller`.
    pub agent: String,
    pub task_id: String,
    pub cursor: u64,
    pub role_preamble: String,
    pub instructions: String,
    pub context_fragments: Vec<(String, String)>,
    pub output_schema: Schema,
    pub step_fingerprint: String,
}

impl PromptBundle {
    pub fn builder(
        agent: impl Into<String>,
        task_id: impl Into<String>,
        cursor: u64,
    ) -> PromptBundleBuilder {
        PromptBundleBuilder {
            agent: agent.into(),
            task_id: task_id.into(),
            cursor,
            role_preamble: String::new(),
            instructions: String::new(),
            fragments: Vec::new(),
            schema: Schema::Any,
        }
    }

    /// Text searched by scripted rules: instructions followed by every fragment.
    pub fn haystack(&self) -> String {
        let mut s = self.instructions.clone();
        for (label, text) in &self.context_fragments {
            s.push('\n');
            s.push_str(label);
            s.push('\n');
            s.push_str(text);
        }
        s
    }

    pub fn fragment(&self, label: &str) -> Option<&str> {
        self.context_fragments
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, t)| t.as_str())
    }
}

pub struct PromptBundleBuilder {
    agent: String,
    task_id: String,
    cursor: u64,
    role_preamble: String,
    instructions: String,
    fragments: Vec<(String, String)>,
    schema: Schema,
}

impl PromptBundleBuilder {
    pub fn preamble(mut self, text: impl Into<String>) -> Self {
        self.role_preamble = text.into();
        self
    }

    pub fn instructions(mut self, text: impl Into<String>) -> Self {
        self.instructions = text.into();
        self
    }

    pub fn fragment(mut self, label: impl Into<String>, text: impl Into<String>) -> Self {
        self.fragments.push((label.into(), text.into()));
        self
    }

    pub fn fragments(mut self, items: impl IntoIterator<Item = (String, String)>) -> Self {
        self.fragments.extend(items);
        self
    }

    pub fn schema(mut self, schema: Schema) -> Self {
        self.schema = schema;
        self
    }

    pub fn build(self) -> PromptBundle {
        let mut bundle = PromptBundle {
            agent: self.agent,
            task_id: self.task_id,
            cursor: self.cursor,
            role_preamble: self.role_preamble,
            instructions: self.instructions,
            context_fragments: self.fragments,
            output_schema: self.schema,
            step_fingerprint: String::new(),
        };
        bundle.step_fingerprint = fingerprint(&bundle);
        bundle
    }
}

/// Stable content hash of a bundle. Every field except the fingerprint itself
/// is fed to SHA-256 with length prefixes; fragment order is significant.
pub fn fingerprint(bundle: &PromptBundle) -> String {
    fn put(h: &mut Sha256, bytes: &[u8]) {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    let mut fragments = Sha256::new();
    for (label, text) in &bundle.context_fragments {
        put(&mut fragments, label.as_bytes());
        put(&mut fragments, text.as_bytes());
    }
    let fragment_digest = fragments.finalize();

    let mut h = Sha256::new();
    put(&mut h, b"bundle/v1");
    put(&mut h, bundle.agent.as_bytes());
    put(&mut h, bundle.task_id.as_bytes());
    h.update(bundle.cursor.to_le_bytes());
    put(&mut h, bundle.role_preamble.as_bytes());
    put(&mut h, bundle.instructions.as_bytes());
    let schema = serde_json::to_vec(&bundle.output_schema).expect("schema serializes");
    put(&mut h, &schema);
    put(&mut h, &fragment_digest);
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerOutput {
    pub structured_value: Value,
    pub raw_text: String,
    pub attempt_count: u32,
    pub backend_id: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasonerError {
    #[error("output violated schema after {attempts} attempt(s): {message}")]
    SchemaViolation { attempts: u32, message: String },
    #[error("script has no entry for fingerprint {fingerprint} (agent {agent})")]
    ScriptMiss { fingerprint: String, agent: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

pub trait Reasoner: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<ReasonerOutput, ReasonerError>;

    fn backend_id(&self) -> &str;
}

pub type ReasonerHandle = Arc<dyn Reasoner>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteChat,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    #[serde(default)]
    pub decoding: Decoding,
    pub script_path: Option<PathBuf>,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_retry_budget() -> u32 {
    DEFAULT_RETRY_BUDGET
}

fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl BackendConfig {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            decoding: Decoding::default(),
            script_path: Some(path.into()),
            retry_budget: DEFAULT_RETRY_BUDGET,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::RemoteChat,
            endpoint: Some(endpoint.into()),
            model_name: Some(model.into()),
            decoding: Decoding::default(),
            script_path: None,
            retry_budget: DEFAULT_RETRY_BUDGET,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn validate(&self) -> Result<(), ReasonerError> {
        match self.kind {
            BackendKind::RemoteChat if self.endpoint.is_none() => Err(ReasonerError::Config(
                "remote_chat backend requires an endpoint".into(),
            )),
            BackendKind::Scripted if self.script_path.is_none() => Err(ReasonerError::Config(
                "scripted backend requires a script_path".into(),
            )),
            _ if self.max_in_flight == 0 => {
                Err(ReasonerError::Config("max_in_flight must be ≥ 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Builds a backend from configuration.
pub fn connect(config: &BackendConfig) -> Result<ReasonerHandle, ReasonerError> {
    config.validate()?;
    match config.kind {
        BackendKind::Scripted => {
            let path = config.script_path.as_ref().expect("validated");
            let text = std::fs::read_to_string(path).map_err(|e| {
                ReasonerError::Config(format!("cannot read script {}: {e}", path.display()))
            })?;
            let script = Script::from_json(&text)
                .map_err(|e| ReasonerError::Config(format!("bad script: {e}")))?;
            Ok(Arc::new(ScriptedReasoner::new(script)))
        }
        BackendKind::RemoteChat => {
            let endpoint = config.endpoint.clone().expect("validated");
            let api_key = std::env::var(API_KEY_ENV).ok();
            let transport = HttpChatTransport::new(endpoint, api_key)?;
            Ok(Arc::new(RemoteReasoner::new(config.clone(), Arc::new(transport))))
        }
    }
}

/// One-shot completion against a configured backend.
pub fn complete(
    bundle: &PromptBundle,
    config: &BackendConfig,
) -> Result<ReasonerOutput, ReasonerError> {
    connect(config)?.complete(bundle)
}

/// Wraps a backend and captures every successful completion as a script entry,
/// so a run can later be replayed with a [`ScriptedReasoner`].
pub struct RecordingReasoner {
    inner: ReasonerHandle,
    script: Mutex<Script>,
}

impl RecordingReasoner {
    pub fn new(inner: ReasonerHandle) -> Self {
        RecordingReasoner {
            inner,
            script: Mutex::new(Script::default()),
        }
    }

    pub fn script(&self) -> Script {
        self.script.lock().expect("script lock").clone()
    }
}

impl Reasoner for RecordingReasoner {
    fn complete(&self, bundle: &PromptBundle) -> Result<ReasonerOutput, ReasonerError> {
        let out = self.inner.complete(bundle)?;
        self.script
            .lock()
            .expect("script lock")
            .entries
            .insert(bundle.step_fingerprint.clone(), out.structured_value.clone());
        Ok(out)
    }

    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
}
