//! Browser sub-agent: observation types, the driver seam, a deterministic
//! page-graph simulator, grounding with a popup-aware feedback loop, and the
//! step planner with its reflection judge and extraction agent.

pub mod adapter;
pub mod agent;
pub mod ground;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapter::{WireBrowserDriver, WireCommand, WireServer};
pub use agent::{BrowserAgent, BrowserAgentConfig, BrowserDecision, ExtractedAnswer, JudgeVerdict};
pub use ground::{act, dismiss_overlay, ground, FEEDBACK_LOOP_CAP};
pub use sim::{NodeDef, OverlayDef, PageDef, SimBrowser, SimFactory, SiteGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxNode {
    pub node_id: u32,
    pub role: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub bounds: (i32, i32, u32, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occluded_by: Option<u32>,
    /// Containing node, used to find controls inside a dialog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub url: String,
    pub ax_tree: Vec<AxNode>,
    pub screenshot_ref: String,
    pub overlay_present: bool,
    pub capture_seq: u64,
}

impl Observation {
    pub fn node(&self, id: u32) -> Option<&AxNode> {
        self.ax_tree.iter().find(|n| n.node_id == id)
    }

    /// True when `id` is `ancestor` or sits beneath it.
    pub fn descends_from(&self, id: u32, ancestor: u32) -> bool {
        let mut cur = Some(id);
        let mut hops = 0;
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            hops += 1;
            if hops > self.ax_tree.len() {
                return false;
            }
            cur = self.node(c).and_then(|n| n.parent);
        }
        false
    }

    /// Compact listing of interactable nodes for planner prompts.
    pub fn outline(&self) -> String {
        let mut out = format!("url: {}\n", self.url);
        for n in &self.ax_tree {
            let mut line = format!("[{}] {} \"{}\"", n.node_id, n.role, n.name);
            if let Some(v) = &n.value {
                line.push_str(&format!(" value=\"{v}\""));
            }
            if let Some(d) = n.occluded_by {
                line.push_str(&format!(" (covered by {d})"));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Type,
    Select,
    GoBack,
    Finish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrowserAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<String>,
}

impl BrowserAction {
    pub fn click(target: u32) -> Self {
        BrowserAction {
            kind: ActionKind::Click,
            target: Some(target),
            text: None,
            option: None,
        }
    }

    pub fn validate(&self) -> Result<(), BrowserError> {
        let bad = |m: &str| Err(BrowserError::InvalidAction(m.to_string()));
        match self.kind {
            ActionKind::Click | ActionKind::Type | ActionKind::Select if self.target.is_none() => {
                bad("action requires a target")
            }
            ActionKind::Type if self.text.is_none() => bad("type requires text"),
            ActionKind::Select if self.option.is_none() => bad("select requires an option"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub applied: BrowserAction,
    pub success: bool,
    pub feedback: Option<String>,
    pub attempts: u32,
    /// Dialogs dismissed on the way, by node id.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dismissed: Vec<u32>,
    pub new_observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageContent {
    pub markdown: String,
    pub screenshot_ref: String,
    pub url: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrowserError {
    #[error("browser session is closed")]
    SessionClosed,
    #[error("no element matches `{0}`")]
    TargetNotFound(String),
    #[error("`{instruction}` matches several elements: {candidates:?}")]
    AmbiguousTarget { instruction: String, candidates: Vec<u32> },
    #[error("action failed after {attempts} attempts: {feedback}")]
    ActionFailed { attempts: u32, feedback: String },
    #[error("not on page: {0}")]
    NotOnPage(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    /// The page refused an action (covered target, wrong element kind, no effect).
    #[error("{0}")]
    Rejected(String),
    #[error("navigation failed: {0}")]
    Navigation(String),
}

/// Remote-control seam over a browser session.
pub trait BrowserDriver: Send {
    fn navigate(&mut self, url: &str) -> Result<(), BrowserError>;
    fn click(&mut self, node: u32) -> Result<(), BrowserError>;
    fn type_text(&mut self, node: u32, text: &str) -> Result<(), BrowserError>;
    fn select(&mut self, node: u32, option: &str) -> Result<(), BrowserError>;
    fn go_back(&mut self) -> Result<(), BrowserError>;
    /// Sends Escape to the page, closing a dismissable dialog.
    fn press_escape(&mut self) -> Result<(), BrowserError>;
    fn snapshot(&mut self) -> Result<Observation, BrowserError>;
    fn page_content(&mut self) -> Result<PageContent, BrowserError>;
    fn close(&mut self);
}

/// Opens fresh driver sessions, one per task.
pub trait DriverFactory: Send + Sync {
    fn open(&self) -> Box<dyn BrowserDriver>;
}

/// `scheme://authority` prefix of a URL.
pub fn origin(url: &str) -> &str {
    match url.find("://") {
        Some(i) => {
            let rest = &url[i + 3..];
            let end = rest.find(['/', '?', '#']).map(|j| i + 3 + j).unwrap_or(url.len());
            &url[..end]
        }
        None => url,
    }
}

/// Applies one primitive action through a driver.
pub fn dispatch(driver: &mut dyn BrowserDriver, action: &BrowserAction) -> Result<(), BrowserError> {
    action.validate()?;
    match action.kind {
        ActionKind::Click => driver.click(action.target.unwrap()),
        ActionKind::Type => driver.type_text(action.target.unwrap(), action.text.as_deref().unwrap()),
        ActionKind::Select => driver.select(action.target.unwrap(), action.option.as_deref().unwrap()),
        ActionKind::GoBack => driver.go_back(),
        ActionKind::Finish => Ok(()),
    }
}
