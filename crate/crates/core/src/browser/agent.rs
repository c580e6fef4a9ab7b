//! Step planner, reflection judge and extraction agent for browser sub-tasks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::ground::act;
use super::{BrowserDriver, BrowserError, Observation, PageContent};
use crate::plan::{SubTask, SubTaskResult};
use crate::reasoner::{ReasonerError, ReasonerHandle, Schema};
use crate::session::{schema_of, variables_fragment, TaskSession};
use crate::trajectory::{AgentRole, EventKind};
use crate::value::{parse_scalar, render};
use crate::variables::{Variable, VariableStore};

pub const DEFAULT_BROWSER_STEP_CAP: u32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrowserAgentConfig {
    pub step_cap: u32,
    pub stm_cap: usize,
}

impl Default for BrowserAgentConfig {
    fn default() -> Self {
        BrowserAgentConfig {
            step_cap: DEFAULT_BROWSER_STEP_CAP,
            stm_cap: crate::api_agent::DEFAULT_STM_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum BrowserDecision {
    Act {
        instruction: String,
    },
    Extract {
        question: String,
    },
    Finish {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        values: Map<String, Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure: Option<String>,
    },
}

impl BrowserDecision {
    fn label(&self) -> String {
        match self {
            BrowserDecision::Act { instruction } => format!("act: {instruction}"),
            BrowserDecision::Extract { question } => format!("extract: {question}"),
            BrowserDecision::Finish { failure: Some(f), .. } => format!("finish(failure): {f}"),
            BrowserDecision::Finish { answer, .. } => {
                format!("finish: {}", answer.as_deref().unwrap_or(""))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub answer: String,
    pub spans: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum JudgeVerdict {
    Approve,
    Revise { hint: String },
}

#[derive(Debug, Clone, PartialEq)]
struct MemoryEntry {
    decision: BrowserDecision,
    outcome: String,
    failed: bool,
}

fn planner_schema() -> Schema {
    schema_of(
        &[
            ("decision", Schema::enumeration(["act", "extract", "finish"])),
            ("instruction", Schema::String),
            ("question", Schema::String),
            ("answer", Schema::String),
            ("values", Schema::Any),
            ("failure", Schema::String),
        ],
        &["decision"],
    )
}

fn extract_schema() -> Schema {
    schema_of(
        &[
            ("found", Schema::Boolean),
            ("answer", Schema::String),
            ("spans", Schema::array(Schema::String)),
        ],
        &["found"],
    )
}

fn judge_schema() -> Schema {
    schema_of(
        &[("verdict", Schema::enumeration(["approve", "revise"])), ("hint", Schema::String)],
        &["verdict"],
    )
}

/// Answers a question from page markdown only.
pub fn extract(
    question: &str,
    content: &PageContent,
    reasoner: &ReasonerHandle,
    session: &mut TaskSession,
) -> Result<ExtractedAnswer, BrowserError> {
    if content.markdown.trim().is_empty() {
        return Err(BrowserError::NotOnPage(question.to_string()));
    }
    let bundle = session
        .prompt(AgentRole::ExtractionAgent.as_str())
        .preamble("You answer questions using only the page text given.")
        .instructions(question.to_string())
        .fragment("url", content.url.clone())
        .fragment("page", content.markdown.clone())
        .schema(extract_schema())
        .build();
    let out = session
        .ask(reasoner, AgentRole::ExtractionAgent, bundle)
        .map_err(|e| BrowserError::NotOnPage(format!("{question} ({e})")))?;
    let answer = out.get("answer").and_then(Value::as_str).map(str::to_string);
    match (out["found"].as_bool(), answer) {
        (Some(true), Some(answer)) => {
            let spans = out
                .get("spans")
                .and_then(Value::as_array)
                .map(|xs| {
                    xs.iter()
                        .filter_map(Value::as_str)
                        .filter(|s| content.markdown.contains(*s))
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            Ok(ExtractedAnswer { answer, spans })
        }
        _ => Err(BrowserError::NotOnPage(question.to_string())),
    }
}

pub struct BrowserAgent {
    reasoner: ReasonerHandle,
    config: BrowserAgentConfig,
}

impl BrowserAgent {
    pub fn new(reasoner: ReasonerHandle, config: BrowserAgentConfig) -> Self {
        BrowserAgent { reasoner, config }
    }

    fn memory_fragment(stm: &VecDeque<MemoryEntry>) -> String {
        if stm.is_empty() {
            return "(empty)".into();
        }
        stm.iter()
            .map(|m| format!("- {} -> {}", m.decision.label(), m.outcome))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn plan_step(
        &self,
        subtask: &SubTask,
        inputs: &VariableStore,
        obs: &Observation,
        stm_text: &str,
        hint: Option<&str>,
        session: &mut TaskSession,
    ) -> Result<BrowserDecision, ReasonerError> {
        let mut prompt = session
            .prompt(AgentRole::BrowserPlanner.as_str())
            .preamble("You drive a web browser one step at a time.")
            .instructions(format!(
                "Goal: {}\nOutputs to report: {}",
                subtask.goal,
                if subtask.produces.is_empty() { "(none)".to_string() } else { subtask.produces.join(", ") }
            ))
            .fragment("observation", obs.outline())
            .fragment("variables", variables_fragment(inputs))
            .fragment("memory", stm_text.to_string())
            .fragments(session.guidance.clone());
        if let Some(h) = hint {
            prompt = prompt.fragment("hint", h);
        }
        let out = session.ask(&self.reasoner, AgentRole::BrowserPlanner, prompt.schema(planner_schema()).build())?;
        let text = |k: &str| out.get(k).and_then(Value::as_str).filter(|s| !s.trim().is_empty());
        let decision = match out["decision"].as_str() {
            Some("act") => text("instruction").map(|i| BrowserDecision::Act {
                instruction: i.to_string(),
            }),
            Some("extract") => text("question").map(|q| BrowserDecision::Extract { question: q.to_string() }),
            _ => Some(BrowserDecision::Finish {
                answer: text("answer").map(str::to_string),
                values: out.get("values").and_then(Value::as_object).cloned().unwrap_or_default(),
                failure: text("failure").map(str::to_string),
            }),
        };
        decision.ok_or_else(|| ReasonerError::SchemaViolation {
            attempts: 1,
            message: "decision is missing its instruction or question".into(),
        })
    }

    fn is_risky(decision: &BrowserDecision, stm: &VecDeque<MemoryEntry>) -> bool {
        match decision {
            BrowserDecision::Act { .. } => stm.iter().any(|m| m.failed && m.decision == *decision),
            BrowserDecision::Finish { failure: None, .. } => {
                !stm.iter().any(|m| matches!(m.decision, BrowserDecision::Extract { .. }) && !m.failed)
            }
            _ => false,
        }
    }

    /// Reviews a risky decision. Non-risky decisions never reach the reasoner.
    pub fn judge(&self, stm_text: &str, proposed: &BrowserDecision, session: &mut TaskSession) -> JudgeVerdict {
        let bundle = session
            .prompt(AgentRole::Judge.as_str())
            .preamble("You check a browser agent's next decision against its history.")
            .instructions(format!("Proposed: {}", proposed.label()))
            .fragment("memory", stm_text.to_string())
            .schema(judge_schema())
            .build();
        match session.ask(&self.reasoner, AgentRole::Judge, bundle) {
            Ok(v) if v["verdict"] == "revise" => JudgeVerdict::Revise {
                hint: v
                    .get("hint")
                    .and_then(Value::as_str)
                    .unwrap_or("reconsider the last step")
                    .to_string(),
            },
            _ => JudgeVerdict::Approve,
        }
    }

    pub fn run_subtask(
        &self,
        subtask: &SubTask,
        inputs: &VariableStore,
        driver: &mut dyn BrowserDriver,
        session: &mut TaskSession,
    ) -> SubTaskResult {
        let mut stm: VecDeque<MemoryEntry> = VecDeque::new();
        let mut hint: Option<String> = None;
        let mut last_extract: Option<String> = None;
        let remember = |stm: &mut VecDeque<MemoryEntry>, entry: MemoryEntry| {
            stm.push_back(entry);
            while stm.len() > self.config.stm_cap {
                stm.pop_front();
            }
        };
        for step in 1..=self.config.step_cap {
            let obs = match driver.snapshot() {
                Ok(o) => o,
                Err(e) => return SubTaskResult::failed(&subtask.id, e.to_string(), step - 1),
            };
            session.record(
                AgentRole::BrowserPlanner,
                EventKind::Observation,
                json!({"subtask": subtask.id, "url": obs.url, "screenshot": obs.screenshot_ref,
                       "overlay": obs.overlay_present, "nodes": obs.ax_tree.len()}),
            );
            let stm_text = Self::memory_fragment(&stm);
            let decision = match self.plan_step(subtask, inputs, &obs, &stm_text, hint.as_deref(), session) {
                Ok(d) => d,
                Err(e) => return SubTaskResult::failed(&subtask.id, format!("planner: {e}"), step),
            };
            hint = None;
            session.record(
                AgentRole::BrowserPlanner,
                EventKind::Decision,
                json!({"subtask": subtask.id, "step": step, "decision": decision}),
            );
            if Self::is_risky(&decision, &stm) {
                let verdict = self.judge(&stm_text, &decision, session);
                session.record(AgentRole::Judge, EventKind::Reflection, json!({"subtask": subtask.id, "verdict": verdict}));
                if let JudgeVerdict::Revise { hint: h } = verdict {
                    remember(
                        &mut stm,
                        MemoryEntry {
                            decision,
                            outcome: format!("revised: {h}"),
                            failed: false,
                        },
                    );
                    hint = Some(h);
                    continue;
                }
            }
            match &decision {
                BrowserDecision::Act { instruction } => {
                    let (outcome, failed) = match act(instruction, driver, &self.reasoner, session) {
                        Ok(o) => {
                            let mut text = format!("ok, now at {}", o.new_observation.url);
                            if !o.dismissed.is_empty() {
                                text.push_str(&format!(" (dismissed {:?})", o.dismissed));
                            }
                            (text, false)
                        }
                        Err(BrowserError::SessionClosed) => {
                            return SubTaskResult::failed(&subtask.id, "browser session is closed", step)
                        }
                        Err(e) => (format!("failed: {e}"), true),
                    };
                    remember(&mut stm, MemoryEntry { decision, outcome, failed });
                }
                BrowserDecision::Extract { question } => {
                    let result = driver
                        .page_content()
                        .and_then(|content| extract(question, &content, &self.reasoner, session));
                    let (outcome, failed) = match result {
                        Ok(a) => {
                            session.record(
                                AgentRole::ExtractionAgent,
                                EventKind::Result,
                                json!({"subtask": subtask.id, "question": question, "answer": a.answer, "spans": a.spans}),
                            );
                            let text = format!("answer: {}", a.answer);
                            last_extract = Some(a.answer);
                            (text, false)
                        }
                        Err(BrowserError::SessionClosed) => {
                            return SubTaskResult::failed(&subtask.id, "browser session is closed", step)
                        }
                        Err(e) => (e.to_string(), true),
                    };
                    remember(&mut stm, MemoryEntry { decision, outcome, failed });
                }
                BrowserDecision::Finish {
                    failure: Some(f), ..
                } => return SubTaskResult::failed(&subtask.id, f.clone(), step),
                BrowserDecision::Finish { answer, values, .. } => {
                    let answer = answer.clone().or_else(|| last_extract.clone());
                    let mut produced = Vec::new();
                    for name in &subtask.produces {
                        let value = values.get(name).cloned().or_else(|| {
                            (subtask.produces.len() == 1)
                                .then(|| answer.as_deref().map(parse_scalar))
                                .flatten()
                        });
                        match value {
                            Some(v) => produced.push(Variable::new(name.clone(), v, subtask.id.clone())),
                            None => {
                                return SubTaskResult::failed(
                                    &subtask.id,
                                    format!("finished without producing `{name}`"),
                                    step,
                                )
                            }
                        }
                    }
                    let answer = answer.or_else(|| produced.first().map(|v| render(&v.value)));
                    return SubTaskResult::succeeded(&subtask.id, produced, answer, step);
                }
            }
        }
        SubTaskResult::failed(
            &subtask.id,
            format!("step cap of {} reached", self.config.step_cap),
            self.config.step_cap,
        )
    }
}
