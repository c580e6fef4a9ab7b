//! Plan-execute agent for API sub-tasks: shortlist tools, write a step
//! program, run it against the registry, reflect on failures.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::plan::{SubTask, SubTaskResult};
use crate::program::{check_program, execute_program, parse_program, ExecutionResult, StepProgram};
use crate::reasoner::{ReasonerError, ReasonerHandle, Schema};
use crate::registry::{RegistryError, RegistryHandle, ToolSpec};
use crate::session::{schema_of, variables_fragment, TaskSession};
use crate::trajectory::{AgentRole, EventKind};
use crate::variables::{Variable, VariableStore};

pub const DEFAULT_STEP_CAP: u32 = 12;
pub const DEFAULT_STM_CAP: usize = 10;
pub const DEFAULT_SHORTLIST_K: usize = 8;
/// Extra lexical candidates requested on each re-shortlist.
const RESHORTLIST_WIDEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiAgentConfig {
    pub step_cap: u32,
    pub stm_cap: usize,
    pub shortlist_k: usize,
    /// Repair attempts when a generated program fails to parse or check.
    pub retry_budget: u32,
}

impl Default for ApiAgentConfig {
    fn default() -> Self {
        ApiAgentConfig {
            step_cap: DEFAULT_STEP_CAP,
            stm_cap: DEFAULT_STM_CAP,
            shortlist_k: DEFAULT_SHORTLIST_K,
            retry_budget: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Shortlisting,
    Programming,
    Executing,
    Reflecting,
    Done,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Shortlisting => "shortlisting",
            Phase::Programming => "programming",
            Phase::Executing => "executing",
            Phase::Reflecting => "reflecting",
            Phase::Done => "done",
        }
    }

    /// Allowed transitions: shortlisting → programming → executing →
    /// (reflecting → programming)* → done. Any phase may end early in done.
    pub fn may_follow(self, prev: Phase) -> bool {
        matches!(
            (prev, self),
            (Phase::Shortlisting, Phase::Programming)
                | (Phase::Programming, Phase::Executing)
                | (Phase::Executing, Phase::Reflecting)
                | (Phase::Reflecting, Phase::Programming)
                | (_, Phase::Done)
        ) && prev != Phase::Done
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiPlannerState {
    pub subtask: SubTask,
    /// (decision, outcome summary), oldest first.
    pub stm: VecDeque<(String, String)>,
    pub shortlist: Vec<ToolSpec>,
    pub variables: VariableStore,
    pub iteration: u32,
    pub phase: Phase,
    stm_cap: usize,
}

impl ApiPlannerState {
    pub fn new(subtask: SubTask, variables: VariableStore, stm_cap: usize) -> Self {
        ApiPlannerState {
            subtask,
            stm: VecDeque::new(),
            shortlist: Vec::new(),
            variables,
            iteration: 0,
            phase: Phase::Shortlisting,
            stm_cap,
        }
    }

    pub fn remember(&mut self, decision: impl Into<String>, outcome: impl Into<String>) {
        self.stm.push_back((decision.into(), outcome.into()));
        while self.stm.len() > self.stm_cap {
            self.stm.pop_front();
        }
    }

    fn memory_fragment(&self) -> String {
        if self.stm.is_empty() {
            return "(empty)".into();
        }
        self.stm
            .iter()
            .map(|(d, o)| format!("- {d} -> {o}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn shortlist_fragment(&self) -> String {
        self.shortlist
            .iter()
            .map(ToolSpec::signature)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "revision", rename_all = "snake_case")]
pub enum Revision {
    RetryProgram { hint: String },
    Reshortlist,
    GiveUp { reason: String },
}

#[derive(Debug, Error)]
pub enum ApiAgentError {
    #[error("no candidate tools")]
    NoCandidate,
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("program rejected: {0}")]
    ProgramRejected(String),
}

fn shortlist_schema() -> Schema {
    schema_of(&[("tool_ids", Schema::array(Schema::String))], &["tool_ids"])
}

fn program_schema() -> Schema {
    schema_of(&[("program", Schema::String)], &["program"])
}

fn reflect_schema() -> Schema {
    schema_of(
        &[
            ("revision", Schema::enumeration(["retry_program", "reshortlist", "give_up"])),
            ("hint", Schema::String),
            ("reason", Schema::String),
        ],
        &["revision"],
    )
}

const SHORTLIST_PREAMBLE: &str = "You select API operations for one step of a larger task.";
const PROGRAM_PREAMBLE: &str = "You write step programs in the let/call/return language. Only shortlisted tools may be called.";
const REFLECT_PREAMBLE: &str = "You review a failed step program and choose how to continue.";

pub struct ApiAgent {
    registry: RegistryHandle,
    reasoner: ReasonerHandle,
    config: ApiAgentConfig,
}

impl ApiAgent {
    pub fn new(registry: RegistryHandle, reasoner: ReasonerHandle, config: ApiAgentConfig) -> Self {
        ApiAgent {
            registry,
            reasoner,
            config,
        }
    }

    pub fn config(&self) -> &ApiAgentConfig {
        &self.config
    }

    fn transition(&self, state: &mut ApiPlannerState, session: &mut TaskSession, next: Phase, detail: Value) {
        debug_assert!(next.may_follow(state.phase), "{:?} -> {:?}", state.phase, next);
        state.phase = next;
        self.record_phase(state, session, detail);
    }

    fn record_phase(&self, state: &ApiPlannerState, session: &mut TaskSession, detail: Value) {
        let next = state.phase;
        let (role, kind) = match next {
            Phase::Shortlisting => (AgentRole::Shortlister, EventKind::Decision),
            Phase::Programming => (AgentRole::ApiPlanner, EventKind::Decision),
            Phase::Executing => (AgentRole::CodeAgent, EventKind::Action),
            Phase::Reflecting => (AgentRole::ApiPlanner, EventKind::Reflection),
            Phase::Done => (AgentRole::ApiPlanner, EventKind::Result),
        };
        let mut payload = json!({"subtask": state.subtask.id, "phase": next.as_str(), "iteration": state.iteration});
        if let (Value::Object(p), Value::Object(d)) = (&mut payload, detail) {
            p.extend(d);
        }
        session.record(role, kind, payload);
    }

    /// Lexical hits from the apps in scope, merged with the reasoner's picks.
    /// Reasoner picks outside the lexical window are appended; when the merged
    /// list exceeds `k`, the lowest-ranked unpicked lexical hits make room.
    pub fn shortlist(
        &self,
        state: &ApiPlannerState,
        session: &mut TaskSession,
        k: usize,
    ) -> Result<Vec<ToolSpec>, ApiAgentError> {
        let registered = self.registry.app_ids();
        let scope: Vec<String> = session
            .task
            .apps_in_scope
            .iter()
            .filter(|a| registered.contains(a))
            .cloned()
            .collect();
        if scope.is_empty() {
            return Err(ApiAgentError::NoCandidate);
        }
        let hits = self.registry.search_scoped(&state.subtask.goal, Some(&scope), k)?;
        let catalog: Vec<String> = scope
            .iter()
            .filter_map(|a| self.registry.manifest(a))
            .flat_map(|m| m.tools.into_iter().map(|t| t.signature()))
            .collect();
        let lexical: Vec<String> = hits.iter().map(|h| h.tool_id.clone()).collect();
        let mut prompt = session
            .prompt(AgentRole::Shortlister.as_str())
            .preamble(SHORTLIST_PREAMBLE)
            .instructions(format!(
                "Pick the tool ids needed for: {}\nReturn at most {k} ids.",
                state.subtask.goal
            ))
            .fragment("lexical_candidates", lexical.join("\n"))
            .fragment("catalog", catalog.join("\n"));
        if !state.shortlist.is_empty() {
            prompt = prompt
                .fragment("previous_shortlist", state.shortlist_fragment())
                .fragment("memory", state.memory_fragment());
        }
        let out = session.ask(&self.reasoner, AgentRole::Shortlister, prompt.schema(shortlist_schema()).build())?;
        let picked: Vec<String> = out["tool_ids"]
            .as_array()
            .map(|xs| xs.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default();
        let in_scope = |id: &str| {
            self.registry
                .tool(id)
                .is_some_and(|t| scope.iter().any(|a| a == t.app_id()))
        };
        let picked: Vec<String> = picked.into_iter().filter(|id| in_scope(id)).collect();
        let mut merged = lexical.clone();
        for id in &picked {
            if !merged.contains(id) {
                merged.push(id.clone());
            }
        }
        while merged.len() > k {
            match merged.iter().rposition(|id| !picked.contains(id)) {
                Some(i) => {
                    merged.remove(i);
                }
                None => merged.truncate(k),
            }
        }
        let tools: Vec<ToolSpec> = merged.iter().filter_map(|id| self.registry.tool(id)).collect();
        if tools.is_empty() {
            return Err(ApiAgentError::NoCandidate);
        }
        Ok(tools)
    }

    /// Asks for a program until one parses and passes static checks, feeding
    /// each error back, for at most `retry_budget + 1` attempts.
    pub fn generate_program(
        &self,
        state: &ApiPlannerState,
        session: &mut TaskSession,
        hint: Option<&str>,
    ) -> Result<(StepProgram, u32), ApiAgentError> {
        let mut last_error: Option<String> = None;
        for attempt in 1..=self.config.retry_budget + 1 {
            let mut prompt = session
                .prompt(AgentRole::ApiPlanner.as_str())
                .preamble(PROGRAM_PREAMBLE)
                .instructions(format!(
                    "Goal: {}\nReturn a record with fields: {}",
                    state.subtask.goal,
                    state.subtask.produces.join(", ")
                ))
                .fragment("shortlist", state.shortlist_fragment())
                .fragment("variables", variables_fragment(&state.variables))
                .fragment("memory", state.memory_fragment())
                .fragments(session.guidance.clone());
            if let Some(h) = hint {
                prompt = prompt.fragment("hint", h);
            }
            if let Some(e) = &last_error {
                prompt = prompt.fragment("previous_error", e.clone());
            }
            let out = session.ask(&self.reasoner, AgentRole::ApiPlanner, prompt.schema(program_schema()).build())?;
            let source = out["program"].as_str().unwrap_or_default();
            match self.validate(source, state) {
                Ok(p) => return Ok((p, attempt)),
                Err(e) => {
                    session.record(
                        AgentRole::ApiPlanner,
                        EventKind::Result,
                        json!({"subtask": state.subtask.id, "program_rejected": e, "attempt": attempt}),
                    );
                    last_error = Some(e);
                }
            }
        }
        Err(ApiAgentError::ProgramRejected(last_error.unwrap_or_default()))
    }

    fn validate(&self, source: &str, state: &ApiPlannerState) -> Result<StepProgram, String> {
        let program = parse_program(source).map_err(|e| e.to_string())?;
        check_program(&program, state.variables.names(), &state.shortlist).map_err(|e| e.to_string())?;
        let fields = program.return_fields();
        if let Some(missing) = state.subtask.produces.iter().find(|p| !fields.contains(&p.as_str())) {
            return Err(format!(
                "statement {}: return record lacks `{missing}`",
                program.statements.len()
            ));
        }
        Ok(program)
    }

    /// Chooses how to continue after a failed execution. The iteration cap and
    /// two identical consecutive failures are decided without the reasoner.
    pub fn reflect(
        &self,
        result: &ExecutionResult,
        state: &mut ApiPlannerState,
        session: &mut TaskSession,
    ) -> Revision {
        let summary = result.summary();
        let revision = if state.iteration >= self.config.step_cap {
            Revision::GiveUp {
                reason: format!("step cap of {} reached", self.config.step_cap),
            }
        } else if state
            .stm
            .iter()
            .rev()
            .find(|(d, _)| d.starts_with("execute"))
            .is_some_and(|(_, o)| *o == summary)
        {
            Revision::Reshortlist
        } else {
            let calls: Vec<String> = result
                .call_log
                .iter()
                .map(|c| match c.status_code {
                    Some(s) => format!("{} -> {s}", c.tool_id),
                    None => format!("{} -> not sent", c.tool_id),
                })
                .collect();
            let bundle = session
                .prompt(AgentRole::Judge.as_str())
                .preamble(REFLECT_PREAMBLE)
                .instructions(format!("Goal: {}\nOutcome: {summary}", state.subtask.goal))
                .fragment("calls", calls.join("\n"))
                .fragment("memory", state.memory_fragment())
                .schema(reflect_schema())
                .build();
            match session.ask(&self.reasoner, AgentRole::Judge, bundle) {
                Ok(v) => {
                    let text = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
                    match v["revision"].as_str() {
                        Some("retry_program") => Revision::RetryProgram {
                            hint: text("hint").unwrap_or_else(|| summary.clone()),
                        },
                        Some("reshortlist") => Revision::Reshortlist,
                        _ => Revision::GiveUp {
                            reason: text("reason").unwrap_or_else(|| summary.clone()),
                        },
                    }
                }
                Err(e) => Revision::GiveUp {
                    reason: format!("reasoner: {e}"),
                },
            }
        };
        state.remember(format!("execute #{}", state.iteration), summary);
        let label = match &revision {
            Revision::RetryProgram { hint } => format!("retry_program: {hint}"),
            Revision::Reshortlist => "reshortlist".to_string(),
            Revision::GiveUp { reason } => format!("give_up: {reason}"),
        };
        state.remember("reflect", label);
        revision
    }

    /// Drives one API sub-task to completion.
    pub fn run_subtask(&self, subtask: &SubTask, inputs: &VariableStore, session: &mut TaskSession) -> SubTaskResult {
        let mut state = ApiPlannerState::new(subtask.clone(), inputs.clone(), self.config.stm_cap);
        let mut k = self.config.shortlist_k;
        let fail = |state: &mut ApiPlannerState, session: &mut TaskSession, reason: String| {
            self.transition(state, session, Phase::Done, json!({"status": "failed", "reason": reason}));
            SubTaskResult::failed(&subtask.id, reason, state.iteration)
        };

        session.record(
            AgentRole::ApiPlanner,
            EventKind::Observation,
            json!({"subtask": subtask.id, "goal": subtask.goal, "inputs": inputs.to_record()}),
        );
        match self.shortlist(&state, session, k) {
            Ok(tools) => state.shortlist = tools,
            Err(e) => return fail(&mut state, session, e.to_string()),
        }
        let ids: Vec<&str> = state.shortlist.iter().map(|t| t.tool_id.as_str()).collect();
        let detail = json!({"tools": ids});
        self.record_phase(&state, session, detail);

        let mut hint: Option<String> = None;
        loop {
            let (program, attempts) = match self.generate_program(&state, session, hint.as_deref()) {
                Ok(p) => p,
                Err(e) => return fail(&mut state, session, e.to_string()),
            };
            self.transition(
                &mut state,
                session,
                Phase::Programming,
                json!({"program": program.source_text, "attempts": attempts}),
            );
            state.iteration += 1;
            let result = execute_program(&program, &state.variables, self.registry.as_ref());
            self.transition(
                &mut state,
                session,
                Phase::Executing,
                json!({"status": result.status, "calls": result.call_log, "diagnostic": result.diagnostic}),
            );
            if result.is_ok() {
                let produced: Vec<Variable> = subtask
                    .produces
                    .iter()
                    .filter_map(|p| {
                        result
                            .returned
                            .get(p)
                            .map(|v| Variable::new(p.clone(), v.clone(), subtask.id.clone()))
                    })
                    .collect();
                let answer = match produced.as_slice() {
                    [] => crate::program::eval::render_returned(&result.returned),
                    [one] => crate::value::render(&one.value),
                    many => many
                        .iter()
                        .map(|v| format!("{}={}", v.name, crate::value::render(&v.value)))
                        .collect::<Vec<_>>()
                        .join(", "),
                };
                self.transition(
                    &mut state,
                    session,
                    Phase::Done,
                    json!({"status": "succeeded", "returned": result.returned}),
                );
                return SubTaskResult::succeeded(&subtask.id, produced, Some(answer), state.iteration);
            }
            let revision = self.reflect(&result, &mut state, session);
            let detail = serde_json::to_value(&revision).expect("revision serializes");
            match revision {
                Revision::GiveUp { reason } => {
                    session.record(AgentRole::ApiPlanner, EventKind::Reflection, detail);
                    return fail(&mut state, session, reason);
                }
                Revision::RetryProgram { hint: h } => {
                    self.transition(&mut state, session, Phase::Reflecting, detail);
                    hint = Some(h);
                }
                Revision::Reshortlist => {
                    k += RESHORTLIST_WIDEN;
                    match self.shortlist(&state, session, k) {
                        Ok(tools) => state.shortlist = tools,
                        Err(e) => return fail(&mut state, session, e.to_string()),
                    }
                    let ids: Vec<&str> = state.shortlist.iter().map(|t| t.tool_id.as_str()).collect();
                    let mut detail = detail;
                    detail["tools"] = json!(ids);
                    self.transition(&mut state, session, Phase::Reflecting, detail);
                    hint = Some(format!("previous attempt failed: {}", result.summary()));
                }
            }
        }
    }
}
