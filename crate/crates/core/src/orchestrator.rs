//! The plan controller: decomposition, sequencing, dispatch and the
//! conclude/replan judgment.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::api_agent::{ApiAgent, ApiAgentConfig};
use crate::browser::{BrowserAgent, BrowserAgentConfig, BrowserDriver, DriverFactory};
use crate::context::{
    assess_and_paraphrase, enrich, mine_sitemap, ContextBundle, IntentQuality, KnowledgeStore, RefinedIntent,
    DEFAULT_CHAR_BUDGET, DEFAULT_MINING_BUDGET,
};
use crate::plan::{validate_plan, Dispatch, Executor, LoopBinding, PlanError, PlanState, SubTask, SubTaskResult, SubTaskStatus, Task};
use crate::reasoner::{ReasonerError, ReasonerHandle, Schema};
use crate::registry::RegistryHandle;
use crate::session::{schema_of, variables_fragment, TaskSession};
use crate::trajectory::{AgentRole, EventKind, Recorder, TrajectoryEvent};
use crate::value::render;
use crate::variables::Variable;

pub const DEFAULT_REPLAN_BUDGET: u32 = 2;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Complete { answer: String },
    Replan { subtasks: Vec<SubTask> },
    Abort { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub status: TaskStatus,
    pub final_answer: Option<String>,
    pub abort_reason: Option<String>,
    /// Sum of sub-agent step counts.
    pub steps: u32,
    pub results: Vec<SubTaskResult>,
    pub plan: Option<PlanState>,
    pub events: Vec<TrajectoryEvent>,
}

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub replan_budget: u32,
    pub mining_budget: usize,
    pub char_budget: usize,
    /// Run the utterance assessor before decomposition.
    pub assess_intent: bool,
    pub api: ApiAgentConfig,
    pub browser: BrowserAgentConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            replan_budget: DEFAULT_REPLAN_BUDGET,
            mining_budget: DEFAULT_MINING_BUDGET,
            char_budget: DEFAULT_CHAR_BUDGET,
            assess_intent: true,
            api: ApiAgentConfig::default(),
            browser: BrowserAgentConfig::default(),
        }
    }
}

/// Shared services a task runs against.
pub struct Environment {
    pub registry: RegistryHandle,
    /// App id → entry URL of its browsable site.
    pub sites: BTreeMap<String, String>,
    pub drivers: Option<Arc<dyn DriverFactory>>,
    pub knowledge: Arc<KnowledgeStore>,
}

impl Environment {
    pub fn api_only(registry: RegistryHandle) -> Self {
        Environment {
            registry,
            sites: BTreeMap::new(),
            drivers: None,
            knowledge: Arc::new(KnowledgeStore::in_memory()),
        }
    }
}

fn executor_schema() -> Schema {
    Schema::enumeration(["browser", "api"])
}

fn subtask_schema() -> Schema {
    Schema::array(schema_of(
        &[
            ("id", Schema::String),
            ("goal", Schema::String),
            ("executor", executor_schema()),
            ("consumes", Schema::array(Schema::String)),
            ("produces", Schema::array(Schema::String)),
            (
                "loop",
                schema_of(&[("list", Schema::String), ("alias", Schema::String)], &["list", "alias"]),
            ),
        ],
        &["goal", "executor"],
    ))
}

/// Reads reasoner sub-task objects; missing ids become `s1`, `s2`, ... by position.
pub fn parse_subtasks(items: &Value, id_offset: usize) -> Result<Vec<SubTask>, OrchestratorError> {
    let arr = items
        .as_array()
        .ok_or_else(|| OrchestratorError::MalformedPlan("subtasks is not a list".into()))?;
    let names = |v: &Value| -> Vec<String> {
        v.as_array()
            .map(|xs| xs.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default()
    };
    let mut out = Vec::with_capacity(arr.len());
    for (i, item) in arr.iter().enumerate() {
        let executor = match item["executor"].as_str() {
            Some("browser") => Executor::Browser,
            Some("api") => Executor::Api,
            other => return Err(OrchestratorError::MalformedPlan(format!("unknown executor {other:?}"))),
        };
        let id = item["id"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| format!("s{}", id_offset + i + 1));
        let mut st = SubTask::new(id, item["goal"].as_str().unwrap_or_default(), executor);
        st.consumes = names(&item["consumes"]);
        st.produces = names(&item["produces"]);
        if let (Some(list), Some(alias)) = (item["loop"]["list"].as_str(), item["loop"]["alias"].as_str()) {
            st.loop_binding = Some(LoopBinding {
                list_var: list.into(),
                alias: alias.into(),
                element: None,
                template: None,
            });
        }
        out.push(st);
    }
    Ok(out)
}

fn apps_fragment(task: &Task) -> String {
    task.apps_in_scope.join(", ")
}

/// Splits the intent into sub-tasks and checks their dataflow against the
/// task's initial context.
pub fn decompose(
    task: &Task,
    intent: &RefinedIntent,
    context: &ContextBundle,
    reasoner: &ReasonerHandle,
    session: &mut TaskSession,
) -> Result<Vec<SubTask>, OrchestratorError> {
    task.validate()?;
    let initial: Vec<String> = task.initial_context.iter().map(|v| v.name.clone()).collect();
    let bundle = session
        .prompt(AgentRole::PlanController.as_str())
        .preamble("You split a request into ordered sub-tasks, each run by a browser or an API agent.")
        .instructions(intent.refined.clone())
        .fragment("apps", apps_fragment(task))
        .fragment("initial_variables", initial.join(", "))
        .fragments(context.fragments.clone())
        .schema(schema_of(&[("subtasks", subtask_schema())], &["subtasks"]))
        .build();
    let out = session.ask(reasoner, AgentRole::PlanController, bundle)?;
    let subtasks = parse_subtasks(&out["subtasks"], 0)?;
    if subtasks.is_empty() {
        return Err(PlanError::EmptyPlan.into());
    }
    let available: BTreeSet<String> = initial.into_iter().collect();
    validate_plan(&subtasks, &available)?;
    Ok(subtasks)
}

/// `name=value` for everything the plan produced, in plan order. Loop
/// instances contribute their aggregated list once.
pub fn assemble_answer(state: &PlanState) -> String {
    let mut seen = BTreeSet::new();
    let mut parts = Vec::new();
    for (st, status) in state.subtasks.iter().zip(&state.statuses) {
        if *status != SubTaskStatus::Succeeded {
            continue;
        }
        for name in st.for_execution().produces {
            if !seen.insert(name.clone()) {
                continue;
            }
            if let Some(v) = state.variables.value(&name) {
                parts.push(format!("{name}={}", render(v)));
            }
        }
    }
    parts.join(", ")
}

fn status_fragment(state: &PlanState, deadlocked: bool) -> String {
    let mut lines: Vec<String> = state
        .subtasks
        .iter()
        .zip(&state.statuses)
        .map(|(st, s)| {
            let label = serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            format!("{} [{label}] {}", st.id, st.goal)
        })
        .collect();
    if deadlocked {
        lines.push("(no pending sub-task can run)".into());
    }
    lines.join("\n")
}

fn verdict_schema() -> Schema {
    schema_of(
        &[
            ("verdict", Schema::enumeration(["complete", "replan", "abort"])),
            ("answer", Schema::nullable(Schema::String)),
            ("subtasks", subtask_schema()),
            ("reason", Schema::String),
        ],
        &["verdict"],
    )
}

/// Asks the judge whether to finish, extend the plan or give up. A replan
/// beyond `budget` becomes an abort.
pub fn conclude_or_replan(
    state: &PlanState,
    deadlocked: bool,
    budget: u32,
    reasoner: &ReasonerHandle,
    session: &mut TaskSession,
) -> Verdict {
    let bundle = session
        .prompt("plan_judge")
        .preamble("You decide whether a plan's results answer the request.")
        .instructions(session.task.intent.clone())
        .fragment("plan_status", status_fragment(state, deadlocked))
        .fragment("variables", variables_fragment(&state.variables))
        .fragment("replans_left", budget.saturating_sub(state.revision_count).to_string())
        .schema(verdict_schema())
        .build();
    let out = match session.ask(reasoner, AgentRole::Judge, bundle) {
        Ok(v) => v,
        Err(e) => return Verdict::Abort { reason: e.to_string() },
    };
    match out["verdict"].as_str() {
        Some("complete") => {
            let answer = out["answer"]
                .as_str()
                .filter(|a| !a.trim().is_empty())
                .map(str::to_string)
                .unwrap_or_else(|| assemble_answer(state));
            if answer.trim().is_empty() {
                Verdict::Abort {
                    reason: "judge completed without an answer".into(),
                }
            } else {
                Verdict::Complete { answer }
            }
        }
        Some("replan") if state.revision_count >= budget => Verdict::Abort {
            reason: format!("replan budget of {budget} exhausted"),
        },
        Some("replan") => {
            let offset = state.subtasks.len();
            match parse_subtasks(&out["subtasks"], offset) {
                Ok(subtasks) if !subtasks.is_empty() => Verdict::Replan { subtasks },
                Ok(_) => Verdict::Abort {
                    reason: "replan proposed no sub-tasks".into(),
                },
                Err(e) => Verdict::Abort { reason: e.to_string() },
            }
        }
        _ => Verdict::Abort {
            reason: out["reason"].as_str().unwrap_or("judge aborted").to_string(),
        },
    }
}

/// Renames a loop instance's base-named outputs to its suffixed names.
fn localize(result: SubTaskResult, st: &SubTask) -> SubTaskResult {
    let bases = st.for_execution().produces;
    if bases == st.produces {
        return result;
    }
    let produced = result
        .produced
        .into_iter()
        .map(|v| match bases.iter().position(|b| *b == v.name) {
            Some(k) => Variable::new(st.produces[k].clone(), v.value, v.producer),
            None => v,
        })
        .collect();
    SubTaskResult { produced, ..result }
}

pub struct Controller {
    env: Arc<Environment>,
    reasoner: ReasonerHandle,
    config: ControllerConfig,
}

struct BrowserSlot {
    driver: Option<Box<dyn BrowserDriver>>,
}

impl Controller {
    pub fn new(env: Arc<Environment>, reasoner: ReasonerHandle, config: ControllerConfig) -> Self {
        Controller { env, reasoner, config }
    }

    pub fn environment(&self) -> &Arc<Environment> {
        &self.env
    }

    fn entry_url(&self, task: &Task) -> Option<String> {
        task.apps_in_scope.iter().find_map(|a| self.env.sites.get(a).cloned())
    }

    /// Mines every in-scope site not yet known, each on its own session.
    fn ensure_knowledge(&self, session: &mut TaskSession) {
        let Some(factory) = &self.env.drivers else { return };
        for app in session.task.apps_in_scope.clone() {
            let Some(entry) = self.env.sites.get(&app) else { continue };
            let mined = self.env.knowledge.get_or_mine(&app, || {
                let mut driver = factory.open();
                let k = mine_sitemap(&app, entry, driver.as_mut(), self.config.mining_budget);
                driver.close();
                k
            });
            // Whether this task or an earlier one did the crawl is left out so
            // trajectories do not depend on scheduling.
            let payload = match mined {
                Ok(k) => json!({"app": app, "sitemap_pages": k.nodes.len()}),
                Err(e) => json!({"app": app, "sitemap_error": e.to_string()}),
            };
            session.record(AgentRole::Context, EventKind::Observation, payload);
        }
    }

    fn assess(&self, session: &mut TaskSession) -> RefinedIntent {
        let original = session.task.intent.clone();
        if self.config.assess_intent {
            if let Ok(intent) = assess_and_paraphrase(&original, &self.reasoner, session) {
                return intent;
            }
        }
        RefinedIntent {
            original: original.clone(),
            refined: original,
            quality: IntentQuality::Clear,
            notes: None,
        }
    }

    fn run_browser(
        &self,
        st: &SubTask,
        inputs: &crate::variables::VariableStore,
        slot: &mut BrowserSlot,
        session: &mut TaskSession,
    ) -> SubTaskResult {
        let Some(factory) = &self.env.drivers else {
            return SubTaskResult::failed(&st.id, "no browser available", 0);
        };
        if slot.driver.is_none() {
            let mut driver = factory.open();
            if let Some(url) = self.entry_url(&session.task) {
                if let Err(e) = driver.navigate(&url) {
                    return SubTaskResult::failed(&st.id, e.to_string(), 0);
                }
            }
            slot.driver = Some(driver);
        }
        let driver = slot.driver.as_mut().expect("driver opened").as_mut();
        BrowserAgent::new(self.reasoner.clone(), self.config.browser.clone()).run_subtask(st, inputs, driver, session)
    }

    /// Runs one task to a terminal state. Events go to `recorder`.
    pub fn run_task(&self, task: &Task, recorder: Recorder) -> TaskOutcome {
        let mut session = TaskSession::new(task.clone(), recorder);
        let mut results = Vec::new();
        let mut steps = 0u32;
        let finish = |session: TaskSession, status, answer, reason, steps, results, plan| TaskOutcome {
            task_id: task.id.clone(),
            status,
            final_answer: answer,
            abort_reason: reason,
            steps,
            results,
            plan,
            events: session.recorder.into_events(),
        };
        if let Err(e) = task.validate() {
            return finish(session, TaskStatus::Aborted, None, Some(e.to_string()), 0, results, None);
        }
        session.record(
            AgentRole::PlanController,
            EventKind::Observation,
            json!({"intent": task.intent, "apps": task.apps_in_scope}),
        );
        self.ensure_knowledge(&mut session);
        let intent = self.assess(&mut session);
        let context = enrich(
            &intent,
            task,
            &self.env.knowledge,
            Some(self.env.registry.as_ref()),
            self.config.char_budget,
        );
        session.record(
            AgentRole::Context,
            EventKind::Decision,
            json!({
                "quality": intent.quality,
                "refined": intent.refined,
                "fragments": context.fragments.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>(),
            }),
        );
        session.guidance = context.fragments.clone();

        let plan = decompose(task, &intent, &context, &self.reasoner, &mut session).and_then(|subtasks| {
            let ids: Vec<&str> = subtasks.iter().map(|s| s.id.as_str()).collect();
            session.record(
                AgentRole::PlanController,
                EventKind::Decision,
                json!({"plan": ids, "subtasks": subtasks}),
            );
            Ok(PlanState::new(task, subtasks)?)
        });
        let mut state = match plan {
            Ok(s) => s,
            Err(e) => {
                let reason = format!("decomposition failed: {e}");
                session.record(AgentRole::PlanController, EventKind::Result, json!({"status": "aborted", "reason": reason}));
                return finish(session, TaskStatus::Aborted, None, Some(reason), 0, results, None);
            }
        };

        let mut slot = BrowserSlot { driver: None };
        while !state.is_terminal() {
            let deadlocked = match state.next_step() {
                Ok(Dispatch::Run { index, inputs }) => {
                    let st = state.subtasks[index].clone();
                    session.record(
                        AgentRole::PlanController,
                        EventKind::Action,
                        json!({"dispatch": st.id, "executor": st.executor, "inputs": inputs.names().collect::<Vec<_>>()}),
                    );
                    let exec = st.for_execution();
                    let result = match st.executor {
                        Executor::Api => ApiAgent::new(self.env.registry.clone(), self.reasoner.clone(), self.config.api.clone())
                            .run_subtask(&exec, &inputs, &mut session),
                        Executor::Browser => self.run_browser(&exec, &inputs, &mut slot, &mut session),
                    };
                    let result = localize(result, &st);
                    steps += result.step_count;
                    session.record(
                        AgentRole::PlanController,
                        EventKind::Result,
                        json!({
                            "subtask": st.id,
                            "status": result.status,
                            "produced": result.produced.iter().map(|v| v.name.clone()).collect::<Vec<_>>(),
                            "step_count": result.step_count,
                            "failure_reason": result.failure_reason,
                        }),
                    );
                    let merged = state.record_result(&result);
                    results.push(result);
                    if let Err(e) = merged {
                        state.abort(e.to_string());
                    }
                    continue;
                }
                Ok(Dispatch::Conclude) => false,
                Err(PlanError::Deadlock) => true,
                Err(e) => {
                    state.abort(e.to_string());
                    continue;
                }
            };
            let verdict = conclude_or_replan(&state, deadlocked, self.config.replan_budget, &self.reasoner, &mut session);
            session.record(
                AgentRole::Judge,
                EventKind::Reflection,
                serde_json::to_value(&verdict).expect("verdict serializes"),
            );
            match verdict {
                Verdict::Complete { answer } => state.complete(answer),
                Verdict::Abort { reason } => state.abort(reason),
                Verdict::Replan { subtasks } => {
                    if let Err(e) = state.append_subtasks(subtasks) {
                        state.abort(format!("invalid replan: {e}"));
                    }
                }
            }
        }
        if let Some(mut d) = slot.driver.take() {
            d.close();
        }
        let status = if state.final_answer.is_some() {
            TaskStatus::Completed
        } else {
            TaskStatus::Aborted
        };
        session.record(
            AgentRole::PlanController,
            EventKind::Result,
            json!({"status": status, "answer": state.final_answer, "reason": state.aborted, "steps": steps}),
        );
        let (answer, reason) = (state.final_answer.clone(), state.aborted.clone());
        finish(session, status, answer, reason, steps, results, Some(state))
    }
}
