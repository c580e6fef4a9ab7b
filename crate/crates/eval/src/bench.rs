//! Turns manifest tasks into controller tasks, the scripted reasoner output
//! that drives them, and the answer that counts as correct.

use std::sync::Arc;

use serde_json::json;
use taskloom_core::fixtures::{self, Popup, E2E_COUNT_PROGRAM};
use taskloom_core::orchestrator::{Controller, ControllerConfig, Environment, TaskStatus};
use taskloom_core::plan::{Task, TaskSource};
use taskloom_core::reasoner::{
    BackendConfig, ReasonerError, ReasonerHandle, RecordingReasoner, Script, ScriptRule, ScriptedReasoner,
};
use taskloom_core::trajectory::Recorder;
use taskloom_core::variables::Variable;

use crate::manifest::{Behaviour, BenchTask, Customer, Scenario};
use crate::record::Status;
use crate::runner::{Attempt, TaskExecutor};

const BALANCE_PROGRAM: &str = "call b = payments.get_balance(user_id: account)\nreturn {balance: b.balance}";
const LIST_IDS_PROGRAM: &str = "call r = shop-api.list_orders(user: user_id)\nreturn {order_ids: map(r.items, item.id)}";
const ORDER_TOTAL_PROGRAM: &str = "call o = shop-api.get_order(order_id: oid)\nreturn {total: o.total}";
/// A lookup for a customer the shop does not know; the call fails every time.
const DEAD_END_PROGRAM: &str = "call r = shop-api.list_orders(user: \"u-nobody\")\nreturn {order_count: len(r.items)}";

/// Every order in the demo shop totals this much.
const ORDER_TOTAL: i64 = 25;

pub fn core_task(t: &BenchTask) -> Task {
    let (apps, context): (Vec<&str>, Vec<Variable>) = match t.scenario {
        Scenario::OrderCount { customer } | Scenario::OrderTotals { customer } => (
            vec!["shop-api"],
            vec![Variable::initial("user_id", json!(customer.user_id()))],
        ),
        Scenario::CountThenMail { customer } => (
            vec!["shop-api", "mail-api"],
            vec![
                Variable::initial("user_id", json!(customer.user_id())),
                Variable::initial("email", json!(customer.email())),
            ],
        ),
        Scenario::Balance => (vec!["payments"], vec![Variable::initial("account", json!("u1"))]),
        Scenario::BrowseCount => (vec![fixtures::SHOP_SITE_APP], vec![]),
    };
    Task {
        id: t.task_id.clone(),
        intent: t.intent.clone(),
        apps_in_scope: apps.into_iter().map(str::to_string).collect(),
        initial_context: context,
        source: TaskSource::Benchmark,
    }
}

/// The answer a correct run assembles.
pub fn expected_answer(t: &BenchTask) -> String {
    let count = |c: Customer| c.order_ids().len();
    match t.scenario {
        Scenario::OrderCount { customer } => format!("order_count={}", count(customer)),
        Scenario::Balance => "balance=120.5".into(),
        Scenario::CountThenMail { customer } => format!("order_count={}, message_id=msg-1", count(customer)),
        Scenario::OrderTotals { customer } => {
            let ids = customer.order_ids();
            let totals = vec![ORDER_TOTAL; ids.len()];
            format!("order_ids={}, total={}", json!(ids), json!(totals))
        }
        Scenario::BrowseCount => "order_count=5".into(),
    }
}

fn clear() -> ScriptRule {
    ScriptRule::new("utterance_assessor", json!({"quality": "clear", "refined": ""}))
}

fn one_api_step(goal: &str, consumes: &[&str], produces: &str, tool: &str, program: &str) -> Script {
    Script::default()
        .rule(clear())
        .rule(ScriptRule::new(
            "plan_controller",
            json!({"subtasks": [{"id": "s1", "goal": goal, "executor": "api", "consumes": consumes, "produces": [produces]}]}),
        ))
        .rule(ScriptRule::new("shortlister", json!({"tool_ids": [tool]})))
        .rule(ScriptRule::new("api_planner", json!({"program": program})))
        .rule(ScriptRule::new("plan_judge", json!({"verdict": "complete", "answer": null})))
}

fn totals_script() -> Script {
    Script::default()
        .rule(clear())
        .rule(ScriptRule::new(
            "plan_controller",
            json!({"subtasks": [
                {"id": "s1", "goal": "List the order ids of the customer", "executor": "api",
                 "consumes": ["user_id"], "produces": ["order_ids"]},
                {"id": "s2", "goal": "Look up the total of one order", "executor": "api",
                 "consumes": ["order_ids", "oid"], "produces": ["total"], "loop": {"list": "order_ids", "alias": "oid"}}
            ]}),
        ))
        .rule(ScriptRule::new("shortlister", json!({"tool_ids": ["shop-api.list_orders"]})).when("List the order ids"))
        .rule(ScriptRule::new("shortlister", json!({"tool_ids": ["shop-api.get_order"]})).when("total of one order"))
        .rule(ScriptRule::new("api_planner", json!({"program": LIST_IDS_PROGRAM})).when("List the order ids"))
        .rule(ScriptRule::new("api_planner", json!({"program": ORDER_TOTAL_PROGRAM})).when("total of one order"))
        .rule(ScriptRule::new("plan_judge", json!({"verdict": "complete", "answer": null})))
}

fn clean_script(s: Scenario) -> Script {
    match s {
        Scenario::OrderCount { .. } => one_api_step(
            "Count the orders placed by the customer",
            &["user_id"],
            "order_count",
            "shop-api.list_orders",
            E2E_COUNT_PROGRAM,
        ),
        Scenario::Balance => one_api_step(
            "Look up the balance of the account",
            &["account"],
            "balance",
            "payments.get_balance",
            BALANCE_PROGRAM,
        ),
        Scenario::CountThenMail { .. } => fixtures::e2e_script(),
        Scenario::OrderTotals { .. } => totals_script(),
        Scenario::BrowseCount => fixtures::browse_script(),
    }
}

/// The scripted reasoner output for one manifest task. Rules added for a
/// behaviour go first so they shadow the clean path.
pub fn task_script(t: &BenchTask) -> Script {
    let mut script = match (t.behaviour, t.scenario) {
        (Behaviour::Clean, _) => Script::default(),
        (Behaviour::WrongAnswer, _) => Script::default().rule(ScriptRule::new(
            "plan_judge",
            json!({"verdict": "complete", "answer": "I could not determine it, probably 0."}),
        )),
        (Behaviour::Stuck, Scenario::BrowseCount) => Script::default()
            .rule(ScriptRule::new("extraction_agent", json!({"found": false, "answer": "", "spans": []})))
            .rule(ScriptRule::new("plan_judge", json!({"verdict": "abort", "reason": "the page did not show the count"}))),
        (Behaviour::Stuck, _) => Script::default()
            .rule(ScriptRule::new("api_planner", json!({"program": DEAD_END_PROGRAM})))
            .rule(ScriptRule::new("judge", json!({"revision": "give_up", "reason": "the lookup keeps failing"})))
            .rule(ScriptRule::new("plan_judge", json!({"verdict": "abort", "reason": "no sub-task could finish"}))),
    };
    script.extend(clean_script(t.scenario));
    script
}

/// Where reasoner output comes from during a run.
#[derive(Debug, Clone)]
pub enum Backend {
    /// Per-task canned output from [`task_script`].
    Scripted,
    /// A chat-completion endpoint; completions are recorded for replay.
    Remote(BackendConfig),
}

/// Runs manifest tasks through a controller over the demo world. One
/// executor belongs to one worker, so each worker has its own environment.
pub struct BenchExecutor {
    env: Arc<Environment>,
    backend: Backend,
    remote: Option<ReasonerHandle>,
    config: ControllerConfig,
}

impl BenchExecutor {
    pub fn new(backend: Backend, config: ControllerConfig) -> Result<Self, ReasonerError> {
        let remote = match &backend {
            Backend::Scripted => None,
            Backend::Remote(cfg) => Some(taskloom_core::reasoner::connect(cfg)?),
        };
        Ok(BenchExecutor {
            env: Arc::new(fixtures::demo_environment(Popup::Dismissable)),
            backend,
            remote,
            config,
        })
    }

    pub fn scripted() -> Self {
        BenchExecutor::new(Backend::Scripted, ControllerConfig::default()).expect("scripted backend needs no setup")
    }

    /// Runs `task` with the reasoner output in `script`, as a replay does.
    pub fn run_with_script(&self, task: &BenchTask, script: Script, recorder: Recorder) -> Attempt {
        let reasoner: ReasonerHandle = Arc::new(ScriptedReasoner::new(script.clone()));
        let mut attempt = self.run_with(task, reasoner, recorder);
        attempt.script = Some(script);
        attempt
    }

    fn run_with(&self, task: &BenchTask, reasoner: ReasonerHandle, recorder: Recorder) -> Attempt {
        let controller = Controller::new(self.env.clone(), reasoner, self.config.clone());
        let outcome = controller.run_task(&core_task(task), recorder);
        let want = expected_answer(task);
        let (status, detail) = match (outcome.status, outcome.final_answer) {
            (TaskStatus::Completed, Some(a)) if a == want => (Status::Success, Some(a)),
            (TaskStatus::Completed, a) => (Status::Failure, Some(format!("wrong answer: {}", a.unwrap_or_default()))),
            (TaskStatus::Aborted, _) => (
                Status::Failure,
                Some(format!("aborted: {}", outcome.abort_reason.unwrap_or_default())),
            ),
        };
        Attempt {
            status,
            steps: outcome.steps,
            detail,
            events: outcome.events,
            script: None,
        }
    }
}

impl TaskExecutor for BenchExecutor {
    fn execute(&mut self, task: &BenchTask, recorder: Recorder) -> Attempt {
        match (&self.backend, &self.remote) {
            (Backend::Remote(_), Some(inner)) => {
                let recording = Arc::new(RecordingReasoner::new(inner.clone()));
                let mut attempt = self.run_with(task, recording.clone(), recorder);
                attempt.script = Some(recording.script());
                attempt
            }
            _ => self.run_with_script(task, task_script(task), recorder),
        }
    }
}
