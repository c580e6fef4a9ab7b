use std::sync::{Arc, Mutex};

use serde_json::json;
use taskloom_core::browser::agent::extract;
use taskloom_core::browser::{
    BrowserAgent, BrowserAgentConfig, BrowserDecision, BrowserDriver, BrowserError, JudgeVerdict, PageContent,
    SimBrowser,
};
use taskloom_core::fixtures::{demo_site, Popup, SHOP_SITE_ENTRY};
use taskloom_core::plan::{Executor, ResultStatus, SubTask, Task, TaskSource};
use taskloom_core::reasoner::{
    PromptBundle, Reasoner, ReasonerError, ReasonerHandle, ReasonerOutput, Script, ScriptRule, ScriptedReasoner,
};
use taskloom_core::session::TaskSession;
use taskloom_core::trajectory::{AgentRole, EventKind, Recorder};
use taskloom_core::variables::VariableStore;

/// Scripted backend that also keeps every bundle it was asked.
struct Spy {
    inner: ScriptedReasoner,
    seen: Mutex<Vec<PromptBundle>>,
}

impl Reasoner for Spy {
    fn complete(&self, bundle: &PromptBundle) -> Result<ReasonerOutput, ReasonerError> {
        self.seen.lock().unwrap().push(bundle.clone());
        self.inner.complete(bundle)
    }
    fn backend_id(&self) -> &str {
        "spy"
    }
}

fn spy(script: Script) -> Arc<Spy> {
    Arc::new(Spy {
        inner: ScriptedReasoner::new(script),
        seen: Mutex::new(Vec::new()),
    })
}

fn session() -> TaskSession {
    let task = Task {
        id: "b".into(),
        intent: "browse".into(),
        apps_in_scope: vec!["shop-web".into()],
        initial_context: vec![],
        source: TaskSource::Interactive,
    };
    TaskSession::new(task, Recorder::new("r", "b"))
}

fn browser(popup: Popup) -> SimBrowser {
    let mut b = SimBrowser::new(Arc::new(demo_site(popup)));
    b.navigate(SHOP_SITE_ENTRY).unwrap();
    b
}

#[test]
fn planner_acts_from_the_home_page() {
    let script = Script::default().rule(
        ScriptRule::new("browser_planner", json!({"decision": "act", "instruction": "click the Orders link"}))
            .when("open the orders page")
            .when("url: http://shop-web.sim/\n"),
    );
    let r: ReasonerHandle = Arc::new(ScriptedReasoner::new(script));
    let agent = BrowserAgent::new(r, BrowserAgentConfig::default());
    let st = SubTask::new("s1", "open the orders page", Executor::Browser);
    let obs = browser(Popup::None).snapshot().unwrap();
    let d = agent
        .plan_step(&st, &VariableStore::default(), &obs, "(empty)", None, &mut session())
        .unwrap();
    assert_eq!(
        d,
        BrowserDecision::Act {
            instruction: "click the Orders link".into()
        }
    );
}

fn page(markdown: &str) -> PageContent {
    PageContent {
        markdown: markdown.into(),
        screenshot_ref: "shot".into(),
        url: "http://shop-web.sim/orders".into(),
    }
}

#[test]
fn extraction_cases() {
    let script = Script::default()
        .rule(
            ScriptRule::new("extraction_agent", json!({"found": true, "answer": "5", "spans": ["Orders (5)", "invented"]}))
                .when("order count")
                .when("Orders (5)"),
        )
        .rule(ScriptRule::new("extraction_agent", json!({"found": false})));
    let r: ReasonerHandle = Arc::new(ScriptedReasoner::new(script));
    let a = extract("what is the order count?", &page("# Orders (5)\n[Order 1001](x)"), &r, &mut session()).unwrap();
    assert_eq!(a.answer, "5");
    assert_eq!(a.spans, ["Orders (5)"]);
    let miss = extract("who is the seller?", &page("# Orders (5)"), &r, &mut session());
    assert!(matches!(miss, Err(BrowserError::NotOnPage(_))));
    let empty = extract("what is the order count?", &page("  "), &r, &mut session());
    assert!(matches!(empty, Err(BrowserError::NotOnPage(_))));
}

#[test]
fn judge_approves_supported_finish() {
    let script = Script::default()
        .rule(ScriptRule::new("judge", json!({"verdict": "approve"})).when("answer: 5"))
        .rule(ScriptRule::new("judge", json!({"verdict": "revise", "hint": "extract first"})));
    let r: ReasonerHandle = Arc::new(ScriptedReasoner::new(script));
    let agent = BrowserAgent::new(r, BrowserAgentConfig::default());
    let finish = BrowserDecision::Finish {
        answer: Some("5".into()),
        values: Default::default(),
        failure: None,
    };
    let memory = "- extract: How many orders? -> answer: 5";
    assert_eq!(agent.judge(memory, &finish, &mut session()), JudgeVerdict::Approve);
    assert_eq!(
        agent.judge("(empty)", &finish, &mut session()),
        JudgeVerdict::Revise {
            hint: "extract first".into()
        }
    );
}

#[test]
fn repeated_failed_action_is_revised() {
    let script = Script::default()
        .rule(
            ScriptRule::new("browser_planner", json!({"decision": "finish", "failure": "no checkout on this site"}))
                .when("vary the target"),
        )
        .rule(ScriptRule::new("browser_planner", json!({"decision": "act", "instruction": "click the Checkout button"})))
        .rule(
            ScriptRule::new("judge", json!({"verdict": "revise", "hint": "vary the target"}))
                .when("act: click the Checkout button -> failed"),
        );
    let s = spy(script);
    let agent = BrowserAgent::new(s.clone(), BrowserAgentConfig::default());
    let st = SubTask::new("s1", "check out", Executor::Browser);
    let mut sess = session();
    let r = agent.run_subtask(&st, &VariableStore::default(), &mut browser(Popup::None), &mut sess);
    assert_eq!(r.status, ResultStatus::Failed);
    assert_eq!(r.failure_reason.as_deref(), Some("no checkout on this site"));
    // First action is not risky, so the judge ran exactly once.
    let judged: Vec<_> = s.seen.lock().unwrap().iter().filter(|b| b.agent == "judge").cloned().collect();
    assert_eq!(judged.len(), 1);
    let verdicts: Vec<_> = sess
        .recorder
        .events()
        .iter()
        .filter(|e| e.agent == AgentRole::Judge && e.kind == EventKind::Reflection)
        .collect();
    assert_eq!(verdicts.len(), 1);
    assert_eq!(verdicts[0].payload["verdict"]["verdict"], "revise");
}

#[test]
fn step_cap_finishes_with_failure() {
    let script = Script::default().rule(ScriptRule::new(
        "browser_planner",
        json!({"decision": "act", "instruction": "click the Account link"}),
    ));
    let r: ReasonerHandle = Arc::new(ScriptedReasoner::new(script));
    let agent = BrowserAgent::new(r, BrowserAgentConfig { step_cap: 3, stm_cap: 10 });
    let st = SubTask::new("s1", "wander", Executor::Browser);
    let res = agent.run_subtask(&st, &VariableStore::default(), &mut browser(Popup::None), &mut session());
    assert_eq!(res.status, ResultStatus::Failed);
    assert_eq!(res.step_count, 3);
    assert!(res.failure_reason.unwrap().contains("step cap"));
}

#[test]
fn observation_spaces_stay_separate() {
    let script = Script::default()
        .rule(ScriptRule::new("browser_planner", json!({"decision": "finish"})).when("answer: "))
        .rule(
            ScriptRule::new("browser_planner", json!({"decision": "extract", "question": "How many orders?"}))
                .when("url: http://shop-web.sim/orders\n"),
        )
        .rule(ScriptRule::new("browser_planner", json!({"decision": "act", "instruction": "click the Orders link"})))
        .rule(ScriptRule::new("extraction_agent", json!({"found": true, "answer": "5", "spans": ["Orders (5)"]})));
    let s = spy(script);
    let agent = BrowserAgent::new(s.clone(), BrowserAgentConfig::default());
    let st = SubTask::new("s1", "count orders on the site", Executor::Browser).producing(&["order_count"]);
    let r = agent.run_subtask(&st, &VariableStore::default(), &mut browser(Popup::Dismissable), &mut session());
    assert_eq!(r.status, ResultStatus::Succeeded, "{:?}", r.failure_reason);
    assert_eq!(r.produced[0].value, json!(5));
    for b in s.seen.lock().unwrap().iter() {
        match b.agent.as_str() {
            "extraction_agent" => {
                assert!(b.fragment("observation").is_none());
                assert!(!b.haystack().contains("[1] heading"));
            }
            "browser_planner" | "action_agent" => assert!(b.fragment("page").is_none()),
            _ => {}
        }
    }
}

#[test]
fn snapshots_report_overlays_and_closed_sessions() {
    let mut b = browser(Popup::None);
    let obs = b.snapshot().unwrap();
    assert!(!obs.overlay_present);
    assert_eq!(obs.ax_tree.len(), 5);
    let mut p = browser(Popup::Dismissable);
    let obs = p.snapshot().unwrap();
    assert!(obs.overlay_present);
    assert_eq!(obs.node(2).unwrap().occluded_by, Some(10));
    b.close();
    assert_eq!(b.snapshot(), Err(BrowserError::SessionClosed));
    assert!(matches!(b.page_content(), Err(BrowserError::SessionClosed)));
}

#[test]
fn simulated_driver_is_deterministic() {
    let run = || {
        let mut b = browser(Popup::Dismissable);
        b.click(12).unwrap();
        b.click(2).unwrap();
        b.click(2).unwrap();
        b.go_back().unwrap();
        (b.page_id().to_string(), b.snapshot().unwrap())
    };
    assert_eq!(run(), run());
    assert_eq!(run().0, "orders");
}
