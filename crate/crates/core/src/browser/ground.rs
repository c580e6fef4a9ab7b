//! Instruction grounding and the action feedback loop.

use serde_json::json;

use super::{ActionKind, ActionOutcome, AxNode, BrowserAction, BrowserDriver, BrowserError, Observation};
use crate::reasoner::{ReasonerHandle, Schema};
use crate::session::{schema_of, TaskSession};
use crate::trajectory::{AgentRole, EventKind};

/// Maximum attempts per instruction, dismissals included.
pub const FEEDBACK_LOOP_CAP: u32 = 3;

const CLICKABLE: [&str; 8] = ["button", "link", "tab", "menuitem", "checkbox", "radio", "option", "switch"];
const EDITABLE: [&str; 3] = ["textbox", "searchbox", "combobox"];
const SELECTABLE: [&str; 2] = ["combobox", "listbox"];
const CLOSE_WORDS: [&str; 6] = ["close", "dismiss", "×", "x", "no thanks", "not now"];
const FILLER: [&str; 14] = [
    "the", "a", "an", "on", "in", "into", "to", "at", "of", "for", "field", "box", "page", "option",
];
const ROLE_WORDS: [&str; 6] = ["button", "link", "tab", "dropdown", "menu", "checkbox"];

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedInstruction {
    pub kind: ActionKind,
    /// Quoted payload: text to type or option to select.
    pub payload: Option<String>,
    /// Lowercased words naming the target element.
    pub target: Vec<String>,
    pub role_hint: Option<String>,
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !(c.is_alphanumeric() || c == '×'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn parse_instruction(instruction: &str) -> Result<ParsedInstruction, BrowserError> {
    let mut payload = None;
    let mut rest = String::new();
    let mut quoted = String::new();
    let mut in_quote = false;
    for c in instruction.chars() {
        match (c, in_quote) {
            ('"', false) => in_quote = true,
            ('"', true) => {
                in_quote = false;
                payload.get_or_insert(std::mem::take(&mut quoted));
                rest.push(' ');
            }
            (c, true) => quoted.push(c),
            (c, false) => rest.push(c),
        }
    }
    let mut ws = words(&rest);
    if ws.is_empty() {
        return Err(BrowserError::InvalidAction(format!("empty instruction `{instruction}`")));
    }
    let verb = ws.remove(0);
    let kind = match verb.as_str() {
        "click" | "press" | "open" | "tap" | "follow" | "choose" | "check" => ActionKind::Click,
        "type" | "enter" | "fill" | "write" | "search" => ActionKind::Type,
        "select" | "pick" => ActionKind::Select,
        "go" | "back" | "return" => ActionKind::GoBack,
        "finish" | "stop" => ActionKind::Finish,
        other => return Err(BrowserError::InvalidAction(format!("unknown verb `{other}`"))),
    };
    if matches!(kind, ActionKind::Type | ActionKind::Select) && payload.is_none() {
        return Err(BrowserError::InvalidAction(format!("`{instruction}` needs a quoted value")));
    }
    let role_hint = ws
        .iter()
        .find(|w| ROLE_WORDS.contains(&w.as_str()))
        .map(|w| match w.as_str() {
            "dropdown" | "menu" => "combobox".to_string(),
            other => other.to_string(),
        });
    let target = ws
        .into_iter()
        .filter(|w| !FILLER.contains(&w.as_str()) && !ROLE_WORDS.contains(&w.as_str()))
        .collect();
    Ok(ParsedInstruction {
        kind,
        payload,
        target,
        role_hint,
    })
}

fn compatible(kind: ActionKind, role: &str) -> bool {
    match kind {
        ActionKind::Click => CLICKABLE.contains(&role),
        ActionKind::Type => EDITABLE.contains(&role),
        ActionKind::Select => SELECTABLE.contains(&role),
        ActionKind::GoBack | ActionKind::Finish => false,
    }
}

fn ground_schema() -> Schema {
    schema_of(&[("node_id", Schema::nullable(Schema::Integer))], &["node_id"])
}

/// Resolves an instruction to a node present in `obs` whose role suits the
/// verb. Several equally good candidates go to the reasoner; a null choice
/// is an ambiguity error.
pub fn ground(
    instruction: &str,
    obs: &Observation,
    reasoner: &ReasonerHandle,
    session: &mut TaskSession,
) -> Result<u32, BrowserError> {
    let parsed = parse_instruction(instruction)?;
    if parsed.target.is_empty() {
        return Err(BrowserError::TargetNotFound(instruction.to_string()));
    }
    let mut candidates: Vec<&AxNode> = obs
        .ax_tree
        .iter()
        .filter(|n| compatible(parsed.kind, &n.role))
        .filter(|n| {
            let name = words(&n.name);
            parsed.target.iter().all(|t| name.contains(t))
        })
        .collect();
    if let Some(hint) = &parsed.role_hint {
        if candidates.iter().any(|n| &n.role == hint) {
            candidates.retain(|n| &n.role == hint);
        }
    }
    if candidates.len() > 1 {
        let exact: Vec<&AxNode> = candidates
            .iter()
            .copied()
            .filter(|n| words(&n.name) == parsed.target)
            .collect();
        if !exact.is_empty() {
            candidates = exact;
        }
    }
    match candidates.as_slice() {
        [] => Err(BrowserError::TargetNotFound(instruction.to_string())),
        [one] => Ok(one.node_id),
        many => {
            let ids: Vec<u32> = many.iter().map(|n| n.node_id).collect();
            let listing: Vec<String> = many
                .iter()
                .map(|n| format!("[{}] {} \"{}\"", n.node_id, n.role, n.name))
                .collect();
            let bundle = session
                .prompt(AgentRole::ActionAgent.as_str())
                .preamble("You pick the element an instruction refers to, or null if unsure.")
                .instructions(instruction.to_string())
                .fragment("candidates", listing.join("\n"))
                .schema(ground_schema())
                .build();
            let choice = session
                .ask(reasoner, AgentRole::ActionAgent, bundle)
                .ok()
                .and_then(|v| v["node_id"].as_u64())
                .map(|id| id as u32)
                .filter(|id| ids.contains(id));
            choice.ok_or(BrowserError::AmbiguousTarget {
                instruction: instruction.to_string(),
                candidates: ids,
            })
        }
    }
}

/// Closes the dialog covering the page: a close-like control inside the
/// dialog if there is one, otherwise Escape.
pub fn dismiss_overlay(driver: &mut dyn BrowserDriver, obs: &Observation, dialog: u32) -> Result<(), BrowserError> {
    let close = obs.ax_tree.iter().find(|n| {
        n.node_id != dialog
            && CLICKABLE.contains(&n.role.as_str())
            && obs.descends_from(n.node_id, dialog)
            && {
                let name = n.name.trim().to_lowercase();
                CLOSE_WORDS.iter().any(|w| name == *w || words(&name).first().is_some_and(|f| f == w))
            }
    });
    match close {
        Some(n) => driver.click(n.node_id),
        None => driver.press_escape(),
    }
}

fn to_action(parsed: &ParsedInstruction, target: Option<u32>) -> BrowserAction {
    BrowserAction {
        kind: parsed.kind,
        target,
        text: (parsed.kind == ActionKind::Type).then(|| parsed.payload.clone()).flatten(),
        option: (parsed.kind == ActionKind::Select).then(|| parsed.payload.clone()).flatten(),
    }
}

/// Grounds and dispatches one instruction, retrying on failure. A covered
/// target first has its dialog dismissed; each dismissal uses an attempt.
pub fn act(
    instruction: &str,
    driver: &mut dyn BrowserDriver,
    reasoner: &ReasonerHandle,
    session: &mut TaskSession,
) -> Result<ActionOutcome, BrowserError> {
    let parsed = parse_instruction(instruction)?;
    let mut feedback = String::new();
    let mut dismissed = Vec::new();
    for attempt in 1..=FEEDBACK_LOOP_CAP {
        let obs = driver.snapshot()?;
        let target = match parsed.kind {
            ActionKind::GoBack | ActionKind::Finish => None,
            _ => match ground(instruction, &obs, reasoner, session) {
                Ok(id) => Some(id),
                Err(e @ (BrowserError::TargetNotFound(_) | BrowserError::AmbiguousTarget { .. })) => {
                    feedback = e.to_string();
                    session.record(
                        AgentRole::ActionAgent,
                        EventKind::Result,
                        json!({"instruction": instruction, "attempt": attempt, "feedback": feedback}),
                    );
                    continue;
                }
                Err(e) => return Err(e),
            },
        };
        if let Some(dialog) = target.and_then(|t| obs.node(t)).and_then(|n| n.occluded_by) {
            let result = dismiss_overlay(driver, &obs, dialog);
            feedback = match &result {
                Ok(()) => {
                    dismissed.push(dialog);
                    format!("dismissed dialog {dialog} covering the target")
                }
                Err(e) => format!("target covered by dialog {dialog}; dismissal failed: {e}"),
            };
            session.record(
                AgentRole::ActionAgent,
                EventKind::Action,
                json!({"instruction": instruction, "attempt": attempt, "dismiss": dialog, "ok": result.is_ok()}),
            );
            if let Err(BrowserError::SessionClosed) = result {
                return Err(BrowserError::SessionClosed);
            }
            continue;
        }
        let action = to_action(&parsed, target);
        match super::dispatch(driver, &action) {
            Ok(()) => {
                let new_observation = driver.snapshot()?;
                session.record(
                    AgentRole::ActionAgent,
                    EventKind::Action,
                    json!({"instruction": instruction, "attempt": attempt, "action": action, "url": new_observation.url}),
                );
                return Ok(ActionOutcome {
                    applied: action,
                    success: true,
                    feedback: (!feedback.is_empty()).then_some(feedback),
                    attempts: attempt,
                    dismissed,
                    new_observation,
                });
            }
            Err(BrowserError::Rejected(why)) => {
                feedback = why;
                session.record(
                    AgentRole::ActionAgent,
                    EventKind::Result,
                    json!({"instruction": instruction, "attempt": attempt, "action": action, "feedback": feedback}),
                );
            }
            Err(e) => return Err(e),
        }
    }
    Err(BrowserError::ActionFailed {
        attempts: FEEDBACK_LOOP_CAP,
        feedback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::browser::sim::{NodeDef, OverlayDef, PageDef, SimBrowser, SiteGraph};
    use crate::plan::{Task, TaskSource};
    use crate::reasoner::{Script, ScriptRule, ScriptedReasoner};
    use crate::trajectory::Recorder;
    use serde_json::Value;
    use std::sync::Arc;

    fn session() -> TaskSession {
        let task = Task {
            id: "t".into(),
            intent: "x".into(),
            apps_in_scope: vec!["shop".into()],
            initial_context: vec![],
            source: TaskSource::Interactive,
        };
        TaskSession::new(task, Recorder::new("r", "t"))
    }

    fn reasoner(choice: Value) -> ReasonerHandle {
        Arc::new(ScriptedReasoner::new(
            Script::default().rule(ScriptRule::new("action_agent", serde_json::json!({ "node_id": choice }))),
        ))
    }

    fn obs(nodes: &[(u32, &str, &str)]) -> Observation {
        Observation {
            url: "http://s/".into(),
            ax_tree: nodes
                .iter()
                .map(|(id, role, name)| AxNode {
                    node_id: *id,
                    role: role.to_string(),
                    name: name.to_string(),
                    value: None,
                    bounds: (0, 0, 1, 1),
                    occluded_by: None,
                    parent: None,
                })
                .collect(),
            screenshot_ref: "s".into(),
            overlay_present: false,
            capture_seq: 1,
        }
    }

    #[test]
    fn instruction_parsing() {
        let p = parse_instruction("type \"alice smith\" into the Search box").unwrap();
        assert_eq!(p.kind, ActionKind::Type);
        assert_eq!(p.payload.as_deref(), Some("alice smith"));
        assert_eq!(p.target, vec!["search"]);
        let p = parse_instruction("click the Orders link").unwrap();
        assert_eq!((p.kind, p.target.clone(), p.role_hint.as_deref()), (ActionKind::Click, vec!["orders".to_string()], Some("link")));
        assert_eq!(parse_instruction("go back").unwrap().kind, ActionKind::GoBack);
        assert!(parse_instruction("select the Status dropdown").is_err());
        assert!(parse_instruction("dance wildly").is_err());
    }

    #[test]
    fn unique_ambiguous_absent() {
        let r = reasoner(Value::Null);
        let mut s = session();
        let o = obs(&[(1, "heading", "Submit"), (2, "button", "Submit")]);
        assert_eq!(ground("click the Submit button", &o, &r, &mut s), Ok(2));
        let o2 = obs(&[(1, "button", "Submit"), (2, "button", "Submit")]);
        assert!(matches!(
            ground("click the Submit button", &o2, &r, &mut s),
            Err(BrowserError::AmbiguousTarget { .. })
        ));
        assert_eq!(ground("click the Submit button", &o2, &reasoner(serde_json::json!(2)), &mut s), Ok(2));
        assert!(matches!(ground("click Cancel", &o, &r, &mut s), Err(BrowserError::TargetNotFound(_))));
        let o3 = obs(&[(1, "link", "Orders"), (2, "link", "My Orders")]);
        assert_eq!(ground("click Orders", &o3, &r, &mut s), Ok(1));
    }

    fn popup_site(dismissable: bool) -> SimBrowser {
        let home = PageDef::new(
            "home",
            "http://shop.sim/",
            vec![
                NodeDef::new(1, "link", "Orders"),
                NodeDef::new(10, "dialog", "Subscribe"),
                NodeDef::new(11, "button", "Close").under(10),
            ],
        )
        .link(1, "orders")
        .overlay(OverlayDef {
            dialog: 10,
            occludes: vec![1],
            dismissable,
            close: Some(11),
        });
        let orders = PageDef::new("orders", "http://shop.sim/orders", vec![NodeDef::new(1, "heading", "Orders")]);
        SimBrowser::new(Arc::new(SiteGraph {
            start: "home".into(),
            pages: vec![home, orders],
        }))
    }

    #[test]
    fn popup_bypass() {
        let r = reasoner(Value::Null);
        let mut s = session();
        let mut b = popup_site(true);
        let out = act("click the Orders link", &mut b, &r, &mut s).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(out.dismissed, vec![10]);
        assert_eq!(out.new_observation.url, "http://shop.sim/orders");

        let mut stuck = popup_site(false);
        match act("click the Orders link", &mut stuck, &r, &mut s) {
            Err(BrowserError::ActionFailed { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plain_click_single_attempt() {
        let r = reasoner(Value::Null);
        let mut s = session();
        let mut b = popup_site(true);
        b.press_escape().unwrap();
        let out = act("click Orders", &mut b, &r, &mut s).unwrap();
        assert_eq!((out.attempts, out.success), (1, true));
    }
}
