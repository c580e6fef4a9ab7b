//! Small hand-built world: shop, mail and payment APIs behind an in-process
//! mock server, plus a browsable shop site with optional popups.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::browser::{DriverFactory, NodeDef, OverlayDef, PageDef, SimFactory, SiteGraph};
use crate::context::KnowledgeStore;
use crate::orchestrator::Environment;
use crate::plan::{Task, TaskSource};
use crate::reasoner::{Script, ScriptRule};
use crate::registry::{HttpTransport, MockApp, MockResponse, MockServer, Registry};
use crate::variables::Variable;

pub const SHOP_API: &str = include_str!("../../fixtures/apps/shop-api.json");
pub const MAIL_API: &str = include_str!("../../fixtures/apps/mail-api.json");
pub const PAYMENTS_API: &str = include_str!("../../fixtures/apps/payments.json");

pub const SHOP_SITE_APP: &str = "shop-web";
pub const SHOP_SITE_ENTRY: &str = "http://shop-web.sim/";

/// `(app id, document)` for every bundled API.
pub fn demo_documents() -> [(&'static str, &'static str); 3] {
    [("shop-api", SHOP_API), ("mail-api", MAIL_API), ("payments", PAYMENTS_API)]
}

pub fn base_url(app_id: &str) -> String {
    format!("http://{app_id}.mock")
}

fn orders(prefix: u32, n: u32) -> Value {
    let items: Vec<Value> = (0..n)
        .map(|i| json!({"id": format!("o-{}", prefix + i), "total": 10 * (i + 1), "status": if i % 2 == 0 { "delivered" } else { "shipped" }}))
        .collect();
    json!({ "items": items })
}

fn table(rows: &[(&str, Value)]) -> BTreeMap<String, Value> {
    rows.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Mock server with fixed data: Alice (`u-alice`) has 5 orders, Bob 2, and
/// user `u1` holds a balance of 120.5.
pub fn demo_server() -> MockServer {
    let alice = json!({"id": "u-alice", "name": "Alice", "email": "alice@example.com"});
    let bob = json!({"id": "u-bob", "name": "Bob", "email": "bob@example.com"});
    let shop = MockApp::from_openapi("shop-api", SHOP_API)
        .expect("bundled shop spec")
        .respond(
            "GET",
            "/customers",
            MockResponse::Lookup {
                param: "name".into(),
                table: table(&[("Alice", json!({"customers": [alice]})), ("Bob", json!({"customers": [bob]}))]),
                fallback: Some(json!({"customers": []})),
            },
        )
        .respond(
            "GET",
            "/users/{user}/orders",
            MockResponse::Lookup {
                param: "user".into(),
                table: table(&[("u-alice", orders(1001, 5)), ("u-bob", orders(2001, 2))]),
                fallback: None,
            },
        )
        .respond(
            "GET",
            "/orders/{order_id}",
            MockResponse::Lookup {
                param: "order_id".into(),
                table: (1001..1006)
                    .chain(2001..2003)
                    .map(|i| (format!("o-{i}"), json!({"id": format!("o-{i}"), "total": 25, "status": "delivered"})))
                    .collect(),
                fallback: None,
            },
        )
        .respond(
            "POST",
            "/orders/{order_id}/refund",
            MockResponse::Echo(json!({"refund_id": "rf-1", "status": "refunded"})),
        );
    let mail = MockApp::from_openapi("mail-api", MAIL_API)
        .expect("bundled mail spec")
        .respond("POST", "/messages", MockResponse::Echo(json!({"id": "msg-1", "status": "sent"})))
        .respond(
            "GET",
            "/contacts",
            MockResponse::Lookup {
                param: "name".into(),
                table: table(&[
                    ("Alice", json!({"name": "Alice", "email": "alice@example.com"})),
                    ("Bob", json!({"name": "Bob", "email": "bob@example.com"})),
                ]),
                fallback: None,
            },
        );
    let payments = MockApp::from_openapi("payments", PAYMENTS_API)
        .expect("bundled payments spec")
        .respond(
            "GET",
            "/users/{user_id}/balance",
            MockResponse::Lookup {
                param: "user_id".into(),
                table: table(&[("u1", json!({"user_id": "u1", "balance": 120.5}))]),
                fallback: None,
            },
        )
        .respond("POST", "/transfers", MockResponse::Echo(json!({"id": "tr-1", "status": "pending"})));
    MockServer::new()
        .mount("shop-api.mock", shop)
        .mount("mail-api.mock", mail)
        .mount("payments.mock", payments)
}

/// Registry holding the three bundled APIs, talking to `transport`.
pub fn demo_registry(transport: Arc<dyn HttpTransport>) -> Registry {
    let registry = Registry::new(transport);
    for (app, doc) in demo_documents() {
        registry.ingest_spec(doc, app, &base_url(app)).expect("bundled specs ingest");
    }
    registry
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Popup {
    None,
    /// A newsletter dialog with a Close button covers the home page.
    Dismissable,
    /// A cookie wall with no way out covers the home page.
    Stuck,
}

/// Five-page shop site: home → orders → order detail, home → account → settings.
pub fn demo_site(popup: Popup) -> SiteGraph {
    let mut home = PageDef::new(
        "home",
        SHOP_SITE_ENTRY,
        vec![
            NodeDef::new(1, "heading", "Shop"),
            NodeDef::new(2, "link", "Orders"),
            NodeDef::new(3, "link", "Account"),
            NodeDef::new(4, "searchbox", "Search products"),
            NodeDef::new(5, "button", "Search"),
        ],
    )
    .link(2, "orders")
    .link(3, "account");
    match popup {
        Popup::None => {}
        Popup::Dismissable => {
            home.nodes.push(NodeDef::new(10, "dialog", "Newsletter"));
            home.nodes.push(NodeDef::new(11, "text", "Subscribe for deals").under(10));
            home.nodes.push(NodeDef::new(12, "button", "Close").under(10));
            home = home.overlay(OverlayDef {
                dialog: 10,
                occludes: vec![],
                dismissable: true,
                close: Some(12),
            });
        }
        Popup::Stuck => {
            home.nodes.push(NodeDef::new(10, "dialog", "Cookie wall"));
            home.nodes.push(NodeDef::new(11, "text", "Accept to continue").under(10));
            home = home.overlay(OverlayDef {
                dialog: 10,
                occludes: vec![],
                dismissable: false,
                close: None,
            });
        }
    }
    let orders = PageDef::new(
        "orders",
        "http://shop-web.sim/orders",
        vec![
            NodeDef::new(1, "heading", "Orders (5)"),
            NodeDef::new(2, "link", "Order 1001"),
            NodeDef::new(3, "link", "Order 1002"),
            NodeDef::new(4, "link", "Home"),
        ],
    )
    .link(2, "order-1001")
    .link(3, "order-1001")
    .link(4, "home");
    let detail = PageDef::new(
        "order-1001",
        "http://shop-web.sim/orders/1001",
        vec![
            NodeDef::new(1, "heading", "Order 1001"),
            NodeDef::new(2, "text", "Total: $42.50"),
            NodeDef::new(3, "text", "Status: delivered"),
        ],
    );
    let account = PageDef::new(
        "account",
        "http://shop-web.sim/account",
        vec![NodeDef::new(1, "heading", "Account"), NodeDef::new(2, "link", "Settings")],
    )
    .link(2, "settings");
    let settings = PageDef::new(
        "settings",
        "http://shop-web.sim/account/settings",
        vec![
            NodeDef::new(1, "heading", "Settings"),
            NodeDef::new(2, "combobox", "Language").with_options(&["English", "Deutsch"]),
        ],
    );
    let site = SiteGraph {
        start: "home".into(),
        pages: vec![home, orders, detail, account, settings],
    };
    site.validate().expect("demo site is well formed");
    site
}

pub fn demo_drivers(popup: Popup) -> Arc<dyn DriverFactory> {
    Arc::new(SimFactory {
        site: Arc::new(demo_site(popup)),
    })
}

/// Demo registry over an in-process mock server, plus the shop site.
pub fn demo_environment(popup: Popup) -> Environment {
    let registry = Arc::new(demo_registry(Arc::new(demo_server())));
    Environment {
        registry,
        sites: BTreeMap::from([(SHOP_SITE_APP.to_string(), SHOP_SITE_ENTRY.to_string())]),
        drivers: Some(demo_drivers(popup)),
        knowledge: Arc::new(KnowledgeStore::in_memory()),
    }
}

pub const E2E_TASK_ID: &str = "count-orders-then-mail";
pub const E2E_COUNT_PROGRAM: &str =
    "call r = shop-api.list_orders(user: user_id)\nlet n = len(r.items)\nreturn {order_count: n}";
pub const E2E_MAIL_PROGRAM: &str = "call sent = mail-api.send_message(to: email, subject: \"Your orders\", body: concat(\"You placed \", order_count, \" orders.\"))\nreturn {message_id: sent.id}";

/// Count Alice's orders through the shop API, then mail her the count.
pub fn e2e_task() -> Task {
    Task {
        id: E2E_TASK_ID.into(),
        intent: "How many orders did Alice place? Then email her the count.".into(),
        apps_in_scope: vec!["shop-api".into(), "mail-api".into()],
        initial_context: vec![
            Variable::initial("user_id", json!("u-alice")),
            Variable::initial("email", json!("alice@example.com")),
        ],
        source: TaskSource::Interactive,
    }
}

pub fn e2e_script() -> Script {
    Script::default()
        .rule(ScriptRule::new("utterance_assessor", json!({"quality": "clear", "refined": ""})))
        .rule(ScriptRule::new(
            "plan_controller",
            json!({"subtasks": [
                {"id": "s1", "goal": "Count the orders placed by the customer", "executor": "api",
                 "consumes": ["user_id"], "produces": ["order_count"]},
                {"id": "s2", "goal": "Email the order count to the customer", "executor": "api",
                 "consumes": ["order_count", "email"], "produces": ["message_id"]}
            ]}),
        ))
        .rule(ScriptRule::new("shortlister", json!({"tool_ids": ["shop-api.list_orders"]})).when("Count the orders"))
        .rule(ScriptRule::new("shortlister", json!({"tool_ids": ["mail-api.send_message"]})).when("Email the order count"))
        .rule(ScriptRule::new("api_planner", json!({"program": E2E_COUNT_PROGRAM})).when("Count the orders"))
        .rule(ScriptRule::new("api_planner", json!({"program": E2E_MAIL_PROGRAM})).when("Email the order count"))
        .rule(ScriptRule::new("plan_judge", json!({"verdict": "complete", "answer": null})))
}

/// Browse to the orders page and read the count off it.
pub fn browse_task(popup: Popup) -> Task {
    Task {
        id: format!("browse-orders-{popup:?}").to_lowercase(),
        intent: "How many orders are listed on the shop website?".into(),
        apps_in_scope: vec![SHOP_SITE_APP.into()],
        initial_context: vec![],
        source: TaskSource::Interactive,
    }
}

pub fn browse_script() -> Script {
    Script::default()
        .rule(ScriptRule::new("utterance_assessor", json!({"quality": "clear", "refined": ""})))
        .rule(ScriptRule::new(
            "plan_controller",
            json!({"subtasks": [{"id": "s1", "goal": "Read the number of orders from the orders page",
                                  "executor": "browser", "produces": ["order_count"]}]}),
        ))
        .rule(
            ScriptRule::new("browser_planner", json!({"decision": "finish"}))
                .when("answer: ")
                .when("url: http://shop-web.sim/orders\n"),
        )
        .rule(
            ScriptRule::new("browser_planner", json!({"decision": "extract", "question": "How many orders are listed?"}))
                .when("url: http://shop-web.sim/orders\n"),
        )
        .rule(
            ScriptRule::new("browser_planner", json!({"decision": "finish", "failure": "could not reach the orders page"}))
                .when("act: click the Orders link -> failed"),
        )
        .rule(ScriptRule::new("browser_planner", json!({"decision": "act", "instruction": "click the Orders link"})))
        .rule(ScriptRule::new(
            "extraction_agent",
            json!({"found": true, "answer": "5", "spans": ["Orders (5)"]}),
        ))
        .rule(ScriptRule::new("plan_judge", json!({"verdict": "complete", "answer": null})).unless("[failed]"))
        .rule(ScriptRule::new("plan_judge", json!({"verdict": "abort", "reason": "browsing failed"})))
}
