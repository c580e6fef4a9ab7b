//! Remote-control adapter: a driver that speaks a small JSON command protocol
//! over HTTP, plus a server side that exposes any local driver the same way.
//!
//! Every command is `POST {endpoint}/sessions/{session}/commands` with a
//! [`WireCommand`] body. Replies are `200 {"observation"|"content"|...}` on
//! success, `409 {"error"}` when the page rejects an action, `410` once the
//! session is closed and `400` for navigation errors.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BrowserDriver, BrowserError, DriverFactory, Observation, PageContent};
use crate::registry::{HttpRequest, HttpResponse, HttpTransport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum WireCommand {
    Navigate { url: String },
    Click { node: u32 },
    Type { node: u32, text: String },
    Select { node: u32, option: String },
    GoBack,
    PressEscape,
    Snapshot,
    PageContent,
    Close,
}

pub struct WireBrowserDriver {
    transport: Arc<dyn HttpTransport>,
    url: String,
    closed: bool,
}

impl WireBrowserDriver {
    pub fn new(transport: Arc<dyn HttpTransport>, endpoint: &str, session: &str) -> Self {
        WireBrowserDriver {
            transport,
            url: format!("{}/sessions/{session}/commands", endpoint.trim_end_matches('/')),
            closed: false,
        }
    }

    fn send(&self, command: &WireCommand) -> Result<Value, BrowserError> {
        if self.closed {
            return Err(BrowserError::SessionClosed);
        }
        let request = HttpRequest {
            method: "POST".into(),
            url: self.url.clone(),
            headers: vec![("content-type".into(), "application/json".into())],
            body: Some(serde_json::to_value(command).expect("commands serialize")),
        };
        let response = self.transport.send(&request).map_err(BrowserError::Navigation)?;
        let body: Value = serde_json::from_str(&response.body).unwrap_or(Value::Null);
        let error = || body["error"].as_str().unwrap_or("unknown error").to_string();
        match response.status {
            200..=299 => Ok(body),
            409 => Err(BrowserError::Rejected(error())),
            410 => Err(BrowserError::SessionClosed),
            _ => Err(BrowserError::Navigation(error())),
        }
    }

    fn decode<T: for<'de> Deserialize<'de>>(value: Value, field: &str) -> Result<T, BrowserError> {
        serde_json::from_value(value[field].clone())
            .map_err(|e| BrowserError::Navigation(format!("malformed `{field}` reply: {e}")))
    }
}

impl BrowserDriver for WireBrowserDriver {
    fn navigate(&mut self, url: &str) -> Result<(), BrowserError> {
        self.send(&WireCommand::Navigate { url: url.into() }).map(|_| ())
    }

    fn click(&mut self, node: u32) -> Result<(), BrowserError> {
        self.send(&WireCommand::Click { node }).map(|_| ())
    }

    fn type_text(&mut self, node: u32, text: &str) -> Result<(), BrowserError> {
        self.send(&WireCommand::Type { node, text: text.into() }).map(|_| ())
    }

    fn select(&mut self, node: u32, option: &str) -> Result<(), BrowserError> {
        self.send(&WireCommand::Select {
            node,
            option: option.into(),
        })
        .map(|_| ())
    }

    fn go_back(&mut self) -> Result<(), BrowserError> {
        self.send(&WireCommand::GoBack).map(|_| ())
    }

    fn press_escape(&mut self) -> Result<(), BrowserError> {
        self.send(&WireCommand::PressEscape).map(|_| ())
    }

    fn snapshot(&mut self) -> Result<Observation, BrowserError> {
        let reply = self.send(&WireCommand::Snapshot)?;
        Self::decode(reply, "observation")
    }

    fn page_content(&mut self) -> Result<PageContent, BrowserError> {
        let reply = self.send(&WireCommand::PageContent)?;
        Self::decode(reply, "content")
    }

    fn close(&mut self) {
        if !self.closed {
            let _ = self.send(&WireCommand::Close);
            self.closed = true;
        }
    }
}

/// Serves local driver sessions over the wire protocol; sessions open on first use.
pub struct WireServer {
    factory: Arc<dyn DriverFactory>,
    sessions: Mutex<BTreeMap<String, Box<dyn BrowserDriver>>>,
}

impl WireServer {
    pub fn new(factory: Arc<dyn DriverFactory>) -> Self {
        WireServer {
            factory,
            sessions: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn handle(&self, request: &HttpRequest) -> HttpResponse {
        let path = request.url.split_once("://").map(|(_, r)| r).unwrap_or(&request.url);
        let parts: Vec<&str> = path.split('/').collect();
        let session = match parts.as_slice() {
            [_, "sessions", id, "commands"] if request.method.eq_ignore_ascii_case("POST") => id.to_string(),
            _ => return HttpResponse::json(404, &json!({"error": "unknown endpoint"})),
        };
        let command: WireCommand = match request.body.clone().map(serde_json::from_value) {
            Some(Ok(c)) => c,
            _ => return HttpResponse::json(422, &json!({"error": "malformed command"})),
        };
        let mut sessions = self.sessions.lock().expect("sessions lock");
        let driver = sessions.entry(session).or_insert_with(|| self.factory.open());
        let reply = match command {
            WireCommand::Navigate { url } => driver.navigate(&url).map(|_| json!({})),
            WireCommand::Click { node } => driver.click(node).map(|_| json!({})),
            WireCommand::Type { node, text } => driver.type_text(node, &text).map(|_| json!({})),
            WireCommand::Select { node, option } => driver.select(node, &option).map(|_| json!({})),
            WireCommand::GoBack => driver.go_back().map(|_| json!({})),
            WireCommand::PressEscape => driver.press_escape().map(|_| json!({})),
            WireCommand::Snapshot => driver.snapshot().map(|o| json!({"observation": o})),
            WireCommand::PageContent => driver.page_content().map(|c| json!({"content": c})),
            WireCommand::Close => {
                driver.close();
                Ok(json!({}))
            }
        };
        match reply {
            Ok(v) => HttpResponse::json(200, &v),
            Err(BrowserError::Rejected(e)) => HttpResponse::json(409, &json!({"error": e})),
            Err(BrowserError::SessionClosed) => HttpResponse::json(410, &json!({"error": "session closed"})),
            Err(e) => HttpResponse::json(400, &json!({"error": e.to_string()})),
        }
    }
}

impl HttpTransport for WireServer {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        Ok(self.handle(request))
    }
}
