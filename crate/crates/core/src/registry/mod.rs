//! Application onboarding from OpenAPI documents, minimized tool specs,
//! hierarchical search, and the uniform tool gateway.

pub mod minimize;
pub mod mock;
pub mod openapi;
pub mod search;
pub mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use minimize::{minimize, ParamLocation, ResponseField, ToolParam, ToolSpec};
pub use mock::{MockApp, MockResponse, MockServer};
pub use search::{SearchHit, SearchIndex};
pub use transport::{HttpRequest, HttpResponse, HttpTransport, ReqwestTransport};

use crate::value::TypeTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("cannot parse OpenAPI document: {0}")]
    SpecParse(String),
    #[error("application `{0}` is already registered")]
    DuplicateApp(String),
    #[error("unresolvable reference `{0}`")]
    UnresolvableRef(String),
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid argument `{param}`: {reason}")]
    ArgValidation { param: String, reason: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppManifest {
    pub app_id: String,
    pub title: String,
    pub description: String,
    pub base_url: String,
    pub tools: Vec<ToolSpec>,
    pub source_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub status_code: u16,
    pub body: Value,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ToolResponse {
    pub fn is_success(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Default)]
struct State {
    apps: BTreeMap<String, AppManifest>,
    tools: BTreeMap<String, ToolSpec>,
    index: SearchIndex,
}

/// Shared, read-mostly registry. Ingestion holds the write lock for the
/// duration of one app's registration.
pub struct Registry {
    state: RwLock<State>,
    transport: Arc<dyn HttpTransport>,
    headers: RwLock<BTreeMap<String, Vec<(String, String)>>>,
}

pub type RegistryHandle = Arc<Registry>;

impl Registry {
    pub fn new(transport: Arc<dyn HttpTransport>) -> Self {
        Registry {
            state: RwLock::new(State::default()),
            transport,
            headers: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn ingest_spec(
        &self,
        document: &str,
        app_id: &str,
        base_url: &str,
    ) -> Result<AppManifest, RegistryError> {
        let parsed = openapi::parse_document(document)?;
        let mut tools: Vec<ToolSpec> = Vec::with_capacity(parsed.operations.len());
        let mut seen = BTreeSet::new();
        for op in &parsed.operations {
            let spec = minimize(app_id, op);
            if !seen.insert(spec.tool_id.clone()) {
                return Err(RegistryError::SpecParse(format!(
                    "duplicate operation key `{}`",
                    spec.tool_id
                )));
            }
            tools.push(spec);
        }
        let manifest = AppManifest {
            app_id: app_id.to_string(),
            title: parsed.title,
            description: parsed.description,
            base_url: base_url.trim_end_matches('/').to_string(),
            tools,
            source_digest: hex::encode(Sha256::digest(document.as_bytes())),
        };

        let mut state = self.state.write().expect("registry lock");
        if state.apps.contains_key(app_id) {
            return Err(RegistryError::DuplicateApp(app_id.to_string()));
        }
        for t in &manifest.tools {
            state.tools.insert(t.tool_id.clone(), t.clone());
        }
        state.apps.insert(app_id.to_string(), manifest.clone());
        state.index = SearchIndex::build(state.apps.values());
        Ok(manifest)
    }

    /// Headers attached verbatim to every request for `app_id`.
    pub fn set_app_headers(&self, app_id: &str, headers: Vec<(String, String)>) {
        self.headers
            .write()
            .expect("headers lock")
            .insert(app_id.to_string(), headers);
    }

    pub fn is_empty(&self) -> bool {
        self.state.read().expect("registry lock").apps.is_empty()
    }

    pub fn app_ids(&self) -> Vec<String> {
        self.state.read().expect("registry lock").apps.keys().cloned().collect()
    }

    pub fn manifest(&self, app_id: &str) -> Option<AppManifest> {
        self.state.read().expect("registry lock").apps.get(app_id).cloned()
    }

    pub fn tool(&self, tool_id: &str) -> Option<ToolSpec> {
        self.state.read().expect("registry lock").tools.get(tool_id).cloned()
    }

    pub fn search(
        &self,
        query: &str,
        scope: Option<&str>,
        k: usize,
    ) -> Result<Vec<SearchHit>, RegistryError> {
        let scope: Option<Vec<String>> = scope.map(|s| vec![s.to_string()]);
        self.search_scoped(query, scope.as_deref(), k)
    }

    /// Search restricted to a set of applications.
    pub fn search_scoped(
        &self,
        query: &str,
        scope: Option<&[String]>,
        k: usize,
    ) -> Result<Vec<SearchHit>, RegistryError> {
        if k == 0 {
            return Err(RegistryError::InvalidK);
        }
        let state = self.state.read().expect("registry lock");
        if state.apps.is_empty() {
            return Err(RegistryError::EmptyRegistry);
        }
        Ok(state.index.search(query, scope, k))
    }

    pub fn invoke(&self, tool_id: &str, args: &Map<String, Value>) -> Result<ToolResponse, RegistryError> {
        let (tool, base_url) = {
            let state = self.state.read().expect("registry lock");
            let tool = state
                .tools
                .get(tool_id)
                .cloned()
                .ok_or_else(|| RegistryError::UnknownTool(tool_id.to_string()))?;
            let base = state.apps[tool.app_id()].base_url.clone();
            (tool, base)
        };
        validate_args(&tool, args)?;
        let request = build_request(&tool, &base_url, args, self.app_headers(tool.app_id()));
        let started = Instant::now();
        let response = self
            .transport
            .send(&request)
            .map_err(RegistryError::Transport)?;
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        let body = if response.body.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&response.body).unwrap_or(Value::String(response.body.clone()))
        };
        let error = (!(200..300).contains(&response.status)).then(|| {
            let detail = body
                .get("error")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| crate::value::render(&body));
            format!("HTTP {}: {detail}", response.status)
        });
        Ok(ToolResponse {
            status_code: response.status,
            body,
            latency_ms,
            error,
        })
    }

    fn app_headers(&self, app_id: &str) -> Vec<(String, String)> {
        self.headers
            .read()
            .expect("headers lock")
            .get(app_id)
            .cloned()
            .unwrap_or_default()
    }

    /// Deterministic dump of every manifest, sorted by app id.
    pub fn export(&self) -> String {
        let state = self.state.read().expect("registry lock");
        let manifests: Vec<&AppManifest> = state.apps.values().collect();
        serde_json::to_string_pretty(&manifests).expect("manifests serialize")
    }
}

fn arg_matches(tag: TypeTag, v: &Value) -> bool {
    TypeTag::of(v) == tag
}

/// Type-appropriate placeholder arguments built from a tool spec alone:
/// every required parameter plus every optional query parameter.
pub fn sample_args(tool: &ToolSpec) -> Map<String, Value> {
    tool.params
        .iter()
        .filter(|p| p.required || p.location == ParamLocation::Query)
        .map(|p| {
            let v = match p.type_tag {
                TypeTag::String => Value::String("sample".into()),
                TypeTag::Number => Value::from(1),
                TypeTag::Boolean => Value::Bool(true),
                TypeTag::List => Value::Array(Vec::new()),
                TypeTag::Record => Value::Object(Map::new()),
                TypeTag::Null => Value::Null,
            };
            (p.name.clone(), v)
        })
        .collect()
}

pub fn validate_args(tool: &ToolSpec, args: &Map<String, Value>) -> Result<(), RegistryError> {
    for p in tool.required_params() {
        match args.get(&p.name) {
            None | Some(Value::Null) => {
                return Err(RegistryError::ArgValidation {
                    param: p.name.clone(),
                    reason: "required parameter missing".into(),
                })
            }
            _ => {}
        }
    }
    for (name, v) in args {
        let Some(p) = tool.param(name) else {
            return Err(RegistryError::ArgValidation {
                param: name.clone(),
                reason: format!("`{}` has no such parameter", tool.tool_id),
            });
        };
        if v.is_null() && !p.required {
            continue;
        }
        if !arg_matches(p.type_tag, v) {
            return Err(RegistryError::ArgValidation {
                param: name.clone(),
                reason: format!("expected {}, got {}", p.type_tag, TypeTag::of(v)),
            });
        }
    }
    Ok(())
}

fn build_request(
    tool: &ToolSpec,
    base_url: &str,
    args: &Map<String, Value>,
    headers: Vec<(String, String)>,
) -> HttpRequest {
    let mut path = tool.path.clone();
    let mut query = Vec::new();
    let mut body = Map::new();
    let mut raw_body = None;
    for p in &tool.params {
        let Some(v) = args.get(&p.name).filter(|v| !v.is_null()) else {
            continue;
        };
        match p.location {
            ParamLocation::Path => {
                let encoded = transport::encode_component(&crate::value::render(v));
                path = path.replace(&format!("{{{}}}", p.name), &encoded);
            }
            ParamLocation::Query => query.push(format!(
                "{}={}",
                transport::encode_component(&p.name),
                transport::encode_component(&crate::value::render(v))
            )),
            ParamLocation::Body if p.name == "body" && tool.params.iter().filter(|q| q.location == ParamLocation::Body).count() == 1 && p.type_tag != TypeTag::Record => {
                raw_body = Some(v.clone());
            }
            ParamLocation::Body => {
                body.insert(p.name.clone(), v.clone());
            }
        }
    }
    let mut url = format!("{base_url}{path}");
    if !query.is_empty() {
        url.push('?');
        url.push_str(&query.join("&"));
    }
    let has_body = tool.params.iter().any(|p| p.location == ParamLocation::Body);
    HttpRequest {
        method: tool.method.clone(),
        url,
        headers,
        body: raw_body.or_else(|| has_body.then_some(Value::Object(body))),
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{MockApp, MockResponse, MockServer};
    use super::*;
    use serde_json::json;

    const PAYMENTS: &str = r#"{
      "openapi": "3.0.0", "info": {"title": "Payments", "description": "Send money and check balances"},
      "paths": {
        "/users/{user_id}/balance": {"get": {"operationId": "get_balance", "summary": "Get the account balance of a user",
          "parameters": [{"name": "user_id", "in": "path", "required": true, "schema": {"type": "string"}}],
          "responses": {"200": {"content": {"application/json": {"schema": {"type": "object", "properties": {"balance": {"type": "number"}}}}}}}}},
        "/transfers": {"post": {"operationId": "create_transfer", "summary": "Transfer money to a friend or contact",
          "requestBody": {"content": {"application/json": {"schema": {"type": "object", "required": ["to", "amount"], "properties": {"to": {"type": "string"}, "amount": {"type": "number"}}}}}},
          "responses": {"201": {"content": {"application/json": {"schema": {"type": "object", "properties": {"id": {"type": "string"}}}}}}}}}
      }}"#;

    fn registry(fault: bool) -> Registry {
        let mut app = MockApp::from_openapi("payments", PAYMENTS).unwrap().respond(
            "GET",
            "/users/{user_id}/balance",
            MockResponse::Lookup {
                param: "user_id".into(),
                table: [("u1".to_string(), json!({"balance": 120}))].into(),
                fallback: None,
            },
        );
        if fault {
            app = app.fault("GET", "/users/{user_id}/balance", 500);
        }
        let server = MockServer::new().mount("payments.mock", app);
        let r = Registry::new(Arc::new(server));
        r.ingest_spec(PAYMENTS, "payments", "http://payments.mock").unwrap();
        r
    }

    fn args(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn invoke_happy_path() {
        let r = registry(false);
        let resp = r.invoke("payments.get_balance", &args(json!({"user_id": "u1"}))).unwrap();
        assert_eq!(resp.status_code, 200);
        assert_eq!(resp.body["balance"], json!(120));
        assert!(resp.error.is_none());
    }

    #[test]
    fn invoke_validation_names_param() {
        let r = registry(false);
        let err = r.invoke("payments.get_balance", &Map::new()).unwrap_err();
        assert_eq!(err.to_string(), "invalid argument `user_id`: required parameter missing");
        let err = r
            .invoke("payments.create_transfer", &args(json!({"to": "bob", "amount": "ten"})))
            .unwrap_err();
        assert!(matches!(err, RegistryError::ArgValidation { ref param, .. } if param == "amount"));
        assert!(matches!(
            r.invoke("payments.nope", &Map::new()),
            Err(RegistryError::UnknownTool(_))
        ));
    }

    #[test]
    fn server_errors_are_reported_not_raised() {
        let r = registry(true);
        let resp = r.invoke("payments.get_balance", &args(json!({"user_id": "u1"}))).unwrap();
        assert_eq!(resp.status_code, 500);
        assert!(resp.error.as_deref().unwrap().contains("500"));
    }

    #[test]
    fn duplicate_app_rejected() {
        let r = registry(false);
        assert_eq!(
            r.ingest_spec(PAYMENTS, "payments", "http://x"),
            Err(RegistryError::DuplicateApp("payments".into()))
        );
    }

    #[test]
    fn empty_registry_and_k() {
        let r = Registry::new(Arc::new(MockServer::new()));
        assert_eq!(r.search("x", None, 3), Err(RegistryError::EmptyRegistry));
        let r = registry(false);
        assert_eq!(r.search("x", None, 0), Err(RegistryError::InvalidK));
    }

    #[test]
    fn export_is_deterministic() {
        assert_eq!(registry(false).export(), registry(false).export());
    }

    #[test]
    fn request_building() {
        let r = registry(false);
        let tool = r.tool("payments.create_transfer").unwrap();
        let req = build_request(&tool, "http://h", &args(json!({"to": "b b", "amount": 3})), vec![]);
        assert_eq!(req.url, "http://h/transfers");
        assert_eq!(req.body, Some(json!({"to": "b b", "amount": 3})));
        let tool = r.tool("payments.get_balance").unwrap();
        let req = build_request(&tool, "http://h", &args(json!({"user_id": "a/b"})), vec![]);
        assert_eq!(req.url, "http://h/users/a%2Fb/balance");
    }
}
