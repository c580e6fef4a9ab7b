//! Deterministic in-process application servers derived from OpenAPI
//! documents.
//!
//! Request validation reads parameter requirements straight from the source
//! document, independently of the minimizer, so it can vouch for tool specs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde_json::{json, Map, Value};

use super::openapi::{parse_document, ParsedOperation};
use super::transport::{decode_component, split_url, HttpRequest, HttpResponse, HttpTransport};
use super::RegistryError;

#[derive(Debug, Clone, PartialEq)]
pub enum MockResponse {
    /// Body synthesized from the operation's success response schema.
    Synthesized,
    Fixed(Value),
    /// Body looked up by the value of one request parameter; unknown keys
    /// produce a 404 unless a fallback is given.
    Lookup {
        param: String,
        table: BTreeMap<String, Value>,
        fallback: Option<Value>,
    },
    /// The accepted arguments echoed back, merged over a fixed record.
    Echo(Value),
}

#[derive(Debug, Clone)]
struct Requirement {
    name: String,
    location: &'static str,
    ty: String,
    required: bool,
}

#[derive(Debug, Clone)]
struct MockRoute {
    method: String,
    template: String,
    segments: Vec<String>,
    requirements: Vec<Requirement>,
    success_code: u16,
    success_schema: Option<Value>,
    response: MockResponse,
    fault: Option<u16>,
}

#[derive(Debug, Clone)]
pub struct MockApp {
    pub app_id: String,
    routes: Vec<MockRoute>,
}

impl MockApp {
    pub fn from_openapi(app_id: &str, document: &str) -> Result<MockApp, RegistryError> {
        let doc = parse_document(document)?;
        let routes = doc.operations.iter().map(route_from).collect();
        Ok(MockApp {
            app_id: app_id.to_string(),
            routes,
        })
    }

    /// Routes keyed by `(METHOD, path template)`.
    pub fn route_keys(&self) -> Vec<(String, String)> {
        self.routes
            .iter()
            .map(|r| (r.method.clone(), r.template.clone()))
            .collect()
    }

    fn route_mut(&mut self, method: &str, template: &str) -> &mut MockRoute {
        let method = method.to_uppercase();
        self.routes
            .iter_mut()
            .find(|r| r.method == method && r.template == template)
            .unwrap_or_else(|| panic!("no mock route {method} {template}"))
    }

    pub fn respond(mut self, method: &str, template: &str, response: MockResponse) -> Self {
        self.route_mut(method, template).response = response;
        self
    }

    /// Forces a route to answer with `status` regardless of the request.
    pub fn fault(mut self, method: &str, template: &str, status: u16) -> Self {
        self.route_mut(method, template).fault = Some(status);
        self
    }

    fn handle(&self, method: &str, path: &str, query: &[(String, String)], body: Option<&Value>) -> HttpResponse {
        let parts: Vec<String> = path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(decode_component)
            .collect();
        let mut path_values = BTreeMap::new();
        let route = self.routes.iter().find(|r| {
            path_values.clear();
            r.method == method
                && r.segments.len() == parts.len()
                && r.segments.iter().zip(&parts).all(|(seg, part)| {
                    match seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                        Some(name) => {
                            path_values.insert(name.to_string(), part.clone());
                            true
                        }
                        None => seg == part,
                    }
                })
        });
        let Some(route) = route else {
            return HttpResponse::json(404, &json!({"error": format!("no route {method} {path}")}));
        };
        if let Some(status) = route.fault {
            return HttpResponse::json(status, &json!({"error": "injected fault"}));
        }

        let query: BTreeMap<&str, &str> = query.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let body_obj = body.and_then(Value::as_object);
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        let mut accepted = Map::new();
        for req in &route.requirements {
            let raw: Option<Value> = match req.location {
                "path" => path_values.get(&req.name).map(|s| Value::String(s.clone())),
                "query" => query.get(req.name.as_str()).map(|s| Value::String(s.to_string())),
                _ => body_obj.and_then(|b| b.get(&req.name)).cloned(),
            };
            match raw {
                None | Some(Value::Null) if req.required => {
                    return HttpResponse::json(
                        400,
                        &json!({"error": format!("missing required {} parameter `{}`", req.location, req.name)}),
                    )
                }
                None | Some(Value::Null) => {}
                Some(v) => {
                    let textual = req.location != "body";
                    if !type_accepts(&req.ty, &v, textual) {
                        return HttpResponse::json(
                            422,
                            &json!({"error": format!("parameter `{}` must be {}", req.name, req.ty)}),
                        );
                    }
                    seen.insert(req.name.clone(), crate::value::render(&v));
                    accepted.insert(req.name.clone(), v);
                }
            }
        }

        for (k, v) in &path_values {
            seen.entry(k.clone()).or_insert_with(|| v.clone());
        }

        match &route.response {
            MockResponse::Fixed(v) => HttpResponse::json(route.success_code, v),
            MockResponse::Echo(base) => {
                let mut out = base.as_object().cloned().unwrap_or_default();
                out.extend(accepted);
                HttpResponse::json(route.success_code, &Value::Object(out))
            }
            MockResponse::Synthesized => {
                let v = route
                    .success_schema
                    .as_ref()
                    .map(|s| synthesize(s, "value", 0))
                    .unwrap_or(Value::Null);
                HttpResponse::json(route.success_code, &v)
            }
            MockResponse::Lookup {
                param,
                table,
                fallback,
            } => {
                let hit = seen
                    .get(param)
                    .and_then(|k| table.get(k))
                    .or(fallback.as_ref());
                match hit {
                    Some(v) => HttpResponse::json(route.success_code, v),
                    None => HttpResponse::json(404, &json!({"error": format!("no record for `{param}`")})),
                }
            }
        }
    }
}

fn route_from(op: &ParsedOperation) -> MockRoute {
    let mut requirements = Vec::new();
    for p in &op.parameters {
        let location = match p.get("in").and_then(Value::as_str) {
            Some("path") => "path",
            Some("query") => "query",
            _ => continue,
        };
        requirements.push(Requirement {
            name: p["name"].as_str().unwrap_or_default().to_string(),
            location,
            ty: p
                .pointer("/schema/type")
                .and_then(Value::as_str)
                .unwrap_or("string")
                .to_string(),
            required: location == "path" || p.get("required").and_then(Value::as_bool) == Some(true),
        });
    }
    if let Some(schema) = op
        .request_body
        .as_ref()
        .and_then(|b| b.pointer("/content/application~1json/schema"))
    {
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            let required: Vec<&str> = schema
                .get("required")
                .and_then(Value::as_array)
                .map(|r| r.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            for (name, prop) in props {
                requirements.push(Requirement {
                    name: name.clone(),
                    location: "body",
                    ty: prop.get("type").and_then(Value::as_str).unwrap_or("object").to_string(),
                    required: required.contains(&name.as_str()),
                });
            }
        }
    }
    let mut codes: Vec<&String> = op.responses.keys().filter(|c| c.starts_with('2')).collect();
    codes.sort();
    let success_code = codes.first().and_then(|c| c.parse().ok()).unwrap_or(200);
    let success_schema = codes
        .first()
        .and_then(|c| op.responses[c.as_str()].pointer("/content/application~1json/schema"))
        .cloned();
    MockRoute {
        method: op.method.to_uppercase(),
        template: op.path.clone(),
        segments: op.path.split('/').filter(|s| !s.is_empty()).map(str::to_string).collect(),
        requirements,
        success_code,
        success_schema,
        response: MockResponse::Synthesized,
        fault: None,
    }
}

fn type_accepts(ty: &str, v: &Value, textual: bool) -> bool {
    match (ty, v) {
        ("integer", Value::String(s)) if textual => s.parse::<i64>().is_ok(),
        ("number", Value::String(s)) if textual => s.parse::<f64>().is_ok(),
        ("boolean", Value::String(s)) if textual => s == "true" || s == "false",
        ("string", Value::String(_)) => true,
        (_, Value::String(_)) if textual => ty == "string",
        ("integer", Value::Number(n)) => n.is_i64() || n.is_u64(),
        ("number", Value::Number(_)) => true,
        ("boolean", Value::Bool(_)) => true,
        ("array", Value::Array(_)) => true,
        ("object", Value::Object(_)) => true,
        _ => false,
    }
}

/// Deterministic sample value for a schema.
pub fn synthesize(schema: &Value, name: &str, depth: usize) -> Value {
    if depth > 4 {
        return Value::Null;
    }
    let ty = schema.get("type").and_then(Value::as_str).unwrap_or(
        if schema.get("properties").is_some() {
            "object"
        } else if schema.get("items").is_some() {
            "array"
        } else {
            "string"
        },
    );
    match ty {
        "object" => {
            let mut m = Map::new();
            if let Some(props) = schema.get("properties").and_then(Value::as_object) {
                for (k, s) in props {
                    m.insert(k.clone(), synthesize(s, k, depth + 1));
                }
            }
            Value::Object(m)
        }
        "array" => match schema.get("items") {
            Some(items) => Value::Array(vec![synthesize(items, name, depth + 1)]),
            None => Value::Array(Vec::new()),
        },
        "integer" => json!(1),
        "number" => json!(1.5),
        "boolean" => json!(true),
        _ => match schema.get("enum").and_then(Value::as_array).and_then(|e| e.first()) {
            Some(first) => first.clone(),
            None => Value::String(format!("sample-{name}")),
        },
    }
}

/// Routes requests to mock applications by URL authority.
#[derive(Debug, Default)]
pub struct MockServer {
    apps: BTreeMap<String, MockApp>,
    requests: AtomicU64,
}

impl MockServer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mounts an app under `authority` (e.g. `shop-api.mock`).
    pub fn mount(mut self, authority: &str, app: MockApp) -> Self {
        self.apps.insert(authority.to_string(), app);
        self
    }

    pub fn app(&self, authority: &str) -> Option<&MockApp> {
        self.apps.get(authority)
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn handle(&self, request: &HttpRequest) -> HttpResponse {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let Some((authority, path, query)) = split_url(&request.url) else {
            return HttpResponse::json(400, &json!({"error": "malformed url"}));
        };
        match self.apps.get(&authority) {
            Some(app) => app.handle(&request.method.to_uppercase(), &path, &query, request.body.as_ref()),
            None => HttpResponse::json(404, &json!({"error": format!("unknown host {authority}")})),
        }
    }
}

impl HttpTransport for MockServer {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        Ok(self.handle(request))
    }
}
