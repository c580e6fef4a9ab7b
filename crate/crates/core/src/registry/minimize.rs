//! Lossy reduction of a parsed operation into a compact tool description.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::openapi::ParsedOperation;
use crate::value::TypeTag;

pub const SUMMARY_CAP: usize = 200;
pub const PARAM_DESCRIPTION_CAP: usize = 80;
pub const ELLIPSIS: char = '…';
const RESPONSE_DEPTH_CAP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamLocation {
    Path,
    Query,
    Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    #[serde(rename = "in")]
    pub location: ParamLocation,
    #[serde(rename = "type")]
    pub type_tag: TypeTag,
    pub required: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseField {
    pub path: String,
    #[serde(rename = "type")]
    pub type_tag: TypeTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub tool_id: String,
    pub method: String,
    pub path: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<ToolParam>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub response_fields: Vec<ResponseField>,
}

impl ToolSpec {
    pub fn app_id(&self) -> &str {
        self.tool_id
            .rsplit_once('.')
            .map(|(app, _)| app)
            .unwrap_or(&self.tool_id)
    }

    pub fn param(&self, name: &str) -> Option<&ToolParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn required_params(&self) -> impl Iterator<Item = &ToolParam> {
        self.params.iter().filter(|p| p.required)
    }

    /// One-line signature used in planner prompts.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}{}: {}", p.name, if p.required { "" } else { "?" }, p.type_tag))
            .collect();
        let fields: Vec<&str> = self.response_fields.iter().map(|f| f.path.as_str()).collect();
        format!(
            "{}({}) -> {{{}}} : {}",
            self.tool_id,
            params.join(", "),
            fields.join(", "),
            self.summary
        )
    }
}

/// Truncates to at most `cap` characters, marking the cut with an ellipsis.
pub fn cap_text(text: &str, cap: usize) -> String {
    let collapsed: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.chars().count() <= cap {
        return collapsed;
    }
    let mut out: String = collapsed.chars().take(cap.saturating_sub(1)).collect();
    out.push(ELLIPSIS);
    out
}

pub fn minimize(app_id: &str, op: &ParsedOperation) -> ToolSpec {
    let summary_source = op
        .summary
        .as_deref()
        .filter(|s| !s.trim().is_empty())
        .or(op.description.as_deref())
        .map(str::to_string)
        .unwrap_or_else(|| format!("{} {}", op.method.to_uppercase(), op.path));

    let mut params = Vec::new();
    for p in &op.parameters {
        let location = match p.get("in").and_then(Value::as_str) {
            Some("path") => ParamLocation::Path,
            Some("query") => ParamLocation::Query,
            _ => continue,
        };
        let name = p.get("name").and_then(Value::as_str).unwrap_or_default();
        params.push(ToolParam {
            name: name.to_string(),
            location,
            type_tag: schema_tag(p.get("schema")),
            required: location == ParamLocation::Path
                || p.get("required").and_then(Value::as_bool).unwrap_or(false),
            description: cap_text(
                p.get("description").and_then(Value::as_str).unwrap_or_default(),
                PARAM_DESCRIPTION_CAP,
            ),
        });
    }
    if let Some(body) = &op.request_body {
        params.extend(body_params(body));
    }

    let response_fields = success_schema(op)
        .map(|schema| {
            let mut fields = Vec::new();
            flatten_fields(schema, "", 0, &mut fields);
            fields
        })
        .unwrap_or_default();

    ToolSpec {
        tool_id: format!("{app_id}.{}", op.key()),
        method: op.method.to_uppercase(),
        path: op.path.clone(),
        summary: cap_text(&summary_source, SUMMARY_CAP),
        params,
        response_fields,
    }
}

fn schema_tag(schema: Option<&Value>) -> TypeTag {
    match schema {
        Some(s) => match s.get("type").and_then(Value::as_str) {
            Some(t) => TypeTag::from_openapi(t),
            None if s.get("properties").is_some() => TypeTag::Record,
            None if s.get("items").is_some() => TypeTag::List,
            None => TypeTag::String,
        },
        None => TypeTag::String,
    }
}

fn json_schema(content_holder: &Value) -> Option<&Value> {
    let content = content_holder.get("content")?.as_object()?;
    content
        .get("application/json")
        .or_else(|| content.values().next())
        .and_then(|m| m.get("schema"))
}

fn body_params(body: &Value) -> Vec<ToolParam> {
    let Some(schema) = json_schema(body) else {
        return Vec::new();
    };
    let body_required = body.get("required").and_then(Value::as_bool).unwrap_or(false);
    match schema.get("properties").and_then(Value::as_object) {
        Some(props) => {
            let required: Vec<&str> = schema
                .get("required")
                .and_then(Value::as_array)
                .map(|r| r.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            props
                .iter()
                .map(|(name, prop)| ToolParam {
                    name: name.clone(),
                    location: ParamLocation::Body,
                    type_tag: schema_tag(Some(prop)),
                    required: required.contains(&name.as_str()),
                    description: cap_text(
                        prop.get("description").and_then(Value::as_str).unwrap_or_default(),
                        PARAM_DESCRIPTION_CAP,
                    ),
                })
                .collect()
        }
        None => vec![ToolParam {
            name: "body".into(),
            location: ParamLocation::Body,
            type_tag: schema_tag(Some(schema)),
            required: body_required,
            description: String::new(),
        }],
    }
}

/// Schema of the lowest 2xx response, if any.
fn success_schema(op: &ParsedOperation) -> Option<&Value> {
    let mut codes: Vec<&String> = op.responses.keys().filter(|c| c.starts_with('2')).collect();
    codes.sort();
    codes.first().and_then(|c| json_schema(&op.responses[c.as_str()]))
}

fn flatten_fields(schema: &Value, prefix: &str, depth: usize, out: &mut Vec<ResponseField>) {
    if depth >= RESPONSE_DEPTH_CAP {
        return;
    }
    match schema_tag(Some(schema)) {
        TypeTag::Record => {
            if let Some(props) = schema.get("properties").and_then(Value::as_object) {
                for (name, prop) in props {
                    let path = if prefix.is_empty() {
                        name.clone()
                    } else {
                        format!("{prefix}.{name}")
                    };
                    out.push(ResponseField {
                        path: path.clone(),
                        type_tag: schema_tag(Some(prop)),
                    });
                    flatten_fields(prop, &path, depth + 1, out);
                }
            }
        }
        TypeTag::List => {
            if let Some(items) = schema.get("items") {
                let path = format!("{prefix}[]");
                if prefix.is_empty() {
                    out.push(ResponseField {
                        path: path.clone(),
                        type_tag: schema_tag(Some(items)),
                    });
                }
                flatten_fields(items, &path, depth + 1, out);
            }
        }
        _ => {}
    }
}
