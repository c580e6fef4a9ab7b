//! OpenAPI v3 subset: paths, operations, parameters, request and response
//! schemas, and `#/components/...` references.

use serde_json::{Map, Value};

use super::RegistryError;

pub const METHODS: [&str; 7] = ["get", "put", "post", "delete", "patch", "head", "options"];

/// One operation with every internal reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOperation {
    pub method: String,
    pub path: String,
    pub operation_id: Option<String>,
    pub summary: Option<String>,
    pub description: Option<String>,
    /// Path-level parameters merged with operation parameters (operation wins).
    pub parameters: Vec<Value>,
    pub request_body: Option<Value>,
    pub responses: Map<String, Value>,
    /// The resolved operation object as it appeared in the document.
    pub source: Value,
}

impl ParsedOperation {
    /// Stable operation key: the operationId, else `method_path_slug`.
    pub fn key(&self) -> String {
        match &self.operation_id {
            Some(id) if !id.is_empty() => sanitize_key(id),
            _ => {
                let slug: Vec<String> = self
                    .path
                    .split('/')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim_matches(|c| c == '{' || c == '}').to_string())
                    .collect();
                sanitize_key(&format!("{}_{}", self.method, slug.join("_")))
            }
        }
    }
}

fn sanitize_key(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ParsedDocument {
    pub title: String,
    pub description: String,
    pub operations: Vec<ParsedOperation>,
}

pub fn parse_document(text: &str) -> Result<ParsedDocument, RegistryError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| RegistryError::SpecParse(format!("not a JSON document: {e}")))?;
    parse_value(&doc)
}

pub fn parse_value(doc: &Value) -> Result<ParsedDocument, RegistryError> {
    let root = doc
        .as_object()
        .ok_or_else(|| RegistryError::SpecParse("document root is not an object".into()))?;
    match root.get("openapi").and_then(Value::as_str) {
        Some(v) if v.starts_with('3') => {}
        Some(v) => return Err(RegistryError::SpecParse(format!("unsupported openapi version {v}"))),
        None => return Err(RegistryError::SpecParse("missing `openapi` version field".into())),
    }
    let info = root.get("info").and_then(Value::as_object);
    let title = info
        .and_then(|i| i.get("title"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let description = info
        .and_then(|i| i.get("description"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let paths = root
        .get("paths")
        .and_then(Value::as_object)
        .ok_or_else(|| RegistryError::SpecParse("missing `paths` object".into()))?;

    let mut operations = Vec::new();
    for (path, item) in paths {
        let item = resolve(doc, item, &mut Vec::new())?;
        let item = item
            .as_object()
            .ok_or_else(|| RegistryError::SpecParse(format!("path item {path} is not an object")))?;
        let shared: Vec<Value> = item
            .get("parameters")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        for method in METHODS {
            let Some(op) = item.get(method) else { continue };
            let op = op
                .as_object()
                .ok_or_else(|| RegistryError::SpecParse(format!("{method} {path} is not an object")))?;
            let mut parameters = merge_parameters(&shared, op.get("parameters"));
            for p in &mut parameters {
                if p.get("name").and_then(Value::as_str).is_none() {
                    return Err(RegistryError::SpecParse(format!(
                        "{method} {path}: parameter without a name"
                    )));
                }
            }
            parameters.retain(|p| p.is_object());
            let mut source = Value::Object(op.clone());
            if let Some(obj) = source.as_object_mut() {
                obj.insert("parameters".into(), Value::Array(parameters.clone()));
            }
            operations.push(ParsedOperation {
                method: method.to_string(),
                path: path.clone(),
                operation_id: op.get("operationId").and_then(Value::as_str).map(str::to_string),
                summary: op.get("summary").and_then(Value::as_str).map(str::to_string),
                description: op.get("description").and_then(Value::as_str).map(str::to_string),
                parameters,
                request_body: op.get("requestBody").cloned(),
                responses: op
                    .get("responses")
                    .and_then(Value::as_object)
                    .cloned()
                    .unwrap_or_default(),
                source,
            });
        }
    }
    if operations.is_empty() {
        return Err(RegistryError::SpecParse("no operations".into()));
    }
    Ok(ParsedDocument {
        title,
        description,
        operations,
    })
}

fn merge_parameters(shared: &[Value], own: Option<&Value>) -> Vec<Value> {
    let own: Vec<Value> = own.and_then(Value::as_array).cloned().unwrap_or_default();
    let key = |p: &Value| {
        (
            p.get("name").and_then(Value::as_str).map(str::to_string),
            p.get("in").and_then(Value::as_str).map(str::to_string),
        )
    };
    let mut out: Vec<Value> = shared
        .iter()
        .filter(|s| !own.iter().any(|o| key(o) == key(s)))
        .cloned()
        .collect();
    out.extend(own);
    out
}

/// Recursively inlines `$ref` pointers. A reference cycle is cut by replacing
/// the repeated reference with an opaque object schema.
pub fn resolve(doc: &Value, value: &Value, active: &mut Vec<String>) -> Result<Value, RegistryError> {
    match value {
        Value::Object(map) => {
            if let Some(reference) = map.get("$ref").and_then(Value::as_str) {
                if active.iter().any(|r| r == reference) {
                    return Ok(serde_json::json!({ "type": "object" }));
                }
                let target = lookup_ref(doc, reference)?;
                active.push(reference.to_string());
                let resolved = resolve(doc, target, active);
                active.pop();
                return resolved;
            }
            let mut out = Map::with_capacity(map.len());
            for (k, v) in map {
                out.insert(k.clone(), resolve(doc, v, active)?);
            }
            Ok(Value::Object(out))
        }
        Value::Array(items) => items
            .iter()
            .map(|v| resolve(doc, v, active))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::Array),
        other => Ok(other.clone()),
    }
}

fn lookup_ref<'a>(doc: &'a Value, reference: &str) -> Result<&'a Value, RegistryError> {
    let pointer = reference
        .strip_prefix('#')
        .ok_or_else(|| RegistryError::UnresolvableRef(reference.to_string()))?;
    doc.pointer(pointer)
        .ok_or_else(|| RegistryError::UnresolvableRef(reference.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(paths: Value) -> Value {
        json!({
            "openapi": "3.0.3",
            "info": {"title": "Shop", "description": "orders"},
            "paths": paths,
            "components": {
                "schemas": {
                    "Order": {"type": "object", "properties": {"id": {"type": "string"}}},
                    "Node": {"type": "object", "properties": {"child": {"$ref": "#/components/schemas/Node"}}}
                },
                "parameters": {
                    "UserId": {"name": "user_id", "in": "path", "required": true, "schema": {"type": "string"}}
                }
            }
        })
    }

    #[test]
    fn counts_operations_across_paths() {
        let d = doc(json!({
            "/a": {"get": {}, "post": {}},
            "/b": {"get": {}, "delete": {}},
            "/c": {"put": {}, "x-vendor": {}}
        }));
        let parsed = parse_value(&d).unwrap();
        let brute: usize = d["paths"]
            .as_object()
            .unwrap()
            .values()
            .map(|item| METHODS.iter().filter(|m| item.get(**m).is_some()).count())
            .sum();
        assert_eq!(parsed.operations.len(), brute);
        assert_eq!(brute, 5);
    }

    #[test]
    fn resolves_refs_and_merges_path_params() {
        let d = doc(json!({
            "/users/{user_id}/orders": {
                "parameters": [{"$ref": "#/components/parameters/UserId"}],
                "get": {
                    "operationId": "list_orders",
                    "responses": {"200": {"content": {"application/json": {"schema": {"$ref": "#/components/schemas/Order"}}}}}
                }
            }
        }));
        let parsed = parse_value(&d).unwrap();
        let op = &parsed.operations[0];
        assert_eq!(op.key(), "list_orders");
        assert_eq!(op.parameters[0]["name"], "user_id");
        assert_eq!(
            op.responses["200"]["content"]["application/json"]["schema"]["properties"]["id"]["type"],
            "string"
        );
    }

    #[test]
    fn cyclic_refs_terminate() {
        let d = doc(json!({"/n": {"get": {"responses": {"200": {"content": {"application/json": {"schema": {"$ref": "#/components/schemas/Node"}}}}}}}}));
        parse_value(&d).unwrap();
    }

    #[test]
    fn degenerate_documents() {
        assert!(matches!(parse_value(&doc(json!({}))), Err(RegistryError::SpecParse(m)) if m == "no operations"));
        let bad = doc(json!({"/x": {"get": {"parameters": [{"$ref": "#/components/parameters/Nope"}]}}}));
        assert!(matches!(parse_value(&bad), Err(RegistryError::UnresolvableRef(_))));
        assert!(parse_document("{").is_err());
        assert!(parse_value(&json!({"swagger": "2.0", "paths": {}})).is_err());
    }

    #[test]
    fn derived_keys() {
        let d = doc(json!({"/users/{id}/orders": {"get": {}}}));
        assert_eq!(parse_value(&d).unwrap().operations[0].key(), "get_users_id_orders");
    }
}
