//! Structured values shared by variables, tool payloads and step programs.

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

/// Shape tag carried alongside every structured value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeTag {
    String,
    Number,
    Boolean,
    List,
    Record,
    Null,
}

impl TypeTag {
    pub fn of(value: &Value) -> TypeTag {
        match value {
            Value::Null => TypeTag::Null,
            Value::Bool(_) => TypeTag::Boolean,
            Value::Number(_) => TypeTag::Number,
            Value::String(_) => TypeTag::String,
            Value::Array(_) => TypeTag::List,
            Value::Object(_) => TypeTag::Record,
        }
    }

    /// Maps an OpenAPI `type` keyword onto a tag. Unknown types fall back to string.
    pub fn from_openapi(ty: &str) -> TypeTag {
        match ty {
            "integer" | "number" => TypeTag::Number,
            "boolean" => TypeTag::Boolean,
            "array" => TypeTag::List,
            "object" => TypeTag::Record,
            "null" => TypeTag::Null,
            _ => TypeTag::String,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TypeTag::String => "string",
            TypeTag::Number => "number",
            TypeTag::Boolean => "boolean",
            TypeTag::List => "list",
            TypeTag::Record => "record",
            TypeTag::Null => "null",
        }
    }
}

impl std::fmt::Display for TypeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Builds a JSON number from an `f64`, collapsing integral values to integers so
/// that `3.0` renders as `3`.
pub fn number(x: f64) -> Option<Value> {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15 {
        Some(Value::Number(Number::from(x as i64)))
    } else {
        Number::from_f64(x).map(Value::Number)
    }
}

/// Valid identifier: ASCII letter or underscore, then letters, digits, underscores.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Compact human-readable rendering used in answers and prompt fragments.
pub fn render(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses free text into the most specific scalar it denotes.
pub fn parse_scalar(text: &str) -> Value {
    let t = text.trim();
    if let Ok(i) = t.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(f) = t.parse::<f64>() {
        if let Some(v) = number(f) {
            return v;
        }
    }
    match t {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(t.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn integral_numbers_collapse() {
        assert_eq!(number(3.0), Some(json!(3)));
        assert_eq!(number(2.5), Some(json!(2.5)));
        assert_eq!(number(f64::NAN), None);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("order_count"));
        assert!(is_identifier("_x1"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier("a-b"));
        assert!(!is_identifier(""));
    }

    #[test]
    fn scalar_parsing() {
        assert_eq!(parse_scalar(" 5 "), json!(5));
        assert_eq!(parse_scalar("2.5"), json!(2.5));
        assert_eq!(parse_scalar("true"), json!(true));
        assert_eq!(parse_scalar("Alice"), json!("Alice"));
    }
}
