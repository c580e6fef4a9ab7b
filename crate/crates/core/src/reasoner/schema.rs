//! Minimal structured-output schema descriptors and a local validator.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schema {
    Any,
    String,
    Number,
    Integer,
    Boolean,
    Null,
    Enum {
        values: Vec<String>,
    },
    Array {
        items: Box<Schema>,
    },
    Object {
        properties: BTreeMap<String, Schema>,
        required: Vec<String>,
    },
    OneOf {
        variants: Vec<Schema>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "at $: {}", self.message)
        } else {
            write!(f, "at $.{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for SchemaError {}

impl Schema {
    /// Object schema from `(name, schema, required)` triples.
    pub fn object<'a>(fields: impl IntoIterator<Item = (&'a str, Schema, bool)>) -> Schema {
        let mut properties = BTreeMap::new();
        let mut required = Vec::new();
        for (name, schema, req) in fields {
            if req {
                required.push(name.to_string());
            }
            properties.insert(name.to_string(), schema);
        }
        Schema::Object {
            properties,
            required,
        }
    }

    pub fn array(items: Schema) -> Schema {
        Schema::Array {
            items: Box::new(items),
        }
    }

    pub fn enumeration<'a>(values: impl IntoIterator<Item = &'a str>) -> Schema {
        Schema::Enum {
            values: values.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn nullable(inner: Schema) -> Schema {
        Schema::OneOf {
            variants: vec![inner, Schema::Null],
        }
    }

    /// A schema is empty when it accepts anything and says nothing.
    pub fn is_empty(&self) -> bool {
        matches!(self, Schema::Any)
    }

    pub fn validate(&self, value: &Value) -> Result<(), SchemaError> {
        self.validate_at(value, "")
    }

    fn validate_at(&self, value: &Value, path: &str) -> Result<(), SchemaError> {
        let fail = |message: String| {
            Err(SchemaError {
                path: path.to_string(),
                message,
            })
        };
        match (self, value) {
            (Schema::Any, _) => Ok(()),
            (Schema::String, Value::String(_)) => Ok(()),
            (Schema::Number, Value::Number(_)) => Ok(()),
            (Schema::Integer, Value::Number(n)) if n.is_i64() || n.is_u64() => Ok(()),
            (Schema::Boolean, Value::Bool(_)) => Ok(()),
            (Schema::Null, Value::Null) => Ok(()),
            (Schema::Enum { values }, Value::String(s)) => {
                if values.iter().any(|v| v == s) {
                    Ok(())
                } else {
                    fail(format!("`{s}` is not one of {values:?}"))
                }
            }
            (Schema::Array { items }, Value::Array(xs)) => {
                for (i, x) in xs.iter().enumerate() {
                    items.validate_at(x, &join(path, &i.to_string()))?;
                }
                Ok(())
            }
            (
                Schema::Object {
                    properties,
                    required,
                },
                Value::Object(map),
            ) => {
                for name in required {
                    if !map.contains_key(name) {
                        return fail(format!("missing required field `{name}`"));
                    }
                }
                for (k, v) in map {
                    if let Some(s) = properties.get(k) {
                        s.validate_at(v, &join(path, k))?;
                    }
                }
                Ok(())
            }
            (Schema::OneOf { variants }, v) => {
                let mut last = None;
                for s in variants {
                    match s.validate_at(v, path) {
                        Ok(()) => return Ok(()),
                        Err(e) => last = Some(e),
                    }
                }
                Err(last.unwrap_or(SchemaError {
                    path: path.to_string(),
                    message: "no variants".into(),
                }))
            }
            (expected, got) => fail(format!(
                "expected {}, got {}",
                expected.kind_name(),
                crate::value::TypeTag::of(got)
            )),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Schema::Any => "any",
            Schema::String => "string",
            Schema::Number => "number",
            Schema::Integer => "integer",
            Schema::Boolean => "boolean",
            Schema::Null => "null",
            Schema::Enum { .. } => "enum string",
            Schema::Array { .. } => "array",
            Schema::Object { .. } => "object",
            Schema::OneOf { .. } => "one of variants",
        }
    }
}

fn join(path: &str, seg: &str) -> String {
    if path.is_empty() {
        seg.to_string()
    } else {
        format!("{path}.{seg}")
    }
}
