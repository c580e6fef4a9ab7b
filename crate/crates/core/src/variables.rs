//! Typed named values propagated between sub-tasks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::value::{is_identifier, TypeTag};

/// Producer recorded for variables that come with the task itself.
pub const INITIAL_PRODUCER: &str = "initial";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub value: Value,
    pub producer: String,
    pub type_tag: TypeTag,
}

impl Variable {
    pub fn new(name: impl Into<String>, value: Value, producer: impl Into<String>) -> Self {
        let type_tag = TypeTag::of(&value);
        Variable {
            name: name.into(),
            value,
            producer: producer.into(),
            type_tag,
        }
    }

    pub fn initial(name: impl Into<String>, value: Value) -> Self {
        Variable::new(name, value, INITIAL_PRODUCER)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariableError {
    #[error("variable `{name}` already bound by `{existing}`, cannot rebind from `{producer}`")]
    Collision {
        name: String,
        existing: String,
        producer: String,
    },
    #[error("invalid variable name `{0}`")]
    InvalidName(String),
    #[error("variable `{0}` has type tag inconsistent with its value")]
    TagMismatch(String),
}

/// Name-unique variable bindings. Iteration order is lexicographic by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableStore {
    vars: BTreeMap<String, Variable>,
}

impl VariableStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_vars(vars: impl IntoIterator<Item = Variable>) -> Result<Self, VariableError> {
        let mut store = Self::new();
        for v in vars {
            store.bind(v)?;
        }
        Ok(store)
    }

    /// Binds a variable. Rebinding an existing name is a collision, unless the
    /// same producer is writing the same value again.
    pub fn bind(&mut self, var: Variable) -> Result<(), VariableError> {
        if !is_identifier(&var.name) {
            return Err(VariableError::InvalidName(var.name));
        }
        if TypeTag::of(&var.value) != var.type_tag {
            return Err(VariableError::TagMismatch(var.name));
        }
        if let Some(existing) = self.vars.get(&var.name) {
            if existing.producer == var.producer && existing.value == var.value {
                return Ok(());
            }
            return Err(VariableError::Collision {
                name: var.name,
                existing: existing.producer.clone(),
                producer: var.producer,
            });
        }
        self.vars.insert(var.name.clone(), var);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.vars.get(name)
    }

    pub fn value(&self, name: &str) -> Option<&Value> {
        self.vars.get(name).map(|v| &v.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Variable> {
        self.vars.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Restricts the store to the given names, skipping unbound ones.
    pub fn view<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> VariableStore {
        let mut out = VariableStore::new();
        for name in names {
            if let Some(v) = self.vars.get(name) {
                out.vars.insert(name.to_string(), v.clone());
            }
        }
        out
    }

    /// Plain name → value record of the whole store.
    pub fn to_record(&self) -> Value {
        Value::Object(
            self.vars
                .iter()
                .map(|(k, v)| (k.clone(), v.value.clone()))
                .collect(),
        )
    }
}
