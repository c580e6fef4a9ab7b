use std::collections::BTreeSet;

use thiserror::Error;

use super::ast::{Expr, Statement, StepProgram};
use crate::registry::minimize::ToolSpec;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("statement {statement}: {message}")]
pub struct StaticCheckError {
    /// 1-based statement index.
    pub statement: usize,
    pub message: String,
}

fn check_expr(expr: &Expr, bound: &BTreeSet<String>) -> Result<(), String> {
    if expr.has_unbound_item() {
        return Err("`item` used outside filter/map".into());
    }
    let mut refs = Vec::new();
    expr.free_vars(&mut refs);
    match refs.into_iter().find(|r| !bound.contains(r)) {
        Some(r) => Err(format!("`{r}` is used before it is bound")),
        None => Ok(()),
    }
}

/// Binding order, single assignment, `item` scope and tool gating.
///
/// `initial` holds the names already present in the variable store.
pub fn check_program<'a>(
    program: &StepProgram,
    initial: impl IntoIterator<Item = &'a str>,
    shortlist: &[ToolSpec],
) -> Result<(), StaticCheckError> {
    let mut bound: BTreeSet<String> = initial.into_iter().map(str::to_string).collect();
    for (i, stmt) in program.statements.iter().enumerate() {
        let fail = |message: String| StaticCheckError {
            statement: i + 1,
            message,
        };
        match stmt {
            Statement::Let { expr, .. } => check_expr(expr, &bound).map_err(fail)?,
            Statement::Return(fields) => {
                for (_, e) in fields {
                    check_expr(e, &bound).map_err(fail)?;
                }
            }
            Statement::Call { tool_id, args, .. } => {
                let tool = shortlist
                    .iter()
                    .find(|t| t.tool_id == *tool_id)
                    .ok_or_else(|| fail(format!("tool `{tool_id}` is not in the shortlist")))?;
                for (name, e) in args {
                    if tool.param(name).is_none() {
                        return Err(fail(format!("`{tool_id}` has no parameter `{name}`")));
                    }
                    check_expr(e, &bound).map_err(fail)?;
                }
                if let Some(missing) = tool
                    .required_params()
                    .find(|p| !args.iter().any(|(n, _)| *n == p.name))
                {
                    return Err(fail(format!(
                        "`{tool_id}` requires parameter `{}`",
                        missing.name
                    )));
                }
            }
        }
        if let Some(name) = stmt.binds() {
            if name == "item" {
                return Err(fail("`item` is reserved".into()));
            }
            if !bound.insert(name.to_string()) {
                return Err(fail(format!("`{name}` is already bound")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse::parse_program;
    use crate::registry::minimize::{ParamLocation, ToolParam};
    use crate::value::TypeTag;

    fn list_orders() -> ToolSpec {
        ToolSpec {
            tool_id: "shop-api.list_orders".into(),
            method: "GET".into(),
            path: "/users/{user}/orders".into(),
            summary: "List orders".into(),
            params: vec![
                ToolParam {
                    name: "user".into(),
                    location: ParamLocation::Path,
                    type_tag: TypeTag::String,
                    required: true,
                    description: String::new(),
                },
                ToolParam {
                    name: "limit".into(),
                    location: ParamLocation::Query,
                    type_tag: TypeTag::Number,
                    required: false,
                    description: String::new(),
                },
            ],
            response_fields: vec![],
        }
    }

    fn check(src: &str) -> Result<(), StaticCheckError> {
        check_program(&parse_program(src).unwrap(), ["user_id"], &[list_orders()])
    }

    #[test]
    fn accepts_golden_program() {
        check("call r = shop-api.list_orders(user: user_id)\nlet n = len(r.items)\nreturn {order_count: n}").unwrap();
    }

    #[test]
    fn tool_outside_shortlist() {
        let err = check("call r = mail-api.send(to: user_id)\nreturn {r: r}").unwrap_err();
        assert_eq!(err.statement, 1);
        assert!(err.message.contains("shortlist"));
    }

    #[test]
    fn parameter_rules() {
        assert!(check("call r = shop-api.list_orders(limit: 2)\nreturn {r: r}")
            .unwrap_err()
            .message
            .contains("requires"));
        assert!(check("call r = shop-api.list_orders(user: user_id, bogus: 1)\nreturn {r: r}")
            .unwrap_err()
            .message
            .contains("no parameter"));
    }

    #[test]
    fn binding_order_and_scope() {
        let err = check("let a = b + 1\nlet b = 2\nreturn {a: a}").unwrap_err();
        assert_eq!(err.statement, 1);
        assert!(check("let a = 1\nlet a = 2\nreturn {a: a}").is_err());
        assert!(check("let user_id = 1\nreturn {a: user_id}").is_err());
        assert!(check("let a = item\nreturn {a: a}").is_err());
        assert!(check("let item = 1\nreturn {a: item}").is_err());
        check("let a = map([1, 2], item * 2)\nreturn {a: a}").unwrap();
    }
}
