use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::ast::{BinOp, Builtin, CmpOp, Expr, Predicate, Statement, StepProgram};
use crate::registry::{Registry, RegistryError, ToolResponse};
use crate::value::{number, render};
use crate::variables::VariableStore;

/// Dispatch seam between the interpreter and the tool gateway.
pub trait ToolInvoker {
    fn invoke_tool(&self, tool_id: &str, args: &Map<String, Value>) -> Result<ToolResponse, RegistryError>;
}

impl ToolInvoker for Registry {
    fn invoke_tool(&self, tool_id: &str, args: &Map<String, Value>) -> Result<ToolResponse, RegistryError> {
        self.invoke(tool_id, args)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    CallFailed,
    ExprError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tool_id: String,
    pub args_digest: String,
    /// Absent when the request never reached the server.
    pub status_code: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub returned: Map<String, Value>,
    pub call_log: Vec<CallRecord>,
    pub status: ExecutionStatus,
    pub diagnostic: Option<String>,
}

impl ExecutionResult {
    pub fn is_ok(&self) -> bool {
        self.status == ExecutionStatus::Ok
    }

    /// Stable summary for short-term memory and failure-repetition checks.
    pub fn summary(&self) -> String {
        match (&self.status, &self.diagnostic) {
            (ExecutionStatus::Ok, _) => format!("ok: returned {}", Value::Object(self.returned.clone())),
            (status, Some(d)) => format!("{}: {d}", serde_json::to_value(status).unwrap().as_str().unwrap()),
            (status, None) => serde_json::to_value(status).unwrap().as_str().unwrap().to_string(),
        }
    }
}

pub fn args_digest(args: &Map<String, Value>) -> String {
    let canonical = Value::Object(args.clone()).to_string();
    hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
}

/// Numeric-aware structural equality: `2` equals `2.0`.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(xs), Value::Array(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| values_equal(x, y))
        }
        (Value::Object(xs), Value::Object(ys)) => {
            xs.len() == ys.len()
                && xs
                    .iter()
                    .all(|(k, v)| ys.get(k).is_some_and(|w| values_equal(v, w)))
        }
        _ => a == b,
    }
}

fn kind(v: &Value) -> &'static str {
    crate::value::TypeTag::of(v).as_str()
}

fn ordered(a: &Value, b: &Value) -> Result<Ordering, String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x
            .as_f64()
            .unwrap()
            .partial_cmp(&y.as_f64().unwrap())
            .ok_or_else(|| "incomparable numbers".into()),
        (Value::String(x), Value::String(y)) => Ok(x.cmp(y)),
        _ => Err(format!("cannot order {} and {}", kind(a), kind(b))),
    }
}

fn compare(op: CmpOp, a: &Value, b: &Value) -> Result<bool, String> {
    Ok(match op {
        CmpOp::Eq => values_equal(a, b),
        CmpOp::Ne => !values_equal(a, b),
        CmpOp::Lt => ordered(a, b)? == Ordering::Less,
        CmpOp::Le => ordered(a, b)? != Ordering::Greater,
        CmpOp::Gt => ordered(a, b)? == Ordering::Greater,
        CmpOp::Ge => ordered(a, b)? != Ordering::Less,
    })
}

fn as_num(v: &Value, ctx: &str) -> Result<f64, String> {
    v.as_f64()
        .ok_or_else(|| format!("{ctx} expects numbers, got {}", kind(v)))
}

fn to_number(x: f64) -> Result<Value, String> {
    number(x).ok_or_else(|| "arithmetic produced a non-finite number".into())
}

fn as_list<'a>(v: &'a Value, ctx: &str) -> Result<&'a Vec<Value>, String> {
    v.as_array()
        .ok_or_else(|| format!("{ctx} expects a list, got {}", kind(v)))
}

fn extremum(builtin: Builtin, args: &[Value]) -> Result<Value, String> {
    let name = builtin.name();
    let items: &[Value] = if args.len() == 1 {
        as_list(&args[0], name)?
    } else {
        args
    };
    let mut best = items
        .first()
        .ok_or_else(|| format!("{name} of an empty list"))?;
    for v in &items[1..] {
        let ord = ordered(v, best)?;
        let better = match builtin {
            Builtin::Min => ord == Ordering::Less,
            _ => ord == Ordering::Greater,
        };
        if better {
            best = v;
        }
    }
    if items.len() == 1 {
        ordered(best, best)?;
    }
    Ok(best.clone())
}

fn apply_builtin(builtin: Builtin, args: Vec<Value>) -> Result<Value, String> {
    let name = builtin.name();
    let arity = |lo: usize, hi: usize| -> Result<(), String> {
        if args.len() < lo || args.len() > hi {
            Err(format!("{name} takes {lo}..={hi} arguments, got {}", args.len()))
        } else {
            Ok(())
        }
    };
    match builtin {
        Builtin::Len => {
            arity(1, 1)?;
            let n = match &args[0] {
                Value::Array(xs) => xs.len(),
                Value::String(s) => s.chars().count(),
                Value::Object(m) => m.len(),
                other => return Err(format!("len of {}", kind(other))),
            };
            Ok(Value::from(n as u64))
        }
        Builtin::Sum => {
            arity(1, 1)?;
            let mut total = 0.0;
            for v in as_list(&args[0], name)? {
                total += as_num(v, name)?;
            }
            to_number(total)
        }
        Builtin::Min | Builtin::Max => {
            arity(1, usize::MAX)?;
            extremum(builtin, &args)
        }
        Builtin::Sort => {
            arity(1, 1)?;
            let mut xs = as_list(&args[0], name)?.clone();
            let mut err = None;
            xs.sort_by(|a, b| {
                ordered(a, b).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    Ordering::Equal
                })
            });
            if let Some(first) = xs.first() {
                ordered(first, first)?;
            }
            match err {
                Some(e) => Err(e),
                None => Ok(Value::Array(xs)),
            }
        }
        Builtin::Unique => {
            arity(1, 1)?;
            let mut out: Vec<Value> = Vec::new();
            for v in as_list(&args[0], name)? {
                if !out.iter().any(|o| values_equal(o, v)) {
                    out.push(v.clone());
                }
            }
            Ok(Value::Array(out))
        }
        Builtin::Concat => {
            arity(1, usize::MAX)?;
            if args.iter().all(Value::is_array) {
                Ok(Value::Array(
                    args.into_iter()
                        .flat_map(|v| match v {
                            Value::Array(xs) => xs,
                            _ => unreachable!(),
                        })
                        .collect(),
                ))
            } else if args.iter().any(Value::is_string) && args.iter().all(|v| v.is_string() || v.is_number()) {
                Ok(Value::String(args.iter().map(render).collect()))
            } else {
                Err("concat expects all lists, or strings mixed with numbers".into())
            }
        }
        Builtin::Count => {
            arity(1, 2)?;
            let xs = as_list(&args[0], name)?;
            let n = match args.get(1) {
                None => xs.len(),
                Some(needle) => xs.iter().filter(|x| values_equal(x, needle)).count(),
            };
            Ok(Value::from(n as u64))
        }
    }
}

fn arithmetic(op: BinOp, a: Value, b: Value) -> Result<Value, String> {
    match (op, a, b) {
        (BinOp::Add, Value::String(x), Value::String(y)) => Ok(Value::String(x + &y)),
        (BinOp::Add, Value::Array(mut xs), Value::Array(ys)) => {
            xs.extend(ys);
            Ok(Value::Array(xs))
        }
        (op, a, b) => {
            let sym = op.symbol();
            let (x, y) = match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(format!("cannot apply `{sym}` to {} and {}", kind(&a), kind(&b))),
            };
            let r = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div if y == 0.0 => return Err("division by zero".into()),
                BinOp::Div => x / y,
            };
            to_number(r)
        }
    }
}

struct Env<'a> {
    store: &'a VariableStore,
    locals: BTreeMap<String, Value>,
}

impl Env<'_> {
    fn lookup(&self, name: &str) -> Result<Value, String> {
        self.locals
            .get(name)
            .or_else(|| self.store.value(name))
            .cloned()
            .ok_or_else(|| format!("`{name}` is not bound"))
    }

    fn eval(&self, expr: &Expr, item: Option<&Value>) -> Result<Value, String> {
        match expr {
            Expr::Literal(v) => Ok(v.clone()),
            Expr::List(xs) => xs
                .iter()
                .map(|x| self.eval(x, item))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array),
            Expr::Var(name) => self.lookup(name),
            Expr::Item => item.cloned().ok_or_else(|| "`item` outside filter/map".into()),
            Expr::Field(e, field) => match self.eval(e, item)? {
                Value::Object(mut m) => m
                    .remove(field)
                    .ok_or_else(|| format!("record has no field `{field}`")),
                other => Err(format!("field `{field}` on {}", kind(&other))),
            },
            Expr::Index(e, i) => match self.eval(e, item)? {
                Value::Array(mut xs) if *i < xs.len() => Ok(xs.swap_remove(*i)),
                Value::Array(xs) => Err(format!("index {i} out of range for length {}", xs.len())),
                other => Err(format!("index on {}", kind(&other))),
            },
            Expr::Call(builtin, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, item))
                    .collect::<Result<Vec<_>, _>>()?;
                apply_builtin(*builtin, vals)
            }
            Expr::Filter(list, pred) => {
                let xs = self.eval(list, item)?;
                let mut out = Vec::new();
                for x in as_list(&xs, "filter")? {
                    if self.test(pred, x)? {
                        out.push(x.clone());
                    }
                }
                Ok(Value::Array(out))
            }
            Expr::Map(list, body) => {
                let xs = self.eval(list, item)?;
                as_list(&xs, "map")?
                    .iter()
                    .map(|x| self.eval(body, Some(x)))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Value::Array)
            }
            Expr::Binary(op, a, b) => {
                let a = self.eval(a, item)?;
                let b = self.eval(b, item)?;
                arithmetic(*op, a, b)
            }
        }
    }

    fn test(&self, pred: &Predicate, item: &Value) -> Result<bool, String> {
        let lhs = self.eval(&pred.lhs, Some(item))?;
        let rhs = self.eval(&pred.rhs, Some(item))?;
        compare(pred.op, &lhs, &rhs)
    }
}

/// Evaluates a single expression against bound values. Exposed for tests and
/// for the orchestrator's loop-list resolution.
pub fn eval_expr(expr: &Expr, store: &VariableStore) -> Result<Value, String> {
    Env {
        store,
        locals: BTreeMap::new(),
    }
    .eval(expr, None)
}

pub fn execute_program(
    program: &StepProgram,
    variables: &VariableStore,
    tools: &dyn ToolInvoker,
) -> ExecutionResult {
    let mut env = Env {
        store: variables,
        locals: BTreeMap::new(),
    };
    let mut call_log = Vec::new();
    let fail = |status, diagnostic: String, call_log: Vec<CallRecord>| ExecutionResult {
        returned: Map::new(),
        call_log,
        status,
        diagnostic: Some(diagnostic),
    };
    for (i, stmt) in program.statements.iter().enumerate() {
        let line = i + 1;
        match stmt {
            Statement::Let { name, expr } => match env.eval(expr, None) {
                Ok(v) => {
                    env.locals.insert(name.clone(), v);
                }
                Err(e) => return fail(ExecutionStatus::ExprError, format!("statement {line}: {e}"), call_log),
            },
            Statement::Call { name, tool_id, args } => {
                let mut values = Map::new();
                for (arg, e) in args {
                    match env.eval(e, None) {
                        Ok(v) => {
                            values.insert(arg.clone(), v);
                        }
                        Err(e) => {
                            return fail(ExecutionStatus::ExprError, format!("statement {line}: {e}"), call_log)
                        }
                    }
                }
                let digest = args_digest(&values);
                match tools.invoke_tool(tool_id, &values) {
                    Ok(resp) => {
                        call_log.push(CallRecord {
                            tool_id: tool_id.clone(),
                            args_digest: digest,
                            status_code: Some(resp.status_code),
                        });
                        if let Some(err) = resp.error {
                            return fail(
                                ExecutionStatus::CallFailed,
                                format!("statement {line}: {tool_id} returned {}: {err}", resp.status_code),
                                call_log,
                            );
                        }
                        env.locals.insert(name.clone(), resp.body);
                    }
                    Err(err) => {
                        call_log.push(CallRecord {
                            tool_id: tool_id.clone(),
                            args_digest: digest,
                            status_code: None,
                        });
                        return fail(ExecutionStatus::CallFailed, format!("statement {line}: {tool_id}: {err}"), call_log);
                    }
                }
            }
            Statement::Return(fields) => {
                let mut returned = Map::new();
                for (field, e) in fields {
                    match env.eval(e, None) {
                        Ok(v) => {
                            returned.insert(field.clone(), v);
                        }
                        Err(e) => {
                            return fail(ExecutionStatus::ExprError, format!("statement {line}: {e}"), call_log)
                        }
                    }
                }
                return ExecutionResult {
                    returned,
                    call_log,
                    status: ExecutionStatus::Ok,
                    diagnostic: None,
                };
            }
        }
    }
    fail(
        ExecutionStatus::ExprError,
        "program ended without return".into(),
        call_log,
    )
}

/// Short rendering of a returned record, for trajectory payloads.
pub fn render_returned(returned: &Map<String, Value>) -> String {
    returned
        .iter()
        .map(|(k, v)| format!("{k}={}", render(v)))
        .collect::<Vec<_>>()
        .join(", ")
}
