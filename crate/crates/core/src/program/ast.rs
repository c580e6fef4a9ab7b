use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Len,
    Sum,
    Min,
    Max,
    Sort,
    Unique,
    Concat,
    Count,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "len" => Builtin::Len,
            "sum" => Builtin::Sum,
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            "sort" => Builtin::Sort,
            "unique" => Builtin::Unique,
            "concat" => Builtin::Concat,
            "count" => Builtin::Count,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Len => "len",
            Builtin::Sum => "sum",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Sort => "sort",
            Builtin::Unique => "unique",
            Builtin::Concat => "concat",
            Builtin::Count => "count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Value),
    List(Vec<Expr>),
    Var(String),
    /// The element alias inside `filter` / `map`.
    Item,
    Field(Box<Expr>, String),
    Index(Box<Expr>, usize),
    Call(Builtin, Vec<Expr>),
    Filter(Box<Expr>, Box<Predicate>),
    Map(Box<Expr>, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Let {
        name: String,
        expr: Expr,
    },
    Call {
        name: String,
        tool_id: String,
        args: Vec<(String, Expr)>,
    },
    Return(Vec<(String, Expr)>),
}

impl Statement {
    /// Name bound by this statement, if any.
    pub fn binds(&self) -> Option<&str> {
        match self {
            Statement::Let { name, .. } | Statement::Call { name, .. } => Some(name),
            Statement::Return(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepProgram {
    pub statements: Vec<Statement>,
    pub source_text: String,
}

impl StepProgram {
    pub fn return_fields(&self) -> Vec<&str> {
        match self.statements.last() {
            Some(Statement::Return(fields)) => fields.iter().map(|(n, _)| n.as_str()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn calls(&self) -> impl Iterator<Item = &str> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Call { tool_id, .. } => Some(tool_id.as_str()),
            _ => None,
        })
    }
}

impl Expr {
    /// Free variable names referenced by the expression (excluding `item`).
    pub fn free_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Literal(_) | Expr::Item => {}
            Expr::Var(n) => out.push(n.clone()),
            Expr::List(xs) | Expr::Call(_, xs) => xs.iter().for_each(|x| x.free_vars(out)),
            Expr::Field(e, _) | Expr::Index(e, _) => e.free_vars(out),
            Expr::Filter(list, pred) => {
                list.free_vars(out);
                pred.lhs.free_vars(out);
                pred.rhs.free_vars(out);
            }
            Expr::Map(list, body) => {
                list.free_vars(out);
                body.free_vars(out);
            }
            Expr::Binary(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
        }
    }

    /// True when `item` occurs outside any `filter`/`map` body.
    pub fn has_unbound_item(&self) -> bool {
        match self {
            Expr::Item => true,
            Expr::Literal(_) | Expr::Var(_) => false,
            Expr::List(xs) | Expr::Call(_, xs) => xs.iter().any(Expr::has_unbound_item),
            Expr::Field(e, _) | Expr::Index(e, _) => e.has_unbound_item(),
            Expr::Filter(list, _) | Expr::Map(list, _) => list.has_unbound_item(),
            Expr::Binary(_, a, b) => a.has_unbound_item() || b.has_unbound_item(),
        }
    }
}
