//! Line-oriented parser for step programs.
//!
//! ```text
//! program  := line+                      line := let | call | return
//! let      := "let" IDENT "=" expr
//! call     := "call" IDENT "=" TOOLID "(" [IDENT ":" expr ("," IDENT ":" expr)*] ")"
//! return   := "return" "{" IDENT ":" expr ("," IDENT ":" expr)* "}"
//! ```

use serde_json::Value;
use thiserror::Error;

use super::ast::{BinOp, Builtin, CmpOp, Expr, Predicate, Statement, StepProgram};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ProgramParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Sym(&'static str),
}

const SYMBOLS: [&str; 17] = [
    "==", "!=", "<=", ">=", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", "=", "+",
];

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            toks.push(Tok::Num(text.parse().map_err(|_| format!("bad number `{text}`"))?));
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).ok_or("unterminated escape")?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => *other,
                        });
                        i += 2;
                    }
                    Some(ch) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Str(s));
        } else if c == '-' {
            toks.push(Tok::Sym("-"));
            i += 1;
        } else if c == '*' {
            toks.push(Tok::Sym("*"));
            i += 1;
        } else if c == '/' {
            toks.push(Tok::Sym("/"));
            i += 1;
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let sym = SYMBOLS
                .iter()
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| format!("unexpected character `{c}`"))?;
            toks.push(Tok::Sym(sym));
            i += sym.len();
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), String> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(format!("expected `{sym}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(format!("expected identifier, found {}", describe(other.as_ref()))),
        }
    }

    fn done(&self) -> Result<(), String> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("unexpected trailing {}", describe(Some(t)))),
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.postfix()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.postfix()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn postfix(&mut self) -> Result<Expr, String> {
        let mut e = self.primary()?;
        loop {
            if self.eat(".") {
                let field = self.ident()?;
                e = Expr::Field(Box::new(e), field);
            } else if self.eat("[") {
                let idx = match self.next() {
                    Some(Tok::Num(n)) if n.fract() == 0.0 && n >= 0.0 => n as usize,
                    other => return Err(format!("expected index, found {}", describe(other.as_ref()))),
                };
                self.expect("]")?;
                e = Expr::Index(Box::new(e), idx);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(Expr::Literal(crate::value::number(n).ok_or("bad number")?)),
            Some(Tok::Sym("-")) => match self.next() {
                Some(Tok::Num(n)) => Ok(Expr::Literal(crate::value::number(-n).ok_or("bad number")?)),
                other => Err(format!("expected number after `-`, found {}", describe(other.as_ref()))),
            },
            Some(Tok::Str(s)) => Ok(Expr::Literal(Value::String(s))),
            Some(Tok::Sym("(")) => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Some(Tok::Sym("[")) => {
                let mut items = Vec::new();
                if !self.eat("]") {
                    loop {
                        items.push(self.expr()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(Expr::List(items))
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "true" => Ok(Expr::Literal(Value::Bool(true))),
                "false" => Ok(Expr::Literal(Value::Bool(false))),
                "null" => Ok(Expr::Literal(Value::Null)),
                "item" => Ok(Expr::Item),
                "filter" if self.eat("(") => {
                    let list = self.expr()?;
                    self.expect(",")?;
                    let lhs = self.expr()?;
                    let op = self.cmp()?;
                    let rhs = self.expr()?;
                    self.expect(")")?;
                    Ok(Expr::Filter(Box::new(list), Box::new(Predicate { lhs, op, rhs })))
                }
                "map" if self.eat("(") => {
                    let list = self.expr()?;
                    self.expect(",")?;
                    let body = self.expr()?;
                    self.expect(")")?;
                    Ok(Expr::Map(Box::new(list), Box::new(body)))
                }
                _ if matches!(self.peek(), Some(Tok::Sym("("))) => {
                    let builtin = Builtin::from_name(&name)
                        .ok_or_else(|| format!("unknown function `{name}`"))?;
                    self.expect("(")?;
                    let mut args = vec![self.expr()?];
                    while self.eat(",") {
                        args.push(self.expr()?);
                    }
                    self.expect(")")?;
                    Ok(Expr::Call(builtin, args))
                }
                _ => Ok(Expr::Var(name)),
            },
            other => Err(format!("expected expression, found {}", describe(other.as_ref()))),
        }
    }

    fn cmp(&mut self) -> Result<CmpOp, String> {
        let op = match self.next() {
            Some(Tok::Sym("==")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            other => return Err(format!("expected comparison, found {}", describe(other.as_ref()))),
        };
        Ok(op)
    }

    fn fields(&mut self, open: &str, close: &str) -> Result<Vec<(String, Expr)>, String> {
        self.expect(open)?;
        let mut out = Vec::new();
        if close == ")" && self.eat(close) {
            return Ok(out);
        }
        loop {
            let name = self.ident()?;
            self.expect(":")?;
            let e = self.expr()?;
            if out.iter().any(|(n, _): &(String, Expr)| *n == name) {
                return Err(format!("duplicate field `{name}`"));
            }
            out.push((name, e));
            if self.eat(close) {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }
}

fn describe(t: Option<&Tok>) -> String {
    match t {
        None => "end of line".into(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Num(n)) => format!("number {n}"),
        Some(Tok::Str(s)) => format!("string {s:?}"),
        Some(Tok::Sym(s)) => format!("`{s}`"),
    }
}

fn is_tool_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn keyword<'a>(line: &'a str, kw: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(kw)?;
    rest.starts_with(char::is_whitespace).then_some(rest)
}

fn parse_line(line: &str) -> Result<Statement, String> {
    if let Some(rest) = keyword(line, "let") {
        let mut p = Parser { toks: lex(rest)?, pos: 0 };
        let name = p.ident()?;
        p.expect("=")?;
        let expr = p.expr()?;
        p.done()?;
        Ok(Statement::Let { name, expr })
    } else if let Some(rest) = keyword(line, "call") {
        let (head, tail) = rest
            .split_once('=')
            .ok_or("expected `=` in call statement")?;
        let mut hp = Parser { toks: lex(head)?, pos: 0 };
        let name = hp.ident()?;
        hp.done()?;
        let tail = tail.trim_start();
        let open = tail.find('(').ok_or("expected `(` after tool id")?;
        let tool_id = tail[..open].trim_end();
        if tool_id.is_empty() || !tool_id.chars().all(is_tool_char) || !tool_id.contains('.') {
            return Err(format!("invalid tool id `{tool_id}`"));
        }
        let mut p = Parser { toks: lex(&tail[open..])?, pos: 0 };
        let args = p.fields("(", ")")?;
        p.done()?;
        Ok(Statement::Call {
            name,
            tool_id: tool_id.to_string(),
            args,
        })
    } else if let Some(rest) = keyword(line, "return") {
        let mut p = Parser { toks: lex(rest)?, pos: 0 };
        let fields = p.fields("{", "}")?;
        p.done()?;
        Ok(Statement::Return(fields))
    } else {
        Err("statement must start with `let`, `call` or `return`".into())
    }
}

pub fn parse_program(source: &str) -> Result<StepProgram, ProgramParseError> {
    let mut statements = Vec::new();
    let mut last_line = 0;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        last_line = i + 1;
        if matches!(statements.last(), Some(Statement::Return(_))) {
            return Err(ProgramParseError {
                line: i + 1,
                message: "`return` must be the final statement".into(),
            });
        }
        let stmt = parse_line(line).map_err(|message| ProgramParseError { line: i + 1, message })?;
        statements.push(stmt);
    }
    if !matches!(statements.last(), Some(Statement::Return(_))) {
        return Err(ProgramParseError {
            line: last_line.max(1),
            message: "program must end with a `return` statement".into(),
        });
    }
    Ok(StepProgram {
        statements,
        source_text: source.to_string(),
    })
}
