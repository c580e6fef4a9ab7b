//! Independent model of the step-program language for differential testing.
//!
//! Programs are generated as typed trees, printed to source, and evaluated
//! here with plain Rust collections. The interpreter under test only ever
//! sees the printed text.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

const WORDS: &[&str] = &["ash", "birch", "cedar", "elm", "fir", "oak"];
const FIELDS_NUM: &[&str] = &["id", "qty"];

#[derive(Debug, Clone, PartialEq)]
pub enum Ov {
    N(f64),
    S(String),
    L(Vec<Ov>),
    R(Vec<(String, Ov)>),
}

impl Ov {
    fn num(&self) -> Option<f64> {
        match self {
            Ov::N(x) => Some(*x),
            _ => None,
        }
    }

    fn same(&self, other: &Ov) -> bool {
        match (self, other) {
            (Ov::N(a), Ov::N(b)) => a == b,
            (Ov::S(a), Ov::S(b)) => a == b,
            (Ov::L(a), Ov::L(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same(y)),
            (Ov::R(a), Ov::R(b)) => {
                a.len() == b.len() && a.iter().all(|(k, v)| b.iter().any(|(k2, v2)| k == k2 && v.same(v2)))
            }
            _ => false,
        }
    }

    /// Does a value produced by the interpreter match this one?
    pub fn matches(&self, v: &Value) -> bool {
        match (self, v) {
            (Ov::N(a), Value::Number(b)) => b.as_f64() == Some(*a),
            (Ov::S(a), Value::String(b)) => a == b,
            (Ov::L(a), Value::Array(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.matches(y)),
            (Ov::R(a), Value::Object(b)) => {
                a.len() == b.len() && a.iter().all(|(k, x)| b.get(k).is_some_and(|y| x.matches(y)))
            }
            _ => false,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Ov::N(x) => json!(*x as i64),
            Ov::S(s) => json!(s),
            Ov::L(xs) => Value::Array(xs.iter().map(Ov::to_json).collect()),
            Ov::R(fs) => Value::Object(fs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ty {
    Num,
    Str,
    NumList,
    StrList,
    RowList,
    Row,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    const ALL: [Rel; 6] = [Rel::Eq, Rel::Ne, Rel::Lt, Rel::Le, Rel::Gt, Rel::Ge];

    fn text(self) -> &'static str {
        match self {
            Rel::Eq => "==",
            Rel::Ne => "!=",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Int(i64),
    Text(String),
    ListOf(Vec<Node>),
    Name(String),
    Item,
    Get(Box<Node>, &'static str),
    At(Box<Node>, usize),
    Len(Box<Node>),
    Sum(Box<Node>),
    Least(Vec<Node>),
    Most(Vec<Node>),
    Sorted(Box<Node>),
    Dedup(Box<Node>),
    Join(Vec<Node>),
    Tally(Box<Node>, Option<Box<Node>>),
    Keep(Box<Node>, Box<Node>, Rel, Box<Node>),
    Each(Box<Node>, Box<Node>),
    Arith(char, Box<Node>, Box<Node>),
}

fn print_all(xs: &[Node]) -> String {
    xs.iter().map(Node::print).collect::<Vec<_>>().join(", ")
}

impl Node {
    pub fn print(&self) -> String {
        match self {
            Node::Int(n) => n.to_string(),
            Node::Text(s) => format!("\"{s}\""),
            Node::ListOf(xs) => format!("[{}]", print_all(xs)),
            Node::Name(n) => n.clone(),
            Node::Item => "item".into(),
            Node::Get(e, f) => format!("{}.{f}", e.print()),
            Node::At(e, i) => format!("{}[{i}]", e.print()),
            Node::Len(e) => format!("len({})", e.print()),
            Node::Sum(e) => format!("sum({})", e.print()),
            Node::Least(xs) => format!("min({})", print_all(xs)),
            Node::Most(xs) => format!("max({})", print_all(xs)),
            Node::Sorted(e) => format!("sort({})", e.print()),
            Node::Dedup(e) => format!("unique({})", e.print()),
            Node::Join(xs) => format!("concat({})", print_all(xs)),
            Node::Tally(e, None) => format!("count({})", e.print()),
            Node::Tally(e, Some(n)) => format!("count({}, {})", e.print(), n.print()),
            Node::Keep(l, a, r, b) => format!("filter({}, {} {} {})", l.print(), a.print(), r.text(), b.print()),
            Node::Each(l, b) => format!("map({}, {})", l.print(), b.print()),
            Node::Arith(op, a, b) => format!("({} {op} {})", a.print(), b.print()),
        }
    }
}

type Vars = Vec<(String, Ov)>;

fn cmp_ov(a: &Ov, b: &Ov) -> Result<std::cmp::Ordering, ()> {
    match (a, b) {
        (Ov::N(x), Ov::N(y)) => x.partial_cmp(y).ok_or(()),
        (Ov::S(x), Ov::S(y)) => Ok(x.cmp(y)),
        _ => Err(()),
    }
}

fn list(v: Ov) -> Result<Vec<Ov>, ()> {
    match v {
        Ov::L(xs) => Ok(xs),
        _ => Err(()),
    }
}

fn show(v: &Ov) -> String {
    match v {
        Ov::S(s) => s.clone(),
        Ov::N(x) => format!("{}", *x as i64),
        _ => unreachable!("concat only joins text and whole numbers"),
    }
}

fn pick_extreme(items: Vec<Ov>, want_max: bool) -> Result<Ov, ()> {
    let mut it = items.into_iter();
    let mut best = it.next().ok_or(())?;
    cmp_ov(&best, &best)?;
    for v in it {
        let o = cmp_ov(&v, &best)?;
        if (want_max && o.is_gt()) || (!want_max && o.is_lt()) {
            best = v;
        }
    }
    Ok(best)
}

pub fn eval(node: &Node, vars: &Vars, item: Option<&Ov>) -> Result<Ov, ()> {
    let ev = |n: &Node| eval(n, vars, item);
    Ok(match node {
        Node::Int(n) => Ov::N(*n as f64),
        Node::Text(s) => Ov::S(s.clone()),
        Node::ListOf(xs) => Ov::L(xs.iter().map(ev).collect::<Result<_, _>>()?),
        Node::Name(n) => vars.iter().rev().find(|(k, _)| k == n).map(|(_, v)| v.clone()).ok_or(())?,
        Node::Item => item.cloned().ok_or(())?,
        Node::Get(e, f) => match ev(e)? {
            Ov::R(fs) => fs.into_iter().find(|(k, _)| k == f).map(|(_, v)| v).ok_or(())?,
            _ => return Err(()),
        },
        Node::At(e, i) => list(ev(e)?)?.get(*i).cloned().ok_or(())?,
        Node::Len(e) => match ev(e)? {
            Ov::L(xs) => Ov::N(xs.len() as f64),
            Ov::S(s) => Ov::N(s.chars().count() as f64),
            Ov::R(fs) => Ov::N(fs.len() as f64),
            Ov::N(_) => return Err(()),
        },
        Node::Sum(e) => {
            let mut t = 0.0;
            for v in list(ev(e)?)? {
                t += v.num().ok_or(())?;
            }
            Ov::N(t)
        }
        Node::Least(xs) | Node::Most(xs) => {
            let want_max = matches!(node, Node::Most(_));
            let items = if xs.len() == 1 {
                list(ev(&xs[0])?)?
            } else {
                xs.iter().map(ev).collect::<Result<_, _>>()?
            };
            pick_extreme(items, want_max)?
        }
        Node::Sorted(e) => {
            let mut xs = list(ev(e)?)?;
            // Insertion sort keeps equal elements in their original order.
            for i in 1..xs.len() {
                let mut j = i;
                while j > 0 && cmp_ov(&xs[j - 1], &xs[j])?.is_gt() {
                    xs.swap(j - 1, j);
                    j -= 1;
                }
            }
            if let Some(f) = xs.first() {
                cmp_ov(f, f)?;
            }
            Ov::L(xs)
        }
        Node::Dedup(e) => {
            let mut out: Vec<Ov> = Vec::new();
            for v in list(ev(e)?)? {
                if !out.iter().any(|o| o.same(&v)) {
                    out.push(v);
                }
            }
            Ov::L(out)
        }
        Node::Join(xs) => {
            let vals: Vec<Ov> = xs.iter().map(ev).collect::<Result<_, _>>()?;
            if vals.iter().all(|v| matches!(v, Ov::L(_))) {
                Ov::L(vals.into_iter().flat_map(|v| list(v).unwrap()).collect())
            } else {
                Ov::S(vals.iter().map(show).collect())
            }
        }
        Node::Tally(e, needle) => {
            let xs = list(ev(e)?)?;
            match needle {
                None => Ov::N(xs.len() as f64),
                Some(n) => {
                    let n = ev(n)?;
                    Ov::N(xs.iter().filter(|x| x.same(&n)).count() as f64)
                }
            }
        }
        Node::Keep(l, a, rel, b) => {
            let mut out = Vec::new();
            for x in list(ev(l)?)? {
                let lhs = eval(a, vars, Some(&x))?;
                let rhs = eval(b, vars, Some(&x))?;
                let keep = match rel {
                    Rel::Eq => lhs.same(&rhs),
                    Rel::Ne => !lhs.same(&rhs),
                    Rel::Lt => cmp_ov(&lhs, &rhs)?.is_lt(),
                    Rel::Le => !cmp_ov(&lhs, &rhs)?.is_gt(),
                    Rel::Gt => cmp_ov(&lhs, &rhs)?.is_gt(),
                    Rel::Ge => !cmp_ov(&lhs, &rhs)?.is_lt(),
                };
                if keep {
                    out.push(x);
                }
            }
            Ov::L(out)
        }
        Node::Each(l, body) => Ov::L(
            list(ev(l)?)?
                .iter()
                .map(|x| eval(body, vars, Some(x)))
                .collect::<Result<_, _>>()?,
        ),
        Node::Arith(op, a, b) => match (op, ev(a)?, ev(b)?) {
            ('+', Ov::S(x), Ov::S(y)) => Ov::S(x + &y),
            ('+', Ov::L(mut x), Ov::L(y)) => {
                x.extend(y);
                Ov::L(x)
            }
            (op, Ov::N(x), Ov::N(y)) => {
                let r = match op {
                    '+' => x + y,
                    '-' => x - y,
                    '*' => x * y,
                    _ if y == 0.0 => return Err(()),
                    _ => x / y,
                };
                if !r.is_finite() {
                    return Err(());
                }
                Ov::N(r)
            }
            _ => return Err(()),
        },
    })
}

/// Generator state: bound names with their types, and the type of `item`
/// when inside a filter or map.
pub struct Gen<'r, R: Rng> {
    pub rng: &'r mut R,
    scope: Vec<(String, Ty)>,
}

impl<'r, R: Rng> Gen<'r, R> {
    fn names(&self, ty: Ty) -> Vec<String> {
        self.scope.iter().filter(|(_, t)| *t == ty).map(|(n, _)| n.clone()).collect()
    }

    fn name_or(&mut self, ty: Ty) -> Option<Node> {
        let names = self.names(ty);
        names.choose(self.rng).map(|n| Node::Name(n.clone()))
    }

    fn small(&mut self) -> Node {
        Node::Int(self.rng.random_range(-6..=12))
    }

    fn word(&mut self) -> Node {
        Node::Text(WORDS.choose(self.rng).unwrap().to_string())
    }

    /// `whole` forbids division so the result stays an integer.
    pub fn num(&mut self, depth: u32, item: Option<Ty>, whole: bool) -> Node {
        let leaf = depth == 0 || self.rng.random_bool(0.3);
        if leaf {
            return match (item, self.rng.random_range(0..4)) {
                (Some(Ty::Num), 0) => Node::Item,
                (Some(Ty::Row), 0) => Node::Get(Box::new(Node::Item), FIELDS_NUM.choose(self.rng).unwrap()),
                (_, 1) => self.name_or(Ty::Num).unwrap_or_else(|| self.small()),
                _ => self.small(),
            };
        }
        let d = depth - 1;
        match self.rng.random_range(0..12) {
            0 => Node::Len(Box::new(self.any_list(d, item))),
            1 => Node::Len(Box::new(self.text(d, item))),
            2 => Node::Sum(Box::new(self.nums(d, item, whole))),
            3 => {
                let xs = if self.rng.random_bool(0.5) {
                    vec![self.nums(d, item, whole)]
                } else {
                    (0..self.rng.random_range(2..4)).map(|_| self.num(d, item, whole)).collect()
                };
                if self.rng.random_bool(0.5) { Node::Least(xs) } else { Node::Most(xs) }
            }
            4 => {
                let l = self.nums(d, item, whole);
                let needle = self.rng.random_bool(0.5).then(|| Box::new(self.num(d, item, whole)));
                Node::Tally(Box::new(l), needle)
            }
            5 => Node::At(Box::new(self.nums(d, item, whole)), self.rng.random_range(0..9)),
            6 => Node::Get(Box::new(self.row(d, item)), FIELDS_NUM.choose(self.rng).unwrap()),
            _ => {
                let ops: &[char] = if whole { &['+', '-', '*'] } else { &['+', '-', '*', '/'] };
                let op = *ops.choose(self.rng).unwrap();
                Node::Arith(op, Box::new(self.num(d, item, whole)), Box::new(self.num(d, item, whole)))
            }
        }
    }

    pub fn text(&mut self, depth: u32, item: Option<Ty>) -> Node {
        if depth == 0 || self.rng.random_bool(0.3) {
            return match (item, self.rng.random_range(0..4)) {
                (Some(Ty::Str), 0) => Node::Item,
                (Some(Ty::Row), 0) => Node::Get(Box::new(Node::Item), "name"),
                (_, 1) => self.name_or(Ty::Str).unwrap_or_else(|| self.word()),
                _ => self.word(),
            };
        }
        let d = depth - 1;
        match self.rng.random_range(0..6) {
            0 => Node::At(Box::new(self.texts(d, item)), self.rng.random_range(0..9)),
            1 => Node::Get(Box::new(self.row(d, item)), "name"),
            2 => Node::Arith('+', Box::new(self.text(d, item)), Box::new(self.text(d, item))),
            3 => {
                let mut parts = vec![self.text(d, item)];
                for _ in 0..self.rng.random_range(0..3) {
                    parts.push(if self.rng.random_bool(0.5) { self.num(d, item, true) } else { self.text(d, item) });
                }
                let n = parts.len();
                parts.swap(0, self.rng.random_range(0..n));
                Node::Join(parts)
            }
            _ => {
                let xs = vec![self.texts(d, item)];
                if self.rng.random_bool(0.5) { Node::Least(xs) } else { Node::Most(xs) }
            }
        }
    }

    fn rel(&mut self) -> Rel {
        *Rel::ALL.choose(self.rng).unwrap()
    }

    pub fn nums(&mut self, depth: u32, item: Option<Ty>, whole: bool) -> Node {
        if depth == 0 || self.rng.random_bool(0.25) {
            if self.rng.random_bool(0.3) {
                let n = self.rng.random_range(0..5);
                return Node::ListOf((0..n).map(|_| self.small()).collect());
            }
            return self.name_or(Ty::NumList).unwrap_or(Node::Name("nums".into()));
        }
        let d = depth - 1;
        match self.rng.random_range(0..8) {
            0 => Node::Sorted(Box::new(self.nums(d, item, whole))),
            1 => Node::Dedup(Box::new(self.nums(d, item, whole))),
            2 => Node::Join(vec![self.nums(d, item, whole), self.nums(d, item, whole)]),
            3 => Node::Arith('+', Box::new(self.nums(d, item, whole)), Box::new(self.nums(d, item, whole))),
            4 => {
                let l = self.nums(d, item, whole);
                let rel = self.rel();
                let rhs = self.num(d, Some(Ty::Num), whole);
                Node::Keep(Box::new(l), Box::new(Node::Item), rel, Box::new(rhs))
            }
            5 => {
                let l = self.nums(d, item, whole);
                let body = self.num(d, Some(Ty::Num), whole);
                Node::Each(Box::new(l), Box::new(body))
            }
            6 => {
                let l = self.rows(d, item);
                let body = self.num(d, Some(Ty::Row), whole);
                Node::Each(Box::new(l), Box::new(body))
            }
            _ => Node::ListOf((0..self.rng.random_range(0..4)).map(|_| self.num(d, item, whole)).collect()),
        }
    }

    pub fn texts(&mut self, depth: u32, item: Option<Ty>) -> Node {
        if depth == 0 || self.rng.random_bool(0.25) {
            return self.name_or(Ty::StrList).unwrap_or(Node::Name("words".into()));
        }
        let d = depth - 1;
        match self.rng.random_range(0..6) {
            0 => Node::Sorted(Box::new(self.texts(d, item))),
            1 => Node::Dedup(Box::new(self.texts(d, item))),
            2 => Node::Join(vec![self.texts(d, item), self.texts(d, item)]),
            3 => {
                let l = self.texts(d, item);
                let rel = self.rel();
                let rhs = self.text(d, Some(Ty::Str));
                Node::Keep(Box::new(l), Box::new(Node::Item), rel, Box::new(rhs))
            }
            4 => {
                let l = self.rows(d, item);
                Node::Each(Box::new(l), Box::new(Node::Get(Box::new(Node::Item), "name")))
            }
            _ => {
                let l = self.texts(d, item);
                let body = self.text(d, Some(Ty::Str));
                Node::Each(Box::new(l), Box::new(body))
            }
        }
    }

    pub fn rows(&mut self, depth: u32, item: Option<Ty>) -> Node {
        if depth == 0 || self.rng.random_bool(0.3) {
            return self.name_or(Ty::RowList).unwrap_or(Node::Name("rows".into()));
        }
        let d = depth - 1;
        match self.rng.random_range(0..3) {
            0 => {
                let l = self.rows(d, item);
                let field = *FIELDS_NUM.choose(self.rng).unwrap();
                let rel = self.rel();
                let rhs = self.num(d, Some(Ty::Row), false);
                Node::Keep(Box::new(l), Box::new(Node::Get(Box::new(Node::Item), field)), rel, Box::new(rhs))
            }
            1 => {
                let l = self.rows(d, item);
                let rel = self.rel();
                let rhs = self.text(d, Some(Ty::Row));
                Node::Keep(Box::new(l), Box::new(Node::Get(Box::new(Node::Item), "name")), rel, Box::new(rhs))
            }
            _ => Node::Join(vec![self.rows(d, item), self.rows(d, item)]),
        }
    }

    pub fn row(&mut self, depth: u32, item: Option<Ty>) -> Node {
        if item == Some(Ty::Row) && self.rng.random_bool(0.3) {
            return Node::Item;
        }
        if depth == 0 || self.rng.random_bool(0.4) {
            return Node::Name("row".into());
        }
        Node::At(Box::new(self.rows(depth - 1, item)), self.rng.random_range(0..9))
    }

    fn any_list(&mut self, depth: u32, item: Option<Ty>) -> Node {
        match self.rng.random_range(0..3) {
            0 => self.nums(depth, item, false),
            1 => self.texts(depth, item),
            _ => self.rows(depth, item),
        }
    }

    pub fn of(&mut self, ty: Ty, depth: u32) -> Node {
        match ty {
            Ty::Num => self.num(depth, None, false),
            Ty::Str => self.text(depth, None),
            Ty::NumList => self.nums(depth, None, false),
            Ty::StrList => self.texts(depth, None),
            Ty::RowList => self.rows(depth, None),
            Ty::Row => self.row(depth, None),
        }
    }
}

/// A generated case: initial variables, program source and the expected
/// outcome (`None` when evaluation must fail).
pub struct Case {
    pub initial: Vec<(String, Value)>,
    pub source: String,
    pub expected: Option<Vec<(String, Ov)>>,
}

fn initial_values<R: Rng>(rng: &mut R) -> Vars {
    let n = rng.random_range(0..=8);
    let nums = Ov::L((0..n).map(|_| Ov::N(rng.random_range(-9..=9) as f64)).collect());
    let n = rng.random_range(0..=8);
    let words = Ov::L((0..n).map(|_| Ov::S(WORDS.choose(rng).unwrap().to_string())).collect());
    let rec = |rng: &mut R, i: usize| {
        Ov::R(vec![
            ("id".into(), Ov::N(i as f64)),
            ("name".into(), Ov::S(WORDS.choose(rng).unwrap().to_string())),
            ("qty".into(), Ov::N(rng.random_range(-5..=20) as f64)),
        ])
    };
    let n = rng.random_range(0..=8);
    let rows = Ov::L((0..n).map(|i| rec(rng, i + 1)).collect());
    let row = rec(rng, 99);
    let k = Ov::N(rng.random_range(-5..=5) as f64);
    vec![
        ("nums".into(), nums),
        ("words".into(), words),
        ("rows".into(), rows),
        ("row".into(), row),
        ("k".into(), k),
    ]
}

const TYPES: [Ty; 6] = [Ty::Num, Ty::Str, Ty::NumList, Ty::StrList, Ty::RowList, Ty::Row];

pub fn case<R: Rng>(rng: &mut R) -> Case {
    let mut vars = initial_values(rng);
    let initial = vars.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
    let mut g = Gen {
        rng,
        scope: vec![
            ("nums".into(), Ty::NumList),
            ("words".into(), Ty::StrList),
            ("rows".into(), Ty::RowList),
            ("row".into(), Ty::Row),
            ("k".into(), Ty::Num),
        ],
    };
    let mut lines = Vec::new();
    let mut failed = false;
    for i in 0..g.rng.random_range(0..4) {
        let ty = *TYPES.choose(g.rng).unwrap();
        let depth = g.rng.random_range(1..=4);
        let node = g.of(ty, depth);
        let name = format!("v{i}");
        lines.push(format!("let {name} = {}", node.print()));
        if !failed {
            match eval(&node, &vars, None) {
                Ok(v) => vars.push((name.clone(), v)),
                Err(()) => failed = true,
            }
        }
        g.scope.push((name, ty));
    }
    let mut fields = Vec::new();
    let mut printed = Vec::new();
    for j in 0..g.rng.random_range(1..=3) {
        let ty = *TYPES.choose(g.rng).unwrap();
        let depth = g.rng.random_range(0..=4);
        let node = g.of(ty, depth);
        let field = format!("f{j}");
        printed.push(format!("{field}: {}", node.print()));
        if !failed {
            match eval(&node, &vars, None) {
                Ok(v) => fields.push((field, v)),
                Err(()) => failed = true,
            }
        }
    }
    lines.push(format!("return {{{}}}", printed.join(", ")));
    Case {
        initial,
        source: lines.join("\n"),
        expected: (!failed).then_some(fields),
    }
}
