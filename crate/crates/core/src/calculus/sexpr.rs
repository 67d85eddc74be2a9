//! S-expression concrete syntax.
//!
//! ```text
//! file  ::= (pool (nrole N)? (sig (ch ID "{G}" "S"))* (thread TID e)+) | e
//! e     ::= x | INT | true | false | "str" | unit | ch+N | ch-N
//!         | (pair e e) | (fst e) | (snd e) | (letp (x y) e e)
//!         | (lam (x T) e) | (llam (x T) e) | (app e e) | (fix f T e)
//!         | (if e e e) | (let (x T) e e) | (PRIM e ...)
//! T     ::= int | (int N) | bool | str | unit | (chan "{G}" "S")
//!         | (prod T T) | (tensor T T) | (-> T T) | (-o T T)
//! ```
//!
//! In a `sig` entry the group is that of the positive half and must contain
//! role 0. `let` is sugar for applying a linear lambda. `;` starts a comment.

use std::fmt::Write as _;

use thiserror::Error;

use super::syntax::{Expr, Lit, Prim, Viewtype};
use crate::df_analysis::ChannelHalf;
use crate::roles::{Group, RoleUniverse, DEFAULT_NROLE};
use crate::session_types::{format_session, parse_session, SessionType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {pos}: {msg}")]
pub struct SexprError {
    pub pos: usize,
    pub msg: String,
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T, SexprError> {
    Err(SexprError { pos, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String, usize),
    Str(String, usize),
    List(Vec<Sexp>, usize),
}

impl Sexp {
    fn pos(&self) -> usize {
        match self {
            Sexp::Atom(_, p) | Sexp::Str(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a, _) => Some(a),
            _ => None,
        }
    }
}

fn read_all(text: &str) -> Result<Vec<Sexp>, SexprError> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    let mut stack: Vec<(Vec<Sexp>, usize)> = vec![(Vec::new(), 0)];
    while pos < bytes.len() {
        let c = bytes[pos];
        match c {
            b';' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => pos += 1,
            b'(' => {
                stack.push((Vec::new(), pos));
                pos += 1;
            }
            b')' => {
                if stack.len() == 1 {
                    return err(pos, "unbalanced `)`");
                }
                let (items, start) = stack.pop().expect("checked depth");
                stack.last_mut().expect("root frame").0.push(Sexp::List(items, start));
                pos += 1;
            }
            b'"' => {
                let start = pos;
                pos += 1;
                let mut s = String::new();
                loop {
                    let Some(ch) = text[pos..].chars().next() else {
                        return err(start, "unterminated string");
                    };
                    pos += ch.len_utf8();
                    match ch {
                        '"' => break,
                        '\\' => {
                            let Some(esc) = text[pos..].chars().next() else {
                                return err(start, "unterminated string");
                            };
                            pos += esc.len_utf8();
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                        }
                        other => s.push(other),
                    }
                }
                stack.last_mut().expect("root frame").0.push(Sexp::Str(s, start));
            }
            _ => {
                let start = pos;
                while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && !b"();\"".contains(&bytes[pos]) {
                    pos += 1;
                }
                stack.last_mut().expect("root frame").0.push(Sexp::Atom(text[start..pos].to_string(), start));
            }
        }
    }
    if stack.len() > 1 {
        return err(stack.last().expect("nonempty").1, "unclosed `(`");
    }
    Ok(stack.pop().expect("root frame").0)
}

fn read_one(text: &str) -> Result<Sexp, SexprError> {
    let mut items = read_all(text)?;
    match items.len() {
        1 => Ok(items.pop().expect("one item")),
        0 => err(0, "empty input"),
        _ => err(items[1].pos(), "trailing input"),
    }
}

/// A parsed pool file.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSyntax {
    pub universe: RoleUniverse,
    /// `(id, group of the positive half, session)`.
    pub sig: Vec<(u64, Group, SessionType)>,
    pub threads: Vec<(u64, Expr)>,
}

struct Ctx {
    universe: RoleUniverse,
    fix_names: Vec<(String, bool)>,
}

impl Ctx {
    fn group(&self, s: &Sexp) -> Result<Group, SexprError> {
        match s {
            Sexp::Str(text, pos) => self.universe.parse_group(text).or_else(|e| err(*pos, e.to_string())),
            other => err(other.pos(), "expected a quoted group like \"{0,2}\""),
        }
    }

    fn session(&self, s: &Sexp) -> Result<SessionType, SexprError> {
        match s {
            Sexp::Str(text, pos) => parse_session(text, self.universe).or_else(|e| err(*pos, e.to_string())),
            other => err(other.pos(), "expected a quoted session type"),
        }
    }

    fn viewtype(&self, s: &Sexp) -> Result<Viewtype, SexprError> {
        match s {
            Sexp::Atom(a, pos) => match a.as_str() {
                "int" => Ok(Viewtype::int()),
                "bool" => Ok(Viewtype::Bool),
                "str" => Ok(Viewtype::Str),
                "unit" | "1" => Ok(Viewtype::Unit),
                other => err(*pos, format!("unknown type `{other}`")),
            },
            Sexp::List(items, pos) => {
                let head = items.first().and_then(Sexp::atom).unwrap_or("");
                let want = |n: usize| {
                    if items.len() == n + 1 {
                        Ok(())
                    } else {
                        err(*pos, format!("`{head}` takes {n} argument(s)"))
                    }
                };
                match head {
                    "int" => {
                        want(1)?;
                        let n = int_atom(&items[1])?;
                        Ok(Viewtype::Int(Some(n)))
                    }
                    "chan" => {
                        want(2)?;
                        Ok(Viewtype::chan(self.group(&items[1])?, self.session(&items[2])?))
                    }
                    "prod" | "tensor" | "->" | "-o" => {
                        want(2)?;
                        let (a, b) = (self.viewtype(&items[1])?, self.viewtype(&items[2])?);
                        Ok(match head {
                            "prod" => Viewtype::prod(a, b),
                            "tensor" => Viewtype::tensor(a, b),
                            "->" => Viewtype::arrow_i(a, b),
                            _ => Viewtype::arrow_l(a, b),
                        })
                    }
                    _ => err(*pos, format!("unknown type former `{head}`")),
                }
            }
            Sexp::Str(_, pos) => err(*pos, "unexpected string in type position"),
        }
    }

    fn binder(&self, s: &Sexp) -> Result<(String, Viewtype), SexprError> {
        match s {
            Sexp::List(items, _) if items.len() == 2 => Ok((name_atom(&items[0])?, self.viewtype(&items[1])?)),
            other => err(other.pos(), "expected a binder `(x TYPE)`"),
        }
    }

    fn with_name<T>(&mut self, name: &str, is_fix: bool, f: impl FnOnce(&mut Self) -> T) -> T {
        self.fix_names.push((name.to_string(), is_fix));
        let out = f(self);
        self.fix_names.pop();
        out
    }

    fn variable(&self, name: &str) -> Expr {
        match self.fix_names.iter().rev().find(|(n, _)| n == name) {
            Some((_, true)) => Expr::FixVar(name.to_string()),
            _ => Expr::Var(name.to_string()),
        }
    }

    fn expr(&mut self, s: &Sexp) -> Result<Expr, SexprError> {
        match s {
            Sexp::Str(text, _) => Ok(Expr::Lit(Lit::Str(text.clone()))),
            Sexp::Atom(a, pos) => {
                if a == "unit" {
                    return Ok(Expr::Unit);
                }
                if a == "true" || a == "false" {
                    return Ok(Expr::bool(a == "true"));
                }
                if let Some(rest) = a.strip_prefix("ch") {
                    if rest.starts_with('+') || rest.starts_with('-') {
                        let id: u64 = rest[1..].parse().or_else(|_| err(*pos, format!("bad channel `{a}`")))?;
                        let half = if rest.starts_with('+') { ChannelHalf::pos(id) } else { ChannelHalf::neg(id) };
                        return Ok(Expr::Chan(half));
                    }
                }
                if a.starts_with(|c: char| c.is_ascii_digit() || c == '-') {
                    return a.parse().map(Expr::int).or_else(|_| err(*pos, format!("bad integer `{a}`")));
                }
                if Prim::from_name(a).is_some() || is_keyword(a) {
                    return err(*pos, format!("`{a}` cannot be used as a variable"));
                }
                Ok(self.variable(a))
            }
            Sexp::List(items, pos) => {
                let Some(head) = items.first().and_then(Sexp::atom) else {
                    return err(*pos, "expected a keyword or primitive after `(`");
                };
                let args = &items[1..];
                let want = |n: usize| {
                    if args.len() == n {
                        Ok(())
                    } else {
                        err(*pos, format!("`{head}` takes {n} argument(s)"))
                    }
                };
                match head {
                    "pair" => {
                        want(2)?;
                        Ok(Expr::pair(self.expr(&args[0])?, self.expr(&args[1])?))
                    }
                    "fst" | "snd" => {
                        want(1)?;
                        let e = self.expr(&args[0])?;
                        Ok(if head == "fst" { Expr::fst(e) } else { Expr::snd(e) })
                    }
                    "app" => {
                        want(2)?;
                        Ok(Expr::app(self.expr(&args[0])?, self.expr(&args[1])?))
                    }
                    "if" => {
                        want(3)?;
                        Ok(Expr::if_(self.expr(&args[0])?, self.expr(&args[1])?, self.expr(&args[2])?))
                    }
                    "lam" | "llam" => {
                        want(2)?;
                        let (x, ty) = self.binder(&args[0])?;
                        let body = self.with_name(&x, false, |c| c.expr(&args[1]))?;
                        Ok(if head == "lam" { Expr::lam(&x, ty, body) } else { Expr::llam(&x, ty, body) })
                    }
                    "let" => {
                        want(3)?;
                        let (x, ty) = self.binder(&args[0])?;
                        let bound = self.expr(&args[1])?;
                        let body = self.with_name(&x, false, |c| c.expr(&args[2]))?;
                        Ok(Expr::let_(&x, ty, bound, body))
                    }
                    "letp" => {
                        want(3)?;
                        let (x1, x2) = match &args[0] {
                            Sexp::List(names, _) if names.len() == 2 => (name_atom(&names[0])?, name_atom(&names[1])?),
                            other => return err(other.pos(), "expected `(x y)`"),
                        };
                        let bound = self.expr(&args[1])?;
                        let body = self.with_name(&x1, false, |c| {
                            let x2 = x2.clone();
                            c.with_name(&x2, false, |c| c.expr(&args[2]))
                        })?;
                        Ok(Expr::let_pair(&x1, &x2, bound, body))
                    }
                    "fix" => {
                        want(3)?;
                        let f = name_atom(&args[0])?;
                        let ty = self.viewtype(&args[1])?;
                        let body = self.with_name(&f, true, |c| c.expr(&args[2]))?;
                        Ok(Expr::fix(&f, ty, body))
                    }
                    other => match Prim::from_name(other) {
                        Some(p) => {
                            want(p.arity())?;
                            let args = args.iter().map(|a| self.expr(a)).collect::<Result<_, _>>()?;
                            Ok(Expr::Const(p, args))
                        }
                        None => err(*pos, format!("unknown form `{other}`")),
                    },
                }
            }
        }
    }
}

fn is_keyword(a: &str) -> bool {
    matches!(
        a,
        "pair" | "fst" | "snd" | "app" | "if" | "lam" | "llam" | "let" | "letp" | "fix" | "unit" | "true" | "false"
    )
}

fn name_atom(s: &Sexp) -> Result<String, SexprError> {
    match s {
        Sexp::Atom(a, pos) => {
            let ok = a.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                && !is_keyword(a)
                && Prim::from_name(a).is_none()
                && !(a.starts_with("ch+") || a.starts_with("ch-"));
            if ok {
                Ok(a.clone())
            } else {
                err(*pos, format!("`{a}` is not a valid variable name"))
            }
        }
        other => err(other.pos(), "expected a variable name"),
    }
}

fn int_atom(s: &Sexp) -> Result<i64, SexprError> {
    match s {
        Sexp::Atom(a, pos) => a.parse().or_else(|_| err(*pos, format!("bad integer `{a}`"))),
        other => err(other.pos(), "expected an integer"),
    }
}

pub fn parse_expr(text: &str, universe: RoleUniverse) -> Result<Expr, SexprError> {
    let s = read_one(text)?;
    Ctx { universe, fix_names: Vec::new() }.expr(&s)
}

pub fn parse_viewtype(text: &str, universe: RoleUniverse) -> Result<Viewtype, SexprError> {
    let s = read_one(text)?;
    Ctx { universe, fix_names: Vec::new() }.viewtype(&s)
}

/// Parses a pool file. A bare expression is a single-thread pool over
/// `default_universe`; a `(pool ...)` form may override the role count.
pub fn parse_pool(text: &str, default_universe: Option<RoleUniverse>) -> Result<PoolSyntax, SexprError> {
    let top = read_one(text)?;
    let fallback = default_universe.unwrap_or_else(|| RoleUniverse::new(DEFAULT_NROLE).expect("default nrole"));
    let items = match &top {
        Sexp::List(items, _) if items.first().and_then(Sexp::atom) == Some("pool") => &items[1..],
        _ => {
            let e = Ctx { universe: fallback, fix_names: Vec::new() }.expr(&top)?;
            return Ok(PoolSyntax { universe: fallback, sig: Vec::new(), threads: vec![(0, e)] });
        }
    };
    let mut universe = fallback;
    let mut sig = Vec::new();
    let mut threads = Vec::new();
    for item in items {
        let Sexp::List(parts, pos) = item else {
            return err(item.pos(), "expected `(nrole ..)`, `(sig ..)` or `(thread ..)`");
        };
        match parts.first().and_then(Sexp::atom) {
            Some("nrole") if parts.len() == 2 => {
                if !sig.is_empty() || !threads.is_empty() {
                    return err(*pos, "`nrole` must come first");
                }
                let n = int_atom(&parts[1])?;
                universe = usize::try_from(n)
                    .ok()
                    .and_then(|n| RoleUniverse::new(n).ok())
                    .map_or_else(|| err(*pos, format!("invalid nrole {n}")), Ok)?;
            }
            Some("sig") => {
                let ctx = Ctx { universe, fix_names: Vec::new() };
                for entry in &parts[1..] {
                    match entry {
                        Sexp::List(e, p) if e.len() == 4 && e[0].atom() == Some("ch") => {
                            let id = u64::try_from(int_atom(&e[1])?).or_else(|_| err(*p, "negative channel id"))?;
                            let g = ctx.group(&e[2])?;
                            if !g.contains(0) {
                                return err(*p, "the sig group names the positive half and must contain role 0");
                            }
                            sig.push((id, g, ctx.session(&e[3])?));
                        }
                        other => return err(other.pos(), "expected `(ch ID \"{G}\" \"S\")`"),
                    }
                }
            }
            Some("thread") if parts.len() == 3 => {
                let tid = u64::try_from(int_atom(&parts[1])?).or_else(|_| err(*pos, "negative thread id"))?;
                let e = Ctx { universe, fix_names: Vec::new() }.expr(&parts[2])?;
                threads.push((tid, e));
            }
            _ => return err(*pos, "expected `(nrole N)`, `(sig ..)` or `(thread TID e)`"),
        }
    }
    Ok(PoolSyntax { universe, sig, threads })
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

pub fn format_viewtype(t: &Viewtype) -> String {
    match t {
        Viewtype::Bool => "bool".into(),
        Viewtype::Int(None) => "int".into(),
        Viewtype::Int(Some(n)) => format!("(int {n})"),
        Viewtype::Str => "str".into(),
        Viewtype::Unit => "unit".into(),
        Viewtype::Chan(g, s) => format!("(chan {} {})", quote(&g.to_string()), quote(&format_session(s))),
        Viewtype::Prod(a, b) => format!("(prod {} {})", format_viewtype(a), format_viewtype(b)),
        Viewtype::Tensor(a, b) => format!("(tensor {} {})", format_viewtype(a), format_viewtype(b)),
        Viewtype::ArrowI(a, b) => format!("(-> {} {})", format_viewtype(a), format_viewtype(b)),
        Viewtype::ArrowL(a, b) => format!("(-o {} {})", format_viewtype(a), format_viewtype(b)),
    }
}

pub fn format_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

fn write_expr(e: &Expr, out: &mut String) {
    let form = |head: &str, parts: &[&Expr], out: &mut String| {
        write!(out, "({head}").unwrap();
        for p in parts {
            out.push(' ');
            write_expr(p, out);
        }
        out.push(')');
    };
    match e {
        Expr::Var(x) | Expr::FixVar(x) => out.push_str(x),
        Expr::Chan(h) => {
            let sign = if h.is_positive() { '+' } else { '-' };
            write!(out, "ch{sign}{}", h.id).unwrap();
        }
        Expr::Lit(Lit::Int(n)) => write!(out, "{n}").unwrap(),
        Expr::Lit(Lit::Bool(b)) => write!(out, "{b}").unwrap(),
        Expr::Lit(Lit::Str(s)) => out.push_str(&quote(s)),
        Expr::Unit => out.push_str("unit"),
        Expr::Pair(a, b) => form("pair", &[a, b], out),
        Expr::Fst(a) => form("fst", &[a], out),
        Expr::Snd(a) => form("snd", &[a], out),
        Expr::App(a, b) => form("app", &[a, b], out),
        Expr::If(c, t, f) => form("if", &[c, t, f], out),
        Expr::LetPair { x1, x2, bound, body } => {
            write!(out, "(letp ({x1} {x2}) ").unwrap();
            write_expr(bound, out);
            out.push(' ');
            write_expr(body, out);
            out.push(')');
        }
        Expr::Lam { param, ty, body, linear } => {
            let head = if *linear { "llam" } else { "lam" };
            write!(out, "({head} ({param} {}) ", format_viewtype(ty)).unwrap();
            write_expr(body, out);
            out.push(')');
        }
        Expr::Fix { name, ty, body } => {
            write!(out, "(fix {name} {} ", format_viewtype(ty)).unwrap();
            write_expr(body, out);
            out.push(')');
        }
        Expr::Const(p, args) => {
            let refs: Vec<&Expr> = args.iter().collect();
            form(p.name(), &refs, out)
        }
    }
}

pub fn format_pool(p: &PoolSyntax) -> String {
    let mut out = format!("(pool (nrole {})", p.universe.nrole());
    if !p.sig.is_empty() {
        out.push_str("\n  (sig");
        for (id, g, s) in &p.sig {
            write!(out, " (ch {id} {} {})", quote(&g.to_string()), quote(&format_session(s))).unwrap();
        }
        out.push(')');
    }
    for (tid, e) in &p.threads {
        write!(out, "\n  (thread {tid} {})", format_expr(e)).unwrap();
    }
    out.push(')');
    out
}
