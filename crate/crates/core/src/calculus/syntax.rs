//! Expressions, viewtypes and resource accounting.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::df_analysis::ChannelHalf;
use crate::roles::Group;
use crate::session_types::{sessions_equivalent, PayloadSort, SessionType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prim {
    Iadd,
    Randbit,
    ThreadCreate,
    ChanCreate,
    /// Creates two channels at once. Only accepted in unsafe mode.
    Chan2Create,
    Send,
    Recv,
    Skip,
    Close,
}

impl Prim {
    pub const ALL: [Prim; 9] = [
        Prim::Iadd,
        Prim::Randbit,
        Prim::ThreadCreate,
        Prim::ChanCreate,
        Prim::Chan2Create,
        Prim::Send,
        Prim::Recv,
        Prim::Skip,
        Prim::Close,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Prim::Iadd => "iadd",
            Prim::Randbit => "randbit",
            Prim::ThreadCreate => "thread_create",
            Prim::ChanCreate => "chan_create",
            Prim::Chan2Create => "chan2_create",
            Prim::Send => "send",
            Prim::Recv => "recv",
            Prim::Skip => "skip",
            Prim::Close => "close",
        }
    }

    pub fn from_name(name: &str) -> Option<Prim> {
        Prim::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Prim::Randbit => 0,
            Prim::Iadd | Prim::Send => 2,
            _ => 1,
        }
    }

    /// Channel primitives that wait for a partner thread.
    pub fn is_partial(self) -> bool {
        matches!(self, Prim::Send | Prim::Recv | Prim::Skip | Prim::Close)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lit {
    Int(i64),
    Bool(bool),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var(String),
    FixVar(String),
    Chan(ChannelHalf),
    Lit(Lit),
    Unit,
    Pair(Box<Expr>, Box<Expr>),
    Fst(Box<Expr>),
    Snd(Box<Expr>),
    LetPair { x1: String, x2: String, bound: Box<Expr>, body: Box<Expr> },
    /// `linear` selects `->l` over `->i`.
    Lam { param: String, ty: Viewtype, body: Box<Expr>, linear: bool },
    App(Box<Expr>, Box<Expr>),
    Fix { name: String, ty: Viewtype, body: Box<Expr> },
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Const(Prim, Vec<Expr>),
}

#[derive(Debug, Clone)]
pub enum Viewtype {
    Bool,
    /// `int`, or the singleton `int(i)` when indexed.
    Int(Option<i64>),
    Str,
    Unit,
    Chan(Group, Arc<SessionType>),
    Prod(Box<Viewtype>, Box<Viewtype>),
    Tensor(Box<Viewtype>, Box<Viewtype>),
    ArrowI(Box<Viewtype>, Box<Viewtype>),
    ArrowL(Box<Viewtype>, Box<Viewtype>),
}

impl PartialEq for Viewtype {
    fn eq(&self, other: &Self) -> bool {
        use Viewtype::*;
        match (self, other) {
            (Bool, Bool) | (Str, Str) | (Unit, Unit) => true,
            (Int(a), Int(b)) => a == b,
            (Chan(g1, s1), Chan(g2, s2)) => g1 == g2 && sessions_equivalent(s1, s2),
            (Prod(a1, b1), Prod(a2, b2))
            | (Tensor(a1, b1), Tensor(a2, b2))
            | (ArrowI(a1, b1), ArrowI(a2, b2))
            | (ArrowL(a1, b1), ArrowL(a2, b2)) => a1 == a2 && b1 == b2,
            _ => false,
        }
    }
}

impl Eq for Viewtype {}

impl Viewtype {
    pub fn int() -> Self {
        Viewtype::Int(None)
    }

    pub fn chan(group: Group, s: SessionType) -> Self {
        Viewtype::Chan(group, Arc::new(s))
    }

    pub fn prod(a: Viewtype, b: Viewtype) -> Self {
        Viewtype::Prod(Box::new(a), Box::new(b))
    }

    pub fn tensor(a: Viewtype, b: Viewtype) -> Self {
        Viewtype::Tensor(Box::new(a), Box::new(b))
    }

    pub fn arrow_i(a: Viewtype, b: Viewtype) -> Self {
        Viewtype::ArrowI(Box::new(a), Box::new(b))
    }

    pub fn arrow_l(a: Viewtype, b: Viewtype) -> Self {
        Viewtype::ArrowL(Box::new(a), Box::new(b))
    }

    /// A true viewtype: values of it may hold resources and must be used
    /// exactly once.
    pub fn is_linear(&self) -> bool {
        match self {
            Viewtype::Chan(..) | Viewtype::Tensor(..) | Viewtype::ArrowL(..) => true,
            Viewtype::Prod(a, b) => a.is_linear() || b.is_linear(),
            _ => false,
        }
    }

    /// No channel type occurs anywhere inside, including under arrows.
    pub fn is_channel_free(&self) -> bool {
        match self {
            Viewtype::Chan(..) => false,
            Viewtype::Prod(a, b) | Viewtype::Tensor(a, b) | Viewtype::ArrowI(a, b) | Viewtype::ArrowL(a, b) => {
                a.is_channel_free() && b.is_channel_free()
            }
            _ => true,
        }
    }

    /// Pairs of non-linear components are `*`, otherwise `⊗`.
    pub fn pair_of(a: Viewtype, b: Viewtype) -> Viewtype {
        if a.is_linear() || b.is_linear() {
            Viewtype::tensor(a, b)
        } else {
            Viewtype::prod(a, b)
        }
    }

    pub fn from_sort(sort: &PayloadSort) -> Viewtype {
        match sort {
            PayloadSort::Unit => Viewtype::Unit,
            PayloadSort::Int => Viewtype::int(),
            PayloadSort::Bool => Viewtype::Bool,
            PayloadSort::Str => Viewtype::Str,
            PayloadSort::Chan(g, s) => Viewtype::Chan(*g, s.clone()),
            PayloadSort::Tuple(items) => {
                let mut iter = items.iter().rev().map(Viewtype::from_sort);
                match iter.next() {
                    None => Viewtype::Unit,
                    Some(last) => iter.fold(last, |acc, t| Viewtype::pair_of(t, acc)),
                }
            }
        }
    }

    /// `self ≤ other`: `int(i) ≤ int`, `*` may be used as `⊗`, `->i` as
    /// `->l`, arrows contravariant in the argument.
    pub fn is_subtype_of(&self, other: &Viewtype) -> bool {
        use Viewtype::*;
        match (self, other) {
            (Int(Some(_)), Int(None)) => true,
            (Prod(a1, b1), Prod(a2, b2))
            | (Prod(a1, b1), Tensor(a2, b2))
            | (Tensor(a1, b1), Tensor(a2, b2)) => a1.is_subtype_of(a2) && b1.is_subtype_of(b2),
            (ArrowI(a1, b1), ArrowI(a2, b2))
            | (ArrowI(a1, b1), ArrowL(a2, b2))
            | (ArrowL(a1, b1), ArrowL(a2, b2)) => a2.is_subtype_of(a1) && b1.is_subtype_of(b2),
            _ => self == other,
        }
    }

    /// Least common supertype, used for `if` branches.
    pub fn join(&self, other: &Viewtype) -> Option<Viewtype> {
        use Viewtype::*;
        if self.is_subtype_of(other) {
            return Some(other.clone());
        }
        if other.is_subtype_of(self) {
            return Some(self.clone());
        }
        match (self, other) {
            (Int(_), Int(_)) => Some(Viewtype::int()),
            (Prod(a1, b1), Prod(a2, b2)) => Some(Viewtype::prod(a1.join(a2)?, b1.join(b2)?)),
            (Tensor(a1, b1), Tensor(a2, b2)) | (Prod(a1, b1), Tensor(a2, b2)) | (Tensor(a1, b1), Prod(a2, b2)) => {
                Some(Viewtype::tensor(a1.join(a2)?, b1.join(b2)?))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Viewtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::sexpr::format_viewtype(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::sexpr::format_expr(self))
    }
}

/// Multiset of channel halves, as occurrence counts.
pub type Resources = BTreeMap<ChannelHalf, usize>;

fn add_into(acc: &mut Resources, other: Resources) {
    for (k, n) in other {
        *acc.entry(k).or_insert(0) += n;
    }
}

/// ρ(e). In `if(e0,e1,e2)` only `e1` is counted, since both branches hold
/// the same resources in a well-typed term.
pub fn rho(e: &Expr) -> Resources {
    let mut out = Resources::new();
    rho_into(e, &mut out);
    out
}

fn rho_into(e: &Expr, out: &mut Resources) {
    match e {
        Expr::Chan(h) => *out.entry(*h).or_insert(0) += 1,
        Expr::Var(_) | Expr::FixVar(_) | Expr::Lit(_) | Expr::Unit => {}
        Expr::Pair(a, b) | Expr::App(a, b) => {
            rho_into(a, out);
            rho_into(b, out);
        }
        Expr::Fst(a) | Expr::Snd(a) => rho_into(a, out),
        Expr::LetPair { bound, body, .. } => {
            rho_into(bound, out);
            rho_into(body, out);
        }
        Expr::Lam { body, .. } | Expr::Fix { body, .. } => rho_into(body, out),
        Expr::If(c, t, _) => {
            rho_into(c, out);
            rho_into(t, out);
        }
        Expr::Const(_, args) => args.iter().for_each(|a| rho_into(a, out)),
    }
}

pub fn rho_union(a: Resources, b: Resources) -> Resources {
    let mut acc = a;
    add_into(&mut acc, b);
    acc
}

/// ρ_CH(e): the set of channel halves syntactically contained in `e`,
/// including both branches of every `if`.
pub fn rho_ch(e: &Expr) -> std::collections::BTreeSet<ChannelHalf> {
    let mut out = std::collections::BTreeSet::new();
    e.visit(&mut |sub| {
        if let Expr::Chan(h) = sub {
            out.insert(*h);
        }
    });
    out
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn int(n: i64) -> Expr {
        Expr::Lit(Lit::Int(n))
    }

    pub fn bool(b: bool) -> Expr {
        Expr::Lit(Lit::Bool(b))
    }

    pub fn str(s: &str) -> Expr {
        Expr::Lit(Lit::Str(s.to_string()))
    }

    pub fn pair(a: Expr, b: Expr) -> Expr {
        Expr::Pair(Box::new(a), Box::new(b))
    }

    pub fn fst(e: Expr) -> Expr {
        Expr::Fst(Box::new(e))
    }

    pub fn snd(e: Expr) -> Expr {
        Expr::Snd(Box::new(e))
    }

    pub fn app(f: Expr, a: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(a))
    }

    pub fn lam(param: &str, ty: Viewtype, body: Expr) -> Expr {
        Expr::Lam { param: param.to_string(), ty, body: Box::new(body), linear: false }
    }

    pub fn llam(param: &str, ty: Viewtype, body: Expr) -> Expr {
        Expr::Lam { param: param.to_string(), ty, body: Box::new(body), linear: true }
    }

    pub fn fix(name: &str, ty: Viewtype, body: Expr) -> Expr {
        Expr::Fix { name: name.to_string(), ty, body: Box::new(body) }
    }

    pub fn if_(c: Expr, t: Expr, f: Expr) -> Expr {
        Expr::If(Box::new(c), Box::new(t), Box::new(f))
    }

    pub fn let_pair(x1: &str, x2: &str, bound: Expr, body: Expr) -> Expr {
        Expr::LetPair { x1: x1.to_string(), x2: x2.to_string(), bound: Box::new(bound), body: Box::new(body) }
    }

    /// `let x : ty = bound in body`, encoded as a linear application.
    pub fn let_(x: &str, ty: Viewtype, bound: Expr, body: Expr) -> Expr {
        Expr::app(Expr::llam(x, ty, body), bound)
    }

    pub fn prim(p: Prim, args: Vec<Expr>) -> Expr {
        Expr::Const(p, args)
    }

    pub fn is_value(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Chan(_) | Expr::Lit(_) | Expr::Unit | Expr::Lam { .. } => true,
            Expr::Pair(a, b) => a.is_value() && b.is_value(),
            _ => false,
        }
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Var(_) | Expr::FixVar(_) | Expr::Chan(_) | Expr::Lit(_) | Expr::Unit => {}
            Expr::Pair(a, b) | Expr::App(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Fst(a) | Expr::Snd(a) => a.visit(f),
            Expr::LetPair { bound, body, .. } => {
                bound.visit(f);
                body.visit(f);
            }
            Expr::Lam { body, .. } | Expr::Fix { body, .. } => body.visit(f),
            Expr::If(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
            Expr::Const(_, args) => args.iter().for_each(|a| a.visit(f)),
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    pub fn free_vars(&self) -> std::collections::BTreeSet<String> {
        fn go(e: &Expr, bound: &mut Vec<String>, out: &mut std::collections::BTreeSet<String>) {
            match e {
                Expr::Var(x) | Expr::FixVar(x) => {
                    if !bound.contains(x) {
                        out.insert(x.clone());
                    }
                }
                Expr::Chan(_) | Expr::Lit(_) | Expr::Unit => {}
                Expr::Pair(a, b) | Expr::App(a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                Expr::Fst(a) | Expr::Snd(a) => go(a, bound, out),
                Expr::LetPair { x1, x2, bound: b, body } => {
                    go(b, bound, out);
                    bound.push(x1.clone());
                    bound.push(x2.clone());
                    go(body, bound, out);
                    bound.truncate(bound.len() - 2);
                }
                Expr::Lam { param: x, body, .. } | Expr::Fix { name: x, body, .. } => {
                    bound.push(x.clone());
                    go(body, bound, out);
                    bound.pop();
                }
                Expr::If(c, t, f) => {
                    go(c, bound, out);
                    go(t, bound, out);
                    go(f, bound, out);
                }
                Expr::Const(_, args) => args.iter().for_each(|a| go(a, bound, out)),
            }
        }
        let mut out = std::collections::BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// `self[x ↦ v]`. Substituted terms are closed, so no renaming is needed.
    pub fn subst(&self, x: &str, v: &Expr) -> Expr {
        let s = |e: &Expr| Box::new(e.subst(x, v));
        match self {
            Expr::Var(y) | Expr::FixVar(y) if y == x => v.clone(),
            Expr::Var(_) | Expr::FixVar(_) | Expr::Chan(_) | Expr::Lit(_) | Expr::Unit => self.clone(),
            Expr::Pair(a, b) => Expr::Pair(s(a), s(b)),
            Expr::App(a, b) => Expr::App(s(a), s(b)),
            Expr::Fst(a) => Expr::Fst(s(a)),
            Expr::Snd(a) => Expr::Snd(s(a)),
            Expr::LetPair { x1, x2, bound, body } => Expr::LetPair {
                x1: x1.clone(),
                x2: x2.clone(),
                bound: s(bound),
                body: if x1 == x || x2 == x { body.clone() } else { s(body) },
            },
            Expr::Lam { param, ty, body, linear } => Expr::Lam {
                param: param.clone(),
                ty: ty.clone(),
                body: if param == x { body.clone() } else { s(body) },
                linear: *linear,
            },
            Expr::Fix { name, ty, body } => Expr::Fix {
                name: name.clone(),
                ty: ty.clone(),
                body: if name == x { body.clone() } else { s(body) },
            },
            Expr::If(c, t, f) => Expr::If(s(c), s(t), s(f)),
            Expr::Const(p, args) => Expr::Const(*p, args.iter().map(|a| a.subst(x, v)).collect()),
        }
    }
}
