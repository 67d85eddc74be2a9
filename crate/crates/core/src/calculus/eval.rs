//! Call-by-value evaluation contexts, redexes and single-thread steps.
//!
//! ```text
//! E ::= [] | c(v..,E,e..) | if(E,e,e) | <E,e> | <v,E> | let <x,y> = E in e
//!     | fst E | snd E | app(E,e) | app(v,E)
//! ```

use thiserror::Error;

use super::syntax::{Expr, Lit, Prim};
use crate::df_analysis::ChannelHalf;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("expression is stuck: {0}")]
    Stuck(String),
    #[error("expression is a value")]
    IsValue,
    #[error("next redex needs the pool: {0}")]
    NotLocal(String),
}

/// What sits in the hole of the unique decomposition `E[r]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RedexKind {
    /// `if`, `letp`, `fst`, `snd`, beta, or `fix`.
    Pure,
    /// `iadd(v,v)` or `randbit()`.
    AdHoc(Prim),
    ThreadCreate,
    ChanCreate,
    Chan2Create,
    Partial(PartialRedex),
}

/// A channel primitive applied to a channel constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialRedex {
    pub prim: Prim,
    pub chan: ChannelHalf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Focus {
    Value,
    Redex { path: Vec<usize>, kind: RedexKind },
    Stuck(String),
}

pub fn focus(e: &Expr) -> Focus {
    let mut path = Vec::new();
    let mut cur = e;
    loop {
        let next = match cur {
            _ if cur.is_value() => {
                return if path.is_empty() { Focus::Value } else { unreachable!("descended into a value") };
            }
            Expr::Var(x) | Expr::FixVar(x) => return Focus::Stuck(format!("free variable `{x}`")),
            Expr::Fix { .. } => None,
            Expr::Pair(a, b) => Some(if !a.is_value() { (0, &**a) } else { (1, &**b) }),
            Expr::Fst(a) | Expr::Snd(a) => (!a.is_value()).then_some((0, &**a)),
            Expr::LetPair { bound, .. } => (!bound.is_value()).then_some((0, &**bound)),
            Expr::App(f, a) => {
                if !f.is_value() {
                    Some((0, &**f))
                } else {
                    (!a.is_value()).then_some((1, &**a))
                }
            }
            Expr::If(c, _, _) => (!c.is_value()).then_some((0, &**c)),
            Expr::Const(_, args) => args.iter().position(|a| !a.is_value()).map(|k| (k, &args[k])),
            Expr::Chan(_) | Expr::Lit(_) | Expr::Unit | Expr::Lam { .. } => unreachable!("values handled above"),
        };
        match next {
            Some((k, child)) => {
                path.push(k);
                cur = child;
            }
            None => {
                return match classify_redex(cur) {
                    Ok(kind) => Focus::Redex { path, kind },
                    Err(why) => Focus::Stuck(why),
                }
            }
        }
    }
}

fn classify_redex(r: &Expr) -> Result<RedexKind, String> {
    match r {
        Expr::Fix { .. } => Ok(RedexKind::Pure),
        Expr::Fst(v) | Expr::Snd(v) | Expr::LetPair { bound: v, .. } => match &**v {
            Expr::Pair(..) => Ok(RedexKind::Pure),
            other => Err(format!("expected a pair, found {other}")),
        },
        Expr::App(f, _) => match &**f {
            Expr::Lam { .. } => Ok(RedexKind::Pure),
            other => Err(format!("applying a non-function {other}")),
        },
        Expr::If(c, _, _) => match &**c {
            Expr::Lit(Lit::Bool(_)) => Ok(RedexKind::Pure),
            other => Err(format!("if on non-boolean {other}")),
        },
        Expr::Const(p, args) => match p {
            Prim::Iadd => match (&args[0], &args[1]) {
                (Expr::Lit(Lit::Int(_)), Expr::Lit(Lit::Int(_))) => Ok(RedexKind::AdHoc(Prim::Iadd)),
                _ => Err(format!("iadd is undefined at {r}")),
            },
            Prim::Randbit => Ok(RedexKind::AdHoc(Prim::Randbit)),
            Prim::ThreadCreate => Ok(RedexKind::ThreadCreate),
            Prim::ChanCreate => Ok(RedexKind::ChanCreate),
            Prim::Chan2Create => Ok(RedexKind::Chan2Create),
            Prim::Send | Prim::Recv | Prim::Skip | Prim::Close => match args.first() {
                Some(Expr::Chan(h)) => Ok(RedexKind::Partial(PartialRedex { prim: *p, chan: *h })),
                _ => Err(format!("{} on a non-channel", p.name())),
            },
        },
        other => Err(format!("no redex in {other}")),
    }
}

pub fn at_path<'a>(e: &'a Expr, path: &[usize]) -> &'a Expr {
    path.iter().fold(e, |cur, &k| child(cur, k))
}

fn child(e: &Expr, k: usize) -> &Expr {
    match (e, k) {
        (Expr::Pair(a, _), 0) | (Expr::App(a, _), 0) | (Expr::Fst(a), 0) | (Expr::Snd(a), 0) | (Expr::If(a, _, _), 0) => a,
        (Expr::Pair(_, b), 1) | (Expr::App(_, b), 1) => b,
        (Expr::LetPair { bound, .. }, 0) => bound,
        (Expr::Const(_, args), k) => &args[k],
        _ => panic!("invalid evaluation path"),
    }
}

fn child_mut(e: &mut Expr, k: usize) -> &mut Expr {
    match (e, k) {
        (Expr::Pair(a, _), 0) | (Expr::App(a, _), 0) | (Expr::Fst(a), 0) | (Expr::Snd(a), 0) | (Expr::If(a, _, _), 0) => a,
        (Expr::Pair(_, b), 1) | (Expr::App(_, b), 1) => b,
        (Expr::LetPair { bound, .. }, 0) => bound,
        (Expr::Const(_, args), k) => &mut args[k],
        _ => panic!("invalid evaluation path"),
    }
}

/// `E[r']` from `E[r]` and the path to `r`.
pub fn plug(e: &Expr, path: &[usize], reduct: Expr) -> Expr {
    let mut out = e.clone();
    let slot = path.iter().fold(&mut out, |cur, &k| child_mut(cur, k));
    *slot = reduct;
    out
}

/// Contracts a pure redex.
pub fn contract_pure(r: &Expr) -> Result<Expr, EvalError> {
    match r {
        Expr::If(c, t, f) => match &**c {
            Expr::Lit(Lit::Bool(true)) => Ok((**t).clone()),
            Expr::Lit(Lit::Bool(false)) => Ok((**f).clone()),
            _ => Err(EvalError::Stuck(format!("{r}"))),
        },
        Expr::LetPair { x1, x2, bound, body } => match &**bound {
            Expr::Pair(v1, v2) => Ok(body.subst(x1, v1).subst(x2, v2)),
            _ => Err(EvalError::Stuck(format!("{r}"))),
        },
        Expr::Fst(p) | Expr::Snd(p) => match &**p {
            Expr::Pair(v1, v2) => Ok(if matches!(r, Expr::Fst(_)) { (**v1).clone() } else { (**v2).clone() }),
            _ => Err(EvalError::Stuck(format!("{r}"))),
        },
        Expr::App(f, v) => match &**f {
            Expr::Lam { param, body, .. } => Ok(body.subst(param, v)),
            _ => Err(EvalError::Stuck(format!("{r}"))),
        },
        Expr::Fix { name, body, .. } => Ok(body.subst(name, r)),
        _ => Err(EvalError::Stuck(format!("{r}"))),
    }
}

/// Contracts `iadd(i,j)` or `randbit()`, the latter to `bit`.
pub fn contract_adhoc(r: &Expr, bit: bool) -> Result<Expr, EvalError> {
    match r {
        Expr::Const(Prim::Iadd, args) => match (&args[0], &args[1]) {
            (Expr::Lit(Lit::Int(a)), Expr::Lit(Lit::Int(b))) => Ok(Expr::int(a.wrapping_add(*b))),
            _ => Err(EvalError::Stuck(format!("{r}"))),
        },
        Expr::Const(Prim::Randbit, _) => Ok(Expr::bool(bit)),
        _ => Err(EvalError::Stuck(format!("{r}"))),
    }
}

/// One pure or ad-hoc step, with `randbit()` yielding `bit`.
pub fn step_expr_with(e: &Expr, bit: bool) -> Result<Expr, EvalError> {
    match focus(e) {
        Focus::Value => Err(EvalError::IsValue),
        Focus::Stuck(why) => Err(EvalError::Stuck(why)),
        Focus::Redex { path, kind } => {
            let r = at_path(e, &path);
            let reduct = match kind {
                RedexKind::Pure => contract_pure(r)?,
                RedexKind::AdHoc(_) => contract_adhoc(r, bit)?,
                other => return Err(EvalError::NotLocal(format!("{other:?}"))),
            };
            Ok(plug(e, &path, reduct))
        }
    }
}

/// One pure or ad-hoc step; `randbit()` yields `false`.
pub fn step_expr(e: &Expr) -> Result<Expr, EvalError> {
    step_expr_with(e, false)
}

/// The partial redex `e` is blocked on, if any.
pub fn blocked(e: &Expr) -> Option<PartialRedex> {
    match focus(e) {
        Focus::Redex { kind: RedexKind::Partial(p), .. } => Some(p),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::sexpr::parse_expr;
    use crate::roles::RoleUniverse;

    fn p(text: &str) -> Expr {
        parse_expr(text, RoleUniverse::new(2).unwrap()).unwrap()
    }

    #[test]
    fn pure_steps() {
        assert_eq!(step_expr(&p("(fst (pair 1 2))")).unwrap(), Expr::int(1));
        assert_eq!(step_expr(&p("(app (lam (x int) x) 5)")).unwrap(), Expr::int(5));
        let fix = p("(fix f (-> int int) (lam (x int) (app f x)))");
        let Expr::Fix { body, .. } = &fix else { panic!() };
        assert_eq!(step_expr(&fix).unwrap(), body.subst("f", &fix));
        assert_eq!(step_expr(&p("(iadd 2 2)")).unwrap(), Expr::int(4));
        assert_eq!(step_expr_with(&p("(randbit)"), true).unwrap(), Expr::bool(true));
        assert_eq!(step_expr(&p("unit")), Err(EvalError::IsValue));
    }

    #[test]
    fn left_to_right() {
        let e = p("(pair (iadd 1 1) (iadd 2 2))");
        assert_eq!(step_expr(&e).unwrap(), p("(pair 2 (iadd 2 2))"));
        let e = p("(letp (a b) (pair (fst (pair 1 2)) 3) (iadd a b))");
        let mut cur = e;
        while !cur.is_value() {
            cur = step_expr(&cur).unwrap();
        }
        assert_eq!(cur, Expr::int(4));
    }

    #[test]
    fn blocked_forms() {
        assert_eq!(
            blocked(&p("(pair (send ch+1 3) 2)")),
            Some(PartialRedex { prim: Prim::Send, chan: ChannelHalf::pos(1) })
        );
        assert_eq!(blocked(&p("unit")), None);
        assert_eq!(
            blocked(&p("(app (lam (u unit) u) (close ch-2))")),
            Some(PartialRedex { prim: Prim::Close, chan: ChannelHalf::neg(2) })
        );
        assert!(matches!(step_expr(&p("(close ch-2)")), Err(EvalError::NotLocal(_))));
        assert!(matches!(focus(&p("(fst 1)")), Focus::Stuck(_)));
    }
}
