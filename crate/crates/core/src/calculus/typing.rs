//! Linear typechecking with leftover contexts.
//!
//! Linear bindings carry a `used` flag; checking a subterm consumes the
//! bindings it mentions and leaves the rest for its siblings. Intuitionistic
//! lambdas and `fix` put up a barrier that hides the enclosing linear
//! bindings. Both branches of an `if` must consume the same bindings and
//! hold the same resources.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::syntax::{rho, Expr, Lit, Prim, Viewtype};
use crate::df_analysis::ChannelHalf;
use crate::roles::{Group, RoleUniverse};
use crate::session_types::{head_action, linear_steps, well_formed, HeadAction, PayloadSort, SessionType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("linear variable `{0}` is never used")]
    LinearUnused(String),
    #[error("linear variable `{0}` is used more than once")]
    LinearReused(String),
    #[error("linear variable `{0}` captured by an intuitionistic function or fix")]
    LinearCapture(String),
    #[error("branches of `if` consume different linear variables")]
    BranchLeftover,
    #[error("branches of `if` hold different resources")]
    BranchResources,
    #[error("type mismatch in {context}: expected {expected}, found {found}")]
    Mismatch { context: String, expected: String, found: String },
    #[error("branches of `if` have incompatible types {0} and {1}")]
    NoJoin(String, String),
    #[error("body of `fix` must be a value")]
    FixNotValue,
    #[error("type of `fix` must not be linear: {0}")]
    LinearFix(String),
    #[error("intuitionistic function body holds resources")]
    ImpureLambda,
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelHalf),
    #[error("channel half {0} occurs more than once in the pool")]
    DuplicateResource(ChannelHalf),
    #[error("channel {0} has only one half in the pool")]
    UnpairedChannel(u64),
    #[error("chan2_create is only available in unsafe mode")]
    UnsafePrimitive,
    #[error("{0}")]
    Session(String),
    #[error("thread {tid} has type {found}, expected unit")]
    ThreadType { tid: u64, found: String },
    #[error("pool has no main thread")]
    NoMainThread,
}

fn mismatch(context: &str, expected: impl ToString, found: &Viewtype) -> TypeError {
    TypeError::Mismatch { context: context.to_string(), expected: expected.to_string(), found: found.to_string() }
}

/// Types of live channels: the group of the positive half and the current
/// session. The negative half has the complement group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigEntry {
    pub plus: Group,
    pub session: Arc<SessionType>,
}

pub type Sig = BTreeMap<u64, SigEntry>;

pub fn channel_type(sig: &Sig, half: ChannelHalf) -> Option<Viewtype> {
    let entry = sig.get(&half.id)?;
    let group = if half.is_positive() { entry.plus } else { entry.plus.complement() };
    Some(Viewtype::Chan(group, entry.session.clone()))
}

/// Sessions usable in the calculus: `nil`/`msg` only (after distributing
/// `append`), recursively through delegated channel payloads.
pub fn calculus_session_ok(s: &SessionType, u: RoleUniverse) -> Result<(), TypeError> {
    if !well_formed(s, u) {
        return Err(TypeError::Session(format!("session `{s}` is not well-formed for nrole {}", u.nrole())));
    }
    let steps = linear_steps(s)
        .ok_or_else(|| TypeError::Session(format!("session `{s}` uses choose or repeat, which the calculus lacks")))?;
    fn sort_ok(p: &PayloadSort, u: RoleUniverse) -> Result<(), TypeError> {
        match p {
            PayloadSort::Chan(_, s) => calculus_session_ok(s, u),
            PayloadSort::Tuple(items) => items.iter().try_for_each(|t| sort_ok(t, u)),
            _ => Ok(()),
        }
    }
    steps.iter().try_for_each(|(_, _, p)| sort_ok(p, u))
}

#[derive(Debug, Clone)]
struct Binding {
    name: String,
    ty: Viewtype,
    linear: bool,
    used: bool,
}

pub struct Checker<'a> {
    sig: &'a Sig,
    universe: RoleUniverse,
    allow_unsafe: bool,
    bindings: Vec<Binding>,
    barrier: usize,
}

impl<'a> Checker<'a> {
    pub fn new(sig: &'a Sig, universe: RoleUniverse, allow_unsafe: bool) -> Self {
        Checker { sig, universe, allow_unsafe, bindings: Vec::new(), barrier: 0 }
    }

    fn lookup(&mut self, name: &str) -> Result<Viewtype, TypeError> {
        let barrier = self.barrier;
        let (k, b) = self
            .bindings
            .iter_mut()
            .enumerate()
            .rev()
            .find(|(_, b)| b.name == name)
            .ok_or_else(|| TypeError::Unbound(name.to_string()))?;
        if b.linear {
            if k < barrier {
                return Err(TypeError::LinearCapture(name.to_string()));
            }
            if b.used {
                return Err(TypeError::LinearReused(name.to_string()));
            }
            b.used = true;
        }
        Ok(b.ty.clone())
    }

    fn with_bound(
        &mut self,
        vars: &[(&str, Viewtype)],
        f: impl FnOnce(&mut Self) -> Result<Viewtype, TypeError>,
    ) -> Result<Viewtype, TypeError> {
        let depth = self.bindings.len();
        for (name, ty) in vars {
            self.bindings.push(Binding { name: name.to_string(), linear: ty.is_linear(), ty: ty.clone(), used: false });
        }
        let result = f(self);
        let popped = self.bindings.split_off(depth);
        let ty = result?;
        if let Some(b) = popped.iter().find(|b| b.linear && !b.used) {
            return Err(TypeError::LinearUnused(b.name.clone()));
        }
        Ok(ty)
    }

    fn behind_barrier<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        let saved = self.barrier;
        self.barrier = self.bindings.len();
        let out = f(self);
        self.barrier = saved;
        out
    }

    fn used_flags(&self) -> Vec<bool> {
        self.bindings.iter().map(|b| b.used).collect()
    }

    fn restore_flags(&mut self, flags: &[bool]) {
        for (b, &u) in self.bindings.iter_mut().zip(flags) {
            b.used = u;
        }
    }

    /// Type of a closed term; fails if it leaves linear bindings behind.
    pub fn check_closed(&mut self, e: &Expr) -> Result<Viewtype, TypeError> {
        self.bindings.clear();
        self.barrier = 0;
        self.infer(e)
    }

    pub fn infer(&mut self, e: &Expr) -> Result<Viewtype, TypeError> {
        match e {
            Expr::Var(x) | Expr::FixVar(x) => self.lookup(x),
            Expr::Chan(h) => channel_type(self.sig, *h).ok_or(TypeError::UnknownChannel(*h)),
            Expr::Lit(Lit::Int(n)) => Ok(Viewtype::Int(Some(*n))),
            Expr::Lit(Lit::Bool(_)) => Ok(Viewtype::Bool),
            Expr::Lit(Lit::Str(_)) => Ok(Viewtype::Str),
            Expr::Unit => Ok(Viewtype::Unit),
            Expr::Pair(a, b) => {
                let ta = self.infer(a)?;
                let tb = self.infer(b)?;
                Ok(Viewtype::pair_of(ta, tb))
            }
            Expr::Fst(a) | Expr::Snd(a) => match self.infer(a)? {
                Viewtype::Prod(x, y) => Ok(if matches!(e, Expr::Fst(_)) { *x } else { *y }),
                other => Err(mismatch("projection", "a * product", &other)),
            },
            Expr::LetPair { x1, x2, bound, body } => {
                let (a, b) = match self.infer(bound)? {
                    Viewtype::Tensor(a, b) | Viewtype::Prod(a, b) => (*a, *b),
                    other => return Err(mismatch("letp", "a pair", &other)),
                };
                self.with_bound(&[(x1, a), (x2, b)], |c| c.infer(body))
            }
            Expr::Lam { param, ty, body, linear } => {
                if *linear {
                    let out = self.with_bound(&[(param, ty.clone())], |c| c.infer(body))?;
                    Ok(Viewtype::arrow_l(ty.clone(), out))
                } else {
                    let out = self.behind_barrier(|c| c.with_bound(&[(param, ty.clone())], |c| c.infer(body)))?;
                    if !rho(body).is_empty() {
                        return Err(TypeError::ImpureLambda);
                    }
                    Ok(Viewtype::arrow_i(ty.clone(), out))
                }
            }
            Expr::App(f, a) => {
                let tf = self.infer(f)?;
                let ta = self.infer(a)?;
                match tf {
                    Viewtype::ArrowI(p, r) | Viewtype::ArrowL(p, r) => {
                        if ta.is_subtype_of(&p) {
                            Ok(*r)
                        } else {
                            Err(mismatch("application argument", &p, &ta))
                        }
                    }
                    other => Err(mismatch("application", "a function", &other)),
                }
            }
            Expr::Fix { name, ty, body } => {
                if !body.is_value() {
                    return Err(TypeError::FixNotValue);
                }
                if ty.is_linear() {
                    return Err(TypeError::LinearFix(ty.to_string()));
                }
                let tb = self.behind_barrier(|c| c.with_bound(&[(name, ty.clone())], |c| c.infer(body)))?;
                if tb.is_subtype_of(ty) {
                    Ok(ty.clone())
                } else {
                    Err(mismatch("fix body", ty, &tb))
                }
            }
            Expr::If(c, t, f) => {
                let tc = self.infer(c)?;
                if tc != Viewtype::Bool {
                    return Err(mismatch("if condition", "bool", &tc));
                }
                let before = self.used_flags();
                let tt = self.infer(t)?;
                let after_then = self.used_flags();
                self.restore_flags(&before);
                let tf = self.infer(f)?;
                if self.used_flags() != after_then {
                    return Err(TypeError::BranchLeftover);
                }
                if rho(t) != rho(f) {
                    return Err(TypeError::BranchResources);
                }
                tt.join(&tf).ok_or_else(|| TypeError::NoJoin(tt.to_string(), tf.to_string()))
            }
            Expr::Const(p, args) => {
                if args.len() != p.arity() {
                    return Err(TypeError::Mismatch {
                        context: p.name().into(),
                        expected: format!("{} argument(s)", p.arity()),
                        found: format!("{}", args.len()),
                    });
                }
                let tys = args.iter().map(|a| self.infer(a)).collect::<Result<Vec<_>, _>>()?;
                self.prim_type(*p, tys)
            }
        }
    }

    fn check_chan_group(&self, g: Group, s: &SessionType) -> Result<(), TypeError> {
        if g.universe() != self.universe || !g.splits_universe() {
            return Err(TypeError::Session(format!("group {g} must be a proper non-empty subset of the roles")));
        }
        calculus_session_ok(s, self.universe)
    }

    fn creator_arg(&self, t: &Viewtype, context: &str) -> Result<Viewtype, TypeError> {
        match t {
            Viewtype::ArrowI(p, r) | Viewtype::ArrowL(p, r) if **r == Viewtype::Unit => Ok((**p).clone()),
            other => Err(mismatch(context, "a procedure returning unit", other)),
        }
    }

    fn prim_type(&self, p: Prim, mut tys: Vec<Viewtype>) -> Result<Viewtype, TypeError> {
        let name = p.name();
        match p {
            Prim::Iadd => match (&tys[0], &tys[1]) {
                (Viewtype::Int(a), Viewtype::Int(b)) => Ok(Viewtype::Int(match (a, b) {
                    (Some(a), Some(b)) => a.checked_add(*b),
                    _ => None,
                })),
                (Viewtype::Int(_), other) | (other, _) => Err(mismatch(name, "int", other)),
            },
            Prim::Randbit => Ok(Viewtype::Bool),
            Prim::ThreadCreate => {
                let want = Viewtype::arrow_l(Viewtype::Unit, Viewtype::Unit);
                if tys[0].is_subtype_of(&want) {
                    Ok(Viewtype::Unit)
                } else {
                    Err(mismatch(name, want, &tys[0]))
                }
            }
            Prim::ChanCreate => match self.creator_arg(&tys[0], name)? {
                Viewtype::Chan(g, s) => {
                    self.check_chan_group(g, &s)?;
                    Ok(Viewtype::Chan(g.complement(), s))
                }
                other => Err(mismatch(name, "a function over chan(G,S)", &other)),
            },
            Prim::Chan2Create => {
                if !self.allow_unsafe {
                    return Err(TypeError::UnsafePrimitive);
                }
                match self.creator_arg(&tys[0], name)? {
                    Viewtype::Tensor(a, b) => match (*a, *b) {
                        (Viewtype::Chan(g1, s1), Viewtype::Chan(g2, s2)) => {
                            self.check_chan_group(g1, &s1)?;
                            self.check_chan_group(g2, &s2)?;
                            Ok(Viewtype::tensor(
                                Viewtype::Chan(g1.complement(), s1),
                                Viewtype::Chan(g2.complement(), s2),
                            ))
                        }
                        (a, b) => Err(mismatch(name, "a pair of channels", &Viewtype::tensor(a, b))),
                    },
                    other => Err(mismatch(name, "a function over a pair of channels", &other)),
                }
            }
            Prim::Send | Prim::Recv | Prim::Skip | Prim::Close => {
                let Viewtype::Chan(g, s) = tys[0].clone() else {
                    return Err(mismatch(name, "a channel", &tys[0]));
                };
                let action = head_action(g, &s).map_err(|e| TypeError::Session(e.to_string()))?;
                let wrong = |action: &HeadAction| {
                    TypeError::Session(format!("{name} on chan({g}, {s}) whose next action is {}", action.name()))
                };
                match (p, action) {
                    (Prim::Send, HeadAction::Send { payload, cont, .. }) => {
                        let want = Viewtype::from_sort(&payload);
                        let got = tys.pop().expect("send has two arguments");
                        if got.is_subtype_of(&want) {
                            Ok(Viewtype::chan(g, cont))
                        } else {
                            Err(mismatch("send payload", want, &got))
                        }
                    }
                    (Prim::Recv, HeadAction::Recv { payload, cont, .. }) => {
                        Ok(Viewtype::pair_of(Viewtype::chan(g, cont), Viewtype::from_sort(&payload)))
                    }
                    (Prim::Skip, HeadAction::Skip { cont, .. }) => Ok(Viewtype::chan(g, cont)),
                    (Prim::Close, HeadAction::Close) => Ok(Viewtype::Unit),
                    (_, action) => Err(wrong(&action)),
                }
            }
        }
    }
}

/// Types a closed expression against a channel signature.
pub fn typecheck(e: &Expr, sig: &Sig, universe: RoleUniverse, allow_unsafe: bool) -> Result<Viewtype, TypeError> {
    Checker::new(sig, universe, allow_unsafe).check_closed(e)
}

/// For a closed value typed at a non-linear type, whether it holds no
/// resources. `None` when the value does not typecheck at a non-linear type.
pub fn check_value_purity(v: &Expr, sig: &Sig, universe: RoleUniverse) -> Option<bool> {
    if !v.is_value() {
        return None;
    }
    let ty = typecheck(v, sig, universe, true).ok()?;
    if ty.is_linear() {
        return None;
    }
    Some(rho(v).is_empty())
}

/// Whether a closed value has the shape its viewtype dictates.
pub fn canonical_form_ok(v: &Expr, ty: &Viewtype) -> bool {
    match (ty, v) {
        (Viewtype::Bool, Expr::Lit(Lit::Bool(_))) => true,
        (Viewtype::Int(None), Expr::Lit(Lit::Int(_))) => true,
        (Viewtype::Int(Some(n)), Expr::Lit(Lit::Int(m))) => n == m,
        (Viewtype::Str, Expr::Lit(Lit::Str(_))) => true,
        (Viewtype::Unit, Expr::Unit) => true,
        (Viewtype::Chan(..), Expr::Chan(_)) => true,
        (Viewtype::Prod(a, b) | Viewtype::Tensor(a, b), Expr::Pair(x, y)) => {
            canonical_form_ok(x, a) && canonical_form_ok(y, b)
        }
        (Viewtype::ArrowI(..) | Viewtype::ArrowL(..), Expr::Lam { .. }) => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::sexpr::parse_expr;

    fn u2() -> RoleUniverse {
        RoleUniverse::new(2).unwrap()
    }

    fn ty(text: &str) -> Result<Viewtype, TypeError> {
        let sig = Sig::new();
        typecheck(&parse_expr(text, u2()).unwrap(), &sig, u2(), false)
    }

    fn one_chan_sig() -> Sig {
        let mut sig = Sig::new();
        sig.insert(1, SigEntry { plus: u2().singleton(0).unwrap(), session: Arc::new(SessionType::Nil) });
        sig
    }

    #[test]
    fn identity_and_iadd() {
        assert_eq!(ty("(lam (x unit) x)").unwrap(), Viewtype::arrow_i(Viewtype::Unit, Viewtype::Unit));
        assert_eq!(ty("(iadd 2 2)").unwrap(), Viewtype::Int(Some(4)));
        assert_eq!(ty("(if true 3 4)").unwrap(), Viewtype::int());
        assert!(matches!(ty("(iadd 1 true)"), Err(TypeError::Mismatch { .. })));
    }

    #[test]
    fn branch_resources_must_agree() {
        let sig = one_chan_sig();
        let e = parse_expr("(if true ch+1 unit)", u2()).unwrap();
        let err = typecheck(&e, &sig, u2(), false).unwrap_err();
        assert!(matches!(err, TypeError::NoJoin(..) | TypeError::BranchResources));
        let e = parse_expr("(if true (close ch+1) unit)", u2()).unwrap();
        assert_eq!(typecheck(&e, &sig, u2(), false), Err(TypeError::BranchResources));
    }

    #[test]
    fn linear_usage() {
        let c = r#"(chan "{0}" "nil")"#;
        assert!(matches!(ty(&format!("(llam (x {c}) unit)")), Err(TypeError::LinearUnused(_))));
        assert!(matches!(ty(&format!("(llam (x {c}) (pair (close x) (close x)))")), Err(TypeError::LinearReused(_))));
        assert!(matches!(ty(&format!("(llam (x {c}) (lam (u unit) (close x)))")), Err(TypeError::LinearCapture(_))));
        assert!(ty(&format!("(llam (x {c}) (close x))")).is_ok());
        assert!(ty(&format!("(llam (x {c}) (if true (close x) (close x)))")).is_ok());
        assert_eq!(
            ty(&format!("(llam (x {c}) (llam (y {c}) (if true (close x) (close y))))")),
            Err(TypeError::BranchLeftover)
        );
    }

    #[test]
    fn channel_primitives() {
        let text = r#"(let (c (chan "{1}" "msg(0,1,int):nil"))
                         (chan_create (llam (x (chan "{0}" "msg(0,1,int):nil")) (close (send x 7))))
                         (letp (c v) (recv c) (let (u unit) (close c) v)))"#;
        assert_eq!(ty(text).unwrap(), Viewtype::int());
        let bad = r#"(chan_create (llam (x (chan "{0}" "msg(0,1,int):nil")) (close (send x true))))"#;
        assert!(matches!(ty(bad), Err(TypeError::Mismatch { .. })));
        let wrong_dir = r#"(chan_create (llam (x (chan "{1}" "msg(0,1,int):nil")) (close (send x 1))))"#;
        assert!(matches!(ty(wrong_dir), Err(TypeError::Session(_))));
        let chooses = r#"(chan_create (llam (x (chan "{0}" "choose(0,nil,nil)")) (close x)))"#;
        assert!(matches!(ty(chooses), Err(TypeError::Session(_))));
        let two = r#"(chan2_create (llam (p (tensor (chan "{0}" "nil") (chan "{0}" "nil"))) (letp (a b) p (let (u unit) (close a) (close b)))))"#;
        assert_eq!(ty(two), Err(TypeError::UnsafePrimitive));
        let sig = Sig::new();
        assert!(typecheck(&parse_expr(two, u2()).unwrap(), &sig, u2(), true).is_ok());
    }

    #[test]
    fn fix_rules() {
        let ok = "(fix f (-> int int) (lam (n int) (if (randbit) n (app f (iadd n 1)))))";
        assert_eq!(ty(ok).unwrap(), Viewtype::arrow_i(Viewtype::int(), Viewtype::int()));
        assert_eq!(ty("(fix f int (app f 1))"), Err(TypeError::FixNotValue));
    }

    #[test]
    fn purity_and_canonical_forms() {
        let sig = Sig::new();
        let v = parse_expr("(pair 1 true)", u2()).unwrap();
        assert_eq!(check_value_purity(&v, &sig, u2()), Some(true));
        let sig = one_chan_sig();
        assert_eq!(check_value_purity(&Expr::Chan(ChannelHalf::pos(1)), &sig, u2()), None);
        assert!(canonical_form_ok(&v, &Viewtype::prod(Viewtype::int(), Viewtype::Bool)));
        assert!(!canonical_form_ok(&Expr::Unit, &Viewtype::Bool));
    }
}
