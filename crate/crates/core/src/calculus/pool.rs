//! Thread pools and the pool reduction relation.
//!
//! | rule      | effect                                                         |
//! |-----------|----------------------------------------------------------------|
//! | PR0       | one thread takes a pure or ad-hoc step                         |
//! | PR1       | `thread_create(f)` returns unit and starts `app(f, unit)`      |
//! | PR2       | a finished thread other than 0 is removed                      |
//! | PR3       | `chan_create(f)` returns one half and starts `app(f, other)`   |
//! | PR4-*     | two threads blocked on dual halves of a channel rendezvous     |
//!
//! PR4-send is payload-carrying: `E1[send(ch, v)]` and `E2[recv(ch')]`
//! become `E1[ch]` and `E2[<ch', v>]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::eval::{at_path, contract_adhoc, contract_pure, focus, plug, Focus, PartialRedex, RedexKind};
use super::sexpr::{parse_pool, PoolSyntax, SexprError};
use super::syntax::{rho, rho_ch, Expr, Prim, Viewtype};
use super::typing::{calculus_session_ok, typecheck, Sig, SigEntry, TypeError};
use crate::df_analysis::{ChannelHalf, ChannelSetCollection};
use crate::roles::{Group, RoleUniverse};
use crate::session_types::{head_action, HeadAction};
use crate::trace::{Trace, TraceRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub universe: RoleUniverse,
    pub threads: BTreeMap<u64, Expr>,
    pub sig: Sig,
    pub allow_unsafe: bool,
    next_tid: u64,
    next_chan: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SyncKind {
    /// The positive half sends.
    Send,
    /// The positive half receives.
    Recv,
    Skip,
    Close,
}

impl SyncKind {
    pub fn rule(self) -> &'static str {
        match self {
            SyncKind::Send => "PR4-send",
            SyncKind::Recv => "PR4-recv",
            SyncKind::Skip => "PR4-skip",
            SyncKind::Close => "PR4-close",
        }
    }
}

/// One enabled rule instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScheduleChoice {
    Pure { tid: u64 },
    Rand { tid: u64, bit: bool },
    Spawn { tid: u64 },
    Reap { tid: u64 },
    Create { tid: u64 },
    Create2 { tid: u64 },
    Sync { kind: SyncKind, plus_tid: u64, minus_tid: u64, chan: u64 },
}

impl ScheduleChoice {
    pub fn rule(&self) -> &'static str {
        match self {
            ScheduleChoice::Pure { .. } | ScheduleChoice::Rand { .. } => "PR0",
            ScheduleChoice::Spawn { .. } => "PR1",
            ScheduleChoice::Reap { .. } => "PR2",
            ScheduleChoice::Create { .. } => "PR3",
            ScheduleChoice::Create2 { .. } => "PR3-2",
            ScheduleChoice::Sync { kind, .. } => kind.rule(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("schedule choice {0:?} is not enabled")]
    ChoiceNotEnabled(ScheduleChoice),
    #[error("thread {tid} is stuck: {why}")]
    Stuck { tid: u64, why: String },
    #[error(transparent)]
    Syntax(#[from] SexprError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("invalid pool: {0}")]
    Invalid(String),
}

/// What a single step did, for the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepInfo {
    pub rule: &'static str,
    pub tids: Vec<u64>,
    pub chan_id: Option<u64>,
    pub payload: Option<String>,
}

impl Pool {
    pub fn new(main: Expr, universe: RoleUniverse) -> Pool {
        let mut p = Pool {
            universe,
            threads: BTreeMap::from([(0, main)]),
            sig: Sig::new(),
            allow_unsafe: false,
            next_tid: 1,
            next_chan: 1,
        };
        p.refresh_counters();
        p
    }

    pub fn with_unsafe(mut self, allow: bool) -> Pool {
        self.allow_unsafe = allow;
        self
    }

    pub fn from_syntax(syn: PoolSyntax) -> Result<Pool, PoolError> {
        let mut threads = BTreeMap::new();
        for (tid, e) in syn.threads {
            if threads.insert(tid, e).is_some() {
                return Err(PoolError::Invalid(format!("thread {tid} defined twice")));
            }
        }
        if !threads.contains_key(&0) {
            return Err(PoolError::Type(TypeError::NoMainThread));
        }
        let mut sig = Sig::new();
        for (id, plus, s) in syn.sig {
            calculus_session_ok(&s, syn.universe)?;
            if !plus.splits_universe() {
                return Err(PoolError::Invalid(format!("channel {id}: group {plus} does not split the roles")));
            }
            if sig.insert(id, SigEntry { plus, session: Arc::new(s) }).is_some() {
                return Err(PoolError::Invalid(format!("channel {id} declared twice")));
            }
        }
        let mut p = Pool { universe: syn.universe, threads, sig, allow_unsafe: false, next_tid: 1, next_chan: 1 };
        p.refresh_counters();
        Ok(p)
    }

    pub fn from_text(text: &str, default_universe: Option<RoleUniverse>) -> Result<Pool, PoolError> {
        Pool::from_syntax(parse_pool(text, default_universe)?)
    }

    pub fn to_syntax(&self) -> PoolSyntax {
        PoolSyntax {
            universe: self.universe,
            sig: self.sig.iter().map(|(id, e)| (*id, e.plus, (*e.session).clone())).collect(),
            threads: self.threads.iter().map(|(t, e)| (*t, e.clone())).collect(),
        }
    }

    fn refresh_counters(&mut self) {
        self.next_tid = self.threads.keys().max().map_or(1, |m| m + 1);
        let mut max_chan = self.sig.keys().max().copied().unwrap_or(0);
        for e in self.threads.values() {
            e.visit(&mut |sub| {
                if let Expr::Chan(h) = sub {
                    max_chan = max_chan.max(h.id);
                }
            });
        }
        self.next_chan = max_chan + 1;
    }

    pub fn main(&self) -> &Expr {
        &self.threads[&0]
    }

    /// `[0 ↦ v]`.
    pub fn is_final(&self) -> bool {
        self.threads.len() == 1 && self.main().is_value()
    }

    /// One set of channel halves per thread, in thread-id order.
    pub fn snapshot(&self) -> ChannelSetCollection {
        ChannelSetCollection::new(self.threads.values().map(rho_ch).collect())
    }

    /// Checks the pool typing rule: thread 0 at some viewtype, every other
    /// thread at unit, each channel half held at most once and always
    /// together with its dual.
    pub fn typecheck(&self) -> Result<Viewtype, TypeError> {
        if !self.threads.contains_key(&0) {
            return Err(TypeError::NoMainThread);
        }
        let mut seen: BTreeSet<ChannelHalf> = BTreeSet::new();
        for e in self.threads.values() {
            for (half, n) in rho(e) {
                if n > 1 || !seen.insert(half) {
                    return Err(TypeError::DuplicateResource(half));
                }
            }
        }
        if let Some(h) = seen.iter().find(|h| !seen.contains(&h.dual())) {
            return Err(TypeError::UnpairedChannel(h.id));
        }
        let mut main_ty = None;
        for (tid, e) in &self.threads {
            let ty = typecheck(e, &self.sig, self.universe, self.allow_unsafe)?;
            if *tid == 0 {
                main_ty = Some(ty);
            } else if ty != Viewtype::Unit {
                return Err(TypeError::ThreadType { tid: *tid, found: ty.to_string() });
            }
        }
        Ok(main_ty.expect("main thread checked above"))
    }

    pub fn enabled_choices(&self) -> Vec<ScheduleChoice> {
        let mut out = Vec::new();
        let mut waiting: BTreeMap<u64, [Option<(u64, Prim)>; 2]> = BTreeMap::new();
        for (&tid, e) in &self.threads {
            match focus(e) {
                Focus::Value => {
                    if tid > 0 && *e == Expr::Unit {
                        out.push(ScheduleChoice::Reap { tid });
                    }
                }
                Focus::Stuck(_) => {}
                Focus::Redex { kind, .. } => match kind {
                    RedexKind::Pure | RedexKind::AdHoc(Prim::Iadd) => out.push(ScheduleChoice::Pure { tid }),
                    RedexKind::AdHoc(_) => {
                        out.push(ScheduleChoice::Rand { tid, bit: false });
                        out.push(ScheduleChoice::Rand { tid, bit: true });
                    }
                    RedexKind::ThreadCreate => out.push(ScheduleChoice::Spawn { tid }),
                    RedexKind::ChanCreate => out.push(ScheduleChoice::Create { tid }),
                    RedexKind::Chan2Create => {
                        if self.allow_unsafe {
                            out.push(ScheduleChoice::Create2 { tid })
                        }
                    }
                    RedexKind::Partial(PartialRedex { prim, chan }) => {
                        let slot = usize::from(!chan.is_positive());
                        waiting.entry(chan.id).or_default()[slot] = Some((tid, prim));
                    }
                },
            }
        }
        for (chan, sides) in waiting {
            if let [Some((plus_tid, p)), Some((minus_tid, m))] = sides {
                let kind = match (p, m) {
                    (Prim::Send, Prim::Recv) => SyncKind::Send,
                    (Prim::Recv, Prim::Send) => SyncKind::Recv,
                    (Prim::Skip, Prim::Skip) => SyncKind::Skip,
                    (Prim::Close, Prim::Close) => SyncKind::Close,
                    _ => continue,
                };
                out.push(ScheduleChoice::Sync { kind, plus_tid, minus_tid, chan });
            }
        }
        out.sort();
        out
    }

    /// Threads that are neither values nor blocked nor reducible.
    pub fn stuck_threads(&self) -> Vec<(u64, String)> {
        self.threads
            .iter()
            .filter_map(|(tid, e)| match focus(e) {
                Focus::Stuck(why) => Some((*tid, why)),
                Focus::Value if *tid > 0 && *e != Expr::Unit => Some((*tid, format!("finished with {e}"))),
                _ => None,
            })
            .collect()
    }

    fn redex_of(&self, tid: u64) -> Result<(Vec<usize>, RedexKind), PoolError> {
        let e = self.threads.get(&tid).ok_or_else(|| PoolError::Invalid(format!("no thread {tid}")))?;
        match focus(e) {
            Focus::Redex { path, kind } => Ok((path, kind)),
            Focus::Stuck(why) => Err(PoolError::Stuck { tid, why }),
            Focus::Value => Err(PoolError::Invalid(format!("thread {tid} is a value"))),
        }
    }

    fn set_thread(&mut self, tid: u64, path: &[usize], reduct: Expr) {
        let e = plug(&self.threads[&tid], path, reduct);
        self.threads.insert(tid, e);
    }

    fn fresh_tid(&mut self) -> u64 {
        let t = self.next_tid;
        self.next_tid += 1;
        t
    }

    fn fresh_chan(&mut self, g: Group, session: Arc<crate::session_types::SessionType>) -> (ChannelHalf, ChannelHalf) {
        let id = self.next_chan;
        self.next_chan += 1;
        let plus = if g.contains(0) { g } else { g.complement() };
        self.sig.insert(id, SigEntry { plus, session });
        // the new thread's half has group g; positive iff 0 ∈ g
        let new_half = if g.contains(0) { ChannelHalf::pos(id) } else { ChannelHalf::neg(id) };
        (new_half, new_half.dual())
    }

    /// Applies one enabled rule instance.
    pub fn step(&self, choice: ScheduleChoice) -> Result<(Pool, StepInfo), PoolError> {
        if !self.enabled_choices().contains(&choice) {
            return Err(PoolError::ChoiceNotEnabled(choice));
        }
        let mut next = self.clone();
        let mut info = StepInfo { rule: choice.rule(), tids: Vec::new(), chan_id: None, payload: None };
        match choice {
            ScheduleChoice::Pure { tid } | ScheduleChoice::Rand { tid, .. } => {
                let (path, kind) = self.redex_of(tid)?;
                let r = at_path(&self.threads[&tid], &path);
                let bit = matches!(choice, ScheduleChoice::Rand { bit: true, .. });
                let reduct = match kind {
                    RedexKind::Pure => contract_pure(r),
                    _ => contract_adhoc(r, bit),
                }
                .map_err(|e| PoolError::Stuck { tid, why: e.to_string() })?;
                next.set_thread(tid, &path, reduct);
                info.tids = vec![tid];
            }
            ScheduleChoice::Reap { tid } => {
                next.threads.remove(&tid);
                info.tids = vec![tid];
            }
            ScheduleChoice::Spawn { tid } => {
                let (path, _) = self.redex_of(tid)?;
                let Expr::Const(_, args) = at_path(&self.threads[&tid], &path) else { unreachable!() };
                let child = next.fresh_tid();
                next.set_thread(tid, &path, Expr::Unit);
                next.threads.insert(child, Expr::app(args[0].clone(), Expr::Unit));
                info.tids = vec![tid, child];
            }
            ScheduleChoice::Create { tid } => {
                let (path, _) = self.redex_of(tid)?;
                let Expr::Const(_, args) = at_path(&self.threads[&tid], &path) else { unreachable!() };
                let f = args[0].clone();
                let Expr::Lam { ty: Viewtype::Chan(g, s), .. } = &f else {
                    return Err(PoolError::Stuck { tid, why: "chan_create needs a lambda over chan(G,S)".into() });
                };
                let (new_half, caller_half) = next.fresh_chan(*g, s.clone());
                let child = next.fresh_tid();
                next.set_thread(tid, &path, Expr::Chan(caller_half));
                next.threads.insert(child, Expr::app(f, Expr::Chan(new_half)));
                info.tids = vec![tid, child];
                info.chan_id = Some(new_half.id);
            }
            ScheduleChoice::Create2 { tid } => {
                let (path, _) = self.redex_of(tid)?;
                let Expr::Const(_, args) = at_path(&self.threads[&tid], &path) else { unreachable!() };
                let f = args[0].clone();
                let (g1, s1, g2, s2) = match &f {
                    Expr::Lam { ty: Viewtype::Tensor(a, b), .. } => match (&**a, &**b) {
                        (Viewtype::Chan(g1, s1), Viewtype::Chan(g2, s2)) => (*g1, s1.clone(), *g2, s2.clone()),
                        _ => return Err(PoolError::Stuck { tid, why: "chan2_create needs two channels".into() }),
                    },
                    _ => return Err(PoolError::Stuck { tid, why: "chan2_create needs a lambda".into() }),
                };
                let (n1, c1) = next.fresh_chan(g1, s1);
                let (n2, c2) = next.fresh_chan(g2, s2);
                let child = next.fresh_tid();
                next.set_thread(tid, &path, Expr::pair(Expr::Chan(c1), Expr::Chan(c2)));
                next.threads.insert(child, Expr::app(f, Expr::pair(Expr::Chan(n1), Expr::Chan(n2))));
                info.tids = vec![tid, child];
                info.chan_id = Some(n1.id);
            }
            ScheduleChoice::Sync { kind, plus_tid, minus_tid, chan } => {
                let (ppath, _) = self.redex_of(plus_tid)?;
                let (mpath, _) = self.redex_of(minus_tid)?;
                let plus_redex = at_path(&self.threads[&plus_tid], &ppath).clone();
                let minus_redex = at_path(&self.threads[&minus_tid], &mpath).clone();
                let plus_half = Expr::Chan(ChannelHalf::pos(chan));
                let minus_half = Expr::Chan(ChannelHalf::neg(chan));
                let entry = self.sig.get(&chan).ok_or(PoolError::Type(TypeError::UnknownChannel(ChannelHalf::pos(chan))))?;
                let cont = match head_action(entry.plus, &entry.session) {
                    Ok(HeadAction::Send { cont, .. } | HeadAction::Recv { cont, .. } | HeadAction::Skip { cont, .. }) => {
                        Some(cont)
                    }
                    _ => None,
                };
                match kind {
                    SyncKind::Send | SyncKind::Recv => {
                        let (sender, receiver) = if kind == SyncKind::Send {
                            (&plus_redex, (minus_tid, &mpath, minus_half.clone()))
                        } else {
                            (&minus_redex, (plus_tid, &ppath, plus_half.clone()))
                        };
                        let Expr::Const(_, args) = sender else { unreachable!() };
                        let value = args[1].clone();
                        info.payload = Some(value.to_string());
                        let (sender_tid, sender_path, sender_half) = if kind == SyncKind::Send {
                            (plus_tid, &ppath, plus_half)
                        } else {
                            (minus_tid, &mpath, minus_half)
                        };
                        next.set_thread(sender_tid, sender_path, sender_half);
                        next.set_thread(receiver.0, receiver.1, Expr::pair(receiver.2, value));
                    }
                    SyncKind::Skip => {
                        next.set_thread(plus_tid, &ppath, plus_half);
                        next.set_thread(minus_tid, &mpath, minus_half);
                    }
                    SyncKind::Close => {
                        next.set_thread(plus_tid, &ppath, Expr::Unit);
                        next.set_thread(minus_tid, &mpath, Expr::Unit);
                        next.sig.remove(&chan);
                    }
                }
                if kind != SyncKind::Close {
                    let cont = cont.ok_or_else(|| PoolError::Stuck {
                        tid: plus_tid,
                        why: format!("channel {chan} session does not license {}", kind.rule()),
                    })?;
                    next.sig.insert(chan, SigEntry { plus: entry.plus, session: Arc::new(cont) });
                }
                info.tids = vec![plus_tid, minus_tid];
                info.chan_id = Some(chan);
            }
        }
        Ok((next, info))
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::sexpr::format_pool(&self.to_syntax()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Final,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub pool: Pool,
    pub trace: Trace,
    pub steps: u64,
}

#[derive(Debug, Clone, Error)]
pub enum RunError {
    /// Every live thread is blocked or finished and no rendezvous matches.
    #[error("deadlock after {} steps", .trace.records.last().map_or(0, |r| r.step))]
    DeadlockDetected { trace: Trace, pool: Box<Pool> },
    #[error("thread {tid} stuck: {why}")]
    Stuck { tid: u64, why: String, trace: Trace },
}

fn record(step: u64, info: &StepInfo, pool: &Pool) -> TraceRecord {
    TraceRecord {
        step,
        rule: info.rule.to_string(),
        tids: info.tids.clone(),
        chan_id: info.chan_id,
        payload: info.payload.clone(),
        rho_ch: crate::trace::rho_ch_of(&pool.snapshot()),
    }
}

/// A single run, picking uniformly among enabled choices.
pub fn run_pool(pool: &Pool, seed: u64, max_steps: u64) -> Result<RunOutcome, RunError> {
    run_pool_with(pool, seed, max_steps, |_, _| Ok(()))
}

/// As [`run_pool`], calling `observe(before, after)` after every step; an
/// error from `observe` aborts the run as `Stuck`.
pub fn run_pool_with(
    pool: &Pool,
    seed: u64,
    max_steps: u64,
    mut observe: impl FnMut(&Pool, &Pool) -> Result<(), String>,
) -> Result<RunOutcome, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = pool.clone();
    let mut trace = Trace::new();
    let init = StepInfo { rule: "init", tids: Vec::new(), chan_id: None, payload: None };
    trace.push(record(0, &init, &cur));
    let mut steps = 0;
    loop {
        if cur.is_final() {
            return Ok(RunOutcome { status: RunStatus::Final, pool: cur, trace, steps });
        }
        if steps >= max_steps {
            return Ok(RunOutcome { status: RunStatus::MaxSteps, pool: cur, trace, steps });
        }
        let choices = cur.enabled_choices();
        if choices.is_empty() {
            if let Some((tid, why)) = cur.stuck_threads().into_iter().next() {
                return Err(RunError::Stuck { tid, why, trace });
            }
            return Err(RunError::DeadlockDetected { trace, pool: Box::new(cur) });
        }
        let choice = choices[rng.gen_range(0..choices.len())];
        let (next, info) = cur
            .step(choice)
            .map_err(|e| RunError::Stuck { tid: choice_tid(&choice), why: e.to_string(), trace: trace.clone() })?;
        steps += 1;
        trace.push(record(steps, &info, &next));
        observe(&cur, &next).map_err(|why| RunError::Stuck { tid: choice_tid(&choice), why, trace: trace.clone() })?;
        cur = next;
    }
}

fn choice_tid(c: &ScheduleChoice) -> u64 {
    match *c {
        ScheduleChoice::Pure { tid }
        | ScheduleChoice::Rand { tid, .. }
        | ScheduleChoice::Spawn { tid }
        | ScheduleChoice::Reap { tid }
        | ScheduleChoice::Create { tid }
        | ScheduleChoice::Create2 { tid } => tid,
        ScheduleChoice::Sync { plus_tid, .. } => plus_tid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::sexpr::parse_expr;
    use crate::df_analysis::is_df_reducible;

    fn u2() -> RoleUniverse {
        RoleUniverse::new(2).unwrap()
    }

    fn pool(text: &str) -> Pool {
        Pool::from_text(text, Some(u2())).unwrap()
    }

    const PING: &str = r#"(let (c (chan "{1}" "msg(0,1,int):nil"))
        (chan_create (llam (x (chan "{0}" "msg(0,1,int):nil")) (close (send x (iadd 3 4)))))
        (letp (c v) (recv c) (let (u unit) (close c) v)))"#;

    #[test]
    fn reap_finished_thread() {
        let p = pool("(pool (thread 0 1) (thread 3 unit))");
        assert_eq!(p.enabled_choices(), vec![ScheduleChoice::Reap { tid: 3 }]);
        let (q, _) = p.step(ScheduleChoice::Reap { tid: 3 }).unwrap();
        assert!(q.is_final());
        assert!(pool("5").enabled_choices().is_empty());
    }

    #[test]
    fn chan_create_step() {
        let p = pool(r#"(chan_create (llam (x (chan "{0}" "nil")) (close x)))"#);
        let (q, info) = p.step(ScheduleChoice::Create { tid: 0 }).unwrap();
        assert_eq!(info.rule, "PR3");
        assert_eq!(q.threads[&0], Expr::Chan(ChannelHalf::neg(1)));
        assert_eq!(q.threads[&1], Expr::app(p.threads[&0].clone().as_const_arg(), Expr::Chan(ChannelHalf::pos(1))));
        let snap = q.snapshot();
        assert_eq!(snap.to_string(), "[{1-},{1+}]");
        assert_eq!(is_df_reducible(&snap), Ok(true));
        assert_eq!(q.typecheck().unwrap(), Viewtype::chan(u2().singleton(1).unwrap(), crate::session_types::SessionType::Nil));
    }

    impl Expr {
        fn as_const_arg(self) -> Expr {
            match self {
                Expr::Const(_, mut args) => args.remove(0),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn payload_moves_on_send() {
        let p = pool(PING);
        let out = run_pool(&p, 7, 1000).unwrap();
        assert_eq!(out.status, RunStatus::Final);
        assert_eq!(out.pool.main(), &Expr::int(7));
        let send = out.trace.records.iter().find(|r| r.rule == "PR4-send").unwrap();
        assert_eq!(send.payload.as_deref(), Some("7"));
        assert_eq!(out.trace.records[0].rule, "init");
    }

    #[test]
    fn same_seed_same_trace() {
        let p = pool(PING);
        let a = run_pool(&p, 42, 1000).unwrap().trace;
        let b = run_pool(&p, 42, 1000).unwrap().trace;
        assert_eq!(a, b);
    }

    #[test]
    fn matching_blocked_threads_enable_sync() {
        let text = r#"(pool (nrole 2) (sig (ch 1 "{0}" "msg(0,1,int):nil"))
            (thread 0 (recv ch-1)) (thread 1 (close (send ch+1 5))))"#;
        let p = pool(text);
        assert_eq!(
            p.enabled_choices(),
            vec![ScheduleChoice::Sync { kind: SyncKind::Send, plus_tid: 1, minus_tid: 0, chan: 1 }]
        );
        assert!(p.step(ScheduleChoice::Pure { tid: 0 }).is_err());
    }

    #[test]
    fn pool_typing_rules() {
        assert!(matches!(pool("(pool (thread 0 1) (thread 1 2))").typecheck(), Err(TypeError::ThreadType { .. })));
        let unpaired = r#"(pool (sig (ch 1 "{0}" "nil")) (thread 0 (close ch+1)))"#;
        assert_eq!(pool(unpaired).typecheck(), Err(TypeError::UnpairedChannel(1)));
        let dup = r#"(pool (sig (ch 1 "{0}" "nil")) (thread 0 (pair ch+1 ch+1)) (thread 1 (close ch-1)))"#;
        assert!(matches!(pool(dup).typecheck(), Err(TypeError::DuplicateResource(_))));
        let _ = parse_expr("unit", u2()).unwrap();
    }

    #[test]
    fn unsafe_chan2_create_deadlocks() {
        let text = r#"
          (let (cs (tensor (chan "{1}" "msg(1,0,chan({1},msg(1,0,int):nil)):nil") (chan "{1}" "msg(1,0,int):nil")))
            (chan2_create
              (llam (p (tensor (chan "{0}" "msg(1,0,chan({1},msg(1,0,int):nil)):nil") (chan "{0}" "msg(1,0,int):nil")))
                (letp (a b) p
                  (letp (a d) (recv a)
                    (letp (b v) (recv b)
                      (let (u unit) (close a) (let (w unit) (close b) (close (send d v)))))))))
            (letp (c1 c2) cs (close (send c1 c2))))"#;
        let p = pool(text).with_unsafe(true);
        assert!(p.typecheck().is_ok());
        match run_pool(&p, 1, 1000) {
            Err(RunError::DeadlockDetected { pool, .. }) => {
                assert_eq!(is_df_reducible(&pool.snapshot()), Ok(false));
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }
}
