//! Program construction: session-following code, forwarding links, and a
//! seeded generator of well-typed pools.
//!
//! Generated pools start channel-free, give thread 0 a channel-free type, and
//! only create channels through `chan_create`, so every reachable pool should
//! stay typeable, keep making progress, and have DF-reducible snapshots.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pool::Pool;
use super::syntax::{Expr, Prim, Viewtype};
use crate::roles::{Group, RoleUniverse};
use crate::session_types::{classify, linear_steps, MsgAction, PayloadSort, SessionType};

/// Supplies the payload for the `k`-th step of a session. `env` lists the
/// non-linear variables received so far.
pub type PayloadFn<'a> = dyn FnMut(usize, &PayloadSort, &[(String, PayloadSort)]) -> Expr + 'a;

fn rest_session(steps: &[(usize, usize, PayloadSort)]) -> SessionType {
    SessionType::sequence(steps.iter().cloned())
}

/// Code that plays session `s` for group `g` on the channel in variable
/// `chan`, closes it, then evaluates `finish`.
///
/// Received payloads of step `k` are bound to `{prefix}r{k}`; a received
/// channel is played out immediately with [`follow_session`] and payloads
/// produced by `payload`.
pub fn follow_session(
    g: Group,
    s: &SessionType,
    chan: &str,
    prefix: &str,
    finish: Expr,
    payload: &mut PayloadFn<'_>,
) -> Expr {
    let steps = linear_steps(s).expect("calculus sessions are nil/msg only");
    let mut env = Vec::new();
    follow_steps(g, &steps, 0, chan, prefix, finish, payload, &mut env)
}

#[allow(clippy::too_many_arguments)]
fn follow_steps(
    g: Group,
    steps: &[(usize, usize, PayloadSort)],
    k: usize,
    chan: &str,
    prefix: &str,
    finish: Expr,
    payload: &mut PayloadFn<'_>,
    env: &mut Vec<(String, PayloadSort)>,
) -> Expr {
    if k == steps.len() {
        return Expr::let_(&format!("{prefix}u{k}"), Viewtype::Unit, Expr::prim(Prim::Close, vec![Expr::var(chan)]), finish);
    }
    let (from, to, sort) = &steps[k];
    let next_chan = format!("{prefix}c{}", k + 1);
    let next_ty = Viewtype::chan(g, rest_session(&steps[k + 1..]));
    match classify(g, *from, *to).expect("well-formed step") {
        MsgAction::SendTo(_) => {
            let v = payload(k, sort, env);
            let rest = follow_steps(g, steps, k + 1, &next_chan, prefix, finish, payload, env);
            Expr::let_(&next_chan, next_ty, Expr::prim(Prim::Send, vec![Expr::var(chan), v]), rest)
        }
        MsgAction::RecvFrom(_) => {
            let x = format!("{prefix}r{k}");
            let rest = if let PayloadSort::Chan(dg, ds) = sort {
                let inner_prefix = format!("{prefix}d{k}_");
                let inner = follow_session(*dg, ds, &x, &inner_prefix, Expr::Unit, payload);
                let after = follow_steps(g, steps, k + 1, &next_chan, prefix, finish, payload, env);
                Expr::let_(&format!("{prefix}w{k}"), Viewtype::Unit, inner, after)
            } else {
                env.push((x.clone(), sort.clone()));
                let after = follow_steps(g, steps, k + 1, &next_chan, prefix, finish, payload, env);
                env.pop();
                after
            };
            Expr::let_pair(&next_chan, &x, Expr::prim(Prim::Recv, vec![Expr::var(chan)]), rest)
        }
        MsgAction::Internal | MsgAction::External => {
            let rest = follow_steps(g, steps, k + 1, &next_chan, prefix, finish, payload, env);
            Expr::let_(&next_chan, next_ty, Expr::prim(Prim::Skip, vec![Expr::var(chan)]), rest)
        }
    }
}

/// A forwarding program over several endpoints of the same session: for
/// each step, receive on the endpoint facing the sender, re-send on the one
/// facing the receiver, and skip on the rest; close all at the end.
pub fn link_program(endpoints: &[(&str, Group)], s: &SessionType) -> Expr {
    let steps = linear_steps(s).expect("calculus sessions are nil/msg only");
    let names: Vec<String> = endpoints.iter().map(|(n, _)| n.to_string()).collect();
    link_steps(endpoints, &steps, 0, names)
}

fn link_steps(endpoints: &[(&str, Group)], steps: &[(usize, usize, PayloadSort)], k: usize, names: Vec<String>) -> Expr {
    if k == steps.len() {
        let mut body = Expr::Unit;
        for (n, name) in names.iter().enumerate().rev() {
            let close = Expr::prim(Prim::Close, vec![Expr::var(name)]);
            body = if n == names.len() - 1 { close } else { Expr::let_(&format!("lk_u{n}"), Viewtype::Unit, close, body) };
        }
        return body;
    }
    let (from, to, _) = &steps[k];
    let actions: Vec<MsgAction> = endpoints.iter().map(|(_, g)| classify(*g, *from, *to).expect("well-formed")).collect();
    let recv = actions.iter().position(|a| matches!(a, MsgAction::RecvFrom(_)));
    let send = actions.iter().position(|a| matches!(a, MsgAction::SendTo(_)));
    let rest = rest_session(&steps[k + 1..]);
    let fresh: Vec<String> = (0..endpoints.len()).map(|n| format!("lk{n}_{}", k + 1)).collect();
    let mut body = link_steps(endpoints, steps, k + 1, fresh.clone());
    let value = format!("lk_v{k}");
    // innermost first: skips, then the send, then the receive wraps them
    for n in (0..endpoints.len()).rev() {
        if Some(n) == recv || Some(n) == send {
            continue;
        }
        let ty = Viewtype::chan(endpoints[n].1, rest.clone());
        body = Expr::let_(&fresh[n], ty, Expr::prim(Prim::Skip, vec![Expr::var(&names[n])]), body);
    }
    if let Some(sn) = send {
        let ty = Viewtype::chan(endpoints[sn].1, rest.clone());
        let sent = Expr::prim(Prim::Send, vec![Expr::var(&names[sn]), Expr::var(&value)]);
        body = Expr::let_(&fresh[sn], ty, sent, body);
    }
    if let Some(rn) = recv {
        body = Expr::let_pair(&fresh[rn], &value, Expr::prim(Prim::Recv, vec![Expr::var(&names[rn])]), body);
    }
    body
}

/// `chan_create` whose spawned side plays `body` on a channel of group `g`.
pub fn create_with(g: Group, s: &SessionType, param: &str, body: Expr) -> Expr {
    Expr::prim(Prim::ChanCreate, vec![Expr::llam(param, Viewtype::chan(g, s.clone()), body)])
}

/// Payload provider that fills every non-channel slot with a fixed literal
/// and delegates channels by creating them on the spot.
pub fn constant_payloads(k: usize, sort: &PayloadSort, _env: &[(String, PayloadSort)]) -> Expr {
    literal_for(sort, k as i64)
}

fn literal_for(sort: &PayloadSort, seed: i64) -> Expr {
    match sort {
        PayloadSort::Unit => Expr::Unit,
        PayloadSort::Int => Expr::int(seed),
        PayloadSort::Bool => Expr::bool(seed % 2 == 0),
        PayloadSort::Str => Expr::str(&format!("s{seed}")),
        PayloadSort::Tuple(items) => tuple_expr(items.iter().map(|t| literal_for(t, seed)).collect()),
        PayloadSort::Chan(g, s) => {
            let peer = g.complement();
            let body = follow_session(peer, s, "dl", "dl_", Expr::Unit, &mut constant_payloads);
            create_with(peer, s, "dl", body)
        }
    }
}

fn tuple_expr(mut items: Vec<Expr>) -> Expr {
    match items.len() {
        0 => Expr::Unit,
        1 => items.pop().expect("one item"),
        _ => {
            let last = items.pop().expect("nonempty");
            items.into_iter().rev().fold(last, |acc, e| Expr::pair(e, acc))
        }
    }
}

/// Seeded random generator of well-typed programs and pools.
pub struct Generator {
    rng: ChaCha8Rng,
    universe: RoleUniverse,
    fresh: usize,
}

impl Generator {
    pub fn new(seed: u64, universe: RoleUniverse) -> Self {
        Generator { rng: ChaCha8Rng::seed_from_u64(seed), universe, fresh: 0 }
    }

    fn name(&mut self, base: &str) -> String {
        self.fresh += 1;
        format!("{base}{}", self.fresh)
    }

    pub fn group(&mut self) -> Group {
        let n = self.universe.nrole();
        loop {
            let bits: Vec<usize> = (0..n).filter(|_| self.rng.gen_bool(0.5)).collect();
            let g = self.universe.group(bits).expect("roles in range");
            if g.splits_universe() {
                return g;
            }
        }
    }

    pub fn sort(&mut self, chan_depth: usize) -> PayloadSort {
        match self.rng.gen_range(0..10) {
            0 => PayloadSort::Unit,
            1..=3 => PayloadSort::Int,
            4 => PayloadSort::Bool,
            5 => PayloadSort::Str,
            6 => PayloadSort::Tuple(vec![PayloadSort::Int, PayloadSort::Bool]),
            _ if chan_depth > 0 => {
                let g = self.group();
                let s = self.session(chan_depth - 1, 3);
                PayloadSort::chan(g, s)
            }
            _ => PayloadSort::Int,
        }
    }

    /// A `nil`/`msg` session with up to `max_len` steps.
    pub fn session(&mut self, chan_depth: usize, max_len: usize) -> SessionType {
        let n = self.universe.nrole();
        let len = self.rng.gen_range(0..=max_len);
        let steps: Vec<_> = (0..len)
            .map(|_| {
                let from = self.rng.gen_range(0..n);
                let to = (from + self.rng.gen_range(1..n)) % n;
                (from, to, self.sort(chan_depth))
            })
            .collect();
        SessionType::sequence(steps)
    }

    /// A closed pure expression of a base type, using the non-linear
    /// variables in `env`.
    pub fn pure(&mut self, sort: &PayloadSort, depth: usize, env: &[(String, PayloadSort)]) -> Expr {
        let candidates: Vec<&String> = env.iter().filter(|(_, s)| s == sort).map(|(n, _)| n).collect();
        if !candidates.is_empty() && self.rng.gen_bool(0.3) {
            return Expr::var(candidates.choose(&mut self.rng).expect("nonempty"));
        }
        let leaf = depth == 0 || self.rng.gen_bool(0.4);
        match sort {
            PayloadSort::Unit => {
                if leaf {
                    Expr::Unit
                } else {
                    let c = self.pure(&PayloadSort::Bool, depth - 1, env);
                    Expr::if_(c, Expr::Unit, Expr::Unit)
                }
            }
            PayloadSort::Int if leaf => Expr::int(self.rng.gen_range(-5..20)),
            PayloadSort::Int => match self.rng.gen_range(0..5) {
                0 => {
                    let (a, b) = (self.pure(sort, depth - 1, env), self.pure(sort, depth - 1, env));
                    Expr::prim(Prim::Iadd, vec![a, b])
                }
                1 => {
                    let c = self.pure(&PayloadSort::Bool, depth - 1, env);
                    let (a, b) = (self.pure(sort, depth - 1, env), self.pure(sort, depth - 1, env));
                    Expr::if_(c, a, b)
                }
                2 => {
                    let a = self.pure(sort, depth - 1, env);
                    let b = self.pure(&PayloadSort::Bool, depth - 1, env);
                    Expr::fst(Expr::pair(a, b))
                }
                3 => {
                    let x = self.name("x");
                    let f = Expr::lam(&x, Viewtype::int(), Expr::prim(Prim::Iadd, vec![Expr::var(&x), Expr::int(1)]));
                    Expr::app(f, self.pure(sort, depth - 1, env))
                }
                _ => {
                    // a loop that stops at a random bit
                    let (f, n) = (self.name("f"), self.name("n"));
                    let ty = Viewtype::arrow_i(Viewtype::int(), Viewtype::int());
                    let again = Expr::app(Expr::FixVar(f.clone()), Expr::prim(Prim::Iadd, vec![Expr::var(&n), Expr::int(1)]));
                    let body = Expr::lam(&n, Viewtype::int(), Expr::if_(Expr::prim(Prim::Randbit, vec![]), Expr::var(&n), again));
                    Expr::app(Expr::fix(&f, ty, body), self.pure(sort, depth - 1, env))
                }
            },
            PayloadSort::Bool if leaf => {
                if self.rng.gen_bool(0.5) {
                    Expr::bool(self.rng.gen_bool(0.5))
                } else {
                    Expr::prim(Prim::Randbit, vec![])
                }
            }
            PayloadSort::Bool => {
                let (x, y) = (self.name("p"), self.name("q"));
                let a = self.pure(&PayloadSort::Int, depth - 1, env);
                let b = self.pure(sort, depth - 1, env);
                Expr::let_pair(&x, &y, Expr::pair(a, b), Expr::var(&y))
            }
            PayloadSort::Str => Expr::str(["a", "b", "hello", ""].choose(&mut self.rng).expect("nonempty")),
            PayloadSort::Tuple(items) => {
                let parts = items.iter().map(|t| self.pure(t, depth.saturating_sub(1), env)).collect();
                tuple_expr(parts)
            }
            PayloadSort::Chan(..) => unreachable!("channels are not pure"),
        }
    }

    /// A payload of `sort`; channels are created fresh and their other side
    /// is played by the spawned thread.
    fn payload(&mut self, sort: &PayloadSort, env: &[(String, PayloadSort)]) -> Expr {
        match sort {
            PayloadSort::Chan(g, s) => {
                let peer = g.complement();
                let y = self.name("y");
                let body = self.follow(peer, s, &y, Expr::Unit);
                create_with(peer, s, &y, body)
            }
            PayloadSort::Tuple(items) if sort.is_linear() => {
                tuple_expr(items.iter().map(|t| self.payload(t, env)).collect())
            }
            other => self.pure(other, 2, env),
        }
    }

    fn follow(&mut self, g: Group, s: &SessionType, chan: &str, finish: Expr) -> Expr {
        let prefix = self.name("k") + "_";
        let mut gen = std::mem::replace(&mut self.rng, ChaCha8Rng::seed_from_u64(0));
        let mut fresh = self.fresh;
        let universe = self.universe;
        let out = {
            let mut sub = Generator { rng: gen.clone(), universe, fresh };
            let mut provider = |_: usize, sort: &PayloadSort, env: &[(String, PayloadSort)]| sub.payload(sort, env);
            let e = follow_session(g, s, chan, &prefix, finish, &mut provider);
            gen = sub.rng.clone();
            fresh = sub.fresh;
            e
        };
        self.rng = gen;
        self.fresh = fresh;
        out
    }

    /// A unit-typed action: a session played against a spawned peer, a
    /// spawned thread, or a pure computation.
    fn action(&mut self, env: &[(String, PayloadSort)], depth: usize) -> Expr {
        match self.rng.gen_range(0..5) {
            0 | 1 => {
                let g = self.group();
                let s = self.session(1, 4);
                let (x, c) = (self.name("x"), self.name("c"));
                let spawned = self.follow(g, &s, &x, Expr::Unit);
                let mine = self.follow(g.complement(), &s, &c, Expr::Unit);
                Expr::let_(&c, Viewtype::chan(g.complement(), s.clone()), create_with(g, &s, &x, spawned), mine)
            }
            2 if depth > 0 => {
                let inner = self.action(env, depth - 1);
                let u = self.name("u");
                Expr::prim(Prim::ThreadCreate, vec![Expr::llam(&u, Viewtype::Unit, inner)])
            }
            3 => {
                let u = self.name("u");
                let body = self.pure(&PayloadSort::Unit, 2, env);
                Expr::prim(Prim::ThreadCreate, vec![Expr::lam(&u, Viewtype::Unit, body)])
            }
            _ => self.pure(&PayloadSort::Unit, 2, env),
        }
    }

    /// A channel-free main program: a few actions followed by a pure result.
    pub fn main_program(&mut self) -> Expr {
        let result_sort = [PayloadSort::Int, PayloadSort::Bool, PayloadSort::Unit, PayloadSort::Str]
            .choose(&mut self.rng)
            .expect("nonempty")
            .clone();
        let mut body = self.pure(&result_sort, 3, &[]);
        let count = self.rng.gen_range(1..=3);
        for _ in 0..count {
            let act = self.action(&[], 2);
            let u = self.name("u");
            body = Expr::let_(&u, Viewtype::Unit, act, body);
        }
        body
    }

    pub fn pool(&mut self) -> Pool {
        Pool::new(self.main_program(), self.universe)
    }

    /// A closed value of a random non-linear type.
    pub fn value(&mut self, depth: usize) -> Expr {
        match self.rng.gen_range(0..6) {
            0 => Expr::int(self.rng.gen_range(-100..100)),
            1 => Expr::bool(self.rng.gen_bool(0.5)),
            2 => Expr::Unit,
            3 => Expr::str("v"),
            4 if depth > 0 => Expr::pair(self.value(depth - 1), self.value(depth - 1)),
            _ => {
                let x = self.name("x");
                let body = self.pure(&PayloadSort::Int, 2, &[(x.clone(), PayloadSort::Int)]);
                Expr::lam(&x, Viewtype::int(), body)
            }
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// A generated pool for each seed in `seeds`, over `nrole` roles.
pub fn random_pool(seed: u64, nrole: usize) -> Pool {
    let u = RoleUniverse::new(nrole).expect("valid nrole");
    Generator::new(seed, u).pool()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::pool::{run_pool, RunStatus};
    use crate::df_analysis::is_df_reducible;

    #[test]
    fn follow_round_trip_typechecks() {
        let u = RoleUniverse::new(3).unwrap();
        let s = crate::session_types::parse_session("msg(0,1,int):msg(1,2,bool):msg(2,0,str):nil", u).unwrap();
        let g = u.group([0]).unwrap();
        let spawned = follow_session(g, &s, "x", "a_", Expr::Unit, &mut constant_payloads);
        let mine = follow_session(g.complement(), &s, "c", "b_", Expr::int(1), &mut constant_payloads);
        let main = Expr::let_("c", Viewtype::chan(g.complement(), s.clone()), create_with(g, &s, "x", spawned), mine);
        let p = Pool::new(main, u);
        assert_eq!(p.typecheck().unwrap(), Viewtype::Int(Some(1)));
        let out = run_pool(&p, 3, 10_000).unwrap();
        assert_eq!(out.status, RunStatus::Final);
    }

    #[test]
    fn generated_pools_run() {
        for seed in 0..30 {
            let p = random_pool(seed, 2 + (seed as usize % 3));
            p.typecheck().unwrap_or_else(|e| panic!("seed {seed}: {e}\n{p}"));
            let out = run_pool(&p, seed, 20_000).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            for r in &out.trace.records {
                assert_eq!(is_df_reducible(&r.snapshot()), Ok(true), "seed {seed} step {}", r.step);
            }
        }
    }
}
