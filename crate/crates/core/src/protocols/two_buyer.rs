//! Two buyers and a seller.
//!
//! `B1` sends a title to `S0`; `S0` quotes the price to `B1` and then to
//! `B2`; `B1` tells `B2` how much it will contribute; `B2` either sends a
//! proof of payment and gets a receipt back, or ends the session.
//!
//! `B2` builds the three-party session from two dyadic ones: it requests a
//! session from the seller's service and one from `B1`'s, then joins them
//! with `chan2_link_create`.

use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::{run_and_join, ProtocolError};
use crate::calculus::generate::{create_with, follow_session, link_program};
use crate::calculus::{Expr, Pool, Viewtype};
use crate::roles::{Role, RoleUniverse};
use crate::runtime::{chan2_link_create, DynValue, Endpoint, Runtime, RuntimeError};
use crate::session_types::{PayloadSort, SessionType, Side};
use crate::trace::Trace;

pub const S0: Role = 0;
pub const B1: Role = 1;
pub const B2: Role = 2;

/// Message steps before `B2`'s choice.
pub const PREFIX_MESSAGES: usize = 4;

fn prefix_steps() -> [(Role, Role, PayloadSort); PREFIX_MESSAGES] {
    [
        (B1, S0, PayloadSort::Str),
        (S0, B1, PayloadSort::Int),
        (S0, B2, PayloadSort::Int),
        (B1, B2, PayloadSort::Int),
    ]
}

fn success_steps() -> [(Role, Role, PayloadSort); 2] {
    [(B2, S0, PayloadSort::Str), (S0, B2, PayloadSort::Str)]
}

fn prepend(steps: &[(Role, Role, PayloadSort)], tail: SessionType) -> SessionType {
    steps.iter().rev().fold(tail, |rest, (from, to, sort)| SessionType::msg(*from, *to, sort.clone(), rest))
}

/// The full session, with `B2` choosing between the success branch (left)
/// and termination (right).
pub fn two_buyer_session() -> SessionType {
    let succ = SessionType::sequence(success_steps());
    prepend(&prefix_steps(), SessionType::choose(B2, succ, SessionType::nil()))
}

/// The success path as a straight-line session, for the calculus encoding.
pub fn two_buyer_success_session() -> SessionType {
    prepend(&prefix_steps(), SessionType::sequence(success_steps()))
}

fn universe() -> RoleUniverse {
    RoleUniverse::new(3).expect("three roles")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoggedMessage {
    pub from: Role,
    pub to: Role,
    pub payload: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoBuyerOutcome {
    pub branch: Branch,
    pub receipt: Option<String>,
    /// Every message of the session, in session order.
    pub messages: Vec<LoggedMessage>,
    #[serde(skip)]
    pub trace: Trace,
    #[serde(skip)]
    pub live_endpoints: usize,
}

type Log = Arc<Mutex<Vec<(usize, LoggedMessage)>>>;

fn logged_send(log: &Log, k: usize, ep: Endpoint, from: Role, to: Role, v: DynValue) -> Result<Endpoint, RuntimeError> {
    let payload = v.to_string();
    log.lock().expect("log lock").push((k, LoggedMessage { from, to, payload }));
    ep.send(from, to, v)
}

fn text(v: &DynValue) -> String {
    v.as_str().map_or_else(|| v.to_string(), str::to_string)
}

fn seller(log: Log, price: i64) -> impl Fn(Endpoint) -> Result<(), RuntimeError> + Send + Sync + 'static {
    move |ep| {
        let (title, ep) = ep.recv(B1, S0)?;
        let ep = logged_send(&log, 1, ep, S0, B1, price.into())?;
        let ep = logged_send(&log, 2, ep, S0, B2, price.into())?;
        let ep = ep.skip()?;
        match ep.choose_tag()? {
            (Side::Left, ep) => {
                let (proof, ep) = ep.recv(B2, S0)?;
                let receipt = format!("receipt: {} paid by {}", text(&title), text(&proof));
                logged_send(&log, 5, ep, S0, B2, receipt.into())?.close()
            }
            (Side::Right, ep) => ep.close(),
        }
    }
}

fn first_buyer(log: Log, title: String, contribution: i64) -> impl Fn(Endpoint) -> Result<(), RuntimeError> + Send + Sync + 'static {
    move |ep| {
        let ep = logged_send(&log, 0, ep, B1, S0, title.clone().into())?;
        let (_price, ep) = ep.recv(S0, B1)?;
        let ep = ep.skip()?;
        let ep = logged_send(&log, 3, ep, B1, B2, contribution.into())?;
        match ep.choose_tag()? {
            (Side::Left, ep) => ep.skip()?.skip()?.close(),
            (Side::Right, ep) => ep.close(),
        }
    }
}

fn second_buyer(log: &Log, ep: Endpoint, budget: i64) -> Result<(Branch, Option<String>), RuntimeError> {
    let ep = ep.skip()?.skip()?;
    let (price, ep) = ep.recv(S0, B2)?;
    let (contribution, ep) = ep.recv(B1, B2)?;
    let price = price.as_int().expect("monitored as int");
    let contribution = contribution.as_int().expect("monitored as int");
    if price - contribution <= budget {
        let ep = ep.choose(Side::Left)?;
        let ep = logged_send(log, 4, ep, B2, S0, format!("proof of {}", price - contribution).into())?;
        let (receipt, ep) = ep.recv(S0, B2)?;
        ep.close()?;
        Ok((Branch::Success, Some(text(&receipt))))
    } else {
        ep.choose(Side::Right)?.close()?;
        Ok((Branch::Failure, None))
    }
}

/// Runs the protocol with `B2` as the calling agent. `B2` accepts iff
/// `price - contribution <= b2_budget`.
pub fn run_two_buyer(title: &str, price: i64, contribution: i64, b2_budget: i64) -> Result<TwoBuyerOutcome, ProtocolError> {
    if price < 0 || contribution < 0 || b2_budget < 0 {
        return Err(ProtocolError::InvalidInput("amounts must be non-negative".to_string()));
    }
    let u = universe();
    let s = two_buyer_session();
    let rt = Runtime::new(u.nrole())?;
    let log: Log = Arc::new(Mutex::new(Vec::new()));
    let (branch, receipt) = run_and_join(&rt, || {
        let s0 = rt.service_create(seller(log.clone(), price), u.singleton(S0)?, s.clone())?;
        let b1 = rt.service_create(first_buyer(log.clone(), title.to_string(), contribution), u.singleton(B1)?, s.clone())?;
        let ep = chan2_link_create(s0.request(), b1.request())?;
        second_buyer(&log, ep, b2_budget)
    })?;
    let mut logged = log.lock().expect("log lock").clone();
    logged.sort_by_key(|(k, _)| *k);
    Ok(TwoBuyerOutcome {
        branch,
        receipt,
        messages: logged.into_iter().map(|(_, m)| m).collect(),
        trace: rt.trace(),
        live_endpoints: rt.live_endpoints(),
    })
}

/// The success path as a calculus pool: the main thread plays `B2`, and the
/// seller, the first buyer and the three-way link are spawned threads. The
/// pool's result is the receipt.
pub fn two_buyer_pool(title: &str, price: i64, contribution: i64) -> Pool {
    let u = universe();
    let s = two_buyer_success_session();
    let g = |r: Role| u.singleton(r).expect("role in range");
    let title = title.to_string();

    let seller = follow_session(g(S0), &s, "x", "s0_", Expr::Unit, &mut |k, _, _| match k {
        5 => Expr::str("receipt"),
        _ => Expr::int(price),
    });
    let buyer1 = follow_session(g(B1), &s, "y", "b1_", Expr::Unit, &mut |k, _, _| match k {
        0 => Expr::str(&title),
        _ => Expr::int(contribution),
    });
    let buyer2 = follow_session(g(B2), &s, "c", "b2_", Expr::var("b2_r5"), &mut |_, _, _| Expr::str("proof"));
    let link_group = u.group([S0, B1]).expect("roles in range");
    let link = link_program(&[("ep0", g(S0).complement()), ("ep1", g(B1).complement()), ("z", link_group)], &s);

    let main = Expr::let_(
        "ep0",
        Viewtype::chan(g(S0).complement(), s.clone()),
        create_with(g(S0), &s, "x", seller),
        Expr::let_(
            "ep1",
            Viewtype::chan(g(B1).complement(), s.clone()),
            create_with(g(B1), &s, "y", buyer1),
            Expr::let_("c", Viewtype::chan(g(B2), s.clone()), create_with(link_group, &s, "z", link), buyer2),
        ),
    );
    Pool::new(main, u)
}
