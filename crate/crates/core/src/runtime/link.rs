//! Forwarding between endpoints of the same session.
//!
//! `chan2_link` joins a `G` endpoint and a `Ḡ` endpoint into one dyadic
//! session. `chan3_link` joins endpoints of groups `G0`, `G1` and
//! `Ḡ0 ∪ Ḡ1` (with `Ḡ0`, `Ḡ1` disjoint) into a three-party session, and
//! `chan2_link_create` packages it as a new channel of group `G0 ∩ G1`.
//! `splice_link` has the effect of `chan2_link` without a forwarding loop:
//! it merges the two channels' conduits so the outer parties talk directly.

use super::{Endpoint, Runtime, RuntimeError};
use crate::roles::{complements_disjoint, Group, Role};
use crate::session_types::{normalize_head, sessions_equivalent, SessionType};

/// What a link does with one `msg(i, j)` step: which endpoint receives, which
/// re-sends, and which merely skip (in index order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkStep {
    pub recv: Option<usize>,
    pub send: Option<usize>,
    pub skip: Vec<usize>,
}

/// The per-endpoint reading of `msg(from, to)` for a link over `groups`.
pub fn link_dispatch(groups: &[Group], from: Role, to: Role) -> LinkStep {
    let mut step = LinkStep { recv: None, send: None, skip: Vec::new() };
    for (k, g) in groups.iter().enumerate() {
        match (g.contains(from), g.contains(to)) {
            (false, true) => step.recv = Some(k),
            (true, false) => step.send = Some(k),
            _ => step.skip.push(k),
        }
    }
    step
}

fn same_session(eps: &[&Endpoint]) -> Result<SessionType, RuntimeError> {
    let s = eps[0].cursor();
    for ep in &eps[1..] {
        let other = ep.cursor();
        if !sessions_equivalent(&s, &other) {
            return Err(RuntimeError::SessionMismatch(format!("{s} vs {other}")));
        }
    }
    Ok(s)
}

fn forward(mut eps: Vec<Endpoint>) -> Result<(), RuntimeError> {
    let groups: Vec<Group> = eps.iter().map(Endpoint::group).collect();
    loop {
        match normalize_head(&eps[0].cursor()) {
            SessionType::Nil => {
                for ep in eps {
                    ep.close()?;
                }
                return Ok(());
            }
            SessionType::Msg { from, to, .. } => {
                let step = link_dispatch(&groups, from, to);
                if let Some(r) = step.recv {
                    let (v, ep) = eps[r].clone().recv(from, to)?;
                    eps[r] = ep;
                    let s = step.send.expect("a receiving side always has a sending side");
                    eps[s] = eps[s].clone().send(from, to, v)?;
                }
                for k in step.skip {
                    eps[k] = eps[k].clone().skip()?;
                }
            }
            SessionType::Choose { decider, .. } => {
                let facing = groups.iter().position(|g| !g.contains(decider)).expect("some endpoint faces the decider");
                let (side, ep) = eps[facing].clone().choose_tag()?;
                eps[facing] = ep;
                for k in 0..eps.len() {
                    if k != facing {
                        eps[k] = eps[k].clone().choose(side)?;
                    }
                }
            }
            SessionType::Append(..) | SessionType::Repeat { .. } => unreachable!("normalized head"),
        }
    }
}

/// Forwards between a `G` endpoint and a `Ḡ` endpoint until both close.
/// Runs in the calling agent.
pub fn chan2_link(ep0: Endpoint, ep1: Endpoint) -> Result<(), RuntimeError> {
    let (g0, g1) = (ep0.group(), ep1.group());
    if g1 != g0.complement() {
        return Err(RuntimeError::SessionMismatch(format!("groups {g0} and {g1} are not complementary")));
    }
    same_session(&[&ep0, &ep1])?;
    forward(vec![ep0, ep1])
}

fn check_link3_groups(g0: Group, g1: Group) -> Result<Group, RuntimeError> {
    if !complements_disjoint(g0, g1)? {
        return Err(RuntimeError::ComplementsNotDisjoint(g0, g1));
    }
    Ok(g0.complement().union(g1.complement())?)
}

/// Forwards among endpoints of groups `G0`, `G1`, `Ḡ0 ∪ Ḡ1` until all close.
pub fn chan3_link(ep0: Endpoint, ep1: Endpoint, ep2: Endpoint) -> Result<(), RuntimeError> {
    let (g0, g1, g2) = (ep0.group(), ep1.group(), ep2.group());
    let expected = check_link3_groups(g0, g1)?;
    if g2 != expected {
        return Err(RuntimeError::SessionMismatch(format!("third endpoint has group {g2}, expected {expected}")));
    }
    same_session(&[&ep0, &ep1, &ep2])?;
    forward(vec![ep0, ep1, ep2])
}

/// A new endpoint of group `G0 ∩ G1`, whose peer is handed with `ep0` and
/// `ep1` to a new agent running [`chan3_link`].
pub fn chan2_link_create(ep0: Endpoint, ep1: Endpoint) -> Result<Endpoint, RuntimeError> {
    let link_group = check_link3_groups(ep0.group(), ep1.group())?;
    let s = same_session(&[&ep0, &ep1])?;
    let rt = ep0.runtime().clone();
    rt.chan_create_carrying(link_group, s, vec![ep0, ep1], |x, mut carried| {
        let e1 = carried.pop().expect("two carried endpoints");
        let e0 = carried.pop().expect("two carried endpoints");
        chan3_link(e0, e1, x)
    })
}

/// Joins a `G` endpoint and a `Ḡ` endpoint by merging their channels'
/// conduits; returns at once and leaves no forwarding agent.
pub fn splice_link(ep0: Endpoint, ep1: Endpoint) -> Result<(), RuntimeError> {
    let rt: Runtime = ep0.runtime().clone();
    let me = rt.current_agent();
    let mut st = rt.lock();
    ep0.check_live(&st)?;
    ep1.check_live(&st)?;
    let (k0, k1) = (ep0.key(), ep1.key());
    let (e0, e1) = (&st.endpoints[&k0], &st.endpoints[&k1]);
    if e1.group != e0.group.complement() {
        return Err(RuntimeError::SessionMismatch(format!("groups {} and {} are not complementary", e0.group, e1.group)));
    }
    if k0.0 == k1.0 {
        return Err(RuntimeError::SessionMismatch("both endpoints belong to one channel".to_string()));
    }
    if !sessions_equivalent(&e0.cursor, &e1.cursor) {
        return Err(RuntimeError::SessionMismatch(format!("{} vs {}", e0.cursor, e1.cursor)));
    }
    let (m0, m1) = (e0.matrix.clone(), e1.matrix.clone());
    let (p0, p1) = (e0.peer, e1.peer);
    for (a, b) in m0.iter().zip(m1.iter()) {
        if let (Some(a), Some(b)) = (a, b) {
            rt.merge_uch(&mut st, *a, *b);
        }
    }
    for k in [k0, k1] {
        let e = st.endpoints.get_mut(&k).expect("checked live");
        e.consumed = true;
        e.generation += 1;
        e.owner = me;
    }
    let display = st.endpoints[&p0].display;
    let outer1 = st.endpoints.get_mut(&p1).expect("peers exist");
    outer1.display = display;
    outer1.peer = p0;
    st.endpoints.get_mut(&p0).expect("peers exist").peer = p1;
    st.progress += 1;
    rt.record(&mut st, "splice", vec![me], Some(display), None);
    rt.inner.cv.notify_all();
    Ok(())
}
