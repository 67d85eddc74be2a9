//! Lists and colists of integers over `repeat`.
//!
//! In `repeat(0, msg(0,1,int)::nil)` the server (role 0) decides each round
//! whether another value follows; in `repeat(1, …)` the client (role 1)
//! asks for each value. Either way, choosing left stops and choosing right
//! runs one more round.

use serde::Serialize;

use super::{run_and_join, ProtocolError};
use crate::roles::{Role, RoleUniverse};
use crate::runtime::{Endpoint, Runtime, RuntimeError};
use crate::session_types::{PayloadSort, SessionType, Side};
use crate::trace::Trace;

pub const SERVER: Role = 0;
pub const CLIENT: Role = 1;

fn item() -> SessionType {
    SessionType::msg(SERVER, CLIENT, PayloadSort::Int, SessionType::nil())
}

pub fn list_session() -> SessionType {
    SessionType::repeat(SERVER, item())
}

pub fn colist_session() -> SessionType {
    SessionType::repeat(CLIENT, item())
}

#[derive(Debug, Clone, Serialize)]
pub struct ListOutcome {
    pub values: Vec<i64>,
    #[serde(skip)]
    pub trace: Trace,
    #[serde(skip)]
    pub live_endpoints: usize,
}

impl ListOutcome {
    /// Trace records of tag rendezvous: one per round plus the final stop.
    pub fn tag_records(&self) -> usize {
        self.trace.records.iter().filter(|r| r.rule == "tag").count()
    }
}

fn value_at(k: usize) -> i64 {
    k as i64 * 10
}

fn emit(mut ep: Endpoint, n: usize, decides: bool) -> Result<(), RuntimeError> {
    let mut k = 0;
    loop {
        let side = if decides {
            let side = if k < n { Side::Right } else { Side::Left };
            ep = ep.choose(side)?;
            side
        } else {
            let (side, next) = ep.choose_tag()?;
            ep = next;
            side
        };
        if side == Side::Left {
            return ep.close();
        }
        ep = ep.send(SERVER, CLIENT, value_at(k))?;
        k += 1;
    }
}

fn consume(mut ep: Endpoint, n: usize, decides: bool) -> Result<Vec<i64>, RuntimeError> {
    let mut values = Vec::new();
    loop {
        let side = if decides {
            let side = if values.len() < n { Side::Right } else { Side::Left };
            ep = ep.choose(side)?;
            side
        } else {
            let (side, next) = ep.choose_tag()?;
            ep = next;
            side
        };
        if side == Side::Left {
            ep.close()?;
            return Ok(values);
        }
        let (v, next) = ep.recv(SERVER, CLIENT)?;
        ep = next;
        values.push(v.as_int().expect("monitored as int"));
    }
}

fn run(n: usize, server_decides: bool) -> Result<ListOutcome, ProtocolError> {
    let u = RoleUniverse::new(2).expect("two roles");
    let s = if server_decides { list_session() } else { colist_session() };
    let rt = Runtime::new(u.nrole())?;
    let values = run_and_join(&rt, || {
        let ep = rt.chan_create(u.singleton(SERVER)?, s, move |ep| emit(ep, n, server_decides))?;
        consume(ep, n, !server_decides)
    })?;
    Ok(ListOutcome { values, trace: rt.trace(), live_endpoints: rt.live_endpoints() })
}

/// The server sends `n` values, then stops.
pub fn run_list_session(n: usize) -> Result<ListOutcome, ProtocolError> {
    run(n, true)
}

/// The client asks for `n` values, then stops.
pub fn run_colist_session(n: usize) -> Result<ListOutcome, ProtocolError> {
    run(n, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceRecord;

    #[test]
    fn empty_list() {
        let out = run_list_session(0).unwrap();
        assert!(out.values.is_empty());
        assert_eq!(out.tag_records(), 1);
        assert_eq!(out.live_endpoints, 0);
    }

    #[test]
    fn three_rounds_then_stop() {
        for out in [run_list_session(3).unwrap(), run_colist_session(3).unwrap()] {
            assert_eq!(out.values, vec![0, 10, 20]);
            assert_eq!(out.tag_records(), 4);
            assert_eq!(out.live_endpoints, 0);
        }
    }

    fn tag_writers(t: &Trace) -> Vec<u64> {
        t.records.iter().filter(|r| r.rule == "tag").map(|r| r.tids[0]).collect()
    }

    /// Rendezvous in order, without who wrote them.
    fn exchanges(t: &Trace) -> Vec<(String, Option<String>)> {
        t.records
            .iter()
            .filter(|r| r.rule == "msg" || r.rule == "tag")
            .map(|r: &TraceRecord| (r.rule.clone(), r.payload.clone()))
            .collect()
    }

    fn rule_counts(t: &Trace) -> std::collections::BTreeMap<String, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &t.records {
            *counts.entry(r.rule.clone()).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn list_and_colist_differ_in_who_tags() {
        let (list, colist) = (run_list_session(4).unwrap(), run_colist_session(4).unwrap());
        assert_eq!(exchanges(&list.trace), exchanges(&colist.trace));
        assert_eq!(rule_counts(&list.trace), rule_counts(&colist.trace));
        // the creating agent is the client; the spawned one is the server
        let server = list.trace.records.iter().find(|r| r.rule == "chan_create").unwrap().tids[1];
        assert!(tag_writers(&list.trace).iter().all(|t| *t == server));
        assert!(tag_writers(&colist.trace).iter().all(|t| *t != server));
    }
}
