//! A queue served to two clients.
//!
//! Each round the server `S0` picks the client to serve; that client then
//! picks one of three labels: `nil` ends the session (only on an empty
//! queue), `enq` sends a value to the server, `deq` receives the front value
//! (only on a non-empty queue). The other client watches the labels, so all
//! three parties can track the queue size. The size constraints are checked
//! dynamically by every party.
//!
//! The session is unrolled for a fixed number of rounds; its shape does not
//! depend on the size, so the unrolling is linear in the number of rounds.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::Serialize;

use super::{run_and_join, ProtocolError};
use crate::roles::{Role, RoleUniverse};
use crate::runtime::{chan2_link_create, Endpoint, Runtime, RuntimeError};
use crate::session_types::{label_path, labeled_choice, PayloadSort, SessionType, Side};
use crate::trace::Trace;

pub const SERVER: Role = 0;
pub const C1: Role = 1;
pub const C2: Role = 2;

const LABELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueOp {
    Nil,
    Enq(i64),
    Deq,
}

impl QueueOp {
    fn label(self) -> usize {
        match self {
            QueueOp::Nil => 0,
            QueueOp::Enq(_) => 1,
            QueueOp::Deq => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueueRound {
    pub client: Role,
    pub op: QueueOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct QueueScript {
    pub rounds: Vec<QueueRound>,
}

impl QueueScript {
    pub fn new(rounds: Vec<QueueRound>) -> Self {
        QueueScript { rounds }
    }

    /// The queue size after each round, or the first round that breaks the
    /// size discipline. A script must end with `nil` and use it nowhere else.
    pub fn validate(&self) -> Result<Vec<usize>, ProtocolError> {
        let violation = |round: usize, reason: &str| ProtocolError::ScriptViolation { round, reason: reason.to_string() };
        if self.rounds.is_empty() {
            return Err(violation(0, "empty script"));
        }
        let mut size = 0usize;
        let mut sizes = Vec::with_capacity(self.rounds.len());
        for (r, round) in self.rounds.iter().enumerate() {
            if round.client != C1 && round.client != C2 {
                return Err(violation(r, "client must be C1 or C2"));
            }
            match round.op {
                QueueOp::Nil if size > 0 => return Err(violation(r, "nil on a non-empty queue")),
                QueueOp::Nil if r + 1 != self.rounds.len() => return Err(violation(r, "rounds after nil")),
                QueueOp::Nil => {}
                QueueOp::Enq(_) => size += 1,
                QueueOp::Deq if size == 0 => return Err(violation(r, "deq on an empty queue")),
                QueueOp::Deq => size -= 1,
            }
            sizes.push(size);
        }
        if self.rounds.last().map(|r| r.op) != Some(QueueOp::Nil) {
            return Err(violation(self.rounds.len() - 1, "script does not end with nil"));
        }
        Ok(sizes)
    }

    /// A random valid script of at most `max_len` rounds (at least one).
    pub fn random(rng: &mut impl Rng, max_len: usize) -> Self {
        let len = rng.gen_range(1..=max_len.max(1));
        let mut rounds = Vec::with_capacity(len);
        let mut size = 0usize;
        for p in 0..len - 1 {
            // rounds left after this one, before the final nil
            let rem = len - 2 - p;
            let op = if size < rem && (size == 0 || rng.gen_bool(0.5)) {
                size += 1;
                QueueOp::Enq(rng.gen_range(-100..100))
            } else if size > 0 {
                size -= 1;
                QueueOp::Deq
            } else {
                break;
            };
            rounds.push(QueueRound { client: rng.gen_range(C1..=C2), op });
        }
        rounds.push(QueueRound { client: rng.gen_range(C1..=C2), op: QueueOp::Nil });
        QueueScript { rounds }
    }
}

impl fmt::Display for QueueScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for round in &self.rounds {
            let op = match round.op {
                QueueOp::Nil => "nil".to_string(),
                QueueOp::Enq(v) => format!("enq {v}"),
                QueueOp::Deq => "deq".to_string(),
            };
            writeln!(f, "C{} {op}", round.client)?;
        }
        Ok(())
    }
}

/// One round per line or comma-separated item, e.g. `C1 enq 5, C2 deq, C1 nil`.
/// Surrounding brackets and `#` comments are ignored.
impl FromStr for QueueScript {
    type Err = ProtocolError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut rounds = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for item in line.split(',') {
                let item = item.trim().trim_matches(|c| c == '[' || c == ']').trim();
                if item.is_empty() {
                    continue;
                }
                rounds.push(parse_round(item).map_err(|reason| ProtocolError::Parse { line: n + 1, reason })?);
            }
        }
        Ok(QueueScript { rounds })
    }
}

fn parse_round(item: &str) -> Result<QueueRound, String> {
    let words: Vec<&str> = item.split_whitespace().collect();
    let client = match words.first().map(|w| w.to_ascii_uppercase()) {
        Some(w) if w == "C1" || w == "1" => C1,
        Some(w) if w == "C2" || w == "2" => C2,
        _ => return Err(format!("expected client C1 or C2 in `{item}`")),
    };
    let op = match &words[1..] {
        ["nil"] => QueueOp::Nil,
        ["deq"] => QueueOp::Deq,
        ["enq", v] => QueueOp::Enq(v.parse().map_err(|_| format!("bad value `{v}`"))?),
        _ => return Err(format!("expected nil, enq <int> or deq in `{item}`")),
    };
    Ok(QueueRound { client, op })
}

/// The queue session unrolled for `rounds` rounds.
pub fn queue_session(rounds: usize) -> SessionType {
    let mut s = SessionType::nil();
    for _ in 0..rounds {
        let served = |i: Role| {
            labeled_choice(
                i,
                vec![
                    SessionType::nil(),
                    SessionType::msg(i, SERVER, PayloadSort::Int, s.clone()),
                    SessionType::msg(SERVER, i, PayloadSort::Int, s.clone()),
                ],
            )
            .expect("three labels")
        };
        s = SessionType::choose(SERVER, served(C1), served(C2));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct QueueOutcome {
    /// Queue size after each round as tracked by `S0`, `C1` and `C2`.
    pub sizes: [Vec<usize>; 3],
    /// Dequeued values in round order, with the client that received them.
    pub dequeued: Vec<(Role, i64)>,
    #[serde(skip)]
    pub trace: Trace,
    #[serde(skip)]
    pub live_endpoints: usize,
}

impl QueueOutcome {
    /// The common size account, if all three parties agree.
    pub fn agreed_sizes(&self) -> Option<&[usize]> {
        (self.sizes[0] == self.sizes[1] && self.sizes[1] == self.sizes[2]).then_some(&self.sizes[0][..])
    }
}

#[derive(Default)]
struct Sinks {
    sizes: [Vec<usize>; 3],
    dequeued: Vec<(usize, Role, i64)>,
}

type Shared = Arc<Mutex<Sinks>>;

fn size_violation(ep: &Endpoint, expected: &str, attempted: &str) -> RuntimeError {
    RuntimeError::ProtocolViolation { chan: ep.half(), expected: expected.to_string(), attempted: attempted.to_string() }
}

/// Reads a client's label, tag by tag, off an observing endpoint.
fn read_label(mut ep: Endpoint) -> Result<(usize, Endpoint), RuntimeError> {
    let mut label = 0;
    while label + 1 < LABELS {
        let (side, next) = ep.choose_tag()?;
        ep = next;
        if side == Side::Left {
            break;
        }
        label += 1;
    }
    Ok((label, ep))
}

fn send_label(mut ep: Endpoint, op: QueueOp) -> Result<Endpoint, RuntimeError> {
    for side in label_path(op.label(), LABELS).expect("label in range") {
        ep = ep.choose(side)?;
    }
    Ok(ep)
}

fn server(script: Arc<QueueScript>, shared: Shared) -> impl Fn(Endpoint) -> Result<(), RuntimeError> + Send + Sync + 'static {
    move |mut ep| {
        let mut queue = VecDeque::new();
        let mut sizes = Vec::new();
        for round in &script.rounds {
            let (client, side) = if round.client == C1 { (C1, Side::Left) } else { (C2, Side::Right) };
            ep = ep.choose(side)?;
            let (label, next) = read_label(ep)?;
            ep = next;
            match label {
                0 => {
                    if !queue.is_empty() {
                        return Err(size_violation(&ep, "deq or enq", "nil"));
                    }
                    sizes.push(0);
                    break;
                }
                1 => {
                    let (v, next) = ep.recv(client, SERVER)?;
                    ep = next;
                    queue.push_back(v.as_int().expect("monitored as int"));
                }
                _ => {
                    let Some(v) = queue.pop_front() else {
                        return Err(size_violation(&ep, "nil or enq", "deq"));
                    };
                    ep = ep.send(SERVER, client, v)?;
                }
            }
            sizes.push(queue.len());
        }
        ep.close()?;
        shared.lock().expect("sinks lock").sizes[0] = sizes;
        Ok(())
    }
}

fn client(me: Role, script: &QueueScript, shared: &Shared, mut ep: Endpoint) -> Result<(), RuntimeError> {
    let mut size = 0usize;
    let mut sizes = Vec::new();
    let mut dequeued = Vec::new();
    for (r, round) in script.rounds.iter().enumerate() {
        let (side, next) = ep.choose_tag()?;
        ep = next;
        let served = if side == Side::Left { C1 } else { C2 };
        let label = if served == me {
            ep = send_label(ep, round.op)?;
            round.op.label()
        } else {
            let (label, next) = read_label(ep)?;
            ep = next;
            label
        };
        match label {
            0 => {
                if size != 0 {
                    return Err(size_violation(&ep, "deq or enq", "nil"));
                }
                sizes.push(0);
                break;
            }
            1 => {
                ep = match round.op {
                    QueueOp::Enq(v) if served == me => ep.send(me, SERVER, v)?,
                    _ => ep.skip()?,
                };
                size += 1;
            }
            _ => {
                if size == 0 {
                    return Err(size_violation(&ep, "nil or enq", "deq"));
                }
                if served == me {
                    let (v, next) = ep.recv(SERVER, me)?;
                    ep = next;
                    dequeued.push((r, me, v.as_int().expect("monitored as int")));
                } else {
                    ep = ep.skip()?;
                }
                size -= 1;
            }
        }
        sizes.push(size);
    }
    ep.close()?;
    let mut sinks = shared.lock().expect("sinks lock");
    sinks.sizes[me] = sizes;
    sinks.dequeued.extend(dequeued);
    Ok(())
}

/// Runs the script with `S0` and `C1` as services and `C2` as the calling
/// agent, which links the two service sessions.
pub fn run_queue_session(script: &QueueScript) -> Result<QueueOutcome, ProtocolError> {
    script.validate()?;
    let u = RoleUniverse::new(3).expect("three roles");
    let s = queue_session(script.rounds.len());
    let rt = Runtime::new(u.nrole())?;
    let script = Arc::new(script.clone());
    let shared: Shared = Arc::new(Mutex::new(Sinks::default()));
    run_and_join(&rt, || {
        let s0 = rt.service_create(server(script.clone(), shared.clone()), u.singleton(SERVER)?, s.clone())?;
        let (c1_script, c1_shared) = (script.clone(), shared.clone());
        let c1 = rt.service_create(move |ep| client(C1, &c1_script, &c1_shared, ep), u.singleton(C1)?, s.clone())?;
        let ep = chan2_link_create(s0.request(), c1.request())?;
        client(C2, &script, &shared, ep)
    })?;
    let mut sinks = std::mem::take(&mut *shared.lock().expect("sinks lock"));
    sinks.dequeued.sort_by_key(|(r, _, _)| *r);
    Ok(QueueOutcome {
        sizes: sinks.sizes,
        dequeued: sinks.dequeued.into_iter().map(|(_, c, v)| (c, v)).collect(),
        trace: rt.trace(),
        live_endpoints: rt.live_endpoints(),
    })
}
