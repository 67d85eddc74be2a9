//! Seeded session players and the link configurations used to compare
//! forwarding strategies.
//!
//! A player follows whatever its endpoint's session requires: payloads and
//! choices are pure functions of a seed and the step index, so every
//! configuration of the same session and seed should observe the same
//! messages. [`expected_observations`] computes those observations
//! sequentially, without any channels.

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{chan2_link, chan2_link_create, splice_link, DynValue, Endpoint, Runtime, RuntimeConfig, RuntimeError};
use crate::roles::{Group, Role, RoleUniverse};
use crate::session_types::{normalize_head, HeadAction, PayloadSort, SessionType, Side};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Observation {
    Sent { from: Role, to: Role, payload: String },
    Received { from: Role, to: Role, payload: String },
    Chose { decider: Role, side: Side },
    Offered { decider: Role, side: Side },
}

fn mix(seed: u64, k: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
}

/// The payload of the `k`-th message step. Channel sorts are not supported.
pub fn payload_for(seed: u64, k: u64, sort: &PayloadSort) -> DynValue {
    let mut rng = mix(seed, k, 0x5eed);
    sample(&mut rng, sort)
}

fn sample(rng: &mut ChaCha8Rng, sort: &PayloadSort) -> DynValue {
    match sort {
        PayloadSort::Unit => DynValue::Unit,
        PayloadSort::Int => DynValue::Int(rng.gen_range(-1000..1000)),
        PayloadSort::Bool => DynValue::Bool(rng.gen()),
        PayloadSort::Str => DynValue::Str(format!("s{}", rng.gen_range(0..100))),
        PayloadSort::Tuple(items) => DynValue::Tuple(items.iter().map(|s| sample(rng, s)).collect()),
        PayloadSort::Chan(..) => panic!("scripted players do not delegate channels"),
    }
}

/// The branch taken at the `c`-th choice.
pub fn choice_for(seed: u64, c: u64) -> Side {
    if mix(seed, c, 0xc401ce).gen() {
        Side::Right
    } else {
        Side::Left
    }
}

/// Plays the endpoint's session to the end and returns what it saw.
pub fn play(mut ep: Endpoint, seed: u64) -> Result<Vec<Observation>, RuntimeError> {
    let (mut k, mut c) = (0u64, 0u64);
    let mut obs = Vec::new();
    loop {
        match ep.head()? {
            HeadAction::Close => {
                ep.close()?;
                return Ok(obs);
            }
            HeadAction::Send { from, to, payload, .. } => {
                let v = payload_for(seed, k, &payload);
                obs.push(Observation::Sent { from, to, payload: v.to_string() });
                ep = ep.send(from, to, v)?;
                k += 1;
            }
            HeadAction::Recv { from, to, .. } => {
                let (v, next) = ep.recv(from, to)?;
                obs.push(Observation::Received { from, to, payload: v.to_string() });
                ep = next;
                k += 1;
            }
            HeadAction::Skip { .. } => {
                ep = ep.skip()?;
                k += 1;
            }
            HeadAction::ChooseSend { decider, .. } => {
                let side = choice_for(seed, c);
                c += 1;
                obs.push(Observation::Chose { decider, side });
                ep = ep.choose(side)?;
            }
            HeadAction::ChooseRecv { decider, .. } => {
                let (side, next) = ep.choose_tag()?;
                c += 1;
                obs.push(Observation::Offered { decider, side });
                ep = next;
            }
        }
    }
}

/// What parties holding `groups` (a partition of the roles) observe when
/// they play `s` with `seed`, computed without running anything.
pub fn expected_observations(s: &SessionType, groups: &[Group], seed: u64) -> Vec<Vec<Observation>> {
    let mut out = vec![Vec::new(); groups.len()];
    let (mut k, mut c) = (0u64, 0u64);
    let mut cur = s.clone();
    loop {
        match normalize_head(&cur) {
            SessionType::Nil => return out,
            SessionType::Msg { from, to, payload, rest } => {
                let v = payload_for(seed, k, &payload).to_string();
                k += 1;
                for (p, g) in groups.iter().enumerate() {
                    match (g.contains(from), g.contains(to)) {
                        (true, false) => out[p].push(Observation::Sent { from, to, payload: v.clone() }),
                        (false, true) => out[p].push(Observation::Received { from, to, payload: v.clone() }),
                        _ => {}
                    }
                }
                cur = (*rest).clone();
            }
            SessionType::Choose { decider, left, right } => {
                let side = choice_for(seed, c);
                c += 1;
                for (p, g) in groups.iter().enumerate() {
                    out[p].push(if g.contains(decider) {
                        Observation::Chose { decider, side }
                    } else {
                        Observation::Offered { decider, side }
                    });
                }
                cur = if side == Side::Left { (*left).clone() } else { (*right).clone() };
            }
            SessionType::Append(..) | SessionType::Repeat { .. } => unreachable!("normalized head"),
        }
    }
}

/// A random repeat-free session of depth at most `depth` without channel
/// payloads.
pub fn random_session(rng: &mut impl Rng, u: RoleUniverse, depth: usize) -> SessionType {
    if depth == 0 {
        return SessionType::nil();
    }
    let n = u.nrole();
    match rng.gen_range(0..12) {
        0 => SessionType::nil(),
        1 | 2 if depth >= 2 => {
            let d = rng.gen_range(0..n);
            SessionType::choose(d, random_session(rng, u, depth - 1), random_session(rng, u, depth - 1))
        }
        3 if depth >= 2 => {
            let half = depth / 2;
            SessionType::append(random_session(rng, u, half), random_session(rng, u, depth - half))
        }
        _ => {
            let from = rng.gen_range(0..n);
            let to = (from + rng.gen_range(1..n)) % n;
            SessionType::msg(from, to, random_sort(rng), random_session(rng, u, depth - 1))
        }
    }
}

fn random_sort(rng: &mut impl Rng) -> PayloadSort {
    match rng.gen_range(0..6) {
        0 => PayloadSort::Unit,
        1 | 2 => PayloadSort::Int,
        3 => PayloadSort::Bool,
        4 => PayloadSort::Str,
        _ => PayloadSort::Tuple(vec![PayloadSort::Int, PayloadSort::Str]),
    }
}

/// A group that splits the roles.
pub fn random_split(rng: &mut impl Rng, u: RoleUniverse) -> Group {
    loop {
        let g = u.group((0..u.nrole()).filter(|_| rng.gen_bool(0.5))).expect("roles in range");
        if g.splits_universe() {
            return g;
        }
    }
}

/// Groups `G0`, `G1` for a three-way link: the blocks `Ḡ0`, `Ḡ1`, `G0 ∩ G1`
/// are a random partition of the roles into three non-empty parts.
pub fn random_link3_groups(rng: &mut impl Rng, u: RoleUniverse) -> (Group, Group) {
    assert!(u.nrole() >= 3, "three parties need three roles");
    loop {
        let blocks: Vec<usize> = (0..u.nrole()).map(|_| rng.gen_range(0..3)).collect();
        let block = |b: usize| u.group((0..u.nrole()).filter(|r| blocks[*r] == b)).expect("roles in range");
        let (b0, b1, b2) = (block(0), block(1), block(2));
        if !b0.is_empty() && !b1.is_empty() && !b2.is_empty() {
            return (b0.complement(), b1.complement());
        }
    }
}

/// How the outer parties are connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkConfig {
    /// One channel between the two parties.
    Direct,
    /// Two channels joined by a forwarding loop.
    Chan2,
    /// Two channels joined by merging their conduits.
    Splice,
}

#[derive(Debug, Clone)]
pub struct ConfigRun {
    /// Per party, in the order of the groups given.
    pub observations: Vec<Vec<Observation>>,
    pub trace: Trace,
    pub live_endpoints: usize,
    pub runtime: Runtime,
}

type Slots = Arc<Mutex<Vec<Option<Vec<Observation>>>>>;

fn player(slots: &Slots, index: usize, seed: u64) -> impl FnOnce(Endpoint) -> Result<(), RuntimeError> + Send + 'static {
    let slots = slots.clone();
    move |ep| {
        let obs = play(ep, seed)?;
        slots.lock().expect("slots lock")[index] = Some(obs);
        Ok(())
    }
}

fn collect(rt: Runtime, slots: Slots) -> Result<ConfigRun, RuntimeError> {
    rt.join_all()?;
    let observations = slots.lock().expect("slots lock").iter().map(|o| o.clone().unwrap_or_default()).collect();
    Ok(ConfigRun { observations, trace: rt.trace(), live_endpoints: rt.live_endpoints(), runtime: rt })
}

/// Two parties holding `g` and `ḡ` play `s`, connected as `config`.
pub fn run_dyadic(config: LinkConfig, g: Group, s: &SessionType, seed: u64) -> Result<ConfigRun, RuntimeError> {
    let rt = Runtime::with_config(RuntimeConfig::new(g.universe()));
    let slots: Slots = Arc::new(Mutex::new(vec![None, None]));
    match config {
        LinkConfig::Direct => {
            let mine = rt.chan_create(g, s.clone(), player(&slots, 0, seed))?;
            player(&slots, 1, seed)(mine)?;
        }
        LinkConfig::Chan2 | LinkConfig::Splice => {
            let a = rt.chan_create(g, s.clone(), player(&slots, 0, seed))?;
            let b = rt.chan_create(g.complement(), s.clone(), player(&slots, 1, seed))?;
            if config == LinkConfig::Chan2 {
                chan2_link(b, a)?;
            } else {
                splice_link(b, a)?;
            }
        }
    }
    collect(rt, slots)
}

/// Three parties holding `Ḡ0`, `Ḡ1` and `G0 ∩ G1` play `s`. The third
/// obtains its endpoint from `chan2_link_create` over the other two.
pub fn run_link3(g0: Group, g1: Group, s: &SessionType, seed: u64) -> Result<ConfigRun, RuntimeError> {
    let rt = Runtime::with_config(RuntimeConfig::new(g0.universe()));
    let slots: Slots = Arc::new(Mutex::new(vec![None, None, None]));
    let ep0 = rt.chan_create(g0.complement(), s.clone(), player(&slots, 0, seed))?;
    let ep1 = rt.chan_create(g1.complement(), s.clone(), player(&slots, 1, seed))?;
    let ep2 = chan2_link_create(ep0, ep1)?;
    player(&slots, 2, seed)(ep2)?;
    collect(rt, slots)
}

/// The groups of the three parties in [`run_link3`].
pub fn link3_parties(g0: Group, g1: Group) -> Vec<Group> {
    vec![g0.complement(), g1.complement(), g0.intersection(g1).expect("same universe")]
}
