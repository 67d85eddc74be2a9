//! Independent oracles and generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use mrsession::df_analysis::{ChannelHalf, ChannelSetCollection};
use mrsession::protocols::{QueueOp, QueueScript};
use mrsession::roles::{Role, RoleUniverse};
use mrsession::session_types::{PayloadSort, SessionType};
use mrsession::trace::TraceRecord;

/// A channel set as `(id, positive)` pairs.
pub type Set = Vec<(u64, bool)>;

pub fn to_collection(sets: &[Set]) -> ChannelSetCollection {
    ChannelSetCollection::new(
        sets.iter()
            .map(|s| s.iter().map(|&(id, pos)| if pos { ChannelHalf::pos(id) } else { ChannelHalf::neg(id) }).collect())
            .collect(),
    )
}

pub fn from_collection(m: &ChannelSetCollection) -> Vec<Set> {
    m.sets.iter().map(|s| s.iter().map(|h| (h.id, h.is_positive())).collect()).collect()
}

/// DF-reducibility straight from the definition: every set empty, or some
/// reduction exists and every reduct is DF-reducible. No memo, no
/// canonicalization.
pub fn brute_force_df(sets: &[Set]) -> bool {
    if sets.iter().all(|s| s.is_empty()) {
        return true;
    }
    let mut any = false;
    for (a, sa) in sets.iter().enumerate() {
        for &(id, pos) in sa {
            if !pos {
                continue;
            }
            let Some(b) = sets.iter().enumerate().position(|(k, sb)| k != a && sb.contains(&(id, false))) else {
                continue;
            };
            any = true;
            let mut merged: Vec<(u64, bool)> =
                sa.iter().chain(sets[b].iter()).copied().filter(|&(i, _)| i != id).collect();
            merged.sort_unstable();
            let mut next: Vec<Set> =
                sets.iter().enumerate().filter(|(k, _)| *k != a && *k != b).map(|(_, s)| s.clone()).collect();
            next.push(merged);
            if !brute_force_df(&next) {
                return false;
            }
        }
    }
    any
}

/// Every placement of the halves of channels `1..=pairs` into `nsets`
/// (possibly empty) sets.
pub fn all_placements(pairs: u64, nsets: usize) -> Vec<Vec<Set>> {
    let halves: Vec<(u64, bool)> = (1..=pairs).flat_map(|id| [(id, true), (id, false)]).collect();
    let total = nsets.pow(halves.len() as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut sets = vec![Vec::new(); nsets];
        let mut c = code;
        for h in &halves {
            sets[c % nsets].push(*h);
            c /= nsets;
        }
        out.push(sets);
    }
    out
}

/// Queue sizes after each round and dequeued `(client, value)` pairs, by
/// replaying the script on a plain FIFO.
pub fn fifo_oracle(script: &QueueScript) -> (Vec<usize>, Vec<(Role, i64)>) {
    let mut q = VecDeque::new();
    let (mut sizes, mut out) = (Vec::new(), Vec::new());
    for round in &script.rounds {
        match round.op {
            QueueOp::Enq(v) => q.push_back(v),
            QueueOp::Deq => out.push((round.client, q.pop_front().expect("valid script"))),
            QueueOp::Nil => {}
        }
        sizes.push(q.len());
    }
    (sizes, out)
}

/// What the holder of `G` does with `msg(i, j)`, keyed by `(i ∈ G, j ∈ G)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reading {
    Ignore,
    Send,
    Receive,
}

pub const CLASSIFICATION: [((bool, bool), Reading); 4] = [
    ((true, true), Reading::Ignore),
    ((true, false), Reading::Send),
    ((false, true), Reading::Receive),
    ((false, false), Reading::Ignore),
];

/// The three-way link's handling of `msg(i, j)` by the blocks `B0 = Ḡ0`,
/// `B1 = Ḡ1`, `B2 = G0 ∩ G1` holding `i` and `j`: which of the link's
/// endpoints (`0` of group `G0`, `1` of `G1`, `2` of `Ḡ0 ∪ Ḡ1`) receives,
/// which re-sends, and which skip.
pub struct Chan3Case {
    pub from_block: usize,
    pub to_block: usize,
    pub recv: Option<usize>,
    pub send: Option<usize>,
    pub skip: &'static [usize],
}

pub const CHAN3_TABLE: [Chan3Case; 9] = [
    Chan3Case { from_block: 0, to_block: 0, recv: None, send: None, skip: &[0, 1, 2] },
    Chan3Case { from_block: 0, to_block: 1, recv: Some(0), send: Some(1), skip: &[2] },
    Chan3Case { from_block: 0, to_block: 2, recv: Some(0), send: Some(2), skip: &[1] },
    Chan3Case { from_block: 1, to_block: 0, recv: Some(1), send: Some(0), skip: &[2] },
    Chan3Case { from_block: 1, to_block: 1, recv: None, send: None, skip: &[0, 1, 2] },
    Chan3Case { from_block: 1, to_block: 2, recv: Some(1), send: Some(2), skip: &[0] },
    Chan3Case { from_block: 2, to_block: 0, recv: Some(2), send: Some(0), skip: &[1] },
    Chan3Case { from_block: 2, to_block: 1, recv: Some(2), send: Some(1), skip: &[0] },
    Chan3Case { from_block: 2, to_block: 2, recv: None, send: None, skip: &[0, 1, 2] },
];

fn random_sort(rng: &mut impl Rng, u: RoleUniverse, depth: usize) -> PayloadSort {
    match rng.gen_range(0..7) {
        0 => PayloadSort::Unit,
        1 => PayloadSort::Int,
        2 => PayloadSort::Bool,
        3 => PayloadSort::Str,
        4 => PayloadSort::Tuple((0..rng.gen_range(2..4)).map(|_| random_sort(rng, u, 0)).collect()),
        _ if depth > 0 => {
            let g = random_group(rng, u);
            PayloadSort::chan(g, random_session(rng, u, depth - 1))
        }
        _ => PayloadSort::Int,
    }
}

fn random_group(rng: &mut impl Rng, u: RoleUniverse) -> mrsession::roles::Group {
    loop {
        let g = u.group((0..u.nrole()).filter(|_| rng.gen_bool(0.5))).expect("roles in range");
        if g.splits_universe() {
            return g;
        }
    }
}

/// A random well-formed session over all constructors, including `repeat`
/// and channel payloads.
pub fn random_session(rng: &mut impl Rng, u: RoleUniverse, depth: usize) -> SessionType {
    let n = u.nrole();
    if depth == 0 || rng.gen_ratio(1, 8) {
        return SessionType::nil();
    }
    match rng.gen_range(0..10) {
        0 | 1 => SessionType::choose(rng.gen_range(0..n), random_session(rng, u, depth - 1), random_session(rng, u, depth - 1)),
        2 => SessionType::append(random_session(rng, u, depth - 1), random_session(rng, u, depth - 1)),
        3 => SessionType::repeat(rng.gen_range(0..n), random_session(rng, u, depth - 1)),
        _ => {
            let from = rng.gen_range(0..n);
            let to = (from + rng.gen_range(1..n)) % n;
            SessionType::msg(from, to, random_sort(rng, u, depth.min(2) - 1), random_session(rng, u, depth - 1))
        }
    }
}

const RULES: [&str; 8] = ["init", "PR3", "msg", "tag", "skip", "close", "splice", "chan_create"];

/// A random trace record, with awkward payload text.
pub fn random_record(rng: &mut impl Rng, step: u64) -> TraceRecord {
    let payloads = ["7", "\"quoted \\\" text\"", "ep(3+)", "(1, \"a,b\")", "ünïcödé\n\ttab", ""];
    let nsets = rng.gen_range(1..4);
    let mut rho_ch = vec![Vec::new(); nsets];
    for id in 1..=rng.gen_range(0..4u64) {
        rho_ch[rng.gen_range(0..nsets)].push(ChannelHalf::pos(id));
        rho_ch[rng.gen_range(0..nsets)].push(ChannelHalf::neg(id));
    }
    for set in &mut rho_ch {
        let sorted: BTreeSet<ChannelHalf> = set.drain(..).collect();
        set.extend(sorted);
    }
    TraceRecord {
        step,
        rule: RULES[rng.gen_range(0..RULES.len())].to_string(),
        tids: (0..rng.gen_range(0..3)).map(|_| rng.gen_range(0..50)).collect(),
        chan_id: rng.gen_bool(0.5).then(|| rng.gen_range(1..100)),
        payload: rng.gen_bool(0.5).then(|| payloads[rng.gen_range(0..payloads.len())].to_string()),
        rho_ch,
    }
}
