//! Thread-backed multirole channels.
//!
//! A [`Runtime`] hosts agents (OS threads) that talk only through
//! synchronous one-directional conduits. Each channel owns an
//! `nrole x nrole` matrix of conduits: cell `(i, j)` exists iff roles `i`
//! and `j` sit on opposite sides of the channel's group boundary, and it is
//! written by the side holding `i`. Sends, receives and choice tags are
//! rendezvous on these cells; `skip` and `close` are local.
//!
//! Every operation checks the endpoint's cursor against the session type and
//! consumes the handle it was given, returning a successor. Reusing a stale
//! handle fails with [`RuntimeError::UseAfterConsume`].
//!
//! When every live agent is blocked, the blocked operations fail with
//! [`RuntimeError::DeadlockDetected`] carrying the channel ownership snapshot
//! at that moment. An agent blocked for longer than the watchdog window
//! (`MRSESSION_WATCHDOG_MS`, default 2000) while nothing else in the runtime
//! moves reports the same error.

mod endpoint;
pub mod link;
pub mod script;
mod service;
mod value;

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use endpoint::Endpoint;
pub use link::{chan2_link, chan2_link_create, chan3_link, link_dispatch, splice_link, LinkStep};
pub use service::Service;
pub use value::DynValue;

use crate::df_analysis::{ChannelHalf, ChannelSetCollection, Polarity};
use crate::roles::{Group, RoleError, RoleUniverse};
use crate::session_types::{well_formed, SessionType, Side};
use crate::trace::{rho_ch_of, Trace, TraceRecord};

pub type AgentId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("protocol violation on {chan}: session expects {expected}, got {attempted}")]
    ProtocolViolation { chan: ChannelHalf, expected: String, attempted: String },
    #[error("endpoint {0} was already consumed")]
    UseAfterConsume(ChannelHalf),
    #[error("choice tags disagree on {0}")]
    InconsistentBroadcast(ChannelHalf),
    #[error("append segment returned a different endpoint ({expected} expected, got {found})")]
    SegmentIdentityViolation { expected: ChannelHalf, found: ChannelHalf },
    #[error("append segment returned before finishing its session: {0}")]
    SegmentIncomplete(String),
    #[error("session mismatch: {0}")]
    SessionMismatch(String),
    #[error("complements of {0} and {1} overlap")]
    ComplementsNotDisjoint(Group, Group),
    #[error("ill-formed session {0}")]
    IllFormedSession(String),
    #[error("group {0} does not split the roles")]
    EmptyGroup(Group),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error("chan2_create needs the unsafe flag")]
    UnsafeDisabled,
    #[error("deadlock detected; ownership snapshot {0}")]
    DeadlockDetected(ChannelSetCollection),
    #[error("agent `{0}` panicked")]
    AgentPanicked(String),
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub universe: RoleUniverse,
    pub allow_unsafe: bool,
    pub record_trace: bool,
    pub watchdog: Duration,
}

impl RuntimeConfig {
    pub fn new(universe: RoleUniverse) -> Self {
        RuntimeConfig { universe, allow_unsafe: false, record_trace: true, watchdog: watchdog_from_env() }
    }
}

/// `MRSESSION_WATCHDOG_MS`, or two seconds.
pub fn watchdog_from_env() -> Duration {
    let ms = std::env::var("MRSESSION_WATCHDOG_MS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(2000);
    Duration::from_millis(ms)
}

pub(crate) type EpKey = (u64, Polarity);

pub(crate) fn polarity_of(g: Group) -> Polarity {
    if g.contains(0) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

pub(crate) struct EpState {
    pub group: Group,
    pub cursor: SessionType,
    pub generation: u64,
    pub consumed: bool,
    pub owner: AgentId,
    /// Channel id shown in snapshots; a splice renames one side.
    pub display: u64,
    pub peer: EpKey,
    pub matrix: Arc<Vec<Option<usize>>>,
}

#[derive(Debug, Clone)]
pub(crate) enum Carried {
    Value(DynValue),
    Tag(Side),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Pending {
    ticket: u64,
    agent: AgentId,
    display: u64,
}

#[derive(Default)]
struct UchState {
    redirect: Option<usize>,
    writer: Option<(Pending, Carried)>,
    reader: Option<Pending>,
}

enum Completion {
    Taken,
    Delivered(Carried),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AgentStatus {
    Running,
    Blocked,
    Joining,
    Finished,
}

struct AgentInfo {
    status: AgentStatus,
}

pub(crate) struct State {
    agents: BTreeMap<AgentId, AgentInfo>,
    next_agent: AgentId,
    next_chan: u64,
    next_ticket: u64,
    pub(crate) endpoints: HashMap<EpKey, EpState>,
    uchs: Vec<UchState>,
    completions: HashMap<u64, Completion>,
    deadlock: Option<ChannelSetCollection>,
    progress: u64,
    trace: Option<Trace>,
}

type AgentResult = Result<(), RuntimeError>;

pub(crate) struct Inner {
    id: u64,
    config: RuntimeConfig,
    state: Mutex<State>,
    cv: Condvar,
    handles: Mutex<Vec<(AgentId, String, JoinHandle<AgentResult>)>>,
}

/// Shared handle to one runtime instance.
#[derive(Clone)]
pub struct Runtime {
    pub(crate) inner: Arc<Inner>,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Runtime#{}", self.inner.id)
    }
}

static NEXT_RUNTIME: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static CURRENT: RefCell<HashMap<u64, AgentId>> = RefCell::new(HashMap::new());
}

fn set_current(rt: u64, agent: AgentId) {
    CURRENT.with(|c| c.borrow_mut().insert(rt, agent));
}

struct FinishGuard {
    rt: Runtime,
    agent: AgentId,
}

impl Drop for FinishGuard {
    fn drop(&mut self) {
        let mut st = self.rt.lock();
        if let Some(a) = st.agents.get_mut(&self.agent) {
            a.status = AgentStatus::Finished;
        }
        st.progress += 1;
        self.rt.record(&mut st, "exit", vec![self.agent], None, None);
        self.rt.check_deadlock(&mut st);
        self.rt.inner.cv.notify_all();
    }
}

impl Runtime {
    /// A runtime over `nrole` roles; the calling thread becomes agent 0.
    pub fn new(nrole: usize) -> Result<Self, RuntimeError> {
        Ok(Runtime::with_config(RuntimeConfig::new(RoleUniverse::new(nrole)?)))
    }

    pub fn with_config(config: RuntimeConfig) -> Self {
        let mut agents = BTreeMap::new();
        agents.insert(0, AgentInfo { status: AgentStatus::Running });
        let state = State {
            agents,
            next_agent: 1,
            next_chan: 1,
            next_ticket: 1,
            endpoints: HashMap::new(),
            uchs: Vec::new(),
            completions: HashMap::new(),
            deadlock: None,
            progress: 0,
            trace: config.record_trace.then(Trace::new),
        };
        let rt = Runtime {
            inner: Arc::new(Inner {
                id: NEXT_RUNTIME.fetch_add(1, Ordering::Relaxed),
                config,
                state: Mutex::new(state),
                cv: Condvar::new(),
                handles: Mutex::new(Vec::new()),
            }),
        };
        set_current(rt.inner.id, 0);
        let mut st = rt.lock();
        rt.record(&mut st, "init", vec![0], None, None);
        drop(st);
        rt
    }

    pub fn universe(&self) -> RoleUniverse {
        self.inner.config.universe
    }

    pub fn allow_unsafe(&self) -> bool {
        self.inner.config.allow_unsafe
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, State> {
        self.inner.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// The agent id of the calling thread, registering it if it is new.
    pub fn current_agent(&self) -> AgentId {
        if let Some(a) = CURRENT.with(|c| c.borrow().get(&self.inner.id).copied()) {
            return a;
        }
        let mut st = self.lock();
        let id = st.next_agent;
        st.next_agent += 1;
        st.agents.insert(id, AgentInfo { status: AgentStatus::Running });
        drop(st);
        set_current(self.inner.id, id);
        id
    }

    /// Runs `body` in a new agent.
    pub fn spawn<F>(&self, name: &str, body: F)
    where
        F: FnOnce() -> Result<(), RuntimeError> + Send + 'static,
    {
        let me = self.current_agent();
        let mut st = self.lock();
        let id = self.register(&mut st);
        self.record(&mut st, "spawn", vec![me, id], None, None);
        drop(st);
        self.start(id, name, body);
    }

    fn register(&self, st: &mut State) -> AgentId {
        let id = st.next_agent;
        st.next_agent += 1;
        st.agents.insert(id, AgentInfo { status: AgentStatus::Running });
        st.progress += 1;
        id
    }

    fn start<F>(&self, id: AgentId, name: &str, body: F)
    where
        F: FnOnce() -> Result<(), RuntimeError> + Send + 'static,
    {
        let rt = self.clone();
        let handle = std::thread::Builder::new()
            .name(format!("agent-{id}-{name}"))
            .spawn(move || {
                set_current(rt.inner.id, id);
                let _guard = FinishGuard { rt: rt.clone(), agent: id };
                body()
            })
            .expect("spawning an agent thread");
        self.inner.handles.lock().unwrap_or_else(|e| e.into_inner()).push((id, name.to_string(), handle));
    }

    /// Waits for every other agent to finish. Returns the first failure,
    /// preferring root causes over the deadlock reports they lead to.
    pub fn join_all(&self) -> Result<(), RuntimeError> {
        let me = self.current_agent();
        {
            let mut st = self.lock();
            set_status(&mut st, me, AgentStatus::Joining);
            self.check_deadlock(&mut st);
            self.inner.cv.notify_all();
            let mut seen = st.progress;
            let mut since = Instant::now();
            while !others_finished(&st, me) {
                let (g, _) = self.inner.cv.wait_timeout(st, self.inner.config.watchdog).unwrap_or_else(|e| e.into_inner());
                st = g;
                self.watch(&mut st, &mut seen, &mut since);
            }
            set_status(&mut st, me, AgentStatus::Running);
        }
        let mut results = Vec::new();
        loop {
            let batch: Vec<_> = std::mem::take(&mut *self.inner.handles.lock().unwrap_or_else(|e| e.into_inner()));
            if batch.is_empty() {
                break;
            }
            for (_, name, h) in batch {
                results.push(h.join().unwrap_or_else(|_| Err(RuntimeError::AgentPanicked(name))));
            }
        }
        let errors: Vec<RuntimeError> = results.into_iter().filter_map(Result::err).collect();
        match errors.iter().find(|e| !matches!(e, RuntimeError::DeadlockDetected(_))) {
            Some(root) => Err(root.clone()),
            None => errors.into_iter().next().map_or(Ok(()), Err),
        }
    }

    /// Per agent, the channel halves it currently holds.
    pub fn snapshot(&self) -> ChannelSetCollection {
        snapshot_of(&self.lock())
    }

    pub fn trace(&self) -> Trace {
        self.lock().trace.clone().unwrap_or_default()
    }

    /// The snapshot taken when a deadlock was detected, if one was.
    pub fn deadlock(&self) -> Option<ChannelSetCollection> {
        self.lock().deadlock.clone()
    }

    /// Endpoints neither closed nor otherwise consumed.
    pub fn live_endpoints(&self) -> usize {
        self.lock().endpoints.values().filter(|e| !e.consumed).count()
    }

    pub fn agent_count(&self) -> usize {
        self.lock().agents.values().filter(|a| a.status != AgentStatus::Finished).count()
    }

    pub(crate) fn record(&self, st: &mut State, rule: &str, tids: Vec<AgentId>, chan_id: Option<u64>, payload: Option<String>) {
        if st.trace.is_none() {
            return;
        }
        let rho = rho_ch_of(&snapshot_of(st));
        let trace = st.trace.as_mut().expect("checked above");
        let step = trace.len() as u64;
        trace.push(TraceRecord { step, rule: rule.to_string(), tids, chan_id, payload, rho_ch: rho });
    }

    fn check_deadlock(&self, st: &mut State) {
        if st.deadlock.is_some() {
            return;
        }
        let live: Vec<(AgentId, AgentStatus)> =
            st.agents.iter().filter(|(_, a)| a.status != AgentStatus::Finished).map(|(id, a)| (*id, a.status)).collect();
        if live.is_empty() {
            return;
        }
        let stuck = live.iter().all(|(id, s)| match s {
            AgentStatus::Blocked => true,
            AgentStatus::Joining => !others_finished(st, *id),
            _ => false,
        });
        if stuck {
            self.declare_deadlock(st);
        }
    }

    fn declare_deadlock(&self, st: &mut State) {
        st.deadlock = Some(snapshot_of(st));
        self.record(st, "deadlock", Vec::new(), None, None);
        self.inner.cv.notify_all();
    }

    fn watch(&self, st: &mut State, seen: &mut u64, since: &mut Instant) {
        if st.progress != *seen {
            *seen = st.progress;
            *since = Instant::now();
        } else if since.elapsed() >= self.inner.config.watchdog && st.deadlock.is_none() {
            self.declare_deadlock(st);
        }
    }

    fn wait_ticket<'a>(
        &'a self,
        mut st: MutexGuard<'a, State>,
        me: AgentId,
        ticket: u64,
    ) -> (MutexGuard<'a, State>, Result<Completion, RuntimeError>) {
        set_status(&mut st, me, AgentStatus::Blocked);
        self.check_deadlock(&mut st);
        let mut seen = st.progress;
        let mut since = Instant::now();
        loop {
            if let Some(c) = st.completions.remove(&ticket) {
                set_status(&mut st, me, AgentStatus::Running);
                return (st, Ok(c));
            }
            if let Some(snap) = st.deadlock.clone() {
                set_status(&mut st, me, AgentStatus::Running);
                return (st, Err(RuntimeError::DeadlockDetected(snap)));
            }
            let (g, _) = self.inner.cv.wait_timeout(st, self.inner.config.watchdog).unwrap_or_else(|e| e.into_inner());
            st = g;
            self.watch(&mut st, &mut seen, &mut since);
        }
    }

    fn resolve(st: &State, mut uch: usize) -> usize {
        while let Some(next) = st.uchs[uch].redirect {
            uch = next;
        }
        uch
    }

    fn complete(&self, st: &mut State, writer: (Pending, Carried), reader: Pending) {
        let (w, item) = writer;
        let (rule, payload) = match &item {
            Carried::Value(v) => {
                for key in v.endpoint_keys() {
                    if let Some(e) = st.endpoints.get_mut(&key) {
                        e.owner = reader.agent;
                    }
                }
                ("msg", v.to_string())
            }
            Carried::Tag(side) => ("tag", side.to_string()),
        };
        st.completions.insert(w.ticket, Completion::Taken);
        st.completions.insert(reader.ticket, Completion::Delivered(item));
        set_status(st, w.agent, AgentStatus::Running);
        set_status(st, reader.agent, AgentStatus::Running);
        st.progress += 1;
        self.record(st, rule, vec![w.agent, reader.agent], Some(reader.display), Some(payload));
        self.inner.cv.notify_all();
    }

    fn new_ticket(st: &mut State, agent: AgentId, display: u64) -> Pending {
        let ticket = st.next_ticket;
        st.next_ticket += 1;
        Pending { ticket, agent, display }
    }

    /// Rendezvous write on conduit `uch`.
    pub(crate) fn write<'a>(
        &'a self,
        mut st: MutexGuard<'a, State>,
        uch: usize,
        me: AgentId,
        display: u64,
        item: Carried,
    ) -> (MutexGuard<'a, State>, Result<(), RuntimeError>) {
        let u = Self::resolve(&st, uch);
        let pending = Self::new_ticket(&mut st, me, display);
        if let Some(reader) = st.uchs[u].reader.take() {
            self.complete(&mut st, (pending, item), reader);
            st.completions.remove(&pending.ticket);
            return (st, Ok(()));
        }
        st.uchs[u].writer = Some((pending, item));
        let (st, r) = self.wait_ticket(st, me, pending.ticket);
        (st, r.map(|_| ()))
    }

    /// Rendezvous read on conduit `uch`.
    pub(crate) fn read<'a>(
        &'a self,
        mut st: MutexGuard<'a, State>,
        uch: usize,
        me: AgentId,
        display: u64,
    ) -> (MutexGuard<'a, State>, Result<Carried, RuntimeError>) {
        let u = Self::resolve(&st, uch);
        let pending = Self::new_ticket(&mut st, me, display);
        if let Some(writer) = st.uchs[u].writer.take() {
            self.complete(&mut st, writer, pending);
            let item = match st.completions.remove(&pending.ticket) {
                Some(Completion::Delivered(item)) => item,
                _ => unreachable!("completion just recorded"),
            };
            return (st, Ok(item));
        }
        st.uchs[u].reader = Some(pending);
        let (st, r) = self.wait_ticket(st, me, pending.ticket);
        let r = r.map(|c| match c {
            Completion::Delivered(item) => item,
            Completion::Taken => unreachable!("readers are delivered to"),
        });
        (st, r)
    }

    /// Makes conduit `from` an alias of `to`, matching any pending writer and
    /// reader that end up on the same conduit.
    pub(crate) fn merge_uch(&self, st: &mut State, from: usize, to: usize) {
        let (a, b) = (Self::resolve(st, from), Self::resolve(st, to));
        if a == b {
            return;
        }
        let moved = std::mem::take(&mut st.uchs[a]);
        st.uchs[a].redirect = Some(b);
        if let Some(w) = moved.writer {
            debug_assert!(st.uchs[b].writer.is_none());
            st.uchs[b].writer = Some(w);
        }
        if let Some(r) = moved.reader {
            debug_assert!(st.uchs[b].reader.is_none());
            st.uchs[b].reader = Some(r);
        }
        if st.uchs[b].writer.is_some() && st.uchs[b].reader.is_some() {
            let w = st.uchs[b].writer.take().expect("checked");
            let r = st.uchs[b].reader.take().expect("checked");
            self.complete(st, w, r);
        }
    }

    /// Allocates a channel: its conduit matrix and both endpoint states.
    /// Returns the keys of the `g` side and of the complement side.
    pub(crate) fn alloc_channel(
        &self,
        st: &mut State,
        g: Group,
        s: &SessionType,
        owner_g: AgentId,
        owner_co: AgentId,
    ) -> (EpKey, EpKey) {
        let n = self.universe().nrole();
        let chan = st.next_chan;
        st.next_chan += 1;
        let mut matrix = vec![None; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && g.contains(i) != g.contains(j) {
                    st.uchs.push(UchState::default());
                    matrix[i * n + j] = Some(st.uchs.len() - 1);
                }
            }
        }
        let matrix = Arc::new(matrix);
        let co = g.complement();
        let (kg, kc) = ((chan, polarity_of(g)), (chan, polarity_of(co)));
        for (key, group, owner, peer) in [(kg, g, owner_g, kc), (kc, co, owner_co, kg)] {
            st.endpoints.insert(
                key,
                EpState {
                    group,
                    cursor: s.clone(),
                    generation: 0,
                    consumed: false,
                    owner,
                    display: chan,
                    peer,
                    matrix: matrix.clone(),
                },
            );
        }
        st.progress += 1;
        (kg, kc)
    }

    pub(crate) fn check_channel_args(&self, g: Group, s: &SessionType) -> Result<(), RuntimeError> {
        let u = self.universe();
        if g.universe() != u {
            return Err(RoleError::UniverseMismatch(g.universe().nrole(), u.nrole()).into());
        }
        if !g.splits_universe() {
            return Err(RuntimeError::EmptyGroup(g));
        }
        if !well_formed(s, u) {
            return Err(RuntimeError::IllFormedSession(s.to_string()));
        }
        Ok(())
    }

    /// Creates a channel over `(g, s)`: a new agent runs `body` on the `g`
    /// endpoint and the caller gets the complement endpoint.
    pub fn chan_create<F>(&self, g: Group, s: SessionType, body: F) -> Result<Endpoint, RuntimeError>
    where
        F: FnOnce(Endpoint) -> Result<(), RuntimeError> + Send + 'static,
    {
        self.chan_create_carrying(g, s, Vec::new(), move |ep, _| body(ep))
    }

    /// [`Runtime::chan_create`] that also hands `carried` endpoints to the
    /// new agent, transferring their ownership at spawn time.
    pub fn chan_create_carrying<F>(
        &self,
        g: Group,
        s: SessionType,
        carried: Vec<Endpoint>,
        body: F,
    ) -> Result<Endpoint, RuntimeError>
    where
        F: FnOnce(Endpoint, Vec<Endpoint>) -> Result<(), RuntimeError> + Send + 'static,
    {
        self.check_channel_args(g, &s)?;
        let me = self.current_agent();
        let mut st = self.lock();
        for ep in &carried {
            ep.check_live(&st)?;
        }
        let id = self.register(&mut st);
        let carried: Vec<Endpoint> = carried.into_iter().map(|ep| ep.hand_over(&mut st, id)).collect();
        let (kg, kc) = self.alloc_channel(&mut st, g, &s, id, me);
        self.record(&mut st, "chan_create", vec![me, id], Some(kg.0), None);
        drop(st);
        let mine = Endpoint::new(self.clone(), kg, 0);
        self.start(id, "chan", move || body(mine, carried));
        Ok(Endpoint::new(self.clone(), kc, 0))
    }

    /// Creates two channels at once, both of whose `g1`/`g2` sides go to a
    /// single new agent. Needs the unsafe flag: the resulting ownership
    /// pattern can deadlock.
    pub fn chan2_create<F>(
        &self,
        g1: Group,
        s1: SessionType,
        g2: Group,
        s2: SessionType,
        body: F,
    ) -> Result<(Endpoint, Endpoint), RuntimeError>
    where
        F: FnOnce(Endpoint, Endpoint) -> Result<(), RuntimeError> + Send + 'static,
    {
        if !self.allow_unsafe() {
            return Err(RuntimeError::UnsafeDisabled);
        }
        self.check_channel_args(g1, &s1)?;
        self.check_channel_args(g2, &s2)?;
        let me = self.current_agent();
        let mut st = self.lock();
        let id = self.register(&mut st);
        let (k1, c1) = self.alloc_channel(&mut st, g1, &s1, id, me);
        let (k2, c2) = self.alloc_channel(&mut st, g2, &s2, id, me);
        self.record(&mut st, "chan2_create", vec![me, id], Some(k1.0), None);
        drop(st);
        let (e1, e2) = (Endpoint::new(self.clone(), k1, 0), Endpoint::new(self.clone(), k2, 0));
        self.start(id, "chan2", move || body(e1, e2));
        Ok((Endpoint::new(self.clone(), c1, 0), Endpoint::new(self.clone(), c2, 0)))
    }

    /// A persistent generator of `chan(g, s)` sessions run by `setup`.
    pub fn service_create<F>(&self, setup: F, g: Group, s: SessionType) -> Result<Service, RuntimeError>
    where
        F: Fn(Endpoint) -> Result<(), RuntimeError> + Send + Sync + 'static,
    {
        self.check_channel_args(g, &s)?;
        Ok(Service::new(self.clone(), g, s, Arc::new(setup)))
    }
}

fn set_status(st: &mut State, agent: AgentId, status: AgentStatus) {
    if let Some(a) = st.agents.get_mut(&agent) {
        a.status = status;
    }
}

fn others_finished(st: &State, me: AgentId) -> bool {
    st.agents.iter().all(|(id, a)| *id == me || a.status == AgentStatus::Finished)
}

/// One set per agent that is alive or still holds endpoints. A half is
/// listed only while its peer is also live: once one side closes, the other
/// can only skip and close, so the pair no longer constrains progress.
fn snapshot_of(st: &State) -> ChannelSetCollection {
    let mut sets: BTreeMap<AgentId, Vec<ChannelHalf>> = BTreeMap::new();
    for (id, a) in &st.agents {
        if a.status != AgentStatus::Finished {
            sets.insert(*id, Vec::new());
        }
    }
    for (key, e) in &st.endpoints {
        let peer_live = st.endpoints.get(&e.peer).is_some_and(|p| !p.consumed);
        if !e.consumed && peer_live {
            sets.entry(e.owner).or_default().push(ChannelHalf { id: e.display, polarity: key.1 });
        }
    }
    ChannelSetCollection::from_vecs(sets.into_values().collect())
}
