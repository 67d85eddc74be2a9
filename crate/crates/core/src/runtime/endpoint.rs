use std::fmt;

use super::{AgentId, Carried, DynValue, EpKey, Runtime, RuntimeError, State};
use crate::df_analysis::ChannelHalf;
use crate::roles::{Group, Role};
use crate::session_types::{head_action, sessions_equivalent, HeadAction, PayloadSort, SessionType, Side};

/// A handle on one channel half. Handles are cheap to clone, but only the
/// one returned by the latest operation is live.
#[derive(Clone)]
pub struct Endpoint {
    rt: Runtime,
    key: EpKey,
    generation: u64,
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Endpoint({} gen {})", self.half(), self.generation)
    }
}

fn describe(head: &HeadAction) -> String {
    match head {
        HeadAction::Close => "close".to_string(),
        HeadAction::Send { from, to, payload, .. } => format!("send({from},{to},{payload})"),
        HeadAction::Recv { from, to, payload, .. } => format!("recv({from},{to},{payload})"),
        HeadAction::Skip { from, to, .. } => format!("skip of msg({from},{to})"),
        HeadAction::ChooseSend { decider, .. } => format!("choose by {decider}"),
        HeadAction::ChooseRecv { decider, .. } => format!("choose_tag from {decider}"),
    }
}

impl Endpoint {
    pub(crate) fn new(rt: Runtime, key: EpKey, generation: u64) -> Self {
        Endpoint { rt, key, generation }
    }

    pub(crate) fn key(&self) -> EpKey {
        self.key
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn chan_id(&self) -> u64 {
        self.key.0
    }

    pub fn half(&self) -> ChannelHalf {
        ChannelHalf { id: self.key.0, polarity: self.key.1 }
    }

    pub fn group(&self) -> Group {
        self.rt.lock().endpoints[&self.key].group
    }

    pub fn cursor(&self) -> SessionType {
        self.rt.lock().endpoints[&self.key].cursor.clone()
    }

    pub fn is_live(&self) -> bool {
        self.check_live(&self.rt.lock()).is_ok()
    }

    /// What the session requires next on this endpoint.
    pub fn head(&self) -> Result<HeadAction, RuntimeError> {
        let st = self.rt.lock();
        self.begin(&st)
    }

    pub(crate) fn check_live(&self, st: &State) -> Result<(), RuntimeError> {
        match st.endpoints.get(&self.key) {
            Some(e) if !e.consumed && e.generation == self.generation => Ok(()),
            _ => Err(RuntimeError::UseAfterConsume(self.half())),
        }
    }

    /// Moves ownership to `agent`, invalidating this handle.
    pub(crate) fn hand_over(self, st: &mut State, agent: AgentId) -> Endpoint {
        let e = st.endpoints.get_mut(&self.key).expect("checked live");
        e.generation += 1;
        e.owner = agent;
        Endpoint { generation: e.generation, ..self }
    }

    fn begin(&self, st: &State) -> Result<HeadAction, RuntimeError> {
        self.check_live(st)?;
        let e = &st.endpoints[&self.key];
        head_action(e.group, &e.cursor).map_err(|err| RuntimeError::ProtocolViolation {
            chan: self.half(),
            expected: "a well-formed session".to_string(),
            attempted: err.to_string(),
        })
    }

    fn violation(&self, head: &HeadAction, attempted: String) -> RuntimeError {
        RuntimeError::ProtocolViolation { chan: self.half(), expected: describe(head), attempted }
    }

    /// Invalidates the caller's handle and claims the endpoint for `me`.
    fn consume(&self, st: &mut State, me: AgentId) -> (u64, std::sync::Arc<Vec<Option<usize>>>) {
        let e = st.endpoints.get_mut(&self.key).expect("checked live");
        e.generation += 1;
        e.owner = me;
        (e.display, e.matrix.clone())
    }

    fn finish(&self, st: &mut State, cursor: SessionType) -> Endpoint {
        let e = st.endpoints.get_mut(&self.key).expect("endpoint state outlives handles");
        e.cursor = cursor;
        Endpoint { rt: self.rt.clone(), key: self.key, generation: e.generation }
    }

    fn cell(&self, from: Role, to: Role, matrix: &[Option<usize>]) -> usize {
        let n = self.rt.universe().nrole();
        matrix[from * n + to].expect("classified steps cross the boundary")
    }

    pub fn send(self, from: Role, to: Role, v: impl Into<DynValue>) -> Result<Endpoint, RuntimeError> {
        let v = v.into();
        let me = self.rt.current_agent();
        let rt = self.rt.clone();
        let mut st = rt.lock();
        let head = self.begin(&st)?;
        let cont = match &head {
            HeadAction::Send { from: f, to: t, payload, cont } if *f == from && *t == to => {
                let mut seen = Vec::new();
                if !value_matches(&st, &v, payload, self.key, &mut seen) {
                    return Err(self.violation(&head, format!("send({from},{to},{v})")));
                }
                cont.clone()
            }
            _ => return Err(self.violation(&head, format!("send({from},{to})"))),
        };
        let v = claim(&mut st, v);
        let (display, matrix) = self.consume(&mut st, me);
        let uch = self.cell(from, to, &matrix);
        let (mut st, r) = rt.write(st, uch, me, display, Carried::Value(v));
        r?;
        Ok(self.finish(&mut st, cont))
    }

    pub fn recv(self, from: Role, to: Role) -> Result<(DynValue, Endpoint), RuntimeError> {
        let me = self.rt.current_agent();
        let rt = self.rt.clone();
        let mut st = rt.lock();
        let head = self.begin(&st)?;
        let cont = match &head {
            HeadAction::Recv { from: f, to: t, cont, .. } if *f == from && *t == to => cont.clone(),
            _ => return Err(self.violation(&head, format!("recv({from},{to})"))),
        };
        let (display, matrix) = self.consume(&mut st, me);
        let uch = self.cell(from, to, &matrix);
        let (mut st, r) = rt.read(st, uch, me, display);
        match r? {
            Carried::Value(v) => Ok((v, self.finish(&mut st, cont))),
            Carried::Tag(_) => Err(self.violation(&head, "a choice tag arrived".to_string())),
        }
    }

    /// Steps over an internal or external message; no communication.
    pub fn skip(self) -> Result<Endpoint, RuntimeError> {
        let me = self.rt.current_agent();
        let rt = self.rt.clone();
        let mut st = rt.lock();
        let head = self.begin(&st)?;
        let HeadAction::Skip { cont, .. } = &head else {
            return Err(self.violation(&head, "skip".to_string()));
        };
        let cont = cont.clone();
        let (display, _) = self.consume(&mut st, me);
        st.progress += 1;
        rt.record(&mut st, "skip", vec![me], Some(display), None);
        Ok(self.finish(&mut st, cont))
    }

    pub fn close(self) -> Result<(), RuntimeError> {
        let me = self.rt.current_agent();
        let rt = self.rt.clone();
        let mut st = rt.lock();
        let head = self.begin(&st)?;
        if head != HeadAction::Close {
            return Err(self.violation(&head, "close".to_string()));
        }
        let (display, _) = self.consume(&mut st, me);
        st.endpoints.get_mut(&self.key).expect("live").consumed = true;
        st.progress += 1;
        rt.record(&mut st, "close", vec![me], Some(display), None);
        rt.inner.cv.notify_all();
        Ok(())
    }

    /// Selects a branch, sending the tag once to each role of the
    /// complement in ascending order.
    pub fn choose(self, side: Side) -> Result<Endpoint, RuntimeError> {
        let me = self.rt.current_agent();
        let rt = self.rt.clone();
        let mut st = rt.lock();
        let head = self.begin(&st)?;
        let HeadAction::ChooseSend { decider, left, right } = &head else {
            return Err(self.violation(&head, format!("choose {side}")));
        };
        let (decider, branch) = (*decider, if side == Side::Left { left.clone() } else { right.clone() });
        let group = st.endpoints[&self.key].group;
        let (display, matrix) = self.consume(&mut st, me);
        for j in group.complement().members() {
            let (next, r) = rt.write(st, self.cell(decider, j, &matrix), me, display, Carried::Tag(side));
            st = next;
            r?;
        }
        Ok(self.finish(&mut st, branch))
    }

    pub fn choose_l(self) -> Result<Endpoint, RuntimeError> {
        self.choose(Side::Left)
    }

    pub fn choose_r(self) -> Result<Endpoint, RuntimeError> {
        self.choose(Side::Right)
    }

    /// Receives the decider's tag once per role of this endpoint's group.
    pub fn choose_tag(self) -> Result<(Side, Endpoint), RuntimeError> {
        let me = self.rt.current_agent();
        let rt = self.rt.clone();
        let mut st = rt.lock();
        let head = self.begin(&st)?;
        let HeadAction::ChooseRecv { decider, left, right } = &head else {
            return Err(self.violation(&head, "choose_tag".to_string()));
        };
        let (decider, left, right) = (*decider, left.clone(), right.clone());
        let group = st.endpoints[&self.key].group;
        let (display, matrix) = self.consume(&mut st, me);
        let mut tags = Vec::new();
        for j in group.members() {
            let (next, r) = rt.read(st, self.cell(decider, j, &matrix), me, display);
            st = next;
            match r? {
                Carried::Tag(side) => tags.push(side),
                Carried::Value(v) => return Err(self.violation(&head, format!("value {v} instead of a tag"))),
            }
        }
        let side = tags[0];
        if tags.iter().any(|t| *t != side) {
            return Err(RuntimeError::InconsistentBroadcast(self.half()));
        }
        let branch = if side == Side::Left { left } else { right };
        Ok((side, self.finish(&mut st, branch)))
    }

    /// On a cursor `append(s0, s1)`: runs `segment` on this endpoint at
    /// `s0`, checks it hands back the same endpoint at `nil`, and returns
    /// the endpoint at `s1`.
    pub fn chan_append<F>(self, segment: F) -> Result<Endpoint, RuntimeError>
    where
        F: FnOnce(Endpoint) -> Result<Endpoint, RuntimeError>,
    {
        let me = self.rt.current_agent();
        let rt = self.rt.clone();
        let (rest, inner) = {
            let mut st = rt.lock();
            self.check_live(&st)?;
            let cursor = st.endpoints[&self.key].cursor.clone();
            let SessionType::Append(first, rest) = cursor else {
                let head = self.begin(&st)?;
                return Err(self.violation(&head, "chan_append".to_string()));
            };
            self.consume(&mut st, me);
            (rest, self.finish(&mut st, (*first).clone()))
        };
        let back = segment(inner)?;
        if back.key != self.key || !std::sync::Arc::ptr_eq(&back.rt.inner, &rt.inner) {
            return Err(RuntimeError::SegmentIdentityViolation { expected: self.half(), found: back.half() });
        }
        let mut st = rt.lock();
        let head = back.begin(&st)?;
        if head != HeadAction::Close {
            return Err(RuntimeError::SegmentIncomplete(st.endpoints[&self.key].cursor.to_string()));
        }
        back.consume(&mut st, me);
        Ok(back.finish(&mut st, (*rest).clone()))
    }
}

/// Whether `v` has sort `sort`; delegated endpoints must be live, distinct,
/// not the sending endpoint, and at the advertised group and session.
fn value_matches(st: &State, v: &DynValue, sort: &PayloadSort, sender: EpKey, seen: &mut Vec<EpKey>) -> bool {
    match (v, sort) {
        (DynValue::Unit, PayloadSort::Unit)
        | (DynValue::Int(_), PayloadSort::Int)
        | (DynValue::Bool(_), PayloadSort::Bool)
        | (DynValue::Str(_), PayloadSort::Str) => true,
        (DynValue::Tuple(items), PayloadSort::Tuple(sorts)) => {
            items.len() == sorts.len() && items.iter().zip(sorts).all(|(v, s)| value_matches(st, v, s, sender, seen))
        }
        (DynValue::Endpoint(ep), PayloadSort::Chan(g, s)) => {
            let key = ep.key();
            if key == sender || seen.contains(&key) || ep.check_live(st).is_err() {
                return false;
            }
            seen.push(key);
            let e = &st.endpoints[&key];
            e.group == *g && sessions_equivalent(&e.cursor, s)
        }
        _ => false,
    }
}

/// Invalidates the sender's handles on delegated endpoints.
fn claim(st: &mut State, v: DynValue) -> DynValue {
    match v {
        DynValue::Endpoint(ep) => {
            let e = st.endpoints.get_mut(&ep.key).expect("checked live");
            e.generation += 1;
            DynValue::Endpoint(Endpoint { generation: e.generation, ..ep })
        }
        DynValue::Tuple(items) => DynValue::Tuple(items.into_iter().map(|v| claim(st, v)).collect()),
        other => other,
    }
}
