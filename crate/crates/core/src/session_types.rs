//! Session types over a role universe, and their group-relative reading.
//!
//! A `msg(i,j,T)` step means something different to each party: the holder
//! of group `G` sends when `i ∈ G, j ∉ G`, receives when `i ∉ G, j ∈ G`, and
//! skips it otherwise. [`classify`] is that table; [`head_action`] applies it
//! to the head of a session after [`unfold`]ing the derived constructors.
//!
//! Textual grammar:
//!
//! ```text
//! S    ::= nil | msg(i,j,SORT):S | choose(i,S,S) | append(S,S) | repeat(i,S)
//! SORT ::= unit | int | bool | str | chan({i,..},S) | (SORT,..)
//! ```

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::roles::{Group, Role, RoleError, RoleUniverse};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("message from role {0} to itself")]
    SelfMessage(Role),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("a labeled choice needs at least one branch")]
    EmptyChoice,
    #[error("label {label} out of range for a {count}-way choice")]
    LabelOutOfRange { label: usize, count: usize },
}

/// Sort of the value carried by a `msg` step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadSort {
    Unit,
    Int,
    Bool,
    Str,
    /// A delegated channel endpoint of the given group and session.
    Chan(Group, Arc<SessionType>),
    Tuple(Vec<PayloadSort>),
}

impl PayloadSort {
    pub fn chan(group: Group, proto: SessionType) -> Self {
        PayloadSort::Chan(group, Arc::new(proto))
    }

    /// Whether values of this sort carry channel endpoints.
    pub fn is_linear(&self) -> bool {
        match self {
            PayloadSort::Chan(..) => true,
            PayloadSort::Tuple(items) => items.iter().any(PayloadSort::is_linear),
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SessionType {
    Nil,
    Msg {
        from: Role,
        to: Role,
        payload: PayloadSort,
        rest: Arc<SessionType>,
    },
    Choose {
        decider: Role,
        left: Arc<SessionType>,
        right: Arc<SessionType>,
    },
    Append(Arc<SessionType>, Arc<SessionType>),
    Repeat {
        decider: Role,
        body: Arc<SessionType>,
    },
}

// Large unrolled sessions share subtrees; comparing shared children by
// pointer first keeps equality linear in the DAG size.
fn arc_eq(a: &Arc<SessionType>, b: &Arc<SessionType>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl PartialEq for SessionType {
    fn eq(&self, other: &Self) -> bool {
        use SessionType::*;
        match (self, other) {
            (Nil, Nil) => true,
            (
                Msg { from: f1, to: t1, payload: p1, rest: r1 },
                Msg { from: f2, to: t2, payload: p2, rest: r2 },
            ) => f1 == f2 && t1 == t2 && p1 == p2 && arc_eq(r1, r2),
            (
                Choose { decider: d1, left: l1, right: r1 },
                Choose { decider: d2, left: l2, right: r2 },
            ) => d1 == d2 && arc_eq(l1, l2) && arc_eq(r1, r2),
            (Append(a1, b1), Append(a2, b2)) => arc_eq(a1, a2) && arc_eq(b1, b2),
            (Repeat { decider: d1, body: b1 }, Repeat { decider: d2, body: b2 }) => {
                d1 == d2 && arc_eq(b1, b2)
            }
            _ => false,
        }
    }
}

impl Eq for SessionType {}

impl SessionType {
    pub fn nil() -> Self {
        SessionType::Nil
    }

    pub fn msg(from: Role, to: Role, payload: PayloadSort, rest: SessionType) -> Self {
        SessionType::Msg { from, to, payload, rest: Arc::new(rest) }
    }

    pub fn choose(decider: Role, left: SessionType, right: SessionType) -> Self {
        SessionType::Choose { decider, left: Arc::new(left), right: Arc::new(right) }
    }

    pub fn append(first: SessionType, second: SessionType) -> Self {
        SessionType::Append(Arc::new(first), Arc::new(second))
    }

    pub fn repeat(decider: Role, body: SessionType) -> Self {
        SessionType::Repeat { decider, body: Arc::new(body) }
    }

    /// Builds a session from a list of `(from, to, sort)` steps ending in `nil`.
    pub fn sequence(steps: impl IntoIterator<Item = (Role, Role, PayloadSort)>) -> Self {
        let steps: Vec<_> = steps.into_iter().collect();
        steps
            .into_iter()
            .rev()
            .fold(SessionType::Nil, |rest, (from, to, sort)| SessionType::msg(from, to, sort, rest))
    }

    pub fn is_repeat_free(&self) -> bool {
        match self {
            SessionType::Nil => true,
            SessionType::Msg { payload, rest, .. } => {
                sort_repeat_free(payload) && rest.is_repeat_free()
            }
            SessionType::Choose { left, right, .. } => left.is_repeat_free() && right.is_repeat_free(),
            SessionType::Append(a, b) => a.is_repeat_free() && b.is_repeat_free(),
            SessionType::Repeat { .. } => false,
        }
    }

    /// Number of constructors, counting shared subtrees once per occurrence.
    pub fn size(&self) -> usize {
        match self {
            SessionType::Nil => 1,
            SessionType::Msg { rest, .. } => 1 + rest.size(),
            SessionType::Choose { left, right, .. } => 1 + left.size() + right.size(),
            SessionType::Append(a, b) => 1 + a.size() + b.size(),
            SessionType::Repeat { body, .. } => 1 + body.size(),
        }
    }
}

fn sort_repeat_free(sort: &PayloadSort) -> bool {
    match sort {
        PayloadSort::Chan(_, s) => s.is_repeat_free(),
        PayloadSort::Tuple(items) => items.iter().all(sort_repeat_free),
        _ => true,
    }
}

/// How the holder of a group sees one `msg(from, to)` step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgAction {
    /// Both roles are inside the group; ignored.
    Internal,
    /// Send to the party implementing the given complement.
    SendTo(Group),
    /// Receive from the party implementing the given complement.
    RecvFrom(Group),
    /// Both roles are outside the group; ignored.
    External,
}

pub fn classify(g: Group, from: Role, to: Role) -> Result<MsgAction, SessionError> {
    let nrole = g.universe().nrole();
    for role in [from, to] {
        if role >= nrole {
            return Err(RoleError::RoleOutOfRange { role, nrole }.into());
        }
    }
    if from == to {
        return Err(SessionError::SelfMessage(from));
    }
    Ok(match (g.contains(from), g.contains(to)) {
        (true, true) => MsgAction::Internal,
        (true, false) => MsgAction::SendTo(g.complement()),
        (false, true) => MsgAction::RecvFrom(g.complement()),
        (false, false) => MsgAction::External,
    })
}

/// Every role is in range and no message is self-addressed, including
/// sessions nested in delegated-channel payloads. Shared subterms are
/// checked once, so unrolled sessions with shared tails stay linear.
pub fn well_formed(s: &SessionType, u: RoleUniverse) -> bool {
    WellFormed { u, seen: HashSet::new() }.session(s)
}

struct WellFormed {
    u: RoleUniverse,
    seen: HashSet<*const SessionType>,
}

impl WellFormed {
    fn shared(&mut self, s: &Arc<SessionType>) -> bool {
        !self.seen.insert(Arc::as_ptr(s)) || self.session(s)
    }

    fn session(&mut self, s: &SessionType) -> bool {
        let u = self.u;
        match s {
            SessionType::Nil => true,
            SessionType::Msg { from, to, payload, rest } => {
                u.contains(*from) && u.contains(*to) && from != to && self.sort(payload) && self.shared(rest)
            }
            SessionType::Choose { decider, left, right } => {
                u.contains(*decider) && self.shared(left) && self.shared(right)
            }
            SessionType::Append(a, b) => self.shared(a) && self.shared(b),
            SessionType::Repeat { decider, body } => u.contains(*decider) && self.shared(body),
        }
    }

    fn sort(&mut self, sort: &PayloadSort) -> bool {
        match sort {
            PayloadSort::Chan(g, s) => g.universe() == self.u && g.splits_universe() && self.shared(s),
            PayloadSort::Tuple(items) => items.iter().all(|t| self.sort(t)),
            _ => true,
        }
    }
}

/// One step of head normalization.
///
/// `repeat(i,S)` becomes `choose(i, nil, append(S, repeat(i,S)))`, and
/// `append` is pushed through the head of its first argument. `nil`, `msg`
/// and `choose` heads are returned unchanged.
pub fn unfold(s: &SessionType) -> SessionType {
    match s {
        SessionType::Repeat { decider, body } => SessionType::Choose {
            decider: *decider,
            left: Arc::new(SessionType::Nil),
            right: Arc::new(SessionType::Append(body.clone(), Arc::new(s.clone()))),
        },
        SessionType::Append(first, second) => match &**first {
            SessionType::Nil => (**second).clone(),
            SessionType::Msg { from, to, payload, rest } => SessionType::Msg {
                from: *from,
                to: *to,
                payload: payload.clone(),
                rest: Arc::new(SessionType::Append(rest.clone(), second.clone())),
            },
            SessionType::Choose { decider, left, right } => SessionType::Choose {
                decider: *decider,
                left: Arc::new(SessionType::Append(left.clone(), second.clone())),
                right: Arc::new(SessionType::Append(right.clone(), second.clone())),
            },
            SessionType::Append(a, b) => SessionType::Append(
                a.clone(),
                Arc::new(SessionType::Append(b.clone(), second.clone())),
            ),
            SessionType::Repeat { .. } => {
                SessionType::Append(Arc::new(unfold(first)), second.clone())
            }
        },
        other => other.clone(),
    }
}

/// Repeats [`unfold`] until the head is `nil`, `msg` or `choose`.
pub fn normalize_head(s: &SessionType) -> SessionType {
    let mut cur = s.clone();
    while matches!(cur, SessionType::Append(..) | SessionType::Repeat { .. }) {
        cur = unfold(&cur);
    }
    cur
}

/// Fully distributes `append` through a repeat-free session. Returns `None`
/// when `s` mentions `repeat`.
pub fn normal_form(s: &SessionType) -> Option<SessionType> {
    if !s.is_repeat_free() {
        return None;
    }
    fn go(s: &SessionType) -> SessionType {
        match normalize_head(s) {
            SessionType::Nil => SessionType::Nil,
            SessionType::Msg { from, to, payload, rest } => SessionType::msg(from, to, payload, go(&rest)),
            SessionType::Choose { decider, left, right } => SessionType::choose(decider, go(&left), go(&right)),
            _ => unreachable!("normalized head"),
        }
    }
    Some(go(s))
}

/// Equality up to `append` associativity and distribution. Sessions with
/// `repeat` are compared structurally.
pub fn sessions_equivalent(a: &SessionType, b: &SessionType) -> bool {
    if a == b {
        return true;
    }
    match (normal_form(a), normal_form(b)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

/// The message steps of a session that has no `choose` or `repeat`.
pub fn linear_steps(s: &SessionType) -> Option<Vec<(Role, Role, PayloadSort)>> {
    if !s.is_repeat_free() {
        return None;
    }
    let mut out = Vec::new();
    let mut cur = normalize_head(s);
    loop {
        match cur {
            SessionType::Nil => return Some(out),
            SessionType::Msg { from, to, payload, rest } => {
                out.push((from, to, payload));
                cur = normalize_head(&rest);
            }
            _ => return None,
        }
    }
}

/// What the holder of `g` must do next on a channel at session `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeadAction {
    Close,
    Send { from: Role, to: Role, payload: PayloadSort, cont: SessionType },
    Recv { from: Role, to: Role, payload: PayloadSort, cont: SessionType },
    /// An internal (`internal = true`) or external message.
    Skip { from: Role, to: Role, payload: PayloadSort, cont: SessionType, internal: bool },
    ChooseSend { decider: Role, left: SessionType, right: SessionType },
    ChooseRecv { decider: Role, left: SessionType, right: SessionType },
}

impl HeadAction {
    pub fn name(&self) -> &'static str {
        match self {
            HeadAction::Close => "close",
            HeadAction::Send { .. } => "send",
            HeadAction::Recv { .. } => "recv",
            HeadAction::Skip { .. } => "skip",
            HeadAction::ChooseSend { .. } => "choose",
            HeadAction::ChooseRecv { .. } => "offer",
        }
    }
}

pub fn head_action(g: Group, s: &SessionType) -> Result<HeadAction, SessionError> {
    Ok(match normalize_head(s) {
        SessionType::Nil => HeadAction::Close,
        SessionType::Msg { from, to, payload, rest } => {
            let cont = (*rest).clone();
            match classify(g, from, to)? {
                MsgAction::SendTo(_) => HeadAction::Send { from, to, payload, cont },
                MsgAction::RecvFrom(_) => HeadAction::Recv { from, to, payload, cont },
                MsgAction::Internal => HeadAction::Skip { from, to, payload, cont, internal: true },
                MsgAction::External => {
                    HeadAction::Skip { from, to, payload, cont, internal: false }
                }
            }
        }
        SessionType::Choose { decider, left, right } => {
            let nrole = g.universe().nrole();
            if decider >= nrole {
                return Err(RoleError::RoleOutOfRange { role: decider, nrole }.into());
            }
            let (left, right) = ((*left).clone(), (*right).clone());
            if g.contains(decider) {
                HeadAction::ChooseSend { decider, left, right }
            } else {
                HeadAction::ChooseRecv { decider, left, right }
            }
        }
        SessionType::Append(..) | SessionType::Repeat { .. } => unreachable!("normalized head"),
    })
}

/// Branch of a binary choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn bit(self) -> u8 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Side> {
        match bit {
            0 => Some(Side::Left),
            1 => Some(Side::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "L",
            Side::Right => "R",
        })
    }
}

/// An n-way choice by `decider`, encoded as right-nested binary choices:
/// label `k` is reached by `k` right turns then a left turn (the last label
/// by right turns only).
pub fn labeled_choice(decider: Role, branches: Vec<SessionType>) -> Result<SessionType, SessionError> {
    let mut iter = branches.into_iter().rev();
    let mut acc = iter.next().ok_or(SessionError::EmptyChoice)?;
    for branch in iter {
        acc = SessionType::choose(decider, branch, acc);
    }
    Ok(acc)
}

/// Path of binary choices selecting `label` in a `count`-way [`labeled_choice`].
pub fn label_path(label: usize, count: usize) -> Result<Vec<Side>, SessionError> {
    if label >= count {
        return Err(SessionError::LabelOutOfRange { label, count });
    }
    let mut path = vec![Side::Right; label];
    if label + 1 < count {
        path.push(Side::Left);
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Text form

impl fmt::Display for PayloadSort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayloadSort::Unit => f.write_str("unit"),
            PayloadSort::Int => f.write_str("int"),
            PayloadSort::Bool => f.write_str("bool"),
            PayloadSort::Str => f.write_str("str"),
            PayloadSort::Chan(g, s) => write!(f, "chan({g},{s})"),
            PayloadSort::Tuple(items) => {
                f.write_str("(")?;
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionType::Nil => f.write_str("nil"),
            SessionType::Msg { from, to, payload, rest } => {
                write!(f, "msg({from},{to},{payload}):{rest}")
            }
            SessionType::Choose { decider, left, right } => {
                write!(f, "choose({decider},{left},{right})")
            }
            SessionType::Append(a, b) => write!(f, "append({a},{b})"),
            SessionType::Repeat { decider, body } => write!(f, "repeat({decider},{body})"),
        }
    }
}

pub fn format_session(s: &SessionType) -> String {
    s.to_string()
}

pub fn parse_session(text: &str, universe: RoleUniverse) -> Result<SessionType, SessionError> {
    let mut p = Parser { text, pos: 0, universe };
    let s = p.session()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.error("trailing input"));
    }
    Ok(s)
}

pub fn parse_sort(text: &str, universe: RoleUniverse) -> Result<PayloadSort, SessionError> {
    let mut p = Parser { text, pos: 0, universe };
    let s = p.sort()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.error("trailing input"));
    }
    Ok(s)
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    universe: RoleUniverse,
}

impl Parser<'_> {
    fn error(&self, msg: impl Into<String>) -> SessionError {
        SessionError::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), SessionError> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn word(&mut self) -> Result<&str, SessionError> {
        self.skip_ws();
        let start = self.pos;
        let len = self.text[start..]
            .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .unwrap_or(self.text.len() - start);
        if len == 0 {
            return Err(self.error("expected a keyword"));
        }
        self.pos += len;
        Ok(&self.text[start..start + len])
    }

    fn role(&mut self) -> Result<Role, SessionError> {
        self.skip_ws();
        let start = self.pos;
        let len = self.text[start..]
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(self.text.len() - start);
        if len == 0 {
            return Err(self.error("expected a role index"));
        }
        self.pos += len;
        self.text[start..start + len]
            .parse()
            .map_err(|_| SessionError::Syntax { pos: start, msg: "role index too large".into() })
    }

    fn session(&mut self) -> Result<SessionType, SessionError> {
        let start = self.pos;
        match self.word()? {
            "nil" => Ok(SessionType::Nil),
            "msg" => {
                self.expect('(')?;
                let from = self.role()?;
                self.expect(',')?;
                let to = self.role()?;
                self.expect(',')?;
                let payload = self.sort()?;
                self.expect(')')?;
                self.expect(':')?;
                let rest = self.session()?;
                Ok(SessionType::msg(from, to, payload, rest))
            }
            "choose" => {
                self.expect('(')?;
                let decider = self.role()?;
                self.expect(',')?;
                let left = self.session()?;
                self.expect(',')?;
                let right = self.session()?;
                self.expect(')')?;
                Ok(SessionType::choose(decider, left, right))
            }
            "append" => {
                self.expect('(')?;
                let a = self.session()?;
                self.expect(',')?;
                let b = self.session()?;
                self.expect(')')?;
                Ok(SessionType::append(a, b))
            }
            "repeat" => {
                self.expect('(')?;
                let decider = self.role()?;
                self.expect(',')?;
                let body = self.session()?;
                self.expect(')')?;
                Ok(SessionType::repeat(decider, body))
            }
            other => Err(SessionError::Syntax {
                pos: start,
                msg: format!("unknown session constructor `{other}`"),
            }),
        }
    }

    fn sort(&mut self) -> Result<PayloadSort, SessionError> {
        if self.peek() == Some('(') {
            self.pos += 1;
            let mut items = Vec::new();
            if self.peek() == Some(')') {
                self.pos += 1;
                return Ok(PayloadSort::Tuple(items));
            }
            loop {
                items.push(self.sort()?);
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        return Ok(PayloadSort::Tuple(items));
                    }
                    _ => return Err(self.error("expected `,` or `)` in tuple sort")),
                }
            }
        }
        let start = self.pos;
        match self.word()? {
            "unit" => Ok(PayloadSort::Unit),
            "int" => Ok(PayloadSort::Int),
            "bool" => Ok(PayloadSort::Bool),
            "str" => Ok(PayloadSort::Str),
            "chan" => {
                self.expect('(')?;
                self.skip_ws();
                let group_start = self.pos;
                let close = self.text[group_start..]
                    .find('}')
                    .ok_or_else(|| self.error("unterminated group"))?;
                let literal = &self.text[group_start..group_start + close + 1];
                let group = self.universe.parse_group(literal).map_err(|e| SessionError::Syntax {
                    pos: group_start,
                    msg: e.to_string(),
                })?;
                self.pos = group_start + close + 1;
                self.expect(',')?;
                let proto = self.session()?;
                self.expect(')')?;
                Ok(PayloadSort::chan(group, proto))
            }
            other => Err(SessionError::Syntax { pos: start, msg: format!("unknown sort `{other}`") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u(n: usize) -> RoleUniverse {
        RoleUniverse::new(n).unwrap()
    }

    fn g(n: usize, members: &[Role]) -> Group {
        u(n).group(members.iter().copied()).unwrap()
    }

    fn m01() -> SessionType {
        SessionType::msg(0, 1, PayloadSort::Int, SessionType::Nil)
    }

    #[test]
    fn classify_four_scenarios() {
        assert!(matches!(classify(g(2, &[0]), 0, 1), Ok(MsgAction::SendTo(c)) if c == g(2, &[1])));
        assert!(matches!(classify(g(2, &[1]), 0, 1), Ok(MsgAction::RecvFrom(c)) if c == g(2, &[0])));
        assert_eq!(classify(g(3, &[0, 1]), 0, 1), Ok(MsgAction::Internal));
        assert_eq!(classify(g(3, &[2]), 0, 1), Ok(MsgAction::External));
        assert_eq!(classify(g(3, &[2]), 1, 1), Err(SessionError::SelfMessage(1)));
        assert!(classify(g(3, &[2]), 0, 3).is_err());
    }

    #[test]
    fn well_formedness() {
        assert!(well_formed(&m01(), u(2)));
        assert!(!well_formed(&SessionType::msg(0, 2, PayloadSort::Int, SessionType::Nil), u(2)));
        assert!(!well_formed(&SessionType::msg(1, 1, PayloadSort::Int, SessionType::Nil), u(2)));
        assert!(!well_formed(&SessionType::choose(5, SessionType::Nil, SessionType::Nil), u(3)));
        let bad_chan = PayloadSort::chan(g(2, &[0, 1]), SessionType::Nil);
        assert!(!well_formed(&SessionType::msg(0, 1, bad_chan, SessionType::Nil), u(2)));
    }

    #[test]
    fn unfold_examples() {
        assert_eq!(unfold(&SessionType::append(SessionType::Nil, m01())), m01());

        let rep = SessionType::repeat(0, m01());
        let expected = SessionType::choose(
            0,
            SessionType::Nil,
            SessionType::append(m01(), rep.clone()),
        );
        assert_eq!(unfold(&rep), expected);

        let m10 = SessionType::msg(1, 0, PayloadSort::Int, SessionType::Nil);
        assert_eq!(
            unfold(&SessionType::append(m01(), m10.clone())),
            SessionType::msg(0, 1, PayloadSort::Int, SessionType::append(SessionType::Nil, m10))
        );
        assert_eq!(unfold(&m01()), m01());
    }

    #[test]
    fn head_action_examples() {
        assert_eq!(head_action(g(2, &[0]), &SessionType::Nil), Ok(HeadAction::Close));
        let s = SessionType::msg(0, 1, PayloadSort::Int, SessionType::Nil);
        assert_eq!(
            head_action(g(3, &[1, 2]), &s),
            Ok(HeadAction::Recv { from: 0, to: 1, payload: PayloadSort::Int, cont: SessionType::Nil })
        );
        let c = SessionType::choose(0, m01(), SessionType::Nil);
        assert_eq!(
            head_action(g(2, &[0]), &c),
            Ok(HeadAction::ChooseSend { decider: 0, left: m01(), right: SessionType::Nil })
        );
        assert!(matches!(head_action(g(2, &[1]), &c), Ok(HeadAction::ChooseRecv { .. })));
    }

    #[test]
    fn labeled_choice_paths() {
        let branches: Vec<_> = (0..3)
            .map(|k| SessionType::msg(1, 0, PayloadSort::Int, if k == 0 { SessionType::Nil } else { m01() }))
            .collect();
        let s = labeled_choice(1, branches.clone()).unwrap();
        for (label, branch) in branches.iter().enumerate() {
            let mut cur = s.clone();
            for side in label_path(label, 3).unwrap() {
                match cur {
                    SessionType::Choose { left, right, .. } => {
                        cur = if side == Side::Left { (*left).clone() } else { (*right).clone() }
                    }
                    _ => panic!("path too long"),
                }
            }
            assert_eq!(&cur, branch);
        }
        assert_eq!(label_path(0, 1).unwrap(), vec![]);
        assert!(label_path(3, 3).is_err());
        assert_eq!(labeled_choice(0, vec![]), Err(SessionError::EmptyChoice));
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_session("msg(0,1,int):nil", u(2)).unwrap(), m01());
        assert_eq!(
            parse_session("choose(2, msg(2,0,str):nil, nil)", u(3)).unwrap(),
            SessionType::choose(2, SessionType::msg(2, 0, PayloadSort::Str, SessionType::Nil), SessionType::Nil)
        );
        let s = parse_session(" msg( 0 , 1 , chan({1}, nil) ) : repeat(1, msg(1,0,(int,bool)):nil)", u(2)).unwrap();
        assert_eq!(s.to_string(), "msg(0,1,chan({1},nil)):repeat(1,msg(1,0,(int,bool)):nil)");
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_session("msg(0,1,int)nil", u(2)) {
            Err(SessionError::Syntax { pos, .. }) => assert_eq!(pos, 12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_session("nil nil", u(2)), Err(SessionError::Syntax { pos: 4, .. })));
        assert!(matches!(parse_session("foo", u(2)), Err(SessionError::Syntax { pos: 0, .. })));
        assert!(parse_session("msg(0,1,chan({7},nil)):nil", u(2)).is_err());
    }

    /// Random well-formed sessions, shared with the round-trip property.
    pub(crate) fn arb_session(nrole: usize) -> impl Strategy<Value = SessionType> {
        arb_session_with(nrole, true)
    }

    fn arb_session_with(nrole: usize, with_repeat: bool) -> impl Strategy<Value = SessionType> {
        let universe = u(nrole);
        let leaf = Just(SessionType::Nil);
        leaf.prop_recursive(6, 48, 3, move |inner| {
            let role = 0..nrole;
            let pair = (0..nrole, 1..nrole).prop_map(move |(a, d)| (a, (a + d) % nrole));
            let sort = prop_oneof![
                Just(PayloadSort::Unit),
                Just(PayloadSort::Int),
                Just(PayloadSort::Bool),
                Just(PayloadSort::Str),
                Just(PayloadSort::Tuple(vec![PayloadSort::Int, PayloadSort::Str])),
                Just(PayloadSort::chan(universe.singleton(0).unwrap(), SessionType::Nil)),
            ];
            prop_oneof![
                (pair, sort, inner.clone()).prop_map(|((a, b), t, r)| SessionType::msg(a, b, t, r)),
                (role.clone(), inner.clone(), inner.clone()).prop_map(|(d, l, r)| SessionType::choose(d, l, r)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| SessionType::append(a, b)),
                (role, inner, Just(with_repeat)).prop_map(|(d, b, rep)| if rep {
                    SessionType::repeat(d, b)
                } else {
                    SessionType::append(b, SessionType::Nil)
                }),
            ]
        })
    }

    fn trace_prefix(g: Group, s: &SessionType, choices: &[Side], limit: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = s.clone();
        let mut k = 0;
        for _ in 0..limit {
            let act = head_action(g, &cur).unwrap();
            out.push(match &act {
                HeadAction::Send { from, to, .. }
                | HeadAction::Recv { from, to, .. }
                | HeadAction::Skip { from, to, .. } => format!("{}({from},{to})", act.name()),
                HeadAction::ChooseSend { decider, .. } | HeadAction::ChooseRecv { decider, .. } => {
                    format!("{}({decider})", act.name())
                }
                HeadAction::Close => "close".into(),
            });
            cur = match act {
                HeadAction::Close => break,
                HeadAction::Send { cont, .. } | HeadAction::Recv { cont, .. } | HeadAction::Skip { cont, .. } => cont,
                HeadAction::ChooseSend { left, right, .. } | HeadAction::ChooseRecv { left, right, .. } => {
                    let side = choices[k % choices.len()];
                    k += 1;
                    if side == Side::Left { left } else { right }
                }
            };
        }
        out
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(s in arb_session(3)) {
            let text = format_session(&s);
            prop_assert_eq!(parse_session(&text, u(3)).unwrap(), s);
        }

        #[test]
        fn classify_duality(n in 2usize..=5, bits in 0u64..32, i in 0usize..5, j in 0usize..5) {
            prop_assume!(i < n && j < n && i != j);
            let grp = u(n).group((0..n).filter(|r| bits & (1 << r) != 0)).unwrap();
            let a = classify(grp, i, j).unwrap();
            let b = classify(grp.complement(), i, j).unwrap();
            let swapped = match a {
                MsgAction::Internal => MsgAction::External,
                MsgAction::External => MsgAction::Internal,
                MsgAction::SendTo(_) => MsgAction::RecvFrom(grp),
                MsgAction::RecvFrom(_) => MsgAction::SendTo(grp),
            };
            prop_assert_eq!(b, swapped);
        }

        #[test]
        fn unfold_preserves_head_action(s in arb_session(3), bits in 1u64..7) {
            let grp = u(3).group((0..3).filter(|r| bits & (1 << r) != 0)).unwrap();
            prop_assert_eq!(head_action(grp, &s), head_action(grp, &unfold(&s)));
        }

        #[test]
        fn append_matches_concatenated_traces(a in arb_session_with(3, false), b in arb_session_with(3, false), bits in 1u64..7) {
            let grp = u(3).group((0..3).filter(|r| bits & (1 << r) != 0)).unwrap();
            let choices = [Side::Left, Side::Right, Side::Left];
            let appended = trace_prefix(grp, &SessionType::append(a.clone(), b.clone()), &choices, 500);
            let mut direct = trace_prefix(grp, &a, &choices, 500);
            let last = direct.pop();
            prop_assert_eq!(last.as_deref(), Some("close"));
            // the second half continues the choice sequence where the first stopped
            let used = count_choices(&direct);
            let rotated: Vec<Side> = (0..choices.len()).map(|k| choices[(k + used) % choices.len()]).collect();
            direct.extend(trace_prefix(grp, &b, &rotated, 500));
            prop_assert_eq!(appended, direct);
        }

        #[test]
        fn repeat_free_streams_end_in_close(s in arb_session_with(3, false), bits in 1u64..7) {
            let grp = u(3).group((0..3).filter(|r| bits & (1 << r) != 0)).unwrap();
            let t1 = trace_prefix(grp, &s, &[Side::Right, Side::Left], 10_000);
            let t2 = trace_prefix(grp, &s, &[Side::Right, Side::Left], 10_000);
            prop_assert_eq!(t1.last().map(String::as_str), Some("close"));
            prop_assert_eq!(t1, t2);
        }
    }

    fn count_choices(trace: &[String]) -> usize {
        trace.iter().filter(|a| a.starts_with("choose") || a.starts_with("offer")).count()
    }
}
