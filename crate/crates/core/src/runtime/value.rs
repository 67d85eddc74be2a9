use std::fmt;

use super::{EpKey, Endpoint};

/// A message payload.
#[derive(Debug, Clone)]
pub enum DynValue {
    Unit,
    Int(i64),
    Bool(bool),
    Str(String),
    /// A delegated endpoint; delivering it transfers exclusive use.
    Endpoint(Endpoint),
    Tuple(Vec<DynValue>),
}

impl DynValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            DynValue::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            DynValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn into_endpoint(self) -> Option<Endpoint> {
        match self {
            DynValue::Endpoint(ep) => Some(ep),
            _ => None,
        }
    }

    pub(crate) fn endpoint_keys(&self) -> Vec<EpKey> {
        let mut out = Vec::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys(&self, out: &mut Vec<EpKey>) {
        match self {
            DynValue::Endpoint(ep) => out.push(ep.key()),
            DynValue::Tuple(items) => items.iter().for_each(|v| v.collect_keys(out)),
            _ => {}
        }
    }
}

/// Endpoints compare by channel half, ignoring handle generations.
impl PartialEq for DynValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (DynValue::Unit, DynValue::Unit) => true,
            (DynValue::Int(a), DynValue::Int(b)) => a == b,
            (DynValue::Bool(a), DynValue::Bool(b)) => a == b,
            (DynValue::Str(a), DynValue::Str(b)) => a == b,
            (DynValue::Endpoint(a), DynValue::Endpoint(b)) => a.key() == b.key(),
            (DynValue::Tuple(a), DynValue::Tuple(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for DynValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynValue::Unit => f.write_str("()"),
            DynValue::Int(n) => write!(f, "{n}"),
            DynValue::Bool(b) => write!(f, "{b}"),
            DynValue::Str(s) => write!(f, "{s:?}"),
            DynValue::Endpoint(ep) => write!(f, "ep({})", ep.half()),
            DynValue::Tuple(items) => {
                f.write_str("(")?;
                for (k, v) in items.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl From<()> for DynValue {
    fn from(_: ()) -> Self {
        DynValue::Unit
    }
}

impl From<i64> for DynValue {
    fn from(n: i64) -> Self {
        DynValue::Int(n)
    }
}

impl From<bool> for DynValue {
    fn from(b: bool) -> Self {
        DynValue::Bool(b)
    }
}

impl From<&str> for DynValue {
    fn from(s: &str) -> Self {
        DynValue::Str(s.to_string())
    }
}

impl From<String> for DynValue {
    fn from(s: String) -> Self {
        DynValue::Str(s)
    }
}

impl From<Endpoint> for DynValue {
    fn from(ep: Endpoint) -> Self {
        DynValue::Endpoint(ep)
    }
}
