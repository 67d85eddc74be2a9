//! DF-reducibility of channel-set collections.
//!
//! A snapshot of a running system assigns to every thread (or agent) the set
//! of channel halves it holds. Such a collection DF-reduces via `ch+` by
//! merging the set holding `ch+` with the (different) set holding `ch-` and
//! dropping the pair. A collection is DF-reducible when all of its sets are
//! empty, or when it can reduce and every reduct is again DF-reducible.
//! Evaluation from channel-free origins keeps snapshots DF-reducible, and a
//! DF-reducible snapshot cannot be deadlocked.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn flip(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// One half of a channel: `ch+n` or `ch-n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelHalf {
    pub id: u64,
    pub polarity: Polarity,
}

impl ChannelHalf {
    pub fn pos(id: u64) -> Self {
        ChannelHalf { id, polarity: Polarity::Positive }
    }

    pub fn neg(id: u64) -> Self {
        ChannelHalf { id, polarity: Polarity::Negative }
    }

    pub fn dual(self) -> Self {
        ChannelHalf { id: self.id, polarity: self.polarity.flip() }
    }

    pub fn is_positive(self) -> bool {
        self.polarity == Polarity::Positive
    }
}

/// Written `3+` / `3-`.
impl fmt::Display for ChannelHalf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.is_positive() { '+' } else { '-' };
        write!(f, "{}{}", self.id, sign)
    }
}

impl FromStr for ChannelHalf {
    type Err = DfError;
    fn from_str(s: &str) -> Result<Self, DfError> {
        let s = s.trim();
        let bad = || DfError::Syntax(format!("bad channel half `{s}`"));
        let (digits, polarity) = if let Some(d) = s.strip_suffix('+') {
            (d, Polarity::Positive)
        } else if let Some(d) = s.strip_suffix('-') {
            (d, Polarity::Negative)
        } else {
            return Err(bad());
        };
        let id = digits.trim().parse().map_err(|_| bad())?;
        Ok(ChannelHalf { id, polarity })
    }
}

impl Serialize for ChannelHalf {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelHalf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DfError {
    #[error("DF-reduction via {0} is not enabled")]
    NotEnabled(ChannelHalf),
    #[error("collection is not regular: {0}")]
    IrregularInput(String),
    #[error("{0}")]
    Syntax(String),
}

/// A multiset of channel-half sets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelSetCollection {
    pub sets: Vec<BTreeSet<ChannelHalf>>,
}

impl ChannelSetCollection {
    pub fn new(sets: Vec<BTreeSet<ChannelHalf>>) -> Self {
        ChannelSetCollection { sets }
    }

    pub fn from_vecs(sets: Vec<Vec<ChannelHalf>>) -> Self {
        ChannelSetCollection { sets: sets.into_iter().map(|s| s.into_iter().collect()).collect() }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn all_sets_empty(&self) -> bool {
        self.sets.iter().all(BTreeSet::is_empty)
    }

    fn occurrences(&self) -> BTreeMap<ChannelHalf, usize> {
        let mut counts = BTreeMap::new();
        for half in self.sets.iter().flatten() {
            *counts.entry(*half).or_insert(0) += 1;
        }
        counts
    }

    /// Why the collection is not regular, if it is not.
    pub fn irregularity(&self) -> Option<String> {
        let counts = self.occurrences();
        if let Some((half, _)) = counts.iter().find(|(_, n)| **n > 1) {
            return Some(format!("{half} occurs in more than one set"));
        }
        counts
            .keys()
            .find(|half| !counts.contains_key(&half.dual()))
            .map(|half| format!("{half} is present but {} is not", half.dual()))
    }

    /// Channel ids whose both halves lie in the same set.
    pub fn self_looping_sets(&self) -> Vec<usize> {
        self.sets
            .iter()
            .enumerate()
            .filter(|(_, set)| set.iter().any(|h| h.is_positive() && set.contains(&h.dual())))
            .map(|(k, _)| k)
            .collect()
    }

    /// Positive halves through which a DF-reduction is enabled.
    pub fn enabled_reductions(&self) -> Vec<ChannelHalf> {
        let mut out = Vec::new();
        for (k, set) in self.sets.iter().enumerate() {
            for half in set.iter().filter(|h| h.is_positive()) {
                let dual = half.dual();
                if self.sets.iter().enumerate().any(|(l, other)| l != k && other.contains(&dual)) {
                    out.push(*half);
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

/// Literal syntax `[{1+,2-},{2+,1-}]`.
impl fmt::Display for ChannelSetCollection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, set) in self.sets.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            f.write_str("{")?;
            for (l, half) in set.iter().enumerate() {
                if l > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{half}")?;
            }
            f.write_str("}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for ChannelSetCollection {
    type Err = DfError;
    fn from_str(text: &str) -> Result<Self, DfError> {
        let inner = text
            .trim()
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| DfError::Syntax("collection must be wrapped in [ ]".into()))?;
        let mut sets = Vec::new();
        let mut rest = inner.trim();
        while !rest.is_empty() {
            let body_start = rest
                .strip_prefix('{')
                .ok_or_else(|| DfError::Syntax(format!("expected `{{` at `{rest}`")))?;
            let close = body_start
                .find('}')
                .ok_or_else(|| DfError::Syntax("unterminated set".into()))?;
            let mut set = BTreeSet::new();
            for item in body_start[..close].split(',').map(str::trim).filter(|s| !s.is_empty()) {
                set.insert(item.parse()?);
            }
            sets.push(set);
            rest = body_start[close + 1..].trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
                if rest.is_empty() {
                    return Err(DfError::Syntax("trailing comma".into()));
                }
            } else if !rest.is_empty() {
                return Err(DfError::Syntax(format!("expected `,` at `{rest}`")));
            }
        }
        Ok(ChannelSetCollection { sets })
    }
}

pub fn is_regular(m: &ChannelSetCollection) -> bool {
    m.irregularity().is_none()
}

/// Merges the set holding `via` with the set holding its dual, dropping both
/// halves.
pub fn df_reduce(m: &ChannelSetCollection, via: ChannelHalf) -> Result<ChannelSetCollection, DfError> {
    if !via.is_positive() {
        return Err(DfError::NotEnabled(via));
    }
    let k1 = m.sets.iter().position(|s| s.contains(&via));
    let k2 = m.sets.iter().position(|s| s.contains(&via.dual()));
    let (k1, k2) = match (k1, k2) {
        (Some(a), Some(b)) if a != b => (a, b),
        _ => return Err(DfError::NotEnabled(via)),
    };
    let mut merged: BTreeSet<ChannelHalf> = m.sets[k1].union(&m.sets[k2]).copied().collect();
    merged.remove(&via);
    merged.remove(&via.dual());
    let mut sets: Vec<_> = m
        .sets
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != k1 && *k != k2)
        .map(|(_, s)| s.clone())
        .collect();
    sets.push(merged);
    Ok(ChannelSetCollection { sets })
}

/// Decides DF-reducibility by exhaustive search over all reduction orders,
/// memoized on a renaming-invariant key.
///
/// Empty collections and irregular ones are rejected.
pub fn is_df_reducible(m: &ChannelSetCollection) -> Result<bool, DfError> {
    if m.is_empty() {
        return Err(DfError::IrregularInput("empty collection".into()));
    }
    if let Some(why) = m.irregularity() {
        return Err(DfError::IrregularInput(why));
    }
    let mut memo = HashMap::new();
    Ok(decide(m, &mut memo))
}

fn decide(m: &ChannelSetCollection, memo: &mut HashMap<CanonicalKey, bool>) -> bool {
    if m.all_sets_empty() {
        return true;
    }
    let key = canonical_key(m);
    if let Some(&known) = memo.get(&key) {
        return known;
    }
    let vias = m.enabled_reductions();
    let answer = !vias.is_empty()
        && vias.into_iter().all(|via| {
            let reduct = df_reduce(m, via).expect("enumerated reduction is enabled");
            decide(&reduct, memo)
        });
    memo.insert(key, answer);
    answer
}

/// Memo key: non-empty sets only, channel ids renumbered by first occurrence
/// after ordering sets by a label-independent signature.
///
/// Two collections with the same key are equal up to renaming ids and
/// reordering sets, so they agree on DF-reducibility. Empty sets never take
/// part in a reduction, so they are dropped.
pub type CanonicalKey = Vec<Vec<(u32, bool)>>;

pub fn canonical_key(m: &ChannelSetCollection) -> CanonicalKey {
    let mut sets: Vec<&BTreeSet<ChannelHalf>> = m.sets.iter().filter(|s| !s.is_empty()).collect();
    let signature = |s: &BTreeSet<ChannelHalf>| {
        let pos = s.iter().filter(|h| h.is_positive()).count();
        let looped = s.iter().filter(|h| h.is_positive() && s.contains(&h.dual())).count();
        (s.len(), pos, looped)
    };
    sets.sort_by_key(|s| signature(s));
    let mut rename: HashMap<u64, u32> = HashMap::new();
    let mut key: CanonicalKey = Vec::with_capacity(sets.len());
    for set in sets {
        // positives first so the relabeling does not depend on raw ids
        let mut ordered: Vec<&ChannelHalf> = set.iter().collect();
        ordered.sort_by_key(|h| (!h.is_positive(), rename.get(&h.id).copied().unwrap_or(u32::MAX)));
        let mut row = Vec::with_capacity(ordered.len());
        for half in ordered {
            let next = rename.len() as u32;
            let id = *rename.entry(half.id).or_insert(next);
            row.push((id, half.is_positive()));
        }
        row.sort_unstable();
        key.push(row);
    }
    key.sort();
    key
}

/// Result of checking every snapshot of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreservationReport {
    pub steps_checked: usize,
    pub first_violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub step: u64,
    pub rule: String,
    pub snapshot: ChannelSetCollection,
    pub reason: String,
}

impl PreservationReport {
    pub fn is_clean(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks that every snapshot along a trace is DF-reducible.
pub fn check_trace_preservation(trace: &crate::trace::Trace) -> PreservationReport {
    let mut report = PreservationReport { steps_checked: 0, first_violation: None };
    for record in &trace.records {
        report.steps_checked += 1;
        let snapshot = record.snapshot();
        let reason = match is_df_reducible(&snapshot) {
            Ok(true) => continue,
            Ok(false) => "not DF-reducible".to_string(),
            Err(e) => e.to_string(),
        };
        report.first_violation = Some(Violation {
            step: record.step,
            rule: record.rule.clone(),
            snapshot,
            reason,
        });
        break;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coll(text: &str) -> ChannelSetCollection {
        text.parse().unwrap()
    }

    #[test]
    fn literal_round_trip() {
        let m = coll("[{1+, 2-}, {2+,1-}, {}]");
        assert_eq!(m.to_string(), "[{1+,2-},{1-,2+},{}]");
        assert_eq!(coll(&m.to_string()), m);
        assert_eq!(coll("[]"), ChannelSetCollection::default());
        assert!("[{1+},]".parse::<ChannelSetCollection>().is_err());
        assert!("{1+}".parse::<ChannelSetCollection>().is_err());
        assert!("[{1*}]".parse::<ChannelSetCollection>().is_err());
    }

    #[test]
    fn regularity_examples() {
        assert!(is_regular(&coll("[{},{}]")));
        assert!(!is_regular(&ChannelSetCollection::from_vecs(vec![
            vec![ChannelHalf::pos(1)],
            vec![ChannelHalf::pos(1)],
        ])));
        assert!(!is_regular(&coll("[{1+}]")));
        assert!(is_regular(&coll("[{1+},{1-}]")));
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(df_reduce(&coll("[{1+},{1-}]"), ChannelHalf::pos(1)).unwrap(), coll("[{}]"));
        assert_eq!(
            df_reduce(&coll("[{1+,2+},{1-},{2-}]"), ChannelHalf::pos(1)).unwrap(),
            coll("[{2-},{2+}]")
        );
        assert_eq!(
            df_reduce(&coll("[{1+,1-}]"), ChannelHalf::pos(1)),
            Err(DfError::NotEnabled(ChannelHalf::pos(1)))
        );
        assert!(df_reduce(&coll("[{1+},{1-}]"), ChannelHalf::neg(1)).is_err());
        assert!(df_reduce(&coll("[{1+},{1-}]"), ChannelHalf::pos(2)).is_err());
    }

    #[test]
    fn reducibility_examples() {
        assert_eq!(is_df_reducible(&coll("[{},{},{}]")), Ok(true));
        assert_eq!(is_df_reducible(&coll("[{1+,1-}]")), Ok(false));
        assert_eq!(is_df_reducible(&coll("[{1+,2-},{2+,1-}]")), Ok(false));
        assert_eq!(is_df_reducible(&coll("[{1+},{1-,2+},{2-}]")), Ok(true));
        assert_eq!(is_df_reducible(&coll("[{1+},{1-},{2+,2-}]")), Ok(false));
        assert!(matches!(is_df_reducible(&coll("[]")), Err(DfError::IrregularInput(_))));
        assert!(matches!(is_df_reducible(&coll("[{3+}]")), Err(DfError::IrregularInput(_))));
    }

    #[test]
    fn canonical_key_ignores_renaming_and_order() {
        let a = coll("[{1+,2-},{1-},{2+},{}]");
        let b = coll("[{7+},{9+,7-},{9-}]");
        assert_eq!(canonical_key(&a), canonical_key(&b));
        assert_ne!(canonical_key(&a), canonical_key(&coll("[{1+,1-},{2+},{2-}]")));
    }

    #[test]
    fn self_looping_detection() {
        assert_eq!(coll("[{1+},{2+,2-,1-}]").self_looping_sets(), vec![1]);
    }
}
