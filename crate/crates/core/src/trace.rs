//! JSON-lines execution traces.
//!
//! Each line is one step: `{step, rule, tids, chan_id?, payload?, rho_ch}`,
//! where `rho_ch` lists, per thread or agent, the channel halves it holds
//! after the step. The first record of a trace has rule `init`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::df_analysis::{ChannelHalf, ChannelSetCollection};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub rule: String,
    pub tids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chan_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    pub rho_ch: Vec<Vec<ChannelHalf>>,
}

impl TraceRecord {
    pub fn snapshot(&self) -> ChannelSetCollection {
        ChannelSetCollection::from_vecs(self.rho_ch.clone())
    }
}

pub fn rho_ch_of(m: &ChannelSetCollection) -> Vec<Vec<ChannelHalf>> {
    m.sets.iter().map(|s| s.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Blank lines are ignored.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Trace, TraceError> {
        let mut records = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|source| TraceError::Json { line: k + 1, source })?;
            records.push(record);
        }
        Ok(Trace { records })
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        Trace::read_jsonl(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn record_shape() {
        let r = TraceRecord {
            step: 1,
            rule: "PR3".into(),
            tids: vec![0, 1],
            chan_id: Some(4),
            payload: None,
            rho_ch: vec![vec![ChannelHalf::neg(4)], vec![ChannelHalf::pos(4)]],
        };
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(line, r#"{"step":1,"rule":"PR3","tids":[0,1],"chan_id":4,"rho_ch":[["4-"],["4+"]]}"#);
        assert_eq!(r.snapshot().to_string(), "[{4-},{4+}]");
    }

    #[test]
    fn rejects_bad_lines() {
        let err = Trace::from_jsonl("{\"step\":0}\n").unwrap_err();
        assert!(err.to_string().starts_with("line 1"));
        assert!(Trace::from_jsonl("\n\n").unwrap().is_empty());
    }

    pub(crate) fn arb_record() -> impl Strategy<Value = TraceRecord> {
        let half = (0u64..20, any::<bool>())
            .prop_map(|(id, p)| if p { ChannelHalf::pos(id) } else { ChannelHalf::neg(id) });
        (
            any::<u64>(),
            "[A-Za-z0-9_-]{1,10}",
            prop::collection::vec(any::<u64>(), 0..4),
            prop::option::of(any::<u64>()),
            prop::option::of(".{0,12}"),
            prop::collection::vec(prop::collection::vec(half, 0..4), 0..5),
        )
            .prop_map(|(step, rule, tids, chan_id, payload, rho_ch)| TraceRecord {
                step,
                rule,
                tids,
                chan_id,
                payload,
                rho_ch,
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(records in prop::collection::vec(arb_record(), 0..6)) {
            let trace = Trace { records };
            let back = Trace::from_jsonl(&trace.to_jsonl()).unwrap();
            prop_assert_eq!(back, trace);
        }
    }
}
