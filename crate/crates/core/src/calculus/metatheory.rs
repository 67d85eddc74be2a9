//! Per-run checks of the calculus' safety properties: every step keeps the
//! pool typeable at a subtype of its original type, a non-final pool always
//! has an enabled step, and every ownership snapshot is DF-reducible.

use serde::Serialize;

use super::pool::{run_pool_with, Pool, RunError, RunStatus};
use crate::df_analysis::check_trace_preservation;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Typing,
    SubjectReduction,
    Progress,
    DfPreservation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyViolation {
    pub kind: PropertyKind,
    pub step: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunCheck {
    pub seed: u64,
    pub status: Option<RunStatus>,
    pub steps: u64,
    pub violation: Option<PropertyViolation>,
}

impl RunCheck {
    pub fn is_clean(&self) -> bool {
        self.violation.is_none()
    }
}

/// Runs `pool` under the schedule drawn from `seed`, checking every step.
pub fn check_run(pool: &Pool, seed: u64, max_steps: u64) -> RunCheck {
    let mut check = RunCheck { seed, status: None, steps: 0, violation: None };
    let ty = match pool.typecheck() {
        Ok(t) => t,
        Err(e) => {
            check.violation = Some(PropertyViolation { kind: PropertyKind::Typing, step: 0, detail: e.to_string() });
            return check;
        }
    };
    let mut step = 0u64;
    let mut sr_failure = None;
    let outcome = run_pool_with(pool, seed, max_steps, |_, after| {
        step += 1;
        match after.typecheck() {
            Ok(t) if t.is_subtype_of(&ty) => Ok(()),
            Ok(t) => {
                sr_failure = Some(format!("type changed from {ty} to {t}"));
                Err("subject reduction".to_string())
            }
            Err(e) => {
                sr_failure = Some(e.to_string());
                Err("subject reduction".to_string())
            }
        }
    });
    let trace = match outcome {
        Ok(out) => {
            check.status = Some(out.status);
            check.steps = out.steps;
            out.trace
        }
        Err(e) => {
            let (kind, detail, trace) = match (e, sr_failure) {
                (RunError::Stuck { trace, .. }, Some(why)) => (PropertyKind::SubjectReduction, why, trace),
                (RunError::Stuck { tid, why, trace }, None) => (PropertyKind::Progress, format!("thread {tid}: {why}"), trace),
                (RunError::DeadlockDetected { trace, .. }, _) => (PropertyKind::Progress, "deadlock".to_string(), trace),
            };
            check.steps = trace.records.last().map_or(0, |r| r.step);
            check.violation = Some(PropertyViolation { kind, step: check.steps, detail });
            return check;
        }
    };
    if let Some(v) = check_trace_preservation(&trace).first_violation {
        check.violation = Some(PropertyViolation { kind: PropertyKind::DfPreservation, step: v.step, detail: v.reason });
    }
    check
}
