//! The `chan2_create` counterexample.
//!
//! `chan2_create` hands the positive sides of two new channels to one new
//! agent. The creator sends the negative side of the second channel over the
//! first, while the new agent first waits for a value on the second channel.
//! Neither can move: the value would come from whoever ends up holding
//! `ch2-`, which is still in transit on `ch1`.
//!
//! The control experiment creates the two channels with two `chan_create`
//! calls, so the positive sides go to different agents and the run finishes.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{run_and_join, ProtocolError};
use crate::calculus::{parse_expr, Pool};
use crate::df_analysis::{is_df_reducible, ChannelSetCollection};
use crate::roles::{Group, RoleUniverse};
use crate::runtime::{DynValue, Endpoint, Runtime, RuntimeConfig, RuntimeError};
use crate::session_types::{PayloadSort, SessionType};
use crate::trace::Trace;

#[derive(Debug, Clone, Serialize)]
pub struct DeadlockReport {
    pub deadlocked: bool,
    /// Channel ownership when the deadlock was detected.
    pub snapshot: Option<ChannelSetCollection>,
    pub df_reducible: Option<bool>,
    #[serde(skip)]
    pub elapsed: Duration,
    #[serde(skip)]
    pub trace: Trace,
}

fn universe() -> RoleUniverse {
    RoleUniverse::new(2).expect("two roles")
}

/// `(group, s1, s2)`: both channels are created with the `{0}` side going to
/// the new agent; `s1` carries a `{1}` endpoint of `s2`.
fn sessions(u: RoleUniverse) -> (Group, SessionType, SessionType) {
    let g = u.singleton(0).expect("role 0");
    let s2 = SessionType::msg(1, 0, PayloadSort::Int, SessionType::nil());
    let s1 = SessionType::msg(1, 0, PayloadSort::chan(g.complement(), s2.clone()), SessionType::nil());
    (g, s1, s2)
}

fn jitter(rng: &mut ChaCha8Rng) {
    std::thread::sleep(Duration::from_micros(rng.gen_range(0..500)));
}

/// The receiving side of the delegated endpoint: plays `{1}` on `s2`.
fn use_delegated(v: DynValue) -> Result<(), RuntimeError> {
    let d = v.into_endpoint().expect("monitored as a channel");
    d.send(1, 0, 42i64)?.close()
}

fn report(rt: &Runtime, started: Instant, result: Result<(), RuntimeError>) -> Result<DeadlockReport, ProtocolError> {
    let snapshot = match result {
        Ok(()) => None,
        Err(RuntimeError::DeadlockDetected(m)) => Some(rt.deadlock().unwrap_or(m)),
        Err(e) => return Err(e.into()),
    };
    Ok(DeadlockReport {
        deadlocked: snapshot.is_some(),
        df_reducible: snapshot.as_ref().and_then(|m| is_df_reducible(m).ok()),
        snapshot,
        elapsed: started.elapsed(),
        trace: rt.trace(),
    })
}

/// Runs the counterexample. Scheduling is perturbed by small sleeps drawn
/// from `seed`. Needs `allow_unsafe`; a detected deadlock is the expected
/// outcome.
pub fn demo_chan2_create_deadlock(seed: u64, allow_unsafe: bool) -> Result<DeadlockReport, ProtocolError> {
    let u = universe();
    let (g, s1, s2) = sessions(u);
    let rt = Runtime::with_config(RuntimeConfig { allow_unsafe, ..RuntimeConfig::new(u) });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let started = Instant::now();
    let result = run_and_join(&rt, || {
        let (c1, c2) = rt.chan2_create(g, s1, g, s2, move |e1: Endpoint, e2: Endpoint| {
            jitter(&mut agent_rng);
            let (_, e2) = e2.recv(1, 0)?;
            e2.close()?;
            let (d, e1) = e1.recv(1, 0)?;
            e1.close()?;
            use_delegated(d)
        })?;
        jitter(&mut rng);
        c1.send(1, 0, c2)?.close()
    });
    report(&rt, started, result)
}

/// The same exchange with two `chan_create` calls; runs to completion.
pub fn control_two_chan_create(seed: u64) -> Result<DeadlockReport, ProtocolError> {
    let u = universe();
    let (g, s1, s2) = sessions(u);
    let rt = Runtime::new(u.nrole())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rng1, mut rng2) = (ChaCha8Rng::seed_from_u64(rng.gen()), ChaCha8Rng::seed_from_u64(rng.gen()));
    let started = Instant::now();
    let result = run_and_join(&rt, || {
        let c1 = rt.chan_create(g, s1, move |e1| {
            jitter(&mut rng1);
            let (d, e1) = e1.recv(1, 0)?;
            e1.close()?;
            use_delegated(d)
        })?;
        let c2 = rt.chan_create(g, s2, move |e2| {
            jitter(&mut rng2);
            let (_, e2) = e2.recv(1, 0)?;
            e2.close()
        })?;
        jitter(&mut rng);
        c1.send(1, 0, c2)?.close()
    });
    report(&rt, started, result)
}

/// The counterexample in the calculus, with the unsafe flag set.
pub fn deadlock_pool() -> Pool {
    let text = r#"
      (let (cs (tensor (chan "{1}" "msg(1,0,chan({1},msg(1,0,int):nil)):nil") (chan "{1}" "msg(1,0,int):nil")))
        (chan2_create
          (llam (p (tensor (chan "{0}" "msg(1,0,chan({1},msg(1,0,int):nil)):nil") (chan "{0}" "msg(1,0,int):nil")))
            (letp (a b) p
              (letp (b v) (recv b)
                (letp (a d) (recv a)
                  (let (u unit) (close a) (let (w unit) (close b) (close (send d v)))))))))
        (letp (c1 c2) cs (close (send c1 c2))))"#;
    let u = universe();
    Pool::new(parse_expr(text, u).expect("fixed program parses"), u).with_unsafe(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{run_pool, RunError};

    #[test]
    fn demo_deadlocks_with_a_non_reducible_snapshot() {
        for seed in 0..5 {
            let r = demo_chan2_create_deadlock(seed, true).unwrap();
            assert!(r.deadlocked);
            assert_eq!(r.df_reducible, Some(false));
            assert!(r.elapsed < Duration::from_secs(2));
        }
    }

    #[test]
    fn demo_needs_the_unsafe_flag() {
        assert!(matches!(
            demo_chan2_create_deadlock(0, false),
            Err(ProtocolError::Runtime(RuntimeError::UnsafeDisabled))
        ));
    }

    #[test]
    fn control_finishes() {
        for seed in 0..5 {
            let r = control_two_chan_create(seed).unwrap();
            assert!(!r.deadlocked);
            assert!(r.snapshot.is_none());
        }
    }

    #[test]
    fn calculus_pool_deadlocks() {
        let p = deadlock_pool();
        assert!(p.typecheck().is_ok());
        match run_pool(&p, 7, 1000) {
            Err(RunError::DeadlockDetected { pool, .. }) => assert_eq!(is_df_reducible(&pool.snapshot()), Ok(false)),
            other => panic!("expected deadlock, got {other:?}"),
        }
    }
}
