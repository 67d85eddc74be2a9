//! Example sessions run on the channel runtime, with calculus encodings of
//! the two-buyer protocol and the `chan2_create` deadlock.
//!
//! Role names map to indices as follows: seller `S0` is role 0,
//! buyers `B1`, `B2` are roles 1 and 2; in the queue example the server is
//! role 0 and the clients `C1`, `C2` are roles 1 and 2.

pub mod deadlock;
pub mod list;
pub mod queue;
pub mod two_buyer;

use thiserror::Error;

use crate::runtime::{Runtime, RuntimeError};

pub use deadlock::{control_two_chan_create, deadlock_pool, demo_chan2_create_deadlock, DeadlockReport};
pub use list::{colist_session, list_session, run_colist_session, run_list_session, ListOutcome};
pub use queue::{queue_session, run_queue_session, QueueOp, QueueOutcome, QueueRound, QueueScript};
pub use two_buyer::{run_two_buyer, two_buyer_pool, two_buyer_session, Branch, LoggedMessage, TwoBuyerOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("script violation at round {round}: {reason}")]
    ScriptViolation { round: usize, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Runs `body` in the calling agent, then joins every other agent. The
/// body's own failure takes precedence.
pub(crate) fn run_and_join<T>(rt: &Runtime, body: impl FnOnce() -> Result<T, RuntimeError>) -> Result<T, RuntimeError> {
    let out = body();
    let joined = rt.join_all();
    let out = out?;
    joined?;
    Ok(out)
}
