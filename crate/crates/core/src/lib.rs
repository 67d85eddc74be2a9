//! Multirole session channels.
//!
//! A channel typed `chan(G, S)` is held by a party implementing every role in
//! the group `G`; its peer implements the complement. This crate provides:
//!
//! - [`roles`] and [`session_types`]: groups of roles, session types, and the
//!   group-relative reading of each message step;
//! - [`calculus`]: a reference interpreter and linear typechecker for a
//!   multi-threaded lambda calculus with session-typed channels;
//! - [`df_analysis`]: the DF-reducibility decision procedure used as a
//!   deadlock-freedom oracle over channel ownership snapshots;
//! - [`runtime`]: a thread-backed channel runtime with dynamic protocol
//!   monitoring, services, and link combinators that assemble multiparty
//!   sessions out of dyadic ones;
//! - [`protocols`]: runnable example sessions;
//! - [`trace`]: the JSON-lines trace format shared by interpreter and runtime.

pub mod roles;
pub mod runtime;
pub mod session_types;
pub mod calculus;
pub mod df_analysis;
pub mod protocols;
pub mod trace;
