//! A multi-threaded lambda calculus with linear types and session-typed
//! channels: syntax, typechecker, and a seeded interpreter over thread pools.
//!
//! Channel primitives follow the payload-carrying reading: `send(ch, v)`
//! returns the advanced channel, `recv(ch)` returns `<ch, v>`. `skip` is a
//! synchronous rendezvous of both halves here, unlike the runtime where it is
//! a local step. Sessions in the calculus use `nil` and `msg` only.

pub mod eval;
pub mod generate;
pub mod metatheory;
pub mod pool;
pub mod sexpr;
pub mod syntax;
pub mod typing;

pub use metatheory::{check_run, PropertyKind, PropertyViolation, RunCheck};
pub use eval::{blocked, focus, step_expr, step_expr_with, EvalError, Focus, PartialRedex, RedexKind};
pub use pool::{run_pool, run_pool_with, Pool, PoolError, RunError, RunOutcome, RunStatus, ScheduleChoice, SyncKind};
pub use sexpr::{format_expr, format_pool, format_viewtype, parse_expr, parse_pool, parse_viewtype, PoolSyntax, SexprError};
pub use syntax::{rho, rho_ch, Expr, Lit, Prim, Resources, Viewtype};
pub use typing::{canonical_form_ok, check_value_purity, typecheck, Sig, SigEntry, TypeError};
