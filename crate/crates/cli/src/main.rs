//! `mrsession`: typecheck and run calculus pools, run the example protocols
//! on the channel runtime, analyze ownership snapshots, and fuzz the
//! calculus.
//!
//! Exit status: 0 on success, 1 when the input is rejected (ill-typed pool,
//! deadlock, snapshot that is not DF-reducible, property violation), 2 on
//! usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use mrsession::calculus::generate::random_pool;
use mrsession::calculus::{check_run, format_expr, run_pool, Pool, RunError};
use mrsession::df_analysis::{check_trace_preservation, is_df_reducible, ChannelSetCollection};
use mrsession::protocols::{
    demo_chan2_create_deadlock, run_colist_session, run_list_session, run_queue_session, run_two_buyer, ProtocolError,
    QueueScript,
};
use mrsession::roles::RoleUniverse;
use mrsession::trace::Trace;

const OK_POOL: &str = include_str!("../pools/ok_pool.mtlc");
const TWO_BUYER_POOL: &str = include_str!("../pools/two_buyer.mtlc");

#[derive(Parser)]
#[command(name = "mrsession", version, about = "Multirole session channels: interpreter, runtime examples and deadlock analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Typecheck a pool file and print its type.
    Typecheck {
        file: PathBuf,
        /// Role count; must agree with the file's `(nrole ..)` if it has one.
        #[arg(long)]
        nrole: Option<usize>,
        /// Accept `chan2_create`.
        #[arg(long = "unsafe")]
        allow_unsafe: bool,
    },
    /// Run a pool file or one of the examples: two-buyer, queue, list, colist, deadlock-demo.
    Run(RunArgs),
    /// Check a JSON-lines trace, or a single collection, for DF-reducibility.
    Analyze {
        /// Trace file whose every snapshot is checked.
        trace: Option<PathBuf>,
        /// A collection such as `[{1+,2-},{2+,1-}]`.
        #[arg(long)]
        collection: Option<String>,
    },
    /// Seeded interpreter runs checking subject reduction, progress and DF preservation.
    Fuzz {
        /// Number of seeds.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        max_steps: u64,
        /// Role count of generated pools; by default it cycles through 2, 3, 4.
        #[arg(long)]
        nrole: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// A pool file, or an example name.
    target: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    max_steps: u64,
    /// Write the execution trace here as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    nrole: Option<usize>,
    /// Allow `chan2_create`.
    #[arg(long = "unsafe")]
    allow_unsafe: bool,
    #[arg(long, default_value = "Types and Programming Languages")]
    title: String,
    #[arg(long)]
    price: Option<i64>,
    #[arg(long)]
    contribution: Option<i64>,
    #[arg(long)]
    budget: Option<i64>,
    /// Queue script file, one round per line (`C1 enq 5`, `C2 deq`, `C1 nil`).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Length of the list or colist.
    #[arg(long)]
    n: Option<usize>,
}

enum Failure {
    Usage(String),
    Rejected,
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn emit(v: Value) {
    println!("{v}");
}

fn reject(v: Value) -> Outcome {
    emit(v);
    Err(Failure::Rejected)
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_trace(path: Option<&PathBuf>, trace: &Trace) -> Outcome {
    if let Some(path) = path {
        let file = fs::File::create(path).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        trace
            .write_jsonl(std::io::BufWriter::new(file))
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn check_nrole(given: Option<usize>, actual: usize) -> Outcome {
    match given {
        Some(n) if n != actual => Err(usage(format!("--nrole {n} does not match the input's {actual} roles"))),
        _ => Ok(()),
    }
}

/// Parses a pool file; `Ok(Err(..))` is a rejected file.
fn load_pool(path: &Path, nrole: Option<usize>, allow_unsafe: bool) -> Result<Result<Pool, String>, Failure> {
    let text = read_file(path)?;
    let universe = nrole
        .map(|n| RoleUniverse::new(n).map_err(|e| usage(format!("--nrole: {e}"))))
        .transpose()?;
    match Pool::from_text(&text, universe) {
        Ok(p) => {
            check_nrole(nrole, p.universe.nrole())?;
            Ok(Ok(p.with_unsafe(allow_unsafe)))
        }
        Err(e) => Ok(Err(e.to_string())),
    }
}

fn typecheck(file: &Path, nrole: Option<usize>, allow_unsafe: bool) -> Outcome {
    let pool = match load_pool(file, nrole, allow_unsafe)? {
        Ok(p) => p,
        Err(e) => return reject(json!({ "file": file.display().to_string(), "error": e })),
    };
    match pool.typecheck() {
        Ok(ty) => {
            emit(json!({ "file": file.display().to_string(), "type": ty.to_string() }));
            Ok(())
        }
        Err(e) => reject(json!({ "file": file.display().to_string(), "error": e.to_string() })),
    }
}

fn protocol_failure(e: ProtocolError) -> Outcome {
    match e {
        ProtocolError::InvalidInput(msg) => Err(usage(msg)),
        other => reject(json!({ "error": other.to_string() })),
    }
}

fn required<T: Copy>(v: Option<T>, flag: &str, target: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("`run {target}` needs {flag}")))
}

fn run(args: &RunArgs) -> Outcome {
    let target = args.target.as_str();
    match target {
        "two-buyer" => {
            check_nrole(args.nrole, 3)?;
            let price = required(args.price, "--price", target)?;
            let contribution = required(args.contribution, "--contribution", target)?;
            let budget = required(args.budget, "--budget", target)?;
            match run_two_buyer(&args.title, price, contribution, budget) {
                Ok(out) => {
                    write_trace(args.trace.as_ref(), &out.trace)?;
                    emit(json!(out));
                    Ok(())
                }
                Err(e) => protocol_failure(e),
            }
        }
        "queue" => {
            check_nrole(args.nrole, 3)?;
            let path = args.script.as_ref().ok_or_else(|| usage("`run queue` needs --script FILE"))?;
            let script: QueueScript = match read_file(path)?.parse() {
                Ok(s) => s,
                Err(e) => return protocol_failure(e),
            };
            match run_queue_session(&script) {
                Ok(out) => {
                    write_trace(args.trace.as_ref(), &out.trace)?;
                    emit(json!(out));
                    Ok(())
                }
                Err(e) => protocol_failure(e),
            }
        }
        "list" | "colist" => {
            check_nrole(args.nrole, 2)?;
            let n = required(args.n, "--n", target)?;
            let out = if target == "list" { run_list_session(n) } else { run_colist_session(n) };
            match out {
                Ok(out) => {
                    write_trace(args.trace.as_ref(), &out.trace)?;
                    emit(json!({ "kind": target, "values": out.values, "tags": out.tag_records() }));
                    Ok(())
                }
                Err(e) => protocol_failure(e),
            }
        }
        "deadlock-demo" => {
            check_nrole(args.nrole, 2)?;
            if !args.allow_unsafe {
                return Err(usage("`run deadlock-demo` uses chan2_create and needs --unsafe"));
            }
            match demo_chan2_create_deadlock(args.seed, true) {
                Ok(report) => {
                    write_trace(args.trace.as_ref(), &report.trace)?;
                    let expected = report.deadlocked && report.df_reducible == Some(false);
                    emit(json!({
                        "deadlocked": report.deadlocked,
                        "snapshot": report.snapshot.as_ref().map(ToString::to_string),
                        "df_reducible": report.df_reducible,
                        "elapsed_ms": report.elapsed.as_millis() as u64,
                    }));
                    if expected {
                        Ok(())
                    } else {
                        Err(Failure::Rejected)
                    }
                }
                Err(e) => protocol_failure(e),
            }
        }
        _ => run_file(args),
    }
}

fn run_file(args: &RunArgs) -> Outcome {
    let path = PathBuf::from(&args.target);
    if !path.exists() {
        return Err(usage(format!(
            "unknown target `{}`: expected a pool file or one of two-buyer, queue, list, colist, deadlock-demo",
            args.target
        )));
    }
    let pool = match load_pool(&path, args.nrole, args.allow_unsafe)? {
        Ok(p) => p,
        Err(e) => return reject(json!({ "error": e })),
    };
    if let Err(e) = pool.typecheck() {
        return reject(json!({ "error": e.to_string() }));
    }
    match run_pool(&pool, args.seed, args.max_steps) {
        Ok(out) => {
            write_trace(args.trace.as_ref(), &out.trace)?;
            emit(json!({ "status": out.status, "steps": out.steps, "result": format_expr(out.pool.main()) }));
            Ok(())
        }
        Err(RunError::DeadlockDetected { trace, pool }) => {
            write_trace(args.trace.as_ref(), &trace)?;
            let snapshot = pool.snapshot();
            reject(json!({
                "status": "deadlock",
                "snapshot": snapshot.to_string(),
                "df_reducible": is_df_reducible(&snapshot).ok(),
            }))
        }
        Err(RunError::Stuck { tid, why, trace }) => {
            write_trace(args.trace.as_ref(), &trace)?;
            reject(json!({ "status": "stuck", "thread": tid, "error": why }))
        }
    }
}

fn analyze(trace: Option<&PathBuf>, collection: Option<&str>) -> Outcome {
    match (trace, collection) {
        (None, Some(text)) => {
            let m: ChannelSetCollection = text.parse().map_err(|e| usage(format!("--collection: {e}")))?;
            match is_df_reducible(&m) {
                Ok(true) => {
                    emit(json!({ "collection": m.to_string(), "verdict": "DF-reducible" }));
                    Ok(())
                }
                Ok(false) => reject(json!({ "collection": m.to_string(), "verdict": "not DF-reducible" })),
                Err(e) => reject(json!({ "collection": m.to_string(), "verdict": "invalid", "error": e.to_string() })),
            }
        }
        (Some(path), None) => {
            let t = match Trace::from_jsonl(&read_file(path)?) {
                Ok(t) => t,
                Err(e) => return reject(json!({ "error": e.to_string() })),
            };
            let report = check_trace_preservation(&t);
            match report.first_violation {
                None => {
                    emit(json!({ "steps": report.steps_checked, "verdict": "DF-reducible" }));
                    Ok(())
                }
                Some(v) => reject(json!({
                    "steps": report.steps_checked,
                    "verdict": "not DF-reducible",
                    "step": v.step,
                    "rule": v.rule,
                    "snapshot": v.snapshot.to_string(),
                    "reason": v.reason,
                })),
            }
        }
        _ => Err(usage("analyze takes exactly one of a trace file or --collection")),
    }
}

fn fuzz(seeds: u64, first: u64, max_steps: u64, nrole: Option<usize>) -> Outcome {
    if let Some(n) = nrole {
        RoleUniverse::new(n).map_err(|e| usage(format!("--nrole: {e}")))?;
    }
    let builtin: Vec<Pool> = [OK_POOL, TWO_BUYER_POOL]
        .iter()
        .map(|text| Pool::from_text(text, None).expect("built-in pools parse"))
        .collect();
    let (mut runs, mut violations, mut steps) = (0u64, 0u64, 0u64);
    for seed in first..first + seeds {
        let generated = random_pool(seed, nrole.unwrap_or(2 + (seed % 3) as usize));
        let fixed = &builtin[(seed % builtin.len() as u64) as usize];
        for (source, pool) in [("generated", &generated), ("builtin", fixed)] {
            let check = check_run(pool, seed, max_steps);
            runs += 1;
            steps += check.steps;
            if let Some(v) = check.violation {
                violations += 1;
                emit(json!({ "seed": seed, "source": source, "violation": v, "pool": pool.to_string() }));
            }
        }
    }
    let summary = json!({ "runs": runs, "steps": steps, "violations": violations });
    if violations == 0 {
        emit(summary);
        Ok(())
    } else {
        reject(summary)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Typecheck { file, nrole, allow_unsafe } => typecheck(file, *nrole, *allow_unsafe),
        Command::Run(args) => run(args),
        Command::Analyze { trace, collection } => analyze(trace.as_ref(), collection.as_deref()),
        Command::Fuzz { seeds, seed, max_steps, nrole } => fuzz(*seeds, *seed, *max_steps, *nrole),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: mrsession <typecheck|run|analyze|fuzz> [OPTIONS]\nSee `mrsession --help`.");
            ExitCode::from(2)
        }
    }
}
