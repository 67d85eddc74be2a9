use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mrsession"))
}

fn pool_path(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("pools").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).expect("json line")).collect()
}

#[test]
fn typecheck_accepts_the_sample_pool() {
    let out = run(&["typecheck", &pool_path("ok_pool.mtlc")]);
    assert_eq!(code(&out), 0);
    assert_eq!(json_lines(&out)[0]["type"], "int");
}

#[test]
fn typecheck_rejects_a_leaked_channel() {
    let out = run(&["typecheck", &pool_path("leaky_pool.mtlc")]);
    assert_eq!(code(&out), 1);
    assert!(json_lines(&out)[0]["error"].as_str().unwrap().contains("never used"));
}

#[test]
fn nrole_mismatch_is_a_usage_error() {
    assert_eq!(code(&run(&["typecheck", &pool_path("ok_pool.mtlc"), "--nrole", "3"])), 2);
    assert_eq!(code(&run(&["typecheck", &pool_path("ok_pool.mtlc"), "--nrole", "2"])), 0);
    assert_eq!(code(&run(&["run", "two-buyer", "--price", "1", "--contribution", "1", "--budget", "1", "--nrole", "4"])), 2);
}

#[test]
fn self_loop_is_not_reducible() {
    let out = run(&["analyze", "--collection", "[{1+,1-}]"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("not DF-reducible"));
    assert_eq!(code(&run(&["analyze", "--collection", "[{1+},{1-}]"])), 0);
    assert_eq!(code(&run(&["analyze", "--collection", "{1+"])), 2);
    assert_eq!(code(&run(&["analyze"])), 2);
}

#[test]
fn two_buyer_success() {
    let out = run(&["run", "two-buyer", "--price", "100", "--contribution", "60", "--budget", "50"]);
    assert_eq!(code(&out), 0);
    let v = &json_lines(&out)[0];
    assert_eq!(v["branch"], "success");
    assert!(v["receipt"].is_string());
    assert_eq!(v["messages"].as_array().unwrap().len(), 6);
}

#[test]
fn missing_flags_are_usage_errors() {
    assert_eq!(code(&run(&["run", "two-buyer", "--price", "100"])), 2);
    assert_eq!(code(&run(&["run", "queue"])), 2);
    assert_eq!(code(&run(&["run", "list"])), 2);
    assert_eq!(code(&run(&["run", "no-such-example"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn pool_run_writes_an_analyzable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let out = run(&["run", &pool_path("ok_pool.mtlc"), "--seed", "5", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = &json_lines(&out)[0];
    assert_eq!(v["status"], "final");
    assert_eq!(v["result"], "7");
    assert_eq!(code(&run(&["analyze", trace.to_str().unwrap()])), 0);
}

#[test]
fn runs_are_deterministic_given_a_seed() {
    let a = run(&["run", &pool_path("two_buyer.mtlc"), "--seed", "11"]);
    let b = run(&["run", &pool_path("two_buyer.mtlc"), "--seed", "11"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn queue_script_from_file() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "C1 enq 5\nC2 enq 7\nC1 deq\nC1 deq\nC1 nil").unwrap();
    let out = run(&["run", "queue", "--script", f.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = &json_lines(&out)[0];
    for party in v["sizes"].as_array().unwrap() {
        assert_eq!(party, &serde_json::json!([1, 2, 1, 0, 0]));
    }
    assert_eq!(v["dequeued"], serde_json::json!([[1, 5], [1, 7]]));

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "C1 deq\nC1 nil").unwrap();
    assert_eq!(code(&run(&["run", "queue", "--script", bad.path().to_str().unwrap()])), 1);
}

#[test]
fn list_and_colist() {
    let out = run(&["run", "list", "--n", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json_lines(&out)[0]["values"], serde_json::json!([0, 10, 20]));
    assert_eq!(json_lines(&run(&["run", "colist", "--n", "0"]))[0]["values"], serde_json::json!([]));
}

#[test]
fn deadlock_demo_needs_unsafe_and_deadlocks() {
    assert_eq!(code(&run(&["run", "deadlock-demo"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("d.jsonl");
    let out = run(&["run", "deadlock-demo", "--unsafe", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = &json_lines(&out)[0];
    assert_eq!(v["deadlocked"], true);
    assert_eq!(v["df_reducible"], false);
    let analyzed = run(&["analyze", trace.to_str().unwrap()]);
    assert_eq!(code(&analyzed), 1);
    assert_eq!(json_lines(&analyzed)[0]["rule"], "chan2_create");
}

#[test]
fn unsafe_pool_file() {
    assert_eq!(code(&run(&["typecheck", &pool_path("deadlock.mtlc")])), 1);
    assert_eq!(code(&run(&["typecheck", &pool_path("deadlock.mtlc"), "--unsafe"])), 0);
    let out = run(&["run", &pool_path("deadlock.mtlc"), "--unsafe"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json_lines(&out)[0]["status"], "deadlock");
}

#[test]
fn fuzz_reports_no_violations() {
    let out = run(&["fuzz", "--seeds", "20", "--seed", "100"]);
    assert_eq!(code(&out), 0);
    let v = &json_lines(&out)[0];
    assert_eq!(v["runs"], 40);
    assert_eq!(v["violations"], 0);
    assert_eq!(run(&["fuzz", "--seeds", "5"]).stdout, run(&["fuzz", "--seeds", "5"]).stdout);
}
