use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use resinet::suite::read_suite;
use resinet::{Clause, NeuronId, PhaseLiteral, TraceEvent};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn resinet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resinet")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_running_example_in_every_mode() {
    let net = data("running_example.json");
    let q = data("above_14.json");
    for mode in ["plain", "ar", "ar4"] {
        let out = resinet(&["verify", path(&net), path(&q), "--mode", mode, "--json"]);
        assert_eq!(out.status.code(), Some(20), "{mode}: {}", stdout(&out));
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["verdict"], "UNSAT");
        assert_eq!(report["mode"], mode);
        assert!(report["stats"]["visited_states"].as_u64().unwrap() > 0);
    }
}

#[test]
fn verify_sat_prints_witness() {
    let out = resinet(&[
        "verify",
        path(&data("running_example.json")),
        path(&data("above_8.json")),
    ]);
    assert_eq!(out.status.code(), Some(10));
    let text = stdout(&out);
    assert!(text.starts_with("SAT\n"));
    assert!(text.contains("witness ["));
}

#[test]
fn zero_timeout_is_timeout_exit() {
    let out = resinet(&[
        "verify",
        path(&data("running_example.json")),
        path(&data("above_14.json")),
        "--timeout",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(30));
}

#[test]
fn usage_and_file_errors_exit_one() {
    let out = resinet(&["verify", "/nonexistent/net.json", path(&data("above_14.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/net.json"));
    let out = resinet(&[
        "verify",
        path(&data("running_example.json")),
        path(&data("above_14.json")),
        "--mode",
        "fast",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // A network file is not a query.
    let out = resinet(&[
        "verify",
        path(&data("running_example.json")),
        path(&data("running_example.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trace_round_trip_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("run.jsonl");
    let (net, q) = (data("running_example.json"), data("above_14.json"));
    let out = resinet(&["verify", path(&net), path(&q), "--trace", path(&trace)]);
    assert_eq!(out.status.code(), Some(20));
    let out = resinet(&["validate-trace", path(&trace), path(&net), path(&q)]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("violations 0"));

    // On a SAT query, a clause blocking v(2,3) active cuts off every solution.
    let sat_trace = dir.path().join("sat.jsonl");
    let sat_q = data("above_8.json");
    let out = resinet(&[
        "verify",
        path(&net),
        path(&sat_q),
        "--mode",
        "plain",
        "--trace",
        path(&sat_trace),
    ]);
    assert_eq!(out.status.code(), Some(10));
    let mut lines: Vec<String> = fs::read_to_string(&sat_trace)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let forged = TraceEvent::Learned {
        clause: Clause::new([PhaseLiteral::new(NeuronId::new(2, 3), false)]).unwrap(),
    };
    lines.insert(2, serde_json::to_string(&forged).unwrap());
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, lines.join("\n")).unwrap();
    let out = resinet(&["validate-trace", path(&bad), path(&net), path(&sat_q)]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    assert!(stdout(&out).contains("VIOLATION event 2: learned"));

    fs::write(&bad, "{not json").unwrap();
    let out = resinet(&["validate-trace", path(&bad), path(&net), path(&q)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn plain_trace_validates() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("plain.jsonl");
    let (net, q) = (data("running_example.json"), data("above_14.json"));
    resinet(&[
        "verify",
        path(&net),
        path(&q),
        "--mode",
        "plain",
        "--trace",
        path(&trace),
    ]);
    let out = resinet(&["validate-trace", path(&trace), path(&net), path(&q), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["iterations"], 1);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = resinet(&["gen", "--seed", "9", "--count", "6", "--out", path(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn gen_with_fixed_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = resinet(&["gen", "--count", "3", "--shape", "2,4,5,1", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let (_, suite) = read_suite(dir.path()).unwrap();
    assert!(suite.iter().all(|i| i.network.widths() == vec![2, 4, 5, 1]));
}

#[test]
fn compare_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    resinet(&["gen", "--seed", "4", "--count", "8", "--out", path(&suite)]);
    let csv = dir.path().join("out.csv");
    let out = resinet(&[
        "compare",
        path(&suite),
        "--modes",
        "plain,ar,ar4",
        "--workers",
        "2",
        "--csv",
        path(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(!stdout(&out).contains("FAILURE"));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance,mode,verdict,expected,visited_states,splits,propagations,prune_hits,lp_solves,learned,refinements,wall_ms"
    );
    assert_eq!(lines.count(), 24);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(suite.join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 24);
    assert_eq!(report["summary"].as_array().unwrap().len(), 3);
    assert_eq!(report["tallies"].as_array().unwrap().len(), 3);
}

#[test]
fn compare_empty_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = resinet(&["gen", "--count", "0", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let out = resinet(&["compare", path(dir.path()), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["rows"].as_array().unwrap().is_empty());
}

#[test]
fn compare_missing_suite_is_error() {
    let out = resinet(&["compare", "/nonexistent/suite"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn log_level_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_resinet"))
        .args([
            "verify",
            path(&data("running_example.json")),
            path(&data("above_14.json")),
        ])
        .env("RESINET_LOG", "debug")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("spurious witness"));
}
