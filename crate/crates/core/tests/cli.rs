use std::path::Path;
use std::process::{Command, Output};

fn authsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_authsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn holding_check_exits_zero_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = authsim(&["check", "both-abort", "--messages", "1", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    assert_eq!(v["check"], "both-abort");
    assert_eq!(v["holds"], true);
    assert_eq!(v["violations"], 0);
    assert!(v["strategies_checked"].as_u64().unwrap() > 0);
}

#[test]
fn negative_control_exits_one_with_counterexamples() {
    let o = authsim(&["check", "lemma1", "--messages", "2", "--mutate", "skip-app2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("counterexample"));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["holds"], false);
    assert!(!v["counterexamples"].as_array().unwrap().is_empty());
}

#[test]
fn configuration_errors_exit_two() {
    for args in [
        &["check", "no-such-check"][..],
        &["check", "both-abort", "--messages", "0"],
        &["check", "both-abort", "--cap", "10"],
        &["check", "both-abort", "--mutate", "skip-everything"],
        &["check", "both-abort", "--config", "/nonexistent/cfg.json"],
    ] {
        assert_eq!(authsim(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"core": "leaky", "messages": 3}"#).unwrap();
    let o = authsim(&["check", "both-abort", "--config", cfg.to_str().unwrap(), "--messages", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["params"]["messages"], 1);
    assert_eq!(v["params"]["cores"], serde_json::json!(["leaky"]));

    std::fs::write(&cfg, r#"{"messagez": 3}"#).unwrap();
    assert_eq!(authsim(&["check", "both-abort", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn report_formats() {
    let o = authsim(&["report", "--format", "csv", "--messages", "1", "--core", "honest-secure"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("protocol,setting,strategy,numerator,denominator,is_witness\n"));
    let rows: Vec<csv::StringRecord> =
        csv::Reader::from_reader(text.as_bytes()).records().map(Result::unwrap).collect();
    assert!(rows.iter().any(|r| r[2].contains(',')), "multi-slot labels are quoted");
    assert_eq!(rows.iter().filter(|r| &r[5] == "true").count(), 2, "one witness per report");

    let o = authsim(&["report", "--format", "json", "--messages", "1", "--core", "leaky"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = v.as_array().unwrap();
    assert!(reports.len() >= 2);
    assert!(reports.iter().all(|r| r["epsilon_max"]["numerator"].is_string()));
}

#[test]
fn replay_prints_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.txt");
    std::fs::write(&s, "# drop Alice's ACCEPT\napp:A->B 1 block\n").unwrap();
    let o = authsim(&["replay", s.to_str().unwrap(), "--core", "honest-secure", "--messages", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("ACCEPT"));
    assert!(text.trim_end().ends_with("final keys: (k, ⊥)"), "{text}");

    std::fs::write(&s, "A->B 1 block\nB->A one forward\n").unwrap();
    let o = authsim(&["replay", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn vectors_are_reproducible_and_verify() {
    let a = stdout(&authsim(&["vectors", "--count", "5", "--seed", "7"]));
    let b = stdout(&authsim(&["vectors", "--count", "5", "--seed", "7"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);
    for line in a.lines() {
        let field = |k: &str| line.split(' ').find_map(|f| f.strip_prefix(k)).unwrap().to_string();
        let hex = |s: &str| u16::from_str_radix(s, 16).unwrap();
        let (r, s, tag) = (hex(&field("r=")), hex(&field("s=")), hex(&field("tag=")));
        let blocks: Vec<u16> = field("m=").split(':').map(hex).collect();
        let params = authsim::mac::MacParameters::new(4, blocks.len().max(1)).unwrap();
        assert_eq!(params.tag(authsim::mac::MacKey { r, s }, &blocks).unwrap(), tag, "{line}");
    }
}
