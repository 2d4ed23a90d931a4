use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn strata(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strata"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .output()
        .unwrap()
}

fn ok_json(out: &Output) -> Vec<Value> {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn synth(dir: &TempDir) -> String {
    let path = dir.path().join("qa.jsonl");
    ok_json(&strata(dir.path(), &["synth", "--out", path.to_str().unwrap()]));
    path.to_str().unwrap().to_string()
}

#[test]
fn append_then_retrieve_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = ok_json(&strata(
        dir.path(),
        &["append", "--project", "p", "--session", "s1", "--agent", "a", "--content", "The vault code is 4471"],
    ));
    let id = out[0]["entry_id"].as_str().unwrap().to_string();
    assert!(out[0]["config"].is_object());
    let day = std::fs::read_dir(dir.path().join("memory/episodic")).unwrap().count();
    assert_eq!(day, 1);

    let r = ok_json(&strata(dir.path(), &["retrieve", "--project", "p", "--query", "vault code", "--k1", "inf"]));
    assert_eq!(r[0]["ranked"][0]["entry_id"], id.as_str());
    assert_eq!(r[0]["sessions_ratio"], 1.0);
    assert!(r[0]["config"].is_object());
}

#[test]
fn failure_outcome_writes_negative_delta() {
    let dir = TempDir::new().unwrap();
    for (id, text) in [("e1", "Use the blue cable for the router"), ("e2", "Router still offline")] {
        let mut args = vec!["append", "--project", "p", "--session", "s", "--agent", "a", "--content", text, "--id", id];
        if id == "e2" {
            args.extend(["--outcome", "failure"]);
        }
        ok_json(&strata(dir.path(), &args));
    }
    let ledger = std::fs::read_to_string(dir.path().join("memory/cw_ledger.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(ledger.lines().next().unwrap()).unwrap();
    assert_eq!(rec["entry_id"], "e1");
    assert!(rec["delta"].as_f64().unwrap() < 0.0);
}

#[test]
fn explain_shows_threshold_bypass() {
    let dir = TempDir::new().unwrap();
    for (i, text) in ["quantum lattice cryptography notes", "grocery list eggs milk", "meeting moved to noon"]
        .iter()
        .enumerate()
    {
        let id = format!("e{i}");
        ok_json(&strata(
            dir.path(),
            &["append", "--project", "p", "--session", &format!("s{i}"), "--agent", "a", "--content", text, "--id", &id],
        ));
    }
    let r = ok_json(&strata(
        dir.path(),
        &["retrieve", "--project", "p", "--query", "quantum lattice cryptography", "--k1", "inf", "--explain"],
    ));
    let top = &r[0]["ranked"][0];
    assert_eq!(top["entry_id"], "e0");
    assert_eq!(top["breakdown"]["bypass_reason"], "bm25_threshold");

    let pretty = strata(
        dir.path(),
        &["--pretty", "retrieve", "--project", "p", "--query", "quantum", "--mode", "hybrid", "--k1", "inf"],
    );
    let text = String::from_utf8(pretty.stdout).unwrap();
    assert!(text.contains("latency: stage1"), "{text}");
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = TempDir::new().unwrap();
    let missing = strata(dir.path(), &["append", "--session", "s", "--agent", "a", "--content", "x"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_variant = strata(dir.path(), &["retrieve", "--project", "p", "--query", "q", "--variant", "cubic"]);
    assert_eq!(bad_variant.status.code(), Some(2));
    let no_file = strata(dir.path(), &["eval", "--dataset", "nope.jsonl", "--reader", "oracle"]);
    assert_eq!(no_file.status.code(), Some(3));
    let unknown = strata(dir.path(), &["attribute", "--project", "p", "--entry", "ghost", "--answer", "a", "--outcome", "success"]);
    assert_eq!(unknown.status.code(), Some(3));
    let stderr = String::from_utf8(unknown.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
}

#[test]
fn unreachable_reader_is_external_error() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let cfg = dir.path().join("strata.toml");
    std::fs::write(&cfg, format!("[reader]\nurl = \"http://{addr}\"\ntimeout_secs = 2\n")).unwrap();
    let out = strata(dir.path(), &["--config", cfg.to_str().unwrap(), "eval", "--dataset", &data]);
    assert_eq!(out.status.code(), Some(0), "reader failures are scored, not fatal");
    let lines = ok_json(&out);
    assert_eq!(lines.last().unwrap()["failures"], 20);
}

#[test]
fn retrieval_beats_no_retrieval_on_the_fixture() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let acc = |mode: &str| {
        let lines = ok_json(&strata(dir.path(), &["eval", "--dataset", &data, "--reader", "oracle", "--mode", mode]));
        assert_eq!(lines[0]["kind"], "engine_config");
        lines.last().unwrap()["overall"]["accuracy"].as_f64().unwrap()
    };
    assert!(acc("retrieval") > acc("no_retrieval"));
}

#[test]
fn training_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let run = |name: &str| {
        let log = dir.path().join(name);
        ok_json(&strata(
            dir.path(),
            &["train", "--dataset", &data, "--reader", "oracle", "--seed", "7", "--out", log.to_str().unwrap()],
        ));
        std::fs::read_to_string(log).unwrap()
    };
    let a = run("a.jsonl");
    assert_eq!(a, run("b.jsonl"));
    let records: Vec<Value> = a.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!records.is_empty());
    for r in &records {
        assert!(r["batch"].is_u64() && r["mean_reward"].is_f64() && r["weights"].is_object());
    }
}

#[test]
fn ablate_default_grid_emits_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir);
    let out = dir.path().join("ablation.jsonl");
    let lines = ok_json(&strata(
        dir.path(),
        &["ablate", "--dataset", &data, "--reader", "oracle", "--grid", "default", "--out", out.to_str().unwrap()],
    ));
    let rows = &lines[1..];
    assert_eq!(rows.len(), 22);
    assert_eq!(rows[0]["cell"]["label"], "full");
    assert!(dir.path().join("ablation.txt").exists());
    assert_eq!(strata(dir.path(), &["ablate", "--dataset", &data, "--reader", "oracle", "--grid", "nope"]).status.code(), Some(2));
}

#[test]
fn consolidate_promotes_once() {
    let dir = TempDir::new().unwrap();
    ok_json(&strata(
        dir.path(),
        &["append", "--project", "p", "--session", "s", "--agent", "a", "--content", "Dana prefers green tea"],
    ));
    let first = ok_json(&strata(dir.path(), &["consolidate", "--project", "p"]));
    assert!(first[0]["report"]["facts_emitted"].as_u64().unwrap() > 0);
    let second = ok_json(&strata(dir.path(), &["consolidate", "--project", "p"]));
    assert_eq!(second[0]["report"]["facts_emitted"], 0);
    assert!(dir.path().join("memory/semantic/facts.jsonl").exists());
    assert!(dir.path().join("memory/promotions.jsonl").exists());
}
