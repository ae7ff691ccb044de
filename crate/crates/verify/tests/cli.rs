use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bkcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bkcert"))
        .args(args)
        .output()
        .expect("bkcert runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn lines(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn reimer_single_pair() {
    let o = bkcert(&["reimer", "--n", "3", "--a", "ff", "--b", "0f"]);
    assert_eq!(code(&o), 0);
    let l = lines(&o);
    assert_eq!(
        (l[0]["lhs"].as_f64(), l[0]["rhs"].as_f64()),
        (Some(4.0), Some(4.0))
    );
    assert_eq!(l[1]["summary"]["passed"], 1);
}

#[test]
fn negative_tolerance_is_an_input_error() {
    assert_eq!(
        code(&bkcert(&[
            "--tolerance",
            "-1",
            "suite",
            "--name",
            "reimer-n3"
        ])),
        2
    );
    assert_eq!(
        code(&bkcert(&[
            "reimer",
            "--n",
            "3",
            "--a",
            "1",
            "--b",
            "1",
            "--tolerance",
            "-1"
        ])),
        2
    );
}

#[test]
fn malformed_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(code(&bkcert(&["suite", "--config", &bad])), 2);
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{"suite": "xi", "colour": 3}"#,
    );
    assert_eq!(code(&bkcert(&["suite", "--config", &unknown])), 2);
    let neg = write(
        dir.path(),
        "neg.json",
        r#"{"suite": "xi", "tolerance": -1}"#,
    );
    assert_eq!(code(&bkcert(&["suite", "--config", &neg])), 2);
    assert_eq!(code(&bkcert(&["bk", "--config", "/nonexistent.json"])), 2);
    assert_eq!(
        code(&bkcert(&["suite", "--name", "xi", "--instance", "xi/nope"])),
        2
    );
}

#[test]
fn suite_reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cw.json",
        r#"{"suite": "cw-bk-n4", "seed": 11, "jobs": 2, "sweep": {"j_grid": [-1.0], "samples": 3, "x_grid": ["5/2"]}}"#,
    );
    let a = bkcert(&["suite", "--config", &cfg]);
    let b = bkcert(&["--jobs", "1", "suite", "--config", &cfg]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let l = lines(&a);
    assert_eq!(l.len(), 5);
    assert_eq!(l[4]["summary"]["seed"], 11);
    let id = l[1]["id"].as_str().unwrap();
    let one = bkcert(&["suite", "--config", &cfg, "--instance", id]);
    let one = lines(&one);
    assert_eq!(one[0], l[1]);
}

#[test]
fn out_file_and_record_filter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let o = bkcert(&[
        "--out",
        out.to_str().unwrap(),
        "--records",
        "failures",
        "suite",
        "--name",
        "kn-bk",
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"records\":14"));
    assert!(!text.contains("elapsed"));
}

#[test]
fn bk_float_and_exact() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "ising.json",
        r#"{"family": {"family": "ising", "n": 3, "couplings": [[0, 1, 0.7], [1, 2, 0.3]], "h": [0.2, -0.1, 0.0]},
            "rule": "spin_cluster", "events": "all"}"#,
    );
    let o = bkcert(&["bk", "--config", &f]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&o)[0]["detail"]["pairs"], 65536);
    let e = write(
        dir.path(),
        "kn.json",
        r#"{"exact_family": {"family": "k_out_of_n", "n": 4, "k": 2}}"#,
    );
    let o = bkcert(&["bk", "--exact", "--config", &e]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&o)[0]["detail"]["pairs"], 168 * 168);
    assert_eq!(code(&bkcert(&["bk", "--config", &e])), 2);
}

#[test]
fn ferromagnetic_cw_can_violate_bk() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "cw.json",
        r#"{"family": {"family": "curie_weiss", "n": 3, "j": 1.0, "h": []}}"#,
    );
    let o = bkcert(&["bk", "--config", &f]);
    assert_eq!(code(&o), 1);
    assert!(lines(&o)[0]["detail"]["failures"].as_u64().unwrap() > 0);
    let n = write(
        dir.path(),
        "nlc.json",
        r#"{"family": {"family": "curie_weiss", "n": 3, "j": 1.0, "h": []}}"#,
    );
    assert_eq!(code(&bkcert(&["nlc", "--config", &n])), 1);
    let n = write(
        dir.path(),
        "nlc2.json",
        r#"{"family": {"family": "curie_weiss", "n": 3, "j": -1.0, "h": []}}"#,
    );
    assert_eq!(code(&bkcert(&["nlc", "--config", &n])), 0);
}

#[test]
fn fold_and_bases() {
    let dir = tempfile::tempdir().unwrap();
    let cw = r#"{"family": {"family": "curie_weiss", "n": 4, "j": -0.5, "h": [0.3, 0.1, -0.2, 0.5]}, "lock": {"sites": [0], "values": [1]}}"#;
    let f = write(dir.path(), "fold.json", cw);
    let o = bkcert(&["fold", "--config", &f]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let x = doc["x"].as_f64().unwrap();
    assert!((x - 2f64.exp()).abs() < 1e-9);
    let total: f64 = doc["probabilities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
    let o = bkcert(&["rcr-validate", "--config", &f]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&o)[0]["detail"]["condition_i"], true);
    let g = write(
        dir.path(),
        "g.json",
        r#"{"family": {"family": "potts", "n": 3, "q": 3, "couplings": [[0, 1, -0.4], [1, 2, -1.0]]}}"#,
    );
    let o = bkcert(&["gibbs-base", "--config", &g]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["support"].as_array().unwrap().len(), 4);
    assert_eq!(doc["validation"]["pass"], true);
}

#[test]
fn conditions_on_a_small_ising_model() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "c.json",
        r#"{"family": {"family": "ising", "n": 3, "couplings": [[0, 1, 0.5], [0, 2, 0.2]], "h": [0.1, 0.0, -0.4]}, "events": "all"}"#,
    );
    let o = bkcert(&["conditions", "--config", &f]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = &lines(&o)[0];
    assert_eq!(r["detail"]["layouts"], 19);
    assert_eq!(r["detail"]["separation_failures"], 0);
}

#[test]
fn xi_tables() {
    let o = bkcert(&["xi", "--n", "4", "--x", "2", "--exact"]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let xi: Vec<&str> = doc["xi"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["xi"].as_str().unwrap())
        .collect();
    // p = (1, 8, 16): xi_1 = (8 - 1) / 3, xi_2 = (16 - 1 - 4 xi_1) / 2
    assert_eq!(xi, vec!["1", "7/3", "17/6"]);
    assert_eq!(
        code(&bkcert(&["xi", "--n", "6", "--x", "1/2", "--exact"])),
        1
    );
    assert_eq!(code(&bkcert(&["xi", "--n", "4", "--p", "1,2,3"])), 0);
    assert_eq!(code(&bkcert(&["xi", "--n", "4"])), 2);
    let o = bkcert(&["matchings", "--omega", "+--+-", "--j", "2"]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["count"], "6");
}

#[test]
fn path_corollaries() {
    let o = bkcert(&["four-arm", "--k", "1", "--j", "0.2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&o)[0]["detail"]["inside_boxminus"], true);
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "c19.json",
        r#"{"n": 4, "couplings": [[0, 1, 0.8], [1, 2, 0.8], [2, 3, 0.8]], "h": [0, 0, 0, 0],
            "x": [0], "y": [1], "u": [2], "w": [3]}"#,
    );
    let o = bkcert(&["corollary19", "--config", &f]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&o)[0]["detail"]["equals_boxminus"], true);
}
