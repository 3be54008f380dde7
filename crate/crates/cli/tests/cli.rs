use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn relu_nfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relu-nfa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn compile_regex(dir: &TempDir, pattern: &str, name: &str) -> (String, String) {
    let net = path(dir, &format!("{name}.json"));
    let spec = path(dir, &format!("{name}.nfa.json"));
    let out = relu_nfa(&[
        "compile",
        "--regex",
        pattern,
        "-o",
        &net,
        "--nfa-out",
        &spec,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    (net, spec)
}

#[test]
fn compile_and_run_regex() {
    let dir = TempDir::new().unwrap();
    let (net, _) = compile_regex(&dir, "(ab)*", "abstar");
    let out = relu_nfa(&["run", &net, "abab", "aba", ""]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "ACCEPT\tabab\nREJECT\taba\nACCEPT\t\n");
}

#[test]
fn run_prints_trace() {
    let dir = TempDir::new().unwrap();
    let (net, _) = compile_regex(&dir, "ab", "ab");
    let out = relu_nfa(&["run", &net, "--trace", "ab"]);
    let text = stdout(&out);
    assert!(text.starts_with("ACCEPT\tab\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("  t=")).count(), 3);
}

#[test]
fn unknown_symbol_is_a_verdict_failure() {
    let dir = TempDir::new().unwrap();
    let (net, _) = compile_regex(&dir, "(ab)*", "abstar");
    let out = relu_nfa(&["run", &net, "abc"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("ERROR\tabc"));
    assert!(stderr(&out).contains('c'));
}

#[test]
fn malformed_spec_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let spec = path(&dir, "bad.json");
    fs::write(
        &spec,
        r#"{"states": 2, "alphabet": ["a"], "start": 5, "accept": [], "transitions": []}"#,
    )
    .unwrap();
    let out = relu_nfa(&["compile", &spec, "-o", &path(&dir, "out.json")]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!Path::new(&path(&dir, "out.json")).exists());

    fs::write(&spec, "not json").unwrap();
    assert_eq!(
        relu_nfa(&["compile", &spec, "-o", &path(&dir, "out.json")])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_exhaustive_passes_for_compiled_pair() {
    let dir = TempDir::new().unwrap();
    let net = path(&dir, "net.json");
    let spec = path(&dir, "nfa.json");
    let out = relu_nfa(&[
        "compile",
        "--random",
        "six",
        "--seed",
        "3",
        "-o",
        &net,
        "--nfa-out",
        &spec,
    ]);
    assert!(out.status.success());
    let report = path(&dir, "report.json");
    let out = relu_nfa(&[
        "verify",
        &spec,
        &net,
        "--exhaustive",
        "8",
        "--report",
        &report,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).starts_with("agreement=1.0000 total=511 mismatches=0"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["total"], 511);
}

#[test]
fn verify_reports_witnesses_for_mismatched_pair() {
    let dir = TempDir::new().unwrap();
    let (net, _) = compile_regex(&dir, "(ab)*", "abstar");
    let (_, spec) = compile_regex(&dir, "(a|b)*", "any");
    let out = relu_nfa(&["verify", &spec, &net, "--exhaustive", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("\"a\": nfa=true network=false"), "{text}");
}

#[test]
fn train_with_defaults() {
    let dir = TempDir::new().unwrap();
    let model = path(&dir, "model.json");
    let report = path(&dir, "report.json");
    let out = relu_nfa(&[
        "train", "--random", "six", "--seed", "1", "-o", &model, "--report", &report,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let losses = text.lines().next().unwrap();
    assert!(losses.starts_with("epoch_losses=["));
    assert_eq!(losses.matches(',').count(), 4);
    assert!(text.contains("violations=0"));

    let out = relu_nfa(&["run", &model, "ab"]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["epoch_losses"].as_array().unwrap().len(), 5);
}

#[test]
fn zero_learning_rate_leaves_model_unchanged() {
    let dir = TempDir::new().unwrap();
    let (_, spec) = compile_regex(&dir, "(a|b)*a", "enda");
    let model = path(&dir, "model.json");
    let out = relu_nfa(&["train", &spec, "--lr", "0", "-o", &model]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let line = stdout(&out).lines().next().unwrap().to_string();
    let values: Vec<&str> = line
        .trim_start_matches("epoch_losses=[")
        .trim_end_matches(']')
        .split(", ")
        .collect();
    assert!(values.windows(2).all(|w| w[0] == w[1]), "{line}");
    let out = relu_nfa(&["verify", &spec, &model, "--exhaustive", "6"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn single_seed_experiment_is_flagged_degenerate() {
    let dir = TempDir::new().unwrap();
    let out_dir = path(&dir, "results");
    let out = relu_nfa(&[
        "experiment",
        "path_enumeration",
        "--config",
        "six",
        "--seeds",
        "1",
        "--out",
        &out_dir,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("single seed"));
    assert!(stdout(&out).contains("(degenerate)"));
    let csv = fs::read_to_string(Path::new(&out_dir).join("results.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
    assert!(Path::new(&out_dir)
        .join("path_enumeration_six.json")
        .exists());
}

#[test]
fn unknown_experiment_is_an_input_error() {
    assert_eq!(relu_nfa(&["experiment", "nope"]).status.code(), Some(2));
}
