use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commtdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn emit(dir: &Path, lambda: &str) -> String {
    let path = dir.join("heli.model");
    let p = path.to_str().unwrap().to_string();
    let o = run(&[
        "helicopter", "--lambda", lambda, "--rsigma", "0", "--horizon", "22", "--no-global", "--emit-model", &p,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    p
}

#[test]
fn emitted_model_validates_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let model = emit(dir.path(), "0");
    let v = run(&["validate", &model]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).contains("free communication"));
    let e = run(&["evaluate", &model, "--comm", "jennings", "--goal", "XiR=Destroyed", "--goal-message", "clear"]);
    assert_eq!(e.status.code(), Some(0));
    assert!(stdout(&e).contains("value: 2.3"), "{}", stdout(&e));
}

#[test]
fn helicopter_cell_reports_every_policy() {
    let o = run(&["helicopter", "--lambda", "0", "--rsigma", "0", "--no-global"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for p in ["silent", "jennings", "steam:low", "steam:medium", "local-opt"] {
        assert!(out.lines().any(|l| l.starts_with(p)), "{p} missing from\n{out}");
    }
}

#[test]
fn local_opt_on_a_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = emit(dir.path(), "0.5");
    let o = run(&["local-opt", &model, "--goal", "XiR=Destroyed", "--goal-message", "clear"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reduce_checks_free_models() {
    let dir = tempfile::tempdir().unwrap();
    let model = emit(dir.path(), "0");
    let out = dir.path().join("team.model");
    let o = run(&["reduce", &model, "-o", out.to_str().unwrap(), "--checks", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(run(&["validate", out.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["report", dir.path().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["validate", "/definitely/not/here.model"]).status.code(), Some(2));
    let junk = dir.path().join("junk.model");
    std::fs::write(&junk, "this is not a model").unwrap();
    assert_eq!(run(&["validate", junk.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["helicopter", "--lambda", "2"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn costly_messages_cannot_be_reduced() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heli.model");
    let p = path.to_str().unwrap();
    let o = run(&["helicopter", "--lambda", "0", "--rsigma", "0.5", "--no-global", "--emit-model", p]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run(&["reduce", p]).status.code(), Some(2));
}
