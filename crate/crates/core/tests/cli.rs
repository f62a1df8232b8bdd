use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn proxykit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxykit")).args(args).output().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let a = proxykit(&["--seed", "9", "generate"]);
    let b = proxykit(&["--seed", "9", "generate"]);
    let c = proxykit(&["--seed", "10", "generate"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn generated_layout_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.json");
    let out = proxykit(&["--seed", "3", "--out", path.to_str().unwrap(), "generate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = proxykit(&["validate", path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
}

#[test]
fn fixtures_validate() {
    let out = proxykit(&[
        "validate",
        fixture("living_room.json").to_str().unwrap(),
        fixture("bedroom_addition.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn corrupted_layout_names_the_entity() {
    let text = std::fs::read_to_string(fixture("living_room.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let obj = v["objects"].as_array_mut().unwrap().iter_mut().find(|o| o["instance_id"] == 4).unwrap();
    obj["semantic_label"] = serde_json::json!(55);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let out = proxykit(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("semantic_label out of range") && err.contains("object 4"), "{err}");
}

#[test]
fn malformed_json_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"id\": ").unwrap();
    assert_eq!(proxykit(&["validate", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(proxykit(&["validate", "/nonexistent/layout.json"]).status.code(), Some(1));
}

#[test]
fn plan_writes_four_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = proxykit(&["--out", dir.path().to_str().unwrap(), "plan", fixture("living_room.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for q in 0..4 {
        let t = proxykit::plan::load_trajectory(dir.path().join(format!("quadrant_{q}.json"))).unwrap();
        assert_eq!(t.poses.len(), 42);
    }
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(proxykit(&["--help"]).status.code(), Some(0));
    assert_eq!(proxykit(&["no-such-command"]).status.code(), Some(2));
}
