use std::fs;
use std::process::Command;

fn escdyn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_escdyn"))
}

#[test]
fn list_systems_succeeds() {
    let out = escdyn().arg("--list-systems").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["translation", "spiral", "r3saddle", "shift"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from {text}");
    }
}

#[test]
fn undeclared_system_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"schema_version": 1, "requests": [{"kind": "escape", "system": "ghost", "points": [[0, 0]]}]}"#,
    )
    .unwrap();
    let out = escdyn()
        .arg("--scenario")
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost"));
}

#[test]
fn malformed_json_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(&path, "{\n  \"schema_version\": 1,\n  \"requests\": [,]\n}").unwrap();
    let out = escdyn().arg("--scenario").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn escape_request_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"schema_version": 1,
            "systems": [{"name": "spiral", "kind": "spiral"}],
            "requests": [
              {"kind": "escape", "system": "spiral", "points": [[0.5, 0], [2, 0]]},
              {"kind": "hyperspace", "system": "spiral", "sets": [[[0.5, 0], [0, 0.5]]]}
            ]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = escdyn().arg("--scenario").arg(&path).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let escape = fs::read_to_string(out_dir.join("01-escape-spiral.csv")).unwrap();
    assert!(escape.starts_with("# params: {"));
    assert!(escape.contains("2 0,backward,escaping"));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}
