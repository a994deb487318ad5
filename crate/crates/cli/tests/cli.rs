use std::path::{Path, PathBuf};
use std::process::Command;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn fincomp(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fincomp"))
        .args(args)
        .env("FINCOMP_OUT_DIR", out)
        .output()
        .unwrap()
}

#[test]
fn run_writes_artifacts_and_succeeds() {
    let out = tempfile::tempdir().unwrap();
    let o = fincomp(&["run", scenario("euclidean-baseline").to_str().unwrap()], out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("completion   OK"));
    for f in ["manifest.json", "summary.json", "distances.csv", "dplus.f64", "dplus.json"] {
        assert!(out.path().join("euclidean-baseline").join(f).exists(), "{f}");
    }
}

#[test]
fn verify_succeeds_on_punctured_plane() {
    let out = tempfile::tempdir().unwrap();
    let o = fincomp(&["verify", scenario("punctured-plane").to_str().unwrap()], out.path());
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("all invariants hold"));
}

#[test]
fn overrides_are_applied() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().join("o");
    let o = fincomp(
        &[
            "run",
            scenario("varying-randers").to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--lipschitz-mode",
            "--seed",
            "9",
        ],
        out.path(),
    );
    assert!(o.status.success());
    let echo = std::fs::read_to_string(dir.join("varying-randers/scenario.json")).unwrap();
    assert!(echo.contains("\"lipschitz\""));
    assert!(echo.contains("\"seed\": 9"));
    assert!(!dir.join("varying-randers/mollifier.json").exists());
}

#[test]
fn stage_failure_exits_with_one() {
    let out = tempfile::tempdir().unwrap();
    let o = fincomp(&["run", scenario("varying-randers").to_str().unwrap(), "--h", "0.25"], out.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_error_exits_with_two() {
    let out = tempfile::tempdir().unwrap();
    let bad = out.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\",\n \"domain\": 4}").unwrap();
    let o = fincomp(&["run", bad.to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("line 2"));
}
