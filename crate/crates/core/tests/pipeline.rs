use std::path::Path;

use finsler_completion::config::{CorruptEdge, DebugSpec};
use finsler_completion::io::read_grid;
use finsler_completion::scenario::check_manifest;
use finsler_completion::{run, verify, Error, Scenario};

fn bundled(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"));
    Scenario::from_file(&p).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn euclidean_baseline_certifies_with_zero_candidate() {
    let out = tempfile::tempdir().unwrap();
    let r = run(&bundled("euclidean-baseline"), out.path()).unwrap();
    assert!(r.ok);
    assert!(r.stages.iter().all(|s| s.status == "OK"));
    let f = read_grid(&r.dir.join("candidate_f.json")).unwrap();
    assert!(f.values().iter().all(|v| v.abs() < 1e-12));
    let c = json(&r.dir.join("completion.json"));
    assert_eq!(c["certificate"]["verdict"], "CERTIFIED");
    assert!(check_manifest(&r.dir).unwrap().is_empty());
}

#[test]
fn constant_randers_recovers_symmetry() {
    let out = tempfile::tempdir().unwrap();
    let r = run(&bundled("constant-randers-b05"), out.path()).unwrap();
    assert!(r.ok, "{:?}", r.stages);
    let c = json(&r.dir.join("completion.json"));
    let full = &c["symmetry"]["full_change"];
    assert!(full["difference"].as_f64().unwrap() < 1e-12);
    assert!(c["certificate"]["max_deviation_from_exact"].as_f64().unwrap() <= 1e-9);
    let s = json(&r.dir.join("spacetime.json"));
    assert!((s["initial_tdot"].as_f64().unwrap() - 1.618033988749895).abs() < 1e-9);
}

#[test]
fn punctured_plane_refuses_completion() {
    let out = tempfile::tempdir().unwrap();
    let r = run(&bundled("punctured-plane"), out.path()).unwrap();
    assert!(r.ok);
    let completion = r.stages.iter().find(|s| s.stage == "completion").unwrap();
    assert_eq!(completion.status, "REFUSED");
    let p = json(&r.dir.join("properness.json"));
    assert_eq!(p["overall"], "NONPROPER-EVIDENCE");
    let c = json(&r.dir.join("completion.json"));
    assert_eq!(c["obstruction"]["passed"], true);
    assert!(!r.dir.join("completion.csv").exists());
}

#[test]
fn varying_randers_is_mollified() {
    let out = tempfile::tempdir().unwrap();
    let r = run(&bundled("varying-randers"), out.path()).unwrap();
    assert!(r.ok, "{:?}", r.stages);
    let m = json(&r.dir.join("mollifier.json"));
    assert_eq!(m["passed"], true);
    assert!(m["deviation"].as_f64().unwrap() <= 0.05);
    assert!(r.dir.join("f_tilde.f64").exists());
}

#[test]
fn verify_passes_on_every_bundled_scenario() {
    let out = tempfile::tempdir().unwrap();
    for name in ["euclidean-baseline", "constant-randers-b05", "punctured-plane", "varying-randers"] {
        let v = verify(&bundled(name), out.path()).unwrap();
        let failed: Vec<_> = v.invariants.iter().filter(|i| !i.passed).map(|i| &i.name).collect();
        assert!(v.passed, "{name}: {failed:?}");
        assert!(out.path().join(name).join("verify.json").exists());
    }
}

#[test]
fn verify_detects_a_corrupted_edge() {
    let out = tempfile::tempdir().unwrap();
    let mut s = bundled("euclidean-baseline");
    s.debug = Some(DebugSpec {
        corrupt_edge: Some(CorruptEdge {
            node: vec![0.25, 0.0],
            offset: vec![1, 0],
            factor: 0.5,
        }),
    });
    let v = verify(&s, out.path()).unwrap();
    assert!(!v.passed);
    let bad = v.invariants.iter().find(|i| i.name == "change.distance_identity").unwrap();
    assert!(!bad.passed);
    assert!(bad.value > 1e-3);
}

#[test]
fn coarse_grid_reports_a_resolution_failure() {
    let out = tempfile::tempdir().unwrap();
    let mut s = bundled("varying-randers");
    s.domain.h = 0.25;
    let r = run(&s, out.path()).unwrap();
    assert!(!r.ok);
    let last = r.stages.last().unwrap();
    assert_eq!((last.stage.as_str(), last.status.as_str()), ("completion", "FAILED"));
    assert!(last.detail.contains("resolution"));
    assert!(out.path().join("varying-randers/summary.json").exists());
}

#[test]
fn config_errors_name_the_field() {
    let text = r#"{"name": "x", "domain": {"origin": [0, 0], "extent": [1, 1], "h": 0.1},
        "metric": {"kind": "randers"}, "base_point": [0, 0],
        "pipeline": [{"stage": "completion"}]}"#;
    match Scenario::from_json_str(text) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "pipeline[0]"),
        other => panic!("unexpected {other:?}"),
    }
    match Scenario::from_json_str("{\"name\": 3}") {
        Err(Error::Config { field, .. }) => assert!(field.starts_with("line 1")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn tampered_artifacts_are_reported() {
    let out = tempfile::tempdir().unwrap();
    let r = run(&bundled("euclidean-baseline"), out.path()).unwrap();
    std::fs::write(r.dir.join("distances.csv"), "changed\n").unwrap();
    assert_eq!(check_manifest(&r.dir).unwrap(), vec!["distances.csv".to_string()]);
}
