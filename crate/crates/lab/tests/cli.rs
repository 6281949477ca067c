use std::process::Command;

use pluricurate_lab::output::RunManifest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pluricurate"))
}

#[test]
fn run_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = bin().args(["decay-sweep", "--seed", "3", "--threads", "1", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.seed, 3);
    assert_eq!(m.kind, "decay-sweep");
    let plot = bin().arg("plot").arg(&out).output().unwrap();
    assert_eq!(plot.status.code(), Some(0));
    assert!(out.join("plots/outside_mass_vs_iter.csv").exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"kind": "leakage-sweep", "qs": [0.3], "distances": [4], "seed": 5}"#).unwrap();
    let out = dir.path().join("run");
    let status = bin().arg("leakage-sweep").arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(RunManifest::read(&out).unwrap().seed, 5);
    let status =
        bin().arg("leakage-sweep").arg("--config").arg(&cfg).args(["--seed", "6", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(RunManifest::read(&out).unwrap().seed, 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = bin().args(["gmm", "--config", r#"{"kind": "gmm", "K": 0}"#]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("`K`"));

    let mismatch = bin().args(["gmm", "--config", r#"{"kind": "q-sweep"}"#]).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(2));

    // Overlapping basins leave the outside multiplier at or above 1.
    let out = dir.path().join("violation");
    let violated = bin()
        .args([
            "exact-dynamics",
            "--config",
            r#"{"kind": "exact-dynamics", "distance": 1, "check_outside_domination": true}"#,
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(violated.status.code(), Some(3));
    assert_eq!(RunManifest::read(&out).unwrap().status, "assumption-violation");

    let missing = bin().arg("plot").arg(dir.path().join("nothing")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn schema_lists_every_kind() {
    let out = bin().arg("schema").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let kinds: Vec<&str> = doc.as_array().unwrap().iter().map(|k| k["kind"].as_str().unwrap()).collect();
    assert_eq!(
        kinds,
        [
            "exact-dynamics",
            "gmm",
            "leakage-sweep",
            "decay-sweep",
            "nash-sweep",
            "concentration",
            "q-sweep",
            "k-ablation"
        ]
    );
}
