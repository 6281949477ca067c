use std::collections::BTreeSet;

use serde_json::{json, Value};

use pluricurate::curation::FiniteKEstimator;
use pluricurate::dynamics::UpdateMode;
use pluricurate::gmm::GmmExperimentConfig;
use pluricurate_lab::output::{format_f64, ReadTable, RunManifest};
use pluricurate_lab::runners::{gmm_config_from_spec, run_leakage_sweep};
use pluricurate_lab::spec::parse_config_text;
use pluricurate_lab::{emit_plot_data, run_experiment, ExperimentSpec, Kind};

fn leaf_keys(prefix: &str, v: &Value, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(map) => {
            for (k, inner) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaf_keys(&key, inner, out);
            }
        }
        _ => {
            out.insert(prefix.to_string());
        }
    }
}

fn schema_keys(kind: Kind) -> BTreeSet<&'static str> {
    kind.params().into_iter().map(|p| p.key).collect()
}

#[test]
fn every_gmm_engine_field_is_settable() {
    let mut engine = BTreeSet::new();
    leaf_keys("", &serde_json::to_value(GmmExperimentConfig::default()).unwrap(), &mut engine);
    let rename = |k: &str| if k == "k" { "K".to_string() } else { k.replace("em.", "em_") };
    for kind in [Kind::Gmm, Kind::QSweep] {
        let keys = schema_keys(kind);
        for field in &engine {
            let key = rename(field);
            let settable = key == "seed" || keys.contains(key.as_str()) || (key == "q" && kind == Kind::QSweep);
            assert!(settable, "engine field `{field}` has no {} schema key", kind.name());
        }
    }
}

#[test]
fn every_dynamics_engine_field_is_settable() {
    let mode = UpdateMode::FiniteK { k: 8, estimator: FiniteKEstimator::Auto { state_cap: 1, n_mc: 1 } };
    let mut engine = BTreeSet::new();
    leaf_keys("", &serde_json::to_value(mode).unwrap(), &mut engine);
    let keys = schema_keys(Kind::ExactDynamics);
    for field in engine {
        let leaf = field.rsplit('.').next().unwrap();
        let key = if leaf == "k" { "K" } else { leaf };
        assert!(keys.contains(key), "engine field `{field}` has no schema key");
    }
    // The remaining dynamics inputs are built from the landscape keys.
    for key in
        ["grid_lo", "grid_hi", "grid_points", "midpoint", "gamma", "epsilon", "distance", "q", "steps", "snapshots"]
    {
        assert!(keys.contains(key), "{key}");
    }
}

#[test]
fn spec_values_reach_the_gmm_engine() {
    let spec = parse_config_text(
        r#"{"kind": "gmm", "seed": 9, "K": 7, "n_curated": 40, "steps": 3, "capacity_switch": 2,
            "temperature": 0.5, "eval_samples": 11, "init_samples": 12, "init_mean": [1, 2],
            "init_cov_scale": 4, "em_restarts": 2, "em_max_iter": 13, "em_tol": 1e-3,
            "em_cov_floor": 1e-4, "q": 0.25, "mu1": [0, 1], "mu2": [3, 4]}"#,
    )
    .unwrap();
    let cfg = gmm_config_from_spec(&spec);
    assert_eq!(cfg.seed, 9);
    assert_eq!((cfg.k, cfg.n_curated, cfg.steps, cfg.capacity_switch), (7, 40, 3, 2));
    assert_eq!((cfg.temperature, cfg.q, cfg.init_cov_scale), (0.5, 0.25, 4.0));
    assert_eq!((cfg.eval_samples, cfg.init_samples), (11, 12));
    assert_eq!(cfg.init_mean, Some([1.0, 2.0]));
    assert_eq!((cfg.mu1, cfg.mu2), ([0.0, 1.0], [3.0, 4.0]));
    assert_eq!((cfg.em.restarts, cfg.em.max_iter, cfg.em.tol, cfg.em.cov_floor), (2, 13, 1e-3, 1e-4));
}

#[test]
fn gmm_defaults_match_engine_defaults() {
    let mut cfg = gmm_config_from_spec(&ExperimentSpec::defaults(Kind::Gmm));
    cfg.seed = GmmExperimentConfig::default().seed;
    assert_eq!(cfg, GmmExperimentConfig::default());
}

fn small(kind: Kind) -> ExperimentSpec {
    let mut spec = ExperimentSpec::defaults(kind);
    spec.seed = 17;
    let tweaks: &[(&str, Value)] = match kind {
        Kind::Gmm | Kind::QSweep => &[("steps", json!(3)), ("K", json!(10)), ("n_curated", json!(40))],
        Kind::ExactDynamics => &[
            ("mode", json!("finite")),
            ("K", json!(64)),
            ("estimator", json!("mc")),
            ("n_mc", json!(200)),
            ("steps", json!(5)),
            ("snapshots", json!([0, 5])),
        ],
        Kind::KAblation => &[("ks", json!([4, 1024])), ("steps", json!(3))],
        Kind::NashSweep => &[("distances", json!([3, 5])), ("qs", json!([0.3, 0.7]))],
        Kind::Concentration => &[("n_mc", json!(500))],
        _ => &[],
    };
    for (k, v) in tweaks {
        spec.set(k, v.clone()).unwrap();
    }
    spec
}

#[test]
fn same_spec_and_seed_reproduce_checksums() {
    for kind in Kind::ALL {
        let spec = small(kind);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let m1 = run_experiment(&spec, a.path(), Some(1)).unwrap();
        let m2 = run_experiment(&spec, b.path(), Some(2)).unwrap();
        assert!(!m1.outputs.is_empty());
        assert_eq!(m1.outputs, m2.outputs, "{}", kind.name());
        assert_eq!(RunManifest::read(a.path()).unwrap(), m1);
        let plots = emit_plot_data(a.path()).unwrap();
        assert!(!plots.is_empty(), "{}", kind.name());
    }
}

#[test]
fn stochastic_kinds_depend_on_the_seed() {
    for kind in [Kind::Gmm, Kind::ExactDynamics] {
        let mut spec = small(kind);
        let a = tempfile::tempdir().unwrap();
        let m1 = run_experiment(&spec, a.path(), None).unwrap();
        spec.seed += 1;
        let m2 = run_experiment(&spec, a.path(), None).unwrap();
        assert_ne!(m1.outputs[0].sha256, m2.outputs[0].sha256, "{}", kind.name());
    }
}

#[test]
fn csv_values_match_memory_exactly() {
    let mut spec = ExperimentSpec::defaults(Kind::LeakageSweep);
    spec.set("qs", json!([0.2, 0.7])).unwrap();
    let cells = run_leakage_sweep(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&spec, dir.path(), None).unwrap();
    let table = ReadTable::read(&dir.path().join("leakage.csv")).unwrap();
    let empirical = table.f64s("empirical").unwrap();
    let lower = table.f64s("lower").unwrap();
    assert_eq!(empirical.len(), cells.len());
    for (i, c) in cells.iter().enumerate() {
        assert_eq!(empirical[i].to_bits(), c.empirical.to_bits());
        assert_eq!(lower[i].to_bits(), c.interval.lower.to_bits());
    }
    let text = std::fs::read_to_string(dir.path().join("leakage.csv")).unwrap();
    assert!(text.contains(&format_f64(cells[0].empirical)));
}

#[test]
fn manifest_lists_every_data_file_with_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&small(Kind::ExactDynamics), dir.path(), None).unwrap();
    let names: Vec<&str> = m.outputs.iter().map(|o| o.file.as_str()).collect();
    assert_eq!(names, ["trajectory.csv", "snapshots.csv", "landscape.csv", "summary.csv"]);
    for o in &m.outputs {
        assert_eq!(o.sha256, pluricurate_lab::output::sha256_file(&dir.path().join(&o.file)).unwrap());
    }
    assert_eq!(m.spec["seed"], json!(17));
    assert_eq!(m.status, "ok");
    let snaps = ReadTable::read(&dir.path().join("snapshots.csv")).unwrap();
    assert_eq!(snaps.rows.len(), 2 * 401);
}

#[test]
fn failures_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::defaults(Kind::ExactDynamics);
    spec.set("distance", json!(0.0)).unwrap();
    let err = run_experiment(&spec, dir.path(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn plot_data_needs_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let err = emit_plot_data(dir.path()).unwrap_err();
    assert!(err.to_string().contains("manifest.json"), "{err}");
}
