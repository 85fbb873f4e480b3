use std::path::Path;
use std::process::{Command, Output};

fn tmula(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmula"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) {
    let config = r#"{
  "name": "small",
  "target": {"name": "banana", "s": 4.0, "b": 0.01},
  "seed": 7,
  "map": {"source": "exact"},
  "replicates": 2,
  "schemes": [
    {"scheme": "ula", "h": 0.01, "steps": 2000, "n_chains": 2, "burn_in": 200},
    {"scheme": "tmula", "h": 0.01, "steps": 2000, "n_chains": 2, "burn_in": 200, "thin": 2}
  ],
  "test_functions": [{"name": "sum_sq_plus_sum", "truth": 10.2792}, {"name": "sum"}],
  "diagnostics": {"ksd": true, "ksd_points": 100}
}
"#;
    std::fs::write(dir.join("c.json"), config).unwrap();
}

#[test]
fn sample_then_diagnose() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    let out = tmula(&["sample", "--config", "c.json", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("o/chains/ula/r001_c0001.csv").exists());
    let out = tmula(&["diagnose", "--chains", "o", "--ksd-points", "50"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("o/diagnostics.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for e in entries {
        assert_eq!(e["n_chains"], 4);
        assert!(e["mean"].as_f64().unwrap().is_finite());
        let ksd = e["ksd"].as_array().unwrap();
        assert_eq!(ksd.len(), 4);
        assert!(ksd.iter().all(|p| p["ksd"].as_f64().unwrap() >= 0.0));
    }
    assert_eq!(v["metadata"]["seeds"], serde_json::json!([7, 8]));
}

#[test]
fn reruns_have_identical_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    for dir in ["a", "b"] {
        let out = tmula(&["--jobs", "1", "run", "--config", "c.json", "--out", dir], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read_to_string(tmp.path().join("a/MANIFEST")).unwrap();
    let b = std::fs::read_to_string(tmp.path().join("b/MANIFEST")).unwrap();
    assert_eq!(a, b);
    assert!(a.lines().any(|l| l.ends_with("  report.json")));
    assert!(a.lines().all(|l| l.len() > 66 && l.as_bytes()[64] == b' '));

    let out = tmula(&["--seed", "99", "run", "--config", "c.json", "--out", "c"], tmp.path());
    assert!(out.status.success());
    let c = std::fs::read_to_string(tmp.path().join("c/MANIFEST")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn train_map_then_sample_with_map() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    let out = tmula(&["sample", "--config", "c.json", "--out", "o"], tmp.path());
    assert!(out.status.success());
    let out = tmula(
        &[
            "train-map",
            "--samples",
            "o/chains/ula/r000_c0000.csv",
            "--skip",
            "200",
            "--order",
            "2",
            "--out",
            "m.json",
            "--report",
            "r.json",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 1801);
    let out = tmula(&["sample", "--config", "c.json", "--map", "m.json", "--out", "p"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("p/chains/tmula/r000_c0000.csv").exists());

    let out = tmula(
        &["train-map", "--samples", "o/chains/ula/r000_c0000.csv", "--max-order", "3", "--out", "a.json"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("order 1: held-out"), "{stdout}");
}

#[test]
fn plain_csv_samples_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b\n");
    for i in 0..400 {
        let x = ((i * 37) % 101) as f64 / 50.0 - 1.0;
        let y = ((i * 53) % 97) as f64 / 48.0 - 1.0;
        csv.push_str(&format!("{x},{}\n", y + 0.5 * x * x));
    }
    std::fs::write(tmp.path().join("s.csv"), csv).unwrap();
    let out = tmula(&["train-map", "--samples", "s.csv", "--out", "m.json"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = tmula(
        &["train-map", "--samples", "s.csv", "--rectifier", "exp", "--out", "x.json"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_input_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.json"), r#"{"name": "x", "bogus": 1}"#).unwrap();
    assert_eq!(tmula(&["run", "--config", "bad.json"], tmp.path()).status.code(), Some(2));
    assert_eq!(tmula(&["run", "no-such-preset"], tmp.path()).status.code(), Some(2));
    assert_eq!(tmula(&["verify", "--suite", "nope"], tmp.path()).status.code(), Some(2));
    assert_eq!(tmula(&["diagnose", "--chains", "missing"], tmp.path()).status.code(), Some(2));
    assert_eq!(tmula(&["--jobs", "0", "verify", "--suite", "rate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn verify_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmula(&["verify", "--suite", "tmrmld", "--points", "10", "--out", "v.json"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("v.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
}

#[test]
fn mixture_study_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = r#"{
  "name": "mix",
  "target": {"name": "gaussian_mixture",
             "means": [[-2.0, 0.0], [2.0, 0.0]],
             "covs": [[[0.3, 0.0], [0.0, 0.3]], [[0.3, 0.0], [0.0, 0.3]]],
             "weights": [0.5, 0.5]},
  "seed": 3,
  "study": {"kind": "mixture_maps", "sizes": [100, 400], "spec": {"total_order": 2},
            "grid_half_width": 3.0, "grid_points": 11, "segment_points": 21},
  "replicates": 2
}
"#;
    std::fs::write(tmp.path().join("m.json"), config).unwrap();
    let out = tmula(&["run", "--config", "m.json", "--out", "o"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("o/tables/separatrix.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2);
    assert!(tmp.path().join("o/maps/mixture_n400.json").exists());
}

#[test]
fn help_lists_subcommands_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmula(&["--help"], tmp.path());
    let text = String::from_utf8_lossy(&out.stdout);
    for word in ["run", "sample", "train-map", "diagnose", "verify", "--seed", "--jobs", "--desk-scale"] {
        assert!(text.contains(word), "{word} missing from help");
    }
}

fn collect_keys(v: &serde_json::Value, out: &mut std::collections::BTreeSet<String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                out.insert(k.clone());
                collect_keys(x, out);
            }
        }
        serde_json::Value::Array(a) => a.iter().for_each(|x| collect_keys(x, out)),
        _ => {}
    }
}

#[test]
fn shipped_schema_names_every_preset_key() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let mut properties = std::collections::BTreeSet::new();
    fn props(v: &serde_json::Value, out: &mut std::collections::BTreeSet<String>) {
        match v {
            serde_json::Value::Object(m) => {
                if let Some(serde_json::Value::Object(p)) = m.get("properties") {
                    out.extend(p.keys().cloned());
                }
                m.values().for_each(|x| props(x, out));
            }
            serde_json::Value::Array(a) => a.iter().for_each(|x| props(x, out)),
            _ => {}
        }
    }
    props(&schema, &mut properties);
    for name in tmula::experiments::PRESETS {
        for desk in [false, true] {
            let config = tmula::experiments::preset(name, desk).unwrap().resolved().unwrap();
            let value: serde_json::Value = serde_json::from_str(&config.to_json()).unwrap();
            let mut keys = std::collections::BTreeSet::new();
            collect_keys(&value, &mut keys);
            for k in keys {
                assert!(properties.contains(&k), "{name}: key {k:?} missing from the schema");
            }
        }
    }
}
