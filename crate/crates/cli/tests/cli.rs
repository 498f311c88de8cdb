use std::path::Path;
use std::process::{Command, Output};

use qem_core::Circuit;
use serde_json::Value;

const INHOM_7: &str = r#""circuit": {"family": "swap_test", "nq": 7},
    "noise": {"kind": "inhom_pauli", "epsilon": 0.0008, "params": {"p_x": 0.0001, "p_y": 0.0001, "p_z": 0.0006}}"#;

fn qem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qem")).args(args).output().expect("qem runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "qem failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(config: &str, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["run", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    stdout(&qem(&args));
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn cnot_over_ideal_basis_has_twelve_terms_and_cost_nine() {
    let doc: Value = serde_json::from_str(&stdout(&qem(&["decompose", "--gate", "cnot", "--noise", "none"]))).unwrap();
    let d = &doc["decomposition"];
    assert_eq!(d["terms"].as_array().unwrap().len(), 12);
    assert!((num(d, "cost") - 9.0).abs() < 1e-10);
    assert_eq!(doc["provenance"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn swap_test_cost_at_51_qubits() {
    let text = stdout(&qem(&["cost", "--family", "swap_test", "--nq", "51", "--rates", "ion_trap"]));
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# qem "));
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][3], "51");
    let c: f64 = rows[0][4].parse().unwrap();
    assert!((c / 2.956 - 1.0).abs() < 0.05, "C = {c}");
}

#[test]
fn circuit_text_has_header_and_gate_lines() {
    let text = stdout(&qem(&["circuit", "--family", "swap_test", "--nq", "7"]));
    assert_eq!(text.lines().count(), 141);
    assert!(text.lines().next().unwrap().contains("config"));
    let c = Circuit::from_text(&text).unwrap();
    assert_eq!(c.len(), 140);
    assert!((c.ideal_expectation().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn gst_writes_record_estimate_and_stability() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&qem(&["gst", "--noise", "depolarizing", "--eps", "0.01", "--out", dir.path().to_str().unwrap()]));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("gst.json")).unwrap()).unwrap();
    for key in ["provenance", "record", "estimate", "stability"] {
        assert!(doc.get(key).is_some(), "{key} missing");
    }
    assert_eq!(doc["estimate"]["rho_hat"].as_array().unwrap().len(), 4);
}

#[test]
fn ideal_device_histogram_is_shot_noise_around_ideal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"circuit": {"family": "swap_test", "nq": 5}, "method": {"kind": "none"},
            "trials": 1000, "repetitions": 200, "seed": 11, "histogram_bins": 20}"#,
    );
    let s = run(&cfg, &dir.path().join("out"), &[]);
    let shot = (0.75f64 / 1000.0).sqrt();
    assert!((num(&s, "mean") - 0.5).abs() < 5.0 * num(&s, "std_error"));
    assert!((num(&s, "std_dev") / shot - 1.0).abs() < 0.2);
    assert!((num(&s, "predicted_sigma") - shot).abs() < 1e-12);
    let counts: u64 = s["histogram"]["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(counts, 200);
    assert_eq!(s["histogram"]["edges"].as_array().unwrap().len(), 21);
}

#[test]
fn mitigation_centres_histogram_and_widens_it() {
    let dir = tempfile::tempdir().unwrap();
    let qp = write_config(
        dir.path(),
        "qp.json",
        &format!(r#"{{{INHOM_7}, "method": {{"kind": "quasi_prob"}}, "trials": 2000, "repetitions": 60, "seed": 5}}"#),
    );
    let none = write_config(
        dir.path(),
        "none.json",
        &format!(r#"{{{INHOM_7}, "method": {{"kind": "none"}}, "trials": 2000, "repetitions": 60, "seed": 5}}"#),
    );
    let m = run(&qp, &dir.path().join("qp"), &[]);
    let u = run(&none, &dir.path().join("none"), &[]);
    assert!((num(&m, "mean") - 0.5).abs() < 5.0 * num(&m, "std_error"));
    assert!((num(&u, "mean") - 0.5).abs() > 10.0 * num(&u, "std_error"));
    assert!(num(&m, "std_dev") > num(&u, "std_dev"));
    assert!(num(&m, "cost") > 1.0);
}

#[test]
fn exponential_extrapolation_beats_linear_on_paired_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut means = Vec::new();
    for model in ["linear", "exponential"] {
        let cfg = write_config(
            dir.path(),
            &format!("{model}.json"),
            &format!(
                r#"{{{INHOM_7}, "method": {{"kind": "extrapolation", "model": "{model}", "r": 2}},
                    "trials": 10000, "repetitions": 30, "seed": 9}}"#
            ),
        );
        means.push(num(&run(&cfg, &dir.path().join(model), &[]), "mean"));
    }
    assert!((means[1] - 0.5).abs() < (means[0] - 0.5).abs(), "{means:?}");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"circuit": {"family": "swap_test", "nq": 3}, "noise": {"kind": "damping", "epsilon": 0.01},
            "method": {"kind": "quasi_prob", "decomposition": "compensation"}, "trials": 500, "repetitions": 9, "seed": 4}"#,
    );
    let ex = write_config(
        dir.path(),
        "e.json",
        r#"{"circuit": {"family": "swap_test", "nq": 3}, "noise": {"kind": "leakage", "epsilon": 0.01},
            "method": {"kind": "extrapolation", "model": "exponential", "r": 3}, "trials": 500, "repetitions": 5}"#,
    );
    for cfg in [&cfg, &ex] {
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        run(cfg, &a, &["--threads", "1"]);
        run(cfg, &b, &["--threads", "3"]);
        for name in ["summary.json", "histogram.csv", "estimates.csv"] {
            assert_eq!(
                std::fs::read(a.join(name)).unwrap(),
                std::fs::read(b.join(name)).unwrap(),
                "{name} differs"
            );
        }
    }
}

#[test]
fn every_output_file_carries_version_and_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"circuit": {"family": "swap_test", "nq": 3}, "method": {"kind": "none"}, "trials": 10, "repetitions": 3}"#,
    );
    let out = dir.path().join("out");
    let s = run(&cfg, &out, &["--seed", "77"]);
    let hash = s["provenance"]["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(s["provenance"]["seed"], 77);
    for name in ["histogram.csv", "estimates.csv"] {
        let first = std::fs::read_to_string(out.join(name)).unwrap().lines().next().unwrap().to_string();
        assert!(first.contains(env!("CARGO_PKG_VERSION")) && first.contains(&hash), "{name}: {first}");
        assert!(first.ends_with("seed 77"));
    }
    let other = run(&cfg, &dir.path().join("other"), &["--seed", "78"]);
    assert_ne!(other["provenance"]["config_sha256"].as_str().unwrap(), hash);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"circuit": {"family": "swap_test", "nq": 3}, "method": {"kind": "none"}}"#,
        r#"{"circuit": {"family": "swap_test", "nq": 3}, "method": {"kind": "none"}, "trials": 1, "colour": 1}"#,
        r#"{"circuit": {"family": "swap_test", "nq": 3}, "method": {"kind": "boost"}, "trials": 1}"#,
        r#"{"circuit": {"family": "swap_test", "nq": 4}, "method": {"kind": "none"}, "trials": 1}"#,
        r#"{"circuit": {"family": "swap_test", "nq": 3}, "noise": {"kind": "depolarizing", "epsilon": -1},
            "method": {"kind": "none"}, "trials": 1}"#,
        "not json",
    ];
    for (i, body) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("{i}.json"), body);
        let out = qem(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(qem(&["run"]).status.code(), Some(2));
    assert_eq!(qem(&["run", "--config", "/nonexistent/qem.json"]).status.code(), Some(2));
    assert_eq!(qem(&["decompose", "--gate", "cnot", "--noise", "pink"]).status.code(), Some(2));
}

#[test]
fn oversized_circuits_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"circuit": {"family": "swap_test", "nq": 51}, "method": {"kind": "none"}, "trials": 1}"#,
    );
    let out = qem(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("qem cost"));
}

#[test]
fn circuit_files_run_like_families() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&qem(&["circuit", "--family", "swap_test", "--nq", "3"]));
    let file = dir.path().join("c.txt");
    std::fs::write(&file, text).unwrap();
    let body = |circuit: &str| {
        format!(r#"{{"circuit": {circuit}, "method": {{"kind": "none"}}, "trials": 100, "repetitions": 2, "seed": 1}}"#)
    };
    let a = write_config(dir.path(), "a.json", &body(r#"{"family": "swap_test", "nq": 3}"#));
    let b = write_config(
        dir.path(),
        "b.json",
        &body(&format!(r#"{{"file": {}}}"#, serde_json::to_string(&file).unwrap())),
    );
    let sa = run(&a, &dir.path().join("a"), &[]);
    let sb = run(&b, &dir.path().join("b"), &[]);
    assert_eq!(sa["histogram"], sb["histogram"]);
    assert_eq!(sa["mean"], sb["mean"]);
}
