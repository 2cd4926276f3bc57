use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tiltsel::io::{read_matrix, read_vector};
use tiltsel::simgen::{generate_replicate, SimModel, SimSpec};

fn tiltsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiltsel"))
        .args(args)
        .env_remove("TILTSEL_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = tiltsel(&[
        "simulate", "--model", "factor2", "--n", "40", "--p", "60", "--sparsity", "4", "--r2",
        "0.6", "--seed", "17", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let spec = SimSpec::new(SimModel::Factor { q: 2 }, 40, 60)
        .with_sparsity(4)
        .with_r_squared(0.6)
        .with_seed(17);
    let rep = generate_replicate(&spec).unwrap();
    let x = read_matrix(&out.join("X.csv"), false).unwrap();
    let y = read_vector(&out.join("y.csv"), false).unwrap();
    assert_eq!((x.rows(), x.cols()), (40, 60));
    for j in 0..60 {
        for i in 0..40 {
            assert!((x.get(i, j) - rep.x.get(i, j)).abs() <= 1e-12);
        }
    }
    for (a, b) in y.iter().zip(&rep.y) {
        assert!((a - b).abs() <= 1e-12);
    }
    let truth = json(&out.join("truth.json"));
    assert_eq!(truth["support"].as_array().unwrap().len(), 4);
}

#[test]
fn select_recovers_single_variable_on_orthogonal_toy() {
    let dir = tempfile::tempdir().unwrap();
    let xp = dir.path().join("X.csv");
    let yp = dir.path().join("y.csv");
    let mut rows = Vec::new();
    for i in 0..8 {
        let row: Vec<String> = (0..8).map(|j| if i == j { "2" } else { "0" }.to_string()).collect();
        rows.push(row.join(","));
    }
    fs::write(&xp, rows.join("\n") + "\n").unwrap();
    fs::write(&yp, "0\n0\n0\n0\n6\n0\n0\n0\n").unwrap();
    for method in ["tcs", "fs", "fr", "marginal"] {
        let o = tiltsel(&[
            "select", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(), "--method", method,
            "--pi", "0.5",
        ]);
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["final_model"], serde_json::json!([4]), "{method}");
        let b = v["final_coefficients"][0].as_f64().unwrap();
        assert!((b - 3.0).abs() < 1e-9, "{method}: {b}");
        assert!(v["bic_trace"].is_array());
    }
}

#[test]
fn select_with_header_and_centering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    assert!(tiltsel(&[
        "simulate", "--model", "fanD", "--phi", "0.5", "--n", "60", "--p", "30", "--seed", "3",
        "--out", out.to_str().unwrap(),
    ])
    .status
    .success());
    let x = fs::read_to_string(out.join("X.csv")).unwrap();
    let header: Vec<String> = (0..30).map(|j| format!("x{j}")).collect();
    fs::write(out.join("Xh.csv"), format!("{}\n{x}", header.join(","))).unwrap();
    let y = fs::read_to_string(out.join("y.csv")).unwrap();
    fs::write(out.join("yh.csv"), format!("y\n{y}")).unwrap();
    let o = tiltsel(&[
        "select", "--x", out.join("Xh.csv").to_str().unwrap(), "--y",
        out.join("yh.csv").to_str().unwrap(), "--header", "--center", "--rescaling", "r1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let model: Vec<u64> = v["final_model"].as_array().unwrap().iter().map(|a| a.as_u64().unwrap()).collect();
    assert!((0..4).all(|j| model.contains(&j)), "{model:?}");
}

#[test]
fn threshold_under_global_null() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    // fanD with phi = 0 has identity covariance
    assert!(tiltsel(&[
        "simulate", "--model", "fanD", "--phi", "0", "--n", "100", "--p", "40", "--seed", "5",
        "--out", out.to_str().unwrap(),
    ])
    .status
    .success());
    let o = tiltsel(&["threshold", "--x", out.join("X.csv").to_str().unwrap(), "--seed", "1", "--center"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let d = v["d"].as_u64().unwrap();
    let rejected = v["rejected_count"].as_u64().unwrap();
    assert_eq!(d, 780);
    assert!(rejected * 20 <= d, "{rejected} rejections");
    let pi = v["pi_hat"].as_f64().unwrap();
    assert!(pi > 0.25, "pi_hat {pi}");
}

fn write_config(dir: &Path, methods: &str, threads: usize) -> std::path::PathBuf {
    let cfg = format!(
        r#"
replicates = 2
master_seed = 11
output_dir = "{}"
threads = {threads}

[spec]
n = 50
p = 100
sparsity = 5
r_squared = 0.9
model = {{ kind = "factor", q = 2 }}

{methods}
"#,
        dir.join("out").display()
    );
    let path = dir.join("bench.toml");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn benchmark_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[methods]]\nkind = \"tcs\"\nrescaling = \"r2\"\n", 1);
    let o = tiltsel(&["benchmark", "--config", cfg.to_str().unwrap(), "--replicates", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let first = fs::read(out.join("summary.csv")).unwrap();
    let mut rdr = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    assert_eq!(rdr.records().count(), 1);
    assert!(csv::Reader::from_path(out.join("roc.csv")).unwrap().records().all(|r| r.is_ok()));
    for line in fs::read_to_string(out.join("runs.jsonl")).unwrap().lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    let manifest = json(&out.join("manifest.json"));
    assert!(manifest["prng"].as_str().unwrap().contains("ChaCha20"));
    assert_eq!(manifest["replicate_seeds"].as_array().unwrap().len(), 1);

    let o = tiltsel(&["benchmark", "--config", cfg.to_str().unwrap(), "--replicates", "1", "--threads", "2"]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("summary.csv")).unwrap(), first);
}

#[test]
fn unit_threshold_tcs_matches_forward_regression() {
    let dir = tempfile::tempdir().unwrap();
    let methods = "[[methods]]\nkind = \"tcs\"\nrescaling = \"r1\"\npi = 1.0\n\n[[methods]]\nkind = \"fr\"\n";
    let cfg = write_config(dir.path(), methods, 1);
    assert!(tiltsel(&["benchmark", "--config", cfg.to_str().unwrap()]).status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("out/summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "tcs-r1");
    assert_eq!(&rows[1][0], "fr");
    for col in 2..5 {
        assert_eq!(rows[0][col], rows[1][col]);
    }
}

#[test]
fn pi_scale_sweep_adds_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[methods]]\nkind = \"tcs\"\nrescaling = \"r2\"\n", 1);
    let o = tiltsel(&[
        "benchmark", "--config", cfg.to_str().unwrap(), "--replicates", "1", "--pi-scale",
        "0.75,0.9,1.0,1.1,1.25",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/summary.csv")).unwrap();
    assert_eq!(rdr.records().count(), 5);
}

#[test]
fn exit_codes() {
    assert_eq!(tiltsel(&["select", "--x", "a.csv"]).status.code(), Some(2));
    assert_eq!(tiltsel(&["nonsense"]).status.code(), Some(2));
    assert_eq!(
        tiltsel(&["threshold", "--x", "/nonexistent/X.csv"]).status.code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "replicates = 0\n").unwrap();
    assert_eq!(tiltsel(&["benchmark", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(tiltsel(&["--help"]).status.code(), Some(0));
}
