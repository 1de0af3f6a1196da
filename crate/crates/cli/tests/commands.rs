//! End-to-end checks of the command-line driver: each test invokes the
//! built binary on a small JSON run description in a temporary directory
//! and inspects the files it writes and the exit code it returns.

use std::path::{Path, PathBuf};
use std::process::Output;

use serde_json::{json, Value};

fn base_config() -> Value {
    json!({
        "material": {
            "omega_max": 4.0,
            "n_omega": 10,
            "n_mu": 8,
            "tau": "const:100000.0",
            "v": "const:1.0",
            "xi": "bose_einstein:{\"T_eq\":1.0,\"hbar_over_k0\":1.0}",
            "p0": 1.2
        },
        "coefficients": { "eta1": "const:0.6", "gamma0": 1.0 },
        "grid": { "nx_left": 80, "nx_right": 90, "L": 2.8, "dt": 0.004, "T_end": 1.2 },
        "probe": { "mu0": 0.8, "omega0": 2.0, "epsilon": 0.2 },
        "experiment": {
            "mu0": 0.8,
            "omega0": 2.0,
            "epsilons": { "eps_max": 0.2, "count": 3, "ratio": 0.7 },
            "fit": { "pin_q": false },
            "solver": { "instrument": true, "settle_time": 0.25 },
            "eta1_true": 0.6
        },
        "datum": "probe",
        "seed": 7
    })
}

fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn phonox(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_phonox"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn run_ok(args: &[&str]) -> Output {
    let out = phonox(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn a_zero_datum_writes_an_all_zero_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["datum"] = json!("zero");
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut rows = 0;
    for line in trace.lines().skip(1) {
        assert!(line.ends_with(",0"), "nonzero trace row: {line}");
        rows += 1;
    }
    assert!(rows > 1000);
    assert!(out.join("config.json").exists());
    assert!(out.join("metadata.json").exists());
}

#[test]
fn the_equilibrium_datum_reports_negligible_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["datum"] = json!("equilibrium:1.0");
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let meta = read_json(&out.join("metadata.json"));
    let drift = meta["equilibrium_deviation"].as_f64().unwrap();
    assert!(drift <= 1e-10, "equilibrium drift {drift}");
}

#[test]
fn probe_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["experiment"]["epsilons"]["count"] = json!(2);
    let cfg = write_config(tmp.path(), &config);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["probe", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    let snapshot: Vec<Vec<u8>> = ["records.json", "convergence.csv", "metadata.json", "config.json"]
        .iter()
        .map(|name| std::fs::read(a.join(name)).unwrap())
        .collect();
    // Rerunning into the same directory must reproduce every byte; a
    // different destination changes only the echoed config.
    run_ok(&["probe", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["probe", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    for (i, name) in ["records.json", "convergence.csv", "metadata.json", "config.json"]
        .iter()
        .enumerate()
    {
        let again = std::fs::read(a.join(name)).unwrap();
        assert_eq!(snapshot[i], again, "{name} differs between reruns");
        if *name != "config.json" {
            let other = std::fs::read(b.join(name)).unwrap();
            assert_eq!(snapshot[i], other, "{name} differs across destinations");
        }
    }
    let convergence = std::fs::read_to_string(a.join("convergence.csv")).unwrap();
    assert!(convergence.starts_with("epsilon,ratio,abs_error\n"));
    assert_eq!(convergence.lines().count(), 3);
}

#[test]
fn reconstruct_recovers_the_constant_reflectance() {
    let tmp = tempfile::tempdir().unwrap();
    let config = base_config();
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    run_ok(&["reconstruct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let table = std::fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "omega0,eta1,eta2,zeta1,zeta2");
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[1] - 0.6).abs() <= 0.03, "eta1 {} off 0.6", row[1]);
    assert!((row[1] + row[2] - 1.0).abs() <= 1e-12);
    let result = read_json(&out.join("reconstruction.json"));
    assert!(result["fit_exponent"].as_f64().unwrap() > 0.0);
}

#[test]
fn reconstruct_consumes_records_left_by_probe() {
    let tmp = tempfile::tempdir().unwrap();
    let config = base_config();
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    run_ok(&["probe", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    // Perturb the stored records; the estimate must move with the file,
    // proving the record path is read rather than recomputed.
    let records_path = out.join("records.json");
    let mut records = read_json(&records_path);
    for record in records.as_array_mut().unwrap() {
        let m = record["m_value"].as_f64().unwrap();
        record["m_value"] = json!(m * 1.1);
        let c = record["c_value"].as_f64().unwrap();
        record["eta1_raw"] = json!(m * 1.1 / c);
    }
    std::fs::write(&records_path, serde_json::to_string(&records).unwrap()).unwrap();
    run_ok(&["reconstruct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let shifted = read_json(&out.join("reconstruction.json"))["eta1_estimate"]
        .as_f64()
        .unwrap();

    let fresh_dir = tmp.path().join("fresh");
    run_ok(&["reconstruct", "--config", cfg.to_str().unwrap(), "--out", fresh_dir.to_str().unwrap()]);
    let fresh = read_json(&fresh_dir.join("reconstruction.json"))["eta1_estimate"]
        .as_f64()
        .unwrap();
    assert!(
        (shifted - 1.1 * fresh).abs() <= 1e-9,
        "stored records ignored: shifted {shifted}, fresh {fresh}"
    );
}

#[test]
fn pinning_the_fit_exponent_stays_close_to_the_free_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = base_config();
    // A heavy-tailed spectral weight pins the exponent near the free
    // fit's value, so the two extrapolations should nearly agree.
    config["material"]["p0"] = json!(1.02);
    let cfg_free = write_config(tmp.path(), &config);
    let free_dir = tmp.path().join("free");
    run_ok(&["reconstruct", "--config", cfg_free.to_str().unwrap(), "--out", free_dir.to_str().unwrap()]);

    config["experiment"]["fit"]["pin_q"] = json!(true);
    let pin_path = tmp.path().join("pin.json");
    std::fs::write(&pin_path, serde_json::to_string(&config).unwrap()).unwrap();
    let pin_dir = tmp.path().join("pin");
    run_ok(&["reconstruct", "--config", pin_path.to_str().unwrap(), "--out", pin_dir.to_str().unwrap()]);

    let free = read_json(&free_dir.join("reconstruction.json"));
    let pinned = read_json(&pin_dir.join("reconstruction.json"));
    let a = free["eta1_estimate"].as_f64().unwrap();
    let b = pinned["eta1_estimate"].as_f64().unwrap();
    assert!((a - b).abs() <= 0.02, "free {a} vs pinned {b}");
    let q = pinned["fit_exponent"].as_f64().unwrap();
    assert!((q - (1.0 - 3.0 * 0.02 / 1.02)).abs() <= 1e-12);
}

#[test]
fn a_single_width_cannot_be_extrapolated() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["experiment"]["epsilons"] = json!([0.2]);
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    let result = phonox(&["reconstruct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("record"), "stderr: {stderr}");
}

#[test]
fn validate_passes_and_fails_with_the_right_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = base_config();
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    let ok = run_ok(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("l1-budget"));
    assert!(stdout.contains("right-layer-width"));
    assert!(stdout.contains("PASS"));
    let report = read_json(&out.join("report.json"));
    assert!(report["checks"].as_array().unwrap().len() >= 8);

    // A right layer thinner than the audit's minimal extent is an
    // admissibility failure, not a numerical one.
    let mut thin = base_config();
    thin["grid"]["L"] = json!(2.0);
    let cfg_thin = write_config(tmp.path(), &thin);
    let bad = phonox(&["validate", "--config", cfg_thin.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn config_mistakes_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["material"]["p0"] = json!(1.7);
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    let bad = phonox(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));

    let mut no_out = base_config();
    no_out.as_object_mut().unwrap().remove("out_dir");
    let cfg2 = write_config(tmp.path(), &no_out);
    let missing = phonox(&["simulate", "--config", cfg2.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_directory_per_carrier() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = base_config();
    let e = config["experiment"].as_object_mut().unwrap();
    e.remove("omega0");
    e.insert("omega0_list".into(), json!([1.5, 2.0]));
    let cfg = write_config(tmp.path(), &config);
    let out = tmp.path().join("out");
    run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    for carrier in ["omega_1.5", "omega_2"] {
        assert!(out.join(carrier).join("records.json").exists());
        assert!(out.join(carrier).join("convergence.csv").exists());
    }
    let rows = read_json(&out.join("sweep.json"));
    assert_eq!(rows.as_array().unwrap().len(), 2);
    for row in rows.as_array().unwrap() {
        let eta1 = row["eta1_estimate"].as_f64().unwrap();
        assert!((eta1 - 0.6).abs() <= 0.03, "carrier estimate {eta1}");
    }
    let table = std::fs::read_to_string(out.join("coefficients.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}
