//! End-to-end tests of the `vel` binary: exit codes, artifact shape,
//! schema conformance, and byte-level determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vel() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vel"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vel-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL_RUN: &str = "\
[gas]
gamma = 2.0
g = 1.0
mass = 1.0

[grid]
n_cells = 64

[init]
family = sine_mode
amplitude = 1e-3
mode = 1

[time]
t_final = 2.0

[experiment]
name = smoke
";

// ---- minimal structural JSON-schema validator (type/properties/required/items) ----

fn type_matches(value: &serde_json::Value, ty: &str) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "number" => value.is_number(),
        "integer" => value.is_u64() || value.is_i64(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        _ => false,
    }
}

fn validate(value: &serde_json::Value, schema: &serde_json::Value, path: &str) -> Vec<String> {
    let mut errors = Vec::new();
    if let Some(ty) = schema.get("type") {
        let allowed: Vec<String> = match ty {
            serde_json::Value::String(s) => vec![s.clone()],
            serde_json::Value::Array(a) => a
                .iter()
                .filter_map(|v| v.as_str().map(String::from))
                .collect(),
            _ => vec![],
        };
        if !allowed.iter().any(|t| type_matches(value, t)) {
            errors.push(format!("{path}: type mismatch (want {allowed:?})"));
            return errors;
        }
        // union with null: nothing further to check on the null branch
        if value.is_null() {
            return errors;
        }
    }
    if let Some(req) = schema.get("required").and_then(|r| r.as_array()) {
        for key in req.iter().filter_map(|k| k.as_str()) {
            if value.get(key).is_none() {
                errors.push(format!("{path}: missing required key `{key}`"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
        for (key, sub) in props {
            if let Some(v) = value.get(key) {
                errors.extend(validate(v, sub, &format!("{path}.{key}")));
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                errors.extend(validate(v, items, &format!("{path}[{i}]")));
            }
        }
    }
    errors
}

fn assert_schema(json_path: &Path, schema_name: &str) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schema")
        .join(schema_name);
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&schema_path).unwrap()).unwrap();
    let value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(json_path).unwrap()).unwrap();
    let errors = validate(&value, &schema, "$");
    assert!(
        errors.is_empty(),
        "{} violates {schema_name}: {errors:?}",
        json_path.display()
    );
}

// ---- tests ----

#[test]
fn simulate_writes_artifacts_and_passes_schema() {
    let dir = tmp_dir("sim");
    let cfg = write_config(&dir, "run.conf", SMALL_RUN);
    let out = vel()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let series = fs::read_to_string(dir.join("out/series.csv")).unwrap();
    let mut lines = series.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,E_total,E_00,E_10,E_01,E_20,E_11,E_02,D_total,gamma_boundary,max_abs_v,mass_rel_err"
    );
    assert!(lines.count() >= 2);
    assert_schema(&dir.join("out/summary.json"), "summary.schema.json");
}

#[test]
fn simulate_zero_data_has_zero_energy_columns() {
    let dir = tmp_dir("zero");
    let cfg = write_config(
        &dir,
        "run.conf",
        &SMALL_RUN.replace("amplitude = 1e-3", "amplitude = 0.0"),
    );
    let out = vel()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let series = fs::read_to_string(dir.join("out/series.csv")).unwrap();
    for line in series.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        for col in &cols[1..9] {
            assert_eq!(*col, "0", "energy columns must be exactly zero: {line}");
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tmp_dir("det");
    let cfg = write_config(&dir, "run.conf", SMALL_RUN);
    for sub in ["a", "b"] {
        let out = vel()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .arg("--quiet")
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = fs::read(dir.join("a/series.csv")).unwrap();
    let b = fs::read(dir.join("b/series.csv")).unwrap();
    assert_eq!(a, b, "series.csv must be byte-identical across repeats");
    let a = fs::read(dir.join("a/summary.json")).unwrap();
    let b = fs::read(dir.join("b/summary.json")).unwrap();
    assert_eq!(a, b, "summary.json must be byte-identical across repeats");
}

#[test]
fn config_errors_exit_2_with_error_json() {
    let dir = tmp_dir("cfg");
    // gamma below 1
    let cfg = write_config(
        &dir,
        "bad_gamma.conf",
        "[gas]\ngamma = 0.9\n[grid]\nn_cells = 64\n",
    );
    let out = run_expect_error(&cfg, &dir, 2);
    let msg = error_message(&out, &dir);
    assert!(msg.contains("gamma must exceed 1"), "{msg}");

    // malformed line with line number
    let cfg = write_config(
        &dir,
        "bad_line.conf",
        "[gas]\ngamma = 2.0\n[time]\ndt 0.01\n[grid]\nn_cells = 64\n",
    );
    let out = run_expect_error(&cfg, &dir, 2);
    let msg = error_message(&out, &dir);
    assert!(msg.contains("line 4"), "{msg}");

    // missing config flag entirely
    let out = vel().arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn run_expect_error(cfg: &Path, dir: &Path, code: i32) -> Output {
    let out = vel()
        .args(["simulate", "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(code), "{out:?}");
    out
}

fn error_message(out: &Output, dir: &Path) -> String {
    let text = String::from_utf8_lossy(&out.stdout);
    let payload: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    // the failure payload itself is schema-bound
    let err_file = dir.join("error.json");
    fs::write(&err_file, text.trim()).unwrap();
    assert_schema(&err_file, "error.schema.json");
    payload["message"].as_str().unwrap_or_default().to_string()
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tmp_dir("rt");
    // dt far beyond the stability limit trips the per-step gate
    let cfg = write_config(
        &dir,
        "unstable.conf",
        &SMALL_RUN.replace(
            "[time]\nt_final = 2.0",
            "[time]\nt_final = 2.0\ndt = 1.0",
        ),
    );
    let out = vel()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    let payload: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(payload["error"], "runtime");
}

#[test]
fn verify_identities_passes_and_validates() {
    let dir = tmp_dir("ids");
    let out = vel()
        .args(["verify-identities", "--dims", "2,3", "--seed", "7", "--fields", "5"])
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_schema(&dir.join("out/identities.json"), "identities.schema.json");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/identities.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["max_jacobian_residual"].as_f64().unwrap() <= 1e-10);
    assert!(report["max_nab_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn decay_fit_reads_series() {
    let dir = tmp_dir("fit");
    // synthetic exact exponential
    let mut csv = String::from("t,E_total\n");
    for k in 0..100 {
        let t = k as f64 * 0.25;
        csv.push_str(&format!("{t},{}\n", 5.0 * (-0.3 * t).exp()));
    }
    let series = dir.join("series.csv");
    fs::write(&series, csv).unwrap();
    let out = vel()
        .args(["decay-fit", "--series"])
        .arg(&series)
        .args(["--window", "2:20"])
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let payload: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stdout).trim()).unwrap();
    assert!((payload["delta"].as_f64().unwrap() - 0.3).abs() < 1e-10);
    assert_schema(&dir.join("out/decay_fit.json"), "decay_fit.schema.json");
}

#[test]
fn convergence_and_darcy_reports_validate() {
    let dir = tmp_dir("cvdc");
    let cfg = write_config(
        &dir,
        "conv.conf",
        "[gas]\ngamma = 2.0\n[grid]\nn_cells = 32\n[init]\nfamily = polynomial_bump\namplitude = 1e-3\n[time]\nt_final = 1.0\n[experiment]\nname = conv\nlevels = 3\n",
    );
    let out = vel()
        .args(["convergence", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("cv"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_schema(&dir.join("cv/convergence.json"), "convergence.schema.json");

    let cfg = write_config(
        &dir,
        "darcy.conf",
        "[gas]\ngamma = 2.0\n[grid]\nn_cells = 32\n[init]\namplitude = 1e-3\n[time]\nt_final = 3.0\n[experiment]\nname = twin\n",
    );
    let out = vel()
        .args(["darcy-compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("dc"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_schema(&dir.join("dc/darcy_compare.json"), "darcy_compare.schema.json");
    assert!(dir.join("dc/darcy_compare.csv").exists());
}

#[test]
fn thread_cap_does_not_change_artifacts() {
    let dir = tmp_dir("threads");
    let cfg = write_config(
        &dir,
        "conv.conf",
        "[gas]\ngamma = 2.0\n[grid]\nn_cells = 32\n[init]\nfamily = polynomial_bump\namplitude = 1e-3\n[time]\nt_final = 1.0\n[experiment]\nname = conv\nlevels = 3\n",
    );
    for (sub, threads) in [("one", "1"), ("many", "0")] {
        let out = vel()
            .args(["convergence", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .arg("--quiet")
            .env("VEL_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{out:?}");
    }
    let a = fs::read(dir.join("one/convergence.json")).unwrap();
    let b = fs::read(dir.join("many/convergence.json")).unwrap();
    assert_eq!(a, b, "parallel fan-out must not change results");
}

#[test]
fn svg_plot_is_emitted_on_request() {
    let dir = tmp_dir("svg");
    let cfg = write_config(
        &dir,
        "run.conf",
        &format!("{SMALL_RUN}svg = true\n"),
    );
    let out = vel()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let svg = fs::read_to_string(dir.join("out/energy.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn custom_table_initial_data() {
    let dir = tmp_dir("table");
    fs::write(
        dir.join("init.csv"),
        "y,omega,v\n0.0,0.0,0.0\n1.0,0.0005,0.0\n2.0,0.001,0.0\n",
    )
    .unwrap();
    let cfg = write_config(
        &dir,
        "run.conf",
        "[gas]\ngamma = 2.0\n[grid]\nn_cells = 64\n[init]\nfamily = custom_table\ntable_path = init.csv\n[time]\nt_final = 1.0\n[experiment]\nname = table\n",
    );
    let out = vel()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap();
    // the table displaces the top by 1e-3, so the boundary starts at
    // hbar + 1e-3 and relaxes from there
    assert!(summary["initial"]["e_total"].as_f64().unwrap() > 0.0);
}

#[test]
fn set_overrides_config_keys() {
    let dir = tmp_dir("set");
    let cfg = write_config(&dir, "run.conf", SMALL_RUN);
    let out = vel()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--set", "time.t_final=1.0", "--set", "experiment.name=short"])
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["name"], "short");
    assert_eq!(summary["time"]["t_final"], 1.0);
}
