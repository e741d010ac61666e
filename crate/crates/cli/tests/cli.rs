use std::path::Path;
use std::process::{Command, Output};

use vslab::diagnostics::DiagnosticsConfig;
use vslab::{GdConfig, SvmOptions};

fn vslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vslab"))
        .args(args)
        .env_remove("VSLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = "[problem]\nd = 64\nn = 12\ntau = 3.0\n";

#[test]
fn missing_config_exits_2_and_names_path() {
    let out = vslab(&["--config", "/definitely/not/here.toml", "gen"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here.toml"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[gd]\nmax_iter = 5\n");
    let out = vslab(&["--config", &cfg, "config"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iter"));
}

#[test]
fn invalid_value_is_a_config_error() {
    let out = vslab(&["--workers", "0", "config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_is_byte_identical_for_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        let out = vslab(&["--config", &cfg, "--seed", "9", "--out", o.to_str().unwrap(), "gen"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = std::fs::read(a.join("dataset.csv")).unwrap();
    let fb = std::fs::read(b.join("dataset.csv")).unwrap();
    assert_eq!(fa, fb);
    let header = String::from_utf8_lossy(&fa).lines().next().unwrap().to_string();
    // d = 64 splits 32 + 32; n = 12 at tau = 3 gives 9 + 3
    let spec = vslab::ProblemSpec::aligned(32, 32, 0.25 * 64f64.powf(0.6), 0.0, 9, 3).unwrap();
    assert!(header.contains(&format!("spec_hash={:016x}", spec.hash64())), "{header}");
    assert!(header.contains("seed=9"));
}

#[test]
fn effective_config_matches_library_defaults() {
    let out = vslab(&["config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let v: toml::Value = toml::from_str(&text).unwrap();
    let gd: GdConfig = v["gd"].clone().try_into().unwrap();
    assert_eq!(gd, GdConfig::default());
    let svm: SvmOptions = v["svm"].clone().try_into().unwrap();
    assert_eq!(svm, SvmOptions::default());
    let diag: DiagnosticsConfig = v["diagnostics"].clone().try_into().unwrap();
    assert_eq!(diag, DiagnosticsConfig::default());
    assert_eq!(v["problem"]["n"].as_integer(), Some(vslab::experiments::PRESET_N as i64));
    assert_eq!(v["problem"]["tau"].as_float(), Some(vslab::experiments::PRESET_TAU));
    assert_eq!(v["loss"]["iota_scale"].as_float(), Some(vslab::loss::DEFAULT_IOTA_SCALE));
}

#[test]
fn sweep_csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        r#"
[sweep]
label = "tiny"
dims = [64, 128]
n = 12
tau_rule = { kind = "fixed", value = 3.0 }
r_plus_rule = { coef = 0.25, exponent = 0.6 }
r_ratio = 0.0
losses = [
  { kind = "vs", shape = "exponential", iota_scale = 1.0 },
  { kind = "la", shape = "exponential", iota_scale = 1.0 },
]
seeds = [1, 2, 3]
solver = "cs_svm"
mc_samples = 500
"#,
    );
    let mut csvs = Vec::new();
    for w in ["1", "8"] {
        let o = dir.path().join(format!("w{w}"));
        let out = vslab(&["--config", &cfg, "--workers", w, "--out", o.to_str().unwrap(), "sweep"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(std::fs::read(o.join("sweep.csv")).unwrap());
        assert!(o.join("plot_fig2.py").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(String::from_utf8_lossy(&csvs[0]).lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn workers_fall_back_to_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_vslab"))
        .arg("config")
        .env("VSLAB_WORKERS", "5")
        .output()
        .unwrap();
    let v: toml::Value = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(v["workers"].as_integer(), Some(5));
}

#[test]
fn dry_run_prints_grid_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("never");
    let out = vslab(&[
        "--out",
        o.to_str().unwrap(),
        "sweep",
        "--preset",
        "fig2",
        "--variant",
        "growing",
        "--dry-run",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("4096"));
    assert!(text.contains("12.3333"));
    assert!(!o.exists());
}

#[test]
fn sweep_without_grid_is_a_config_error() {
    assert_eq!(vslab(&["sweep"]).status.code(), Some(2));
}

#[test]
fn train_warns_for_large_init_and_still_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let o = dir.path().join("t");
    let out = vslab(&[
        "--config", &cfg, "--out", o.to_str().unwrap(), "--json", "train",
        "--loss", "la", "--init", "random", "--init-norm", "0.5", "--max-iters", "500",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds"));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["loss"], "la");
    assert!(o.join("trajectory.csv").exists());
}

#[test]
fn verify_reports_json_and_fails_with_4_on_fixture_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let ok = vslab(&["--config", &cfg, "--json", "verify"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    let names: Vec<&str> = rep["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    for n in ["q_function_fixture", "good_event", "assumptions", "separability_witness", "oracle_equivalence"] {
        assert!(names.contains(&n), "{names:?}");
    }
    // a zero tolerance cannot be met by a double-precision evaluation
    let bad = vslab(&["--config", &cfg, "verify", "--q-tolerance", "0"]);
    assert_eq!(bad.status.code(), Some(4));
}
