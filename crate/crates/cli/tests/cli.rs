use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn loggas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loggas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

#[test]
fn reference_against_itself_has_zero_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = loggas(&[
        "verify",
        "--config",
        &config("bosons.toml"),
        "--out",
        out.to_str().unwrap(),
        "--source",
        "reference",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["headline"]["verify.w1"].as_f64(), Some(0.0));
    // Every listed file exists; the lock is gone.
    for f in m["outputs"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file(), "{f}");
    }
    assert!(!out.join(".loggas.lock").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("verify/report.json")).unwrap()).unwrap();
    assert_eq!(report["wasserstein1"].as_f64(), Some(0.0));
    assert_eq!(report["pass"].as_bool(), Some(true));
}

#[test]
fn infeasible_truncation_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    for t in ["3,1", "2,2"] {
        let o = loggas(&[
            "equilibrium",
            "--config",
            &config("bosons.toml"),
            "--out",
            tmp.path().to_str().unwrap(),
            "--truncate",
            t,
        ]);
        assert_eq!(o.status.code(), Some(2), "truncate {t}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("truncate"));
    }
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = loggas(&["equilibrium", "--config", &config("gue.toml"), "--out", out, "--set", "equilibrium.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = loggas(&["verify", "--config", &config("gue.toml"), "--out", out, "--against", "rho-infinity"]);
    assert_eq!(o.status.code(), Some(2));
    let o = loggas(&["equilibrium", "--config", "/nonexistent.toml", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = loggas(&[
        "oracle",
        "--config",
        &config("gue.toml"),
        "--out",
        tmp.path().to_str().unwrap(),
        "--n",
        "3",
        "--resolution",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("accuracy"));
}

#[test]
fn locked_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(".loggas.lock"), "").unwrap();
    let o = loggas(&["equilibrium", "--config", &config("gue.toml"), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("manifest.json").exists());
}

fn numeric_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let m = manifest(dir);
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let f = f.as_str().unwrap().to_string();
            let bytes = fs::read(dir.join(&f)).unwrap();
            (f, bytes)
        })
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = loggas(&[
            "sample",
            "--config",
            &config("angelesco.toml"),
            "--out",
            dir.to_str().unwrap(),
            "--chains",
            "3",
            "--set",
            "sampler.sweeps=500",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    // The output path differs, so compare everything except the config copy.
    let strip = |v: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        v.into_iter().filter(|(f, _)| f != "config.toml").collect()
    };
    let (fa, fb) = (strip(numeric_outputs(&a)), strip(numeric_outputs(&b)));
    // Three chains, pooled CSV and plot, two species, report.
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, fb);
    let o = loggas(&[
        "sample",
        "--config",
        &config("angelesco.toml"),
        "--out",
        a.to_str().unwrap(),
        "--chains",
        "3",
        "--set",
        "sampler.sweeps=500",
        "--seed",
        "12",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(strip(numeric_outputs(&a)), fb);
}

#[test]
fn bosonic_pipeline_reaches_the_limit_law() {
    let tmp = tempfile::tempdir().unwrap();
    let o = loggas(&["verify", "--config", &config("bosons.toml"), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(tmp.path());
    let w1 = m["headline"]["verify.w1"].as_f64().unwrap();
    assert!(w1 <= 0.05, "W1 = {w1}");
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("verify.w1"));
}

#[test]
fn every_subcommand_writes_a_manifest() {
    let cases: &[(&str, &str, &[&str])] = &[
        ("equilibrium", "angelesco.toml", &[]),
        ("ldp-probe", "gue.toml", &["--event", "x,1", "--n", "1,2"]),
        ("oracle", "gue.toml", &["--event", "abs,0.5"]),
        ("boson-matrix", "bosons.toml", &["--draws", "5"]),
    ];
    for (cmd, cfg, extra) in cases {
        let tmp = tempfile::tempdir().unwrap();
        let c = config(cfg);
        let mut args = vec![*cmd, "--config", c.as_str(), "--out", tmp.path().to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = loggas(&args);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let m = manifest(tmp.path());
        assert_eq!(m["subcommand"].as_str(), Some(*cmd));
        assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
        for f in m["outputs"].as_array().unwrap() {
            assert!(tmp.path().join(f.as_str().unwrap()).is_file(), "{cmd}: {f}");
        }
    }
}
