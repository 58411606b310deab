use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attn-transport"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn gen(dir: &Path, specs: &[&str]) {
    let mut args = vec!["gen", "--out", dir.to_str().unwrap()];
    for s in specs {
        args.extend(["--spec", s]);
    }
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_then_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), &["uniform:64", "window:5:64", "exp:1:64"]);
    let manifest = dir.path().join("manifest.json");
    let out = run(&["diagnose", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["report_version"], 1);
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    for r in records {
        assert!(r["g"].as_f64().unwrap() > 0.0);
        assert!((r["sigma1"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn diagnose_output_file_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), &["uniform:40", "diagonal:5"]);
    let manifest = dir.path().join("manifest.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = run(&[
            "diagnose",
            manifest.to_str().unwrap(),
            "--eps",
            "0",
            "--dense-limit",
            "16",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(v["options"]["dense_limit"], 16);
}

#[test]
fn landscape_from_specs() {
    let out = run(&["landscape", "--spec", "uniform:100", "--spec", "window:5:100", "--floor", "0.2"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["summary"]["floor_fraction"].as_f64().unwrap(), 0.5);
    assert_eq!(v["heads"][0]["floor_pierced"], false);
    assert_eq!(v["heads"][1]["floor_pierced"], true);
}

#[test]
fn landscape_needs_a_source() {
    assert_eq!(run(&["landscape"]).status.code(), Some(2));
}

#[test]
fn oracle_and_too_large() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), &["uniform:4", "uniform:12"]);
    let out = run(&["oracle", dir.path().join("uniform_causal_n4.atm").to_str().unwrap(), "--mask", "causal"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["ratio"].as_f64().unwrap() >= 1.0);
    let out = run(&["oracle", dir.path().join("uniform_causal_n12.atm").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("22"));
}

#[test]
fn oracle_reads_csv_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    fs::write(&path, "1,0\n0.5,0.5\n").unwrap();
    let out = run(&["oracle", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((json(&out)["phi_exact"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn eval_runs_and_reports_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    let mut text = String::from("sample_id,layer,head,phi_hat,sigma2,g,label,length\n");
    for s in 0..120 {
        let label = s % 2;
        let phi = 0.1 + 0.2 * label as f64 + (s % 7) as f64 * 0.03;
        text.push_str(&format!("s{s},0,0,{phi},0.9,0.4,{label},{}\n", 20 + s));
    }
    fs::write(&path, text).unwrap();
    let out = run(&["eval", path.to_str().unwrap(), "--bins", "2", "--seed", "7", "--resamples", "30"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["bins"], "2");
    assert!(v["features"]["phi_mean"]["raw_auroc"].as_f64().unwrap() > 0.9);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "sample_id,phi_hat,label\na,0.1,1\n").unwrap();
    let out = run(&["eval", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["eval", "x.csv", "--bins", "zero"]).status.code(), Some(2));
    assert_eq!(run(&["gen", "--spec", "triangle:4", "--out", "x"]).status.code(), Some(2));
    assert_eq!(run(&["oracle", "m.atm", "--mask", "sideways"]).status.code(), Some(2));
}

#[test]
fn unreadable_manifest_exits_three() {
    let out = run(&["diagnose", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(3));
}
