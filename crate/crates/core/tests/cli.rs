//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

fn conefrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conefrac"))
        .args(args)
        .env_remove("CONEFRAC_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gamma_table_is_csv() {
    let o = conefrac(&["gamma", "--p", "1,2", "--alpha", "3.0,0.2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "p,alpha,log_gamma_p,status");
    let v: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((v - 2f64.ln()).abs() < 1e-12);
    // Γ_2 needs α > 1/2
    assert_eq!(lines[4], "2,0.2,,domain_error");
}

#[test]
fn zonal_table_has_exact_coefficients() {
    let o = conefrac(&["zonal", "--kmax", "2", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("\"(2)\",\"1 1\",2/3"), "{out}");
    assert!(out.contains("\"(1,1)\",\"1 1\",4/3"), "{out}");
}

#[test]
fn density_reports_value_and_transform() {
    let o = conefrac(&[
        "density",
        "--spec",
        r#"{"density":"type1_beta","p":1,"a":2.0,"b":3.0}"#,
        "--x",
        r#"{"p":1,"data":[0.25]}"#,
        "--s",
        "2.0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    // 12 x (1-x)² at 1/4, and E[X] = 2/5
    assert!((v["pdf"].as_f64().unwrap() - 12.0 * 0.25 * 0.5625).abs() < 1e-12);
    assert!((v["m_transform"].as_f64().unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn density_spec_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"density":"matrix_gamma","p":2,"shape":2.5}"#).unwrap();
    let arg = format!("@{}", path(&spec));
    let o = conefrac(&["density", "--spec", &arg, "--x", r#"{"p":2,"data":[1.0,0.2,0.2,0.8]}"#]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&o)["log_pdf"].as_f64().unwrap().is_finite());
}

#[test]
fn samples_are_reproducible_and_positive_definite() {
    let args = ["sample", "--spec", r#"{"density":"type2_beta","p":2,"a":2.0,"b":3.0}"#, "--n", "5", "--seed", "9"];
    let a = conefrac(&args);
    let b = conefrac(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    assert_eq!(out.lines().count(), 5);
    for line in out.lines() {
        let m: serde_json::Value = serde_json::from_str(line).unwrap();
        let d: Vec<f64> = m["data"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(d[1], d[2]);
        assert!(d[0] > 0.0 && d[0] * d[3] - d[1] * d[2] > 0.0, "{line}");
    }
}

#[test]
fn operator_by_quadrature_and_monte_carlo() {
    let request = |extra: &str| {
        format!(
            r#"{{"operator":{{"kind":"KoberII","zeta":1.0,"alpha":1.0}},"u":{{"p":1,"data":[1.0]}},
                "function":{{"function":"exp_trace","rate":1.0}},"n":20000,"seed":4{extra}}}"#
        )
    };
    let q = conefrac(&["operator", "--spec", &request(r#","quadrature":true"#)]);
    let m = conefrac(&["operator", "--spec", &request("")]);
    assert_eq!(q.status.code(), Some(0));
    assert_eq!(m.status.code(), Some(0));
    let exact = (-1.0f64).exp() - 0.219_383_934_395_520_3;
    let qv = json(&q)["value"]["estimate"].as_f64().unwrap();
    assert!((qv - exact).abs() < 1e-10);
    let mv = json(&m);
    let (est, se) = (mv["value"]["estimate"].as_f64().unwrap(), mv["value"]["std_error"].as_f64().unwrap());
    assert!((est - exact).abs() <= 3.0 * se, "{est} ± {se}");
}

#[test]
fn verify_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let o = conefrac(&["verify", "--suite", "lemma41,lemma42", "--n", "2000", "--seed", "3", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["lemma41.json", "lemma41.csv", "lemma41.timing.json", "lemma42.json", "lemma42.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = conefrac(&["report", "--out", path(&out)]);
    assert_eq!(r.status.code(), Some(0));
    assert!(stdout(&r).contains("lemma42"));

    // a report marked as failed turns the summary into a failure
    let file = out.join("lemma41.json");
    let mut report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    report["pass"] = serde_json::Value::Bool(false);
    report["cases"][0]["pass"] = serde_json::Value::Bool(false);
    std::fs::write(&file, serde_json::to_string(&report).unwrap()).unwrap();
    let r = conefrac(&["report", "--out", path(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stdout(&r).contains("FAIL"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_conefrac"))
        .args(["verify", "--suite", "lemma41", "--n", "1000", "--seed", "3", "--format", "csv"])
        .env("CONEFRAC_OUT", dir.path())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("lemma41.csv").exists());
    assert!(!dir.path().join("lemma41.json").exists());
}

#[test]
fn config_file_drives_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = dir.path().join("cfg.json");
    let text = serde_json::json!({"suites": ["lemma41"], "n": 1000, "seed": 5, "p": 1, "formats": ["json"], "out": out});
    std::fs::write(&cfg, text.to_string()).unwrap();
    let o = conefrac(&["verify", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("lemma41.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert!(report["cases"].as_array().unwrap().iter().all(|c| c["params"]["p"] == 1.0));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"suites": ["lemma41"], "n": 1000, "seed": 1, "colour": "red"}"#).unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["verify".into(), "--config".into(), path(&bad).into()],
        vec!["verify".into(), "--config".into(), path(&dir.path().join("missing.json")).into()],
        vec!["verify".into(), "--suite".into(), "lemma41".into()],
        vec!["verify".into(), "--suite".into(), "nope".into(), "--seed".into(), "1".into()],
        vec!["density".into(), "--spec".into(), r#"{"density":"nope"}"#.into()],
        vec!["gamma".into()],
        vec!["frobnicate".into()],
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = conefrac(&refs);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn version_and_help_succeed() {
    assert_eq!(conefrac(&["--version"]).status.code(), Some(0));
    assert_eq!(conefrac(&["--help"]).status.code(), Some(0));
}
