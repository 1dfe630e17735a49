use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn slw(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slw"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("SLW_THREADS", t);
    }
    cmd.output().expect("spawn slw")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn problem(a22_mod: f64, q: Value) -> Value {
    let w = 2.0 * PI / 3.0;
    json!({
        "a": 1.0,
        "nu": [1.0 / 3.0, 0.0],
        "A": [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [a22_mod * w.cos(), a22_mod * w.sin()]],
        "T": 2.5,
        "q": q,
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pairs(v: &Value) -> Vec<(f64, f64)> {
    v.as_array().unwrap().iter().map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap())).collect()
}

#[test]
fn zero_potential_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", &problem(0.5, json!({"type": "zero"})));
    let report = dir.path().join("r.json");
    let out = slw(&["roundtrip", "--problem", s(&p), "--model", s(&p), "--report", s(&report), "--grid", "0:2.5:11"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read(&report);
    assert!(r["metrics"]["max_abs_error"].as_f64().unwrap() <= 1e-8);
    assert!(r["metrics"]["mhat_decay_order"].is_null());
    // x = 1.0 sits at the singular point and is left out.
    assert_eq!(r["errors"].as_array().unwrap().len(), 10);
}

#[test]
fn continuous_free_problem_has_weyl_function_i_rho() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "p.json",
        &json!({"a": 1.0, "nu": [0.5, 0.0], "A": [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], "T": 2.5, "q": {"type": "zero"}}),
    );
    let w = dir.path().join("w.json");
    let out = slw(&["forward", "--problem", s(&p), "--h", "1.0", "--s-max", "40", "--nodes", "200", "--kmax", "3", "--out", s(&w)], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read(&w);
    assert_eq!(v["contour"]["N"], 200);
    assert!(v["model"].is_null());
    let lam = pairs(&v["nodes_lambda"]);
    let m = pairs(&v["M"]);
    for ((lr, li), (mr, mi)) in lam.iter().zip(m.iter()) {
        // iρ with Im ρ > 0.
        let rho = num_sqrt(*lr, *li);
        let (er, ei) = (-rho.1, rho.0);
        let err = ((mr - er).powi(2) + (mi - ei).powi(2)).sqrt() / (er * er + ei * ei).sqrt();
        assert!(err <= 1e-8, "{err:e}");
    }
}

/// Principal square root rotated into the upper half-plane.
fn num_sqrt(re: f64, im: f64) -> (f64, f64) {
    let r = (re * re + im * im).sqrt();
    let a = ((r + re) / 2.0).sqrt();
    let b = ((r - re) / 2.0).sqrt().copysign(im);
    if b < 0.0 {
        (-a, -b)
    } else {
        (a, b)
    }
}

#[test]
fn validation_failures_exit_one_or_three() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("o.json");
    let o = s(&out_path);

    let mut a12 = problem(0.5, json!({"type": "zero"}));
    a12["A"][1] = json!([0.2, 0.0]);
    let p = write(dir.path(), "a12.json", &a12);
    let out = slw(&["forward", "--problem", s(&p), "--out", o], None);
    assert_eq!(code(&out), 3);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("/A/1") && msg.contains("unsupported"), "{msg}");

    let mut nu2 = problem(0.5, json!({"type": "zero"}));
    nu2["nu"] = json!([2.0, 0.0]);
    let p = write(dir.path(), "nu2.json", &nu2);
    let out = slw(&["spectrum", "--problem", s(&p)], None);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nu"));

    let p = dir.path().join("broken.json");
    std::fs::write(&p, "{\"a\": 1.0,").unwrap();
    assert_eq!(code(&slw(&["spectrum", "--problem", s(&p)], None)), 1);

    let good = write(dir.path(), "good.json", &problem(0.5, json!({"type": "zero"})));
    let out = slw(&["roundtrip", "--problem", s(&good), "--model", s(&good), "--report", o, "--exclude", "1.5"], None);
    assert_eq!(code(&out), 1);

    let w = dir.path().join("w.json");
    let out = slw(&["forward", "--problem", s(&good), "--model", s(&good), "--h", "1.3", "--nodes", "64", "--kmax", "3", "--out", s(&w)], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut wv = read(&w);
    wv["weights"].as_array_mut().unwrap().pop();
    let bad = write(dir.path(), "bad_w.json", &wv);
    let out = slw(&["invert", "--weyl", s(&bad), "--grid", "0:1:3", "--out", o], None);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/weights"));

    let mut wv = read(&w);
    wv["model"] = Value::Null;
    let orphan = write(dir.path(), "orphan.json", &wv);
    assert_eq!(code(&slw(&["invert", "--weyl", s(&orphan), "--grid", "0:1:3", "--out", o], None)), 1);
}

#[test]
fn mismatched_model_exits_four_with_decay_warning() {
    let dir = tempfile::tempdir().unwrap();
    let target = write(dir.path(), "t.json", &problem(0.5, json!({"type": "zero"})));
    let model = write(dir.path(), "m.json", &problem(0.7, json!({"type": "zero"})));
    let w = dir.path().join("w.json");
    let out = slw(&["forward", "--problem", s(&target), "--h", "1.4", "--nodes", "256", "--kmax", "5", "--out", s(&w)], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let q = dir.path().join("q.json");
    let out = slw(&["invert", "--weyl", s(&w), "--model", s(&model), "--grid", "0:2:5", "--out", s(&q)], None);
    assert_eq!(code(&out), 4);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("warning[mhat_decay_marginal]") && msg.contains("check_mhat_decay"), "{msg}");
    assert!(!q.exists());
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let target = write(
        dir.path(),
        "t.json",
        &problem(0.5, json!({"type": "gaussian_bump", "center": 1.8, "width": 0.5, "amplitude_re": 0.8, "amplitude_im": 0.6})),
    );
    let model = write(dir.path(), "m.json", &problem(0.5, json!({"type": "zero"})));
    let mut files = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let w = dir.path().join(format!("w{k}.json"));
        let q = dir.path().join(format!("q{k}.json"));
        let csv = dir.path().join(format!("csv{k}"));
        let out = slw(&["forward", "--problem", s(&target), "--model", s(&model), "--nodes", "256", "--s-max", "40", "--out", s(&w)], Some(threads));
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let out = slw(&["invert", "--weyl", s(&w), "--grid", "0:2.5:6", "--out", s(&q), "--emit-csv", s(&csv)], Some(threads));
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        files.push([w, q, csv.join("recovered.csv")].map(|p| std::fs::read(p).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let csv = String::from_utf8(files[0][2].clone()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 5);
    assert_eq!(lines.count(), 5);
    let q: Value = serde_json::from_slice(&files[0][1]).unwrap();
    assert!(q["mhat_decay_order"].as_f64().unwrap() > 1.0);
    assert_eq!(q["route_discrepancy"][0], Value::Null);
}

#[test]
fn spectrum_lists_eigenvalues_by_index() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", &problem(0.5, json!({"type": "zero"})));
    let out = slw(&["spectrum", "--problem", s(&p), "--kmax", "4"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let ks: Vec<i64> = v["eigenvalues"].as_array().unwrap().iter().map(|e| e["k"].as_i64().unwrap()).collect();
    for k in [-4, -1, 1, 4] {
        assert!(ks.contains(&k), "{ks:?}");
    }
    assert!(v["theta_plus"][1].as_f64().unwrap() > 0.0);
}
