use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn subheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subheat"))
        .args(args)
        .output()
        .expect("failed to start subheat")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn grushin_distance_is_pi() {
    let out = subheat(&[
        "distance",
        "--model",
        "grushin",
        "--from",
        "-1,-0.7853981633974483",
        "--to",
        "1,0.7853981633974483",
    ]);
    let v = json_of(&out);
    let d = v["d"].as_f64().unwrap();
    assert!((d - PI).abs() < 1e-6, "d = {d}");
    assert_eq!(v["n_minimizers"], 1);
}

#[test]
fn heisenberg_fit_from_closed_form() {
    let v = json_of(&subheat(&[
        "fit",
        "--model",
        "heisenberg",
        "--target",
        "0,0,1",
        "--t-grid",
        "log:1e-3:1e-1:20",
    ]));
    assert!((v["alpha_hat"].as_f64().unwrap() - 2.0).abs() < 0.01);
    assert!((v["d2_hat"].as_f64().unwrap() - 4.0 * PI).abs() < 0.01);
    assert!((v["C_hat"].as_f64().unwrap() - 0.25).abs() < 1e-6);
}

#[test]
fn verdict_without_fit_file_is_usage_error() {
    let out = subheat(&["verdict", "--fit", "/nonexistent/fit.json", "--n", "2", "--conjugacy", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(subheat(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(subheat(&["distance", "--model", "heisenberg"]).status.code(), Some(1));
    assert_eq!(subheat(&["distance", "--model", "sphere", "--to", "1,1"]).status.code(), Some(1));
    let bad_grid = subheat(&["heat-eval", "--model", "heisenberg", "--target", "0,0,1", "--t-grid", "log:1:0.1:5"]);
    assert_eq!(bad_grid.status.code(), Some(1));
    let bad_tol = subheat(&["heat-eval", "--model", "heisenberg", "--target", "0,0,1", "--t-grid", "1", "--tol", "-1"]);
    assert_eq!(bad_tol.status.code(), Some(1));
    assert_eq!(subheat(&["--help"]).status.code(), Some(0));
}

#[test]
fn numeric_failure_exits_two_with_json_diagnostic() {
    let out = subheat(&[
        "glue",
        "--model",
        "heisenberg",
        "--target",
        "0,0,1",
        "--t",
        "0.5",
        "--box",
        "-0.2,-0.2,-0.2:0.2,0.2,1.2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(diag["error"], "box_too_small");
    assert!(diag["details"]["suggested_radius"].as_f64().unwrap() > 0.2);
}

#[test]
fn geodesic_csv_follows_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("geo.csv");
    let out = subheat(&[
        "geodesic",
        "--model",
        "heisenberg",
        "--theta",
        "0.3",
        "--w",
        "1.1",
        "--t",
        "2",
        "--samples",
        "11",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = read(&path);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,q1,q2,q3,p1,p2,p3,h"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let e = subheat::flow::closed::heisenberg_from_origin(0.3, 1.1, 2.0);
    for i in 0..3 {
        assert!((last[1 + i] - e[i]).abs() < 1e-9, "{last:?} vs {e:?}");
    }
    assert!((last[7] - 0.5).abs() < 1e-10);
}

#[test]
fn config_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# heisenberg vertical\nmodel = heisenberg\ntarget = 0,0,1\nt_grid = log:1:2:4\n").unwrap();
    let c = cfg.to_str().unwrap();

    let from_cfg = subheat(&["heat-eval", "--config", c]);
    assert!(from_cfg.status.success());
    assert_eq!(String::from_utf8_lossy(&from_cfg.stdout).lines().count(), 5);

    let flagged = subheat(&["heat-eval", "--config", c, "--t-grid", "0.5,1"]);
    let text = String::from_utf8_lossy(&flagged.stdout).to_string();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("5.0000000000000000e-1,"));

    std::fs::write(&cfg, "modle = heisenberg\n").unwrap();
    assert_eq!(subheat(&["heat-eval", "--config", c]).status.code(), Some(1));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let args = [
        "heat-eval",
        "--model",
        "grushin",
        "--from",
        "0.3,0.1",
        "--target",
        "-0.5,0.9",
        "--t-grid",
        "log:0.05:0.5:8",
    ];
    let a = subheat(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_subheat"))
        .args(args)
        .env("SUBHEAT_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, subheat(&args).stdout);
}

#[test]
fn fit_from_sample_file_matches_direct_fit_and_feeds_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("k.csv");
    let fit = dir.path().join("fit.json");
    let pair = ["--model", "grushin", "--from", "-1,-0.7853981633974483", "--target", "1,0.7853981633974483"];
    let grid = ["--t-grid", "log:0.05:0.4:20", "--tol", "1e-6"];
    let mut a: Vec<&str> = vec!["heat-eval"];
    a.extend(pair);
    a.extend(grid);
    a.extend(["--out", csv.to_str().unwrap()]);
    assert!(subheat(&a).status.success());

    let via_file = json_of(&subheat(&["fit", "--samples", csv.to_str().unwrap()]));
    let mut d: Vec<&str> = vec!["fit"];
    d.extend(pair);
    d.extend(grid);
    let direct = json_of(&subheat(&d));
    assert_eq!(via_file, direct);
    assert!((direct["alpha_hat"].as_f64().unwrap() - 1.25).abs() < 0.01);

    std::fs::write(&fit, serde_json::to_string(&direct).unwrap()).unwrap();
    let v = json_of(&subheat(&[
        "verdict",
        "--fit",
        fit.to_str().unwrap(),
        "--n",
        "2",
        "--conjugacy",
        "1",
        "--predicted",
        "5/4",
    ]));
    assert_eq!(v["clauses"]["i"], true);
    assert_eq!(v["clauses"]["ii"], true);
    assert_eq!(v["clauses"]["iii"], Value::Null);
    assert_eq!(v["predicted_alpha"].as_f64(), Some(1.25));
}

#[test]
fn grushin_hessian_and_taylor_defaults() {
    let h = json_of(&subheat(&["hessian"]));
    assert_eq!(h["kernel_dim"], 1);
    let k = &h["kernel"][0];
    let (a, b) = (k[0].as_f64().unwrap(), k[1].as_f64().unwrap());
    assert!((a + b).abs() < 1e-3 && (a.abs() - 0.5f64.sqrt()).abs() < 1e-3);

    let dir = tempfile::tempdir().unwrap();
    let form = dir.path().join("form.json");
    let out = subheat(&["taylor", "--form-out", form.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(text.lines().next(), Some("monomial,coefficient,uncertainty"));
    let u2_4: f64 = text
        .lines()
        .find(|l| l.starts_with("u2^4,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    let alpha = 1.5 * PI * PI;
    assert!((u2_4 / (alpha / 24.0) - 1.0).abs() < 1e-3);
    let f: Value = serde_json::from_str(&read(&form)).unwrap();
    assert_eq!(f["heat_exponent"], serde_json::json!([5, 4]));
}

#[test]
fn summary_table_agrees_in_every_cell() {
    let out = subheat(&["reproduce-table"]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(out.status.success());
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.ends_with(",true")), "{text}");
    let conj = rows.iter().find(|r| r.contains("cut_conjugate")).unwrap();
    assert!(conj.contains(",5/4,"));

    let md = subheat(&["reproduce-table", "--format", "markdown"]);
    let md = String::from_utf8_lossy(&md.stdout).to_string();
    assert!(md.contains("C/t^3/2") && md.contains("---"));
}
