mod common;

use std::process::{Command, Output};

use common::fixture;

fn lpvw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpvw"))
        .args(args)
        .output()
        .expect("lpvw runs")
}

fn fx(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn integrator_ramp_from_rest() {
    let o = lpvw(&[
        "simulate", "--model", &fx("integrator.json"), "--ts", "0.5",
        "--p-signal", "0", "--u", "1", "--steps", "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "k,t,y1\n0,0,0\n1,0.5,0.5\n2,1,1\n3,1.5,1.5\n4,2,2\n");
}

#[test]
fn simulate_reads_trajectory_and_emits_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("y.csv");
    let o = lpvw(&[
        "simulate", "--model", &fx("mass_spring_damper.json"), "--ts", "0.05",
        "--traj", &fx("msd_trajectory.csv"), "--x0", "0.1,-0.2", "--emit-state",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,t,y1,x1,x2,xi1,xi2"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[3] - 0.1).abs() < 1e-12 && (first[4] + 0.2).abs() < 1e-12);
    assert_eq!(text.lines().count(), 202);
}

#[test]
fn trajectory_with_wrong_ts_is_rejected() {
    let o = lpvw(&[
        "simulate", "--model", &fx("mass_spring_damper.json"), "--ts", "0.1",
        "--traj", &fx("msd_trajectory.csv"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_IO"), "{}", stderr(&o));
}

#[test]
fn loop_simulate_matches_simulate() {
    let args = |cmd: &'static str| {
        lpvw(&[
            cmd, "--model", &fx("mass_spring_damper.json"), "--ts", "0.05",
            "--traj", &fx("msd_trajectory.csv"),
        ])
    };
    let a = stdout(&args("simulate"));
    let b = stdout(&args("loop-simulate"));
    for (la, lb) in a.lines().zip(b.lines()).skip(1) {
        let ya: f64 = la.split(',').nth(2).unwrap().parse().unwrap();
        let yb: f64 = lb.split(',').nth(2).unwrap().parse().unwrap();
        assert!((ya - yb).abs() < 1e-12);
    }
}

#[test]
fn domain_violation_reports_step() {
    let o = lpvw(&[
        "simulate", "--model", &fx("integrator.json"), "--ts", "0.5",
        "--p-signal", "step:t=1,amp=2", "--u", "1", "--steps", "5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_DOMAIN"));
    assert!(stderr(&o).contains("k = 2"), "{}", stderr(&o));
}

#[test]
fn error_codes_and_exit_statuses() {
    let missing = lpvw(&["check", "--model", "/nonexistent/model.json", "--ts", "0.1"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).starts_with("E_IO"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"nx\": 1,\n").unwrap();
    let parse = lpvw(&["check", "--model", bad.to_str().unwrap(), "--ts", "0.1"]);
    assert_eq!(parse.status.code(), Some(1));
    assert!(stderr(&parse).starts_with("E_PARSE"));

    let singular = lpvw(&["discretize", "--model", &fx("scalar_unstable_p.json"), "--ts", "0.1", "--p", "20"]);
    assert_eq!(singular.status.code(), Some(2));
    assert!(stderr(&singular).starts_with("E_WELLPOSED"));

    let usage = lpvw(&["discretize", "--ts", "0.1"]);
    assert_eq!(usage.status.code(), Some(1));
    assert!(stderr(&usage).starts_with("E_PARSE"));

    let nyquist = lpvw(&["freqresp", "--model", &fx("first_order_lag.json"), "--ts", "0.1", "--w-max", "40"]);
    assert_eq!(nyquist.status.code(), Some(1));
    assert!(stderr(&nyquist).starts_with("E_DOMAIN"));
}

#[test]
fn discretize_integrator_json() {
    let o = lpvw(&["discretize", "--model", &fx("integrator.json"), "--ts", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["w_prime"]["Axi"][0][0], 1.0);
    assert_eq!(v["w_prime"]["Bxi"][0][0], 2.0);
    assert_eq!(v["w_prime"]["Cxi"][0][0], 0.25);
    assert_eq!(v["w_prime"]["Dxi"][0][0], 0.25);
    assert!(v["similarity_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn freqresp_writes_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let ct = dir.path().join("ct.csv");
    let dt = dir.path().join("dt.csv");
    let o = lpvw(&[
        "freqresp", "--model", &fx("mass_spring_damper.json"), "--ts", "0.1", "--p", "1",
        "--ct-out", ct.to_str().unwrap(), "--dt-out", dt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for path in [&ct, &dt] {
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().next(), Some("omega_rads,reOut1In1,imOut1In1"));
        assert!(text.lines().count() > 100);
    }
}

#[test]
fn compare_threshold_exit() {
    let base = [
        "compare", "--model", "", "--ts", "0.05", "--p-signal", "2",
        "--u", "step:t=0,amp=1", "--t-end", "1",
    ];
    let msd = fx("mass_spring_damper.json");
    let mut args = base.to_vec();
    args[2] = &msd;
    let ok = lpvw(&args);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let v: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["samples"], 21);

    // A zero tolerance cannot be met unless both engines agree bit for bit.
    args.extend(["--tol", "0"]);
    let strict = lpvw(&args);
    let v: serde_json::Value = serde_json::from_str(&stdout(&strict)).unwrap();
    if v["max_abs_error"].as_f64().unwrap() > 0.0 {
        assert_eq!(strict.status.code(), Some(3));
        assert!(stderr(&strict).starts_with("E_THRESHOLD"));
    } else {
        assert_eq!(strict.status.code(), Some(0));
    }
}

#[test]
fn converge_report_format() {
    let o = lpvw(&[
        "converge", "--model", &fx("first_order_lag.json"), "--ts-list", "0.2,0.1,0.05",
        "--t-end", "4", "--p-signal", "0", "--u", "sine:amp=1,f=0.5", "--x0", "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "Ts, max_error, pairwise_order");
    assert_eq!(lines.len(), 5, "{text}");
    let order: f64 = lines[4].strip_prefix("fitted_order=").unwrap().parse().unwrap();
    assert!((1.8..=2.2).contains(&order), "{order}");
}

#[test]
fn check_json_report_fields() {
    let o = lpvw(&["check", "--model", &fx("scalar_stable_p.json"), "--ts", "0.1", "--grid", "5", "--random", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["samples_checked"], 2 + 5 + 3);
    assert_eq!(v["passed"], true);
    assert_eq!(v["Ts"], 0.1);
    assert!(v["singular_points"].as_array().unwrap().is_empty());
}
