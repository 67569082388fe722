//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn mvgoal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvgoal"))
        .args(args)
        .env_remove("MVGOAL_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Parses a CSV body (header + rows) into field vectors.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn bound_reports_the_constants_and_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let curve_path = dir.path().join("curve.csv");
    let out = mvgoal(&["bound", "--curve-out", curve_path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);

    let mut lower = f64::NAN;
    let mut curve_min = f64::NAN;
    for row in csv_rows(&text) {
        match row[0].as_str() {
            "lower_bound" => lower = row[1].parse().unwrap(),
            "curve_min" => curve_min = row[1].parse().unwrap(),
            _ => {}
        }
    }
    assert!((lower - 0.8072).abs() <= 5e-5, "lower bound printed as {lower}");
    assert!(curve_min >= lower, "curve min {curve_min} below the bound {lower}");

    let curve = std::fs::read_to_string(curve_path).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next().unwrap(), "x,value");
    assert_eq!(lines.next().unwrap(), "0,1");
}

#[test]
fn frontier_rows_are_monotone_and_tolerate_bad_targets() {
    let out = mvgoal(&[
        "frontier", "--target", "1.062", "--target", "1.10", "--target", "1.20",
    ]);
    assert!(out.status.success());
    let rows = csv_rows(&stdout(&out));
    let vars: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(vars[0] < vars[1] && vars[1] < vars[2]);

    // one infeasible target: error cell filled, exit still zero
    let out = mvgoal(&["frontier", "--target", "0.9", "--target", "1.10"]);
    assert!(out.status.success());
    let rows = csv_rows(&stdout(&out));
    assert!(rows[0][2].is_empty() && !rows[0][4].is_empty());
    assert!(!rows[1][2].is_empty());

    // every target infeasible: nonzero exit
    let out = mvgoal(&["frontier", "--target", "0.9"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prob_margins_are_nonnegative() {
    let out = mvgoal(&["prob", "--beta", "1.0", "--beta", "25.0", "--beta", "0.0025"]);
    assert!(out.status.success());
    for row in csv_rows(&stdout(&out)) {
        let margin: f64 = row[3].parse().unwrap();
        assert!(margin >= 0.0, "negative margin in {row:?}");
    }
}

#[test]
fn simulate_is_deterministic_and_passes_the_gate() {
    let args = [
        "simulate", "--paths", "5000", "--steps", "200", "--seed", "11",
    ];
    let a = mvgoal(&args);
    let b = mvgoal(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "same seed must give byte-identical output");

    // a different seed changes the estimates
    let c = mvgoal(&["simulate", "--paths", "5000", "--steps", "200", "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_honors_the_seed_environment_variable() {
    let base = ["simulate", "--paths", "1000", "--steps", "100"];
    let via_env = Command::new(env!("CARGO_BIN_EXE_mvgoal"))
        .args(base)
        .env("MVGOAL_SEED", "777")
        .output()
        .unwrap();
    let via_flag = mvgoal(&["simulate", "--paths", "1000", "--steps", "100", "--seed", "777"]);
    assert_eq!(via_env.stdout, via_flag.stdout);

    // the flag wins over the environment
    let flag_wins = Command::new(env!("CARGO_BIN_EXE_mvgoal"))
        .args(["simulate", "--paths", "1000", "--steps", "100", "--seed", "5"])
        .env("MVGOAL_SEED", "777")
        .output()
        .unwrap();
    let direct = mvgoal(&["simulate", "--paths", "1000", "--steps", "100", "--seed", "5"]);
    assert_eq!(flag_wins.stdout, direct.stdout);
}

#[test]
fn simulate_writes_path_dumps_and_handles_one_path() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("paths.csv");
    let out = mvgoal(&[
        "simulate", "--paths", "1", "--steps", "50", "--seed", "3",
        "--dump-paths", dump.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "single-path run must not crash");
    let text = std::fs::read_to_string(dump).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path_id,tau,bankruptcy_time,terminal_wealth,which_first");
    assert_eq!(lines.len(), 2);
}

#[test]
fn smoke_gate_trips_on_badly_biased_estimates() {
    // grid-only monitoring on a coarse grid undershoots the goal
    // probability by far more than 4 standard errors at this path count
    let out = mvgoal(&[
        "simulate", "--paths", "20000", "--steps", "30", "--seed", "21",
        "--bridge", "off",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smoke gate"));
}

#[test]
fn simulate_accepts_euler_and_bridge_flags() {
    let out = mvgoal(&[
        "simulate", "--paths", "2000", "--steps", "200", "--seed", "4",
        "--scheme", "euler", "--bridge", "off",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("euler"));

    let out = mvgoal(&["simulate", "--scheme", "heun", "--paths", "10", "--steps", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn horizon_matches_the_closed_form_for_a_constant_market() {
    let out = mvgoal(&["horizon", "--grid", "0.25,0.5,1,2,4"]);
    assert!(out.status.success());
    for row in csv_rows(&stdout(&out)) {
        let t: f64 = row[0].parse().unwrap();
        let p: f64 = row[1].parse().unwrap();
        let direct = mvgoal::analytics::universal_curve(0.4 * t.sqrt()).unwrap();
        assert!((p - direct).abs() < 1e-9, "T = {t}: {p} vs {direct}");
        assert!(p >= 0.8072 - 5e-5);
    }
}

#[test]
fn horizon_mc_scan_carries_standard_errors() {
    let out = mvgoal(&[
        "horizon", "--grid", "0.5,1", "--mc-bankruptcy", "--target", "1.5",
        "--paths", "2000", "--steps", "100", "--seed", "9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("horizon,goal_prob,bankruptcy_before_goal,std_error,is_empirical_argmin"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 2);
    let argmin_count = rows.iter().filter(|r| r[4] == "true").count();
    assert_eq!(argmin_count, 1);
}

#[test]
fn market_files_flow_through_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let market_path = dir.path().join("market.json");
    std::fs::write(
        &market_path,
        r#"{
            "horizon": 1.0,
            "rate": { "breakpoints": [0.0, 0.5, 1.0], "values": [0.04, 0.08] },
            "stocks": [ { "mu": 0.12, "sigma_row": [0.15] } ]
        }"#,
    )
    .unwrap();
    let m = market_path.to_str().unwrap();

    let out = mvgoal(&["frontier", "--market", m, "--target", "1.10"]);
    assert!(out.status.success());
    let out = mvgoal(&["prob", "--market", m]);
    assert!(out.status.success());
    let out = mvgoal(&["simulate", "--market", m, "--paths", "500", "--steps", "50"]);
    assert!(out.status.success());

    let out = mvgoal(&["prob", "--market", "/nonexistent/market.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn json_format_emits_valid_json() {
    let out = mvgoal(&["bound", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["lower_bound"].as_f64().unwrap() > 0.80);

    let out = mvgoal(&["frontier", "--target", "1.10", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v.as_array().unwrap().len() == 1);
}

#[test]
fn output_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("table.csv");
    let out = mvgoal(&["prob", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());
    assert!(Path::new(&out_path).exists());
    let text = std::fs::read_to_string(out_path).unwrap();
    assert!(text.starts_with("beta,goal_prob,lower_bound,margin"));
}
