//! End-to-end tests of the `hedge` binary: worked-example values, exit
//! codes, file output, and the table/levels modes.

use std::path::Path;
use std::process::{Command, Output};

fn hedge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hedge"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn one_period_call(dir: &Path) -> String {
    write_config(
        dir,
        "call1.json",
        r#"{
            "model": {"type": "binomial", "s0": 100.0, "up": 1.2, "down": 0.8,
                      "rate": 0.0, "p_up": 0.6, "periods": 1},
            "claim": {"type": "call", "strike": 100.0},
            "budget": {"value": 5.0}
        }"#,
    )
}

fn parse_report(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is a JSON report")
}

#[test]
fn greedy_report_on_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let config = one_period_call(dir.path());
    let out = hedge()
        .args(["solve", "--problem", "a", "--config", &config])
        .output()
        .unwrap();
    let report = parse_report(&out);
    assert_eq!(report["bounds"]["z_greedy"].as_f64().unwrap(), 0.4);
    assert_eq!(report["bounds"]["greedy_error_bound"].as_f64().unwrap(), 0.6);
    assert_eq!(report["critical_state"].as_u64().unwrap(), 1);
    assert_eq!(report["price"].as_f64().unwrap(), 10.0);
    assert_eq!(report["alpha"].as_f64().unwrap(), 0.5);
}

#[test]
fn problem_d_report_on_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let config = one_period_call(dir.path());
    let out = hedge()
        .args(["solve", "--problem", "d", "--config", &config])
        .output()
        .unwrap();
    let report = parse_report(&out);
    assert_eq!(report["expected_shortfall"].as_f64().unwrap(), 4.0);
    assert_eq!(report["sacrificed_state"].as_u64().unwrap(), 2);
    assert_eq!(report["initial_cost"].as_f64().unwrap(), 5.0);
    assert_eq!(report["states"][1]["v_terminal"].as_f64().unwrap(), -10.0);
}

#[test]
fn budget_at_price_is_rejected_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "over.json",
        r#"{
            "model": {"type": "binomial", "s0": 100.0, "up": 1.2, "down": 0.8,
                      "rate": 0.0, "p_up": 0.6, "periods": 1},
            "claim": {"type": "call", "strike": 100.0},
            "budget": {"value": 10.0}
        }"#,
    );
    let out = hedge()
        .args(["solve", "--problem", "a", "--config", &config])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("budget must be strictly below the perfect-hedge price"),
        "stderr: {stderr}"
    );
}

#[test]
fn arbitrage_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "arb.json",
        r#"{
            "model": {"type": "binomial", "s0": 100.0, "up": 1.05, "down": 0.9,
                      "rate": 0.07, "p_up": 0.5, "periods": 1},
            "claim": {"type": "call", "strike": 100.0},
            "budget": {"value": 1.0}
        }"#,
    );
    let out = hedge()
        .args(["solve", "--problem", "a", "--config", &config])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("arbitrage"));
}

#[test]
fn zero_claim_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "zero.json",
        r#"{
            "model": {"type": "table", "p": [0.6, 0.4], "p_star": [0.5, 0.5]},
            "claim": {"type": "payoffs", "values": [0.0, 0.0]},
            "budget": {"value": 0.0}
        }"#,
    );
    let out = hedge()
        .args(["solve", "--problem", "c", "--config", &config])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn exhausted_node_budget_exits_5_with_best_found() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "big.json",
        r#"{
            "model": {"type": "binomial", "s0": 100.0, "up": 1.21, "down": 0.83,
                      "rate": 0.0, "p_up": 0.57, "periods": 10},
            "claim": {"type": "call", "strike": 100.0},
            "budget": {"fraction": 0.5}
        }"#,
    );
    let out = hedge()
        .args([
            "solve",
            "--problem",
            "a",
            "--mode",
            "exact",
            "--config",
            &config,
        ])
        .env("HEDGE_NODE_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["optimal"].as_bool(), Some(false));
    assert!(report["bounds"]["z_exact"].as_f64().unwrap() > 0.0);
}

#[test]
fn table_mode_skips_strategy_and_matches_reduction() {
    let dir = tempfile::tempdir().unwrap();
    // The worked example as a bare state table.
    let config = write_config(
        dir.path(),
        "table.json",
        r#"{
            "model": {"type": "table", "p": [0.6, 0.4], "p_star": [0.5, 0.5],
                      "prices": [120.0, 80.0]},
            "claim": {"type": "call", "strike": 100.0},
            "budget": {"value": 5.0}
        }"#,
    );
    let out = hedge()
        .args(["solve", "--problem", "a-rand", "--config", &config])
        .output()
        .unwrap();
    let report = parse_report(&out);
    assert_eq!(report["strategy_available"].as_bool(), Some(false));
    assert_eq!(report["objective"].as_f64().unwrap(), 0.7);
    assert_eq!(report["initial_cost"].as_f64().unwrap(), 5.0);
    assert_eq!(report["states"][0]["x"].as_f64().unwrap(), 0.5);
}

#[test]
fn oracle_flag_reports_brute_force_objective() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "oracle.json",
        r#"{
            "model": {"type": "binomial", "s0": 100.0, "up": 1.15, "down": 0.85,
                      "rate": 0.0, "p_up": 0.6, "periods": 4},
            "claim": {"type": "call", "strike": 95.0},
            "budget": {"fraction": 0.6}
        }"#,
    );
    let out = hedge()
        .args([
            "solve",
            "--problem",
            "a",
            "--mode",
            "exact",
            "--oracle",
            "--config",
            &config,
        ])
        .output()
        .unwrap();
    let report = parse_report(&out);
    let z = report["bounds"]["z_exact"].as_f64().unwrap();
    let oracle = report["oracle_z"].as_f64().unwrap();
    assert_eq!(z, oracle);

    // The oracle is a problem-a feature.
    let out = hedge()
        .args(["solve", "--problem", "c", "--oracle", "--config", &config])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_output_has_the_fixed_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = one_period_call(dir.path());
    let path = dir.path().join("table.csv");
    let out = hedge()
        .args([
            "solve",
            "--problem",
            "a",
            "--config",
            &config,
            "--format",
            "csv",
            "--out",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "omega,p,p_star,h,q,m,x,v_terminal,success,shortfall"
    );
    assert_eq!(lines.next().unwrap(), "1,0.6,0.5,20,1,1,0,0,0,12");
    assert_eq!(lines.next().unwrap(), "2,0.4,0.5,0,0,0,1,0,1,0");
}

#[test]
fn levels_mode_requires_problem_a_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let config = one_period_call(dir.path());
    let out = hedge()
        .args(["solve", "--problem", "d", "--levels", "--config", &config])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = hedge()
        .args([
            "solve",
            "--problem",
            "a",
            "--mode",
            "exact",
            "--levels",
            "--config",
            &config,
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn levels_mode_matches_tree_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "n8.json",
        r#"{
            "model": {"type": "binomial", "s0": 100.0, "up": 1.18, "down": 0.88,
                      "rate": 0.01, "p_up": 0.62, "periods": 8},
            "claim": {"type": "call", "strike": 102.0},
            "budget": {"fraction": 0.45}
        }"#,
    );
    let tree = parse_report(
        &hedge()
            .args(["solve", "--problem", "a", "--config", &config])
            .output()
            .unwrap(),
    );
    let levels = parse_report(
        &hedge()
            .args(["solve", "--problem", "a", "--levels", "--config", &config])
            .output()
            .unwrap(),
    );
    let z_tree = tree["bounds"]["z_greedy"].as_f64().unwrap();
    let z_levels = levels["bounds"]["z_greedy"].as_f64().unwrap();
    assert!((z_tree - z_levels).abs() < 1e-12, "{z_tree} vs {z_levels}");
    assert_eq!(levels["levels"]["level_count"].as_u64().unwrap(), 9);
    assert_eq!(levels["states"].as_array().unwrap().len(), 9);
}

#[test]
fn mode_flag_is_problem_a_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = one_period_call(dir.path());
    let out = hedge()
        .args([
            "solve",
            "--problem",
            "b",
            "--mode",
            "exact",
            "--config",
            &config,
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
