//! Machine-readable run reports: a JSON document for the full result and
//! a CSV table of the per-state (or per-level) decisions.
//!
//! Numbers are serialized as shortest round-trip decimals, so identical
//! runs produce byte-identical output (modulo the runtime field).

use serde::Serialize;
use std::fmt::Write as _;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub problem: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Perfect-hedge price 𝔼*(H).
    pub price: f64,
    /// Budget v in numéraire units.
    pub budget: f64,
    /// Budget fraction α = v / 𝔼*(H).
    pub alpha: f64,
    /// Headline objective: success probability for a/a-rand/b, expected
    /// shortfall for c/d.
    pub objective: f64,
    pub success_probability: f64,
    pub expected_shortfall: f64,
    /// Initial cost V₀ of the constructed strategy (𝔼* of the modified
    /// claim when no tree is available).
    pub initial_cost: f64,
    pub bounds: BoundsReport,
    /// Whether the exact search proved optimality (exact mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal: Option<bool>,
    /// 1-based ordinal of the critical (fractionally hedged) state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_state: Option<usize>,
    /// 1-based ordinal of the sacrificed state (problems b and d).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sacrificed_state: Option<usize>,
    /// Brute-force objective, when requested with --oracle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_z: Option<f64>,
    /// False in table and levels modes, where no price tree exists.
    pub strategy_available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelsReport>,
    pub states: Vec<StateRow>,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BoundsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_greedy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greedy_error_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_dantzig: Option<f64>,
}

/// Summary attached in level-grouped mode, where the per-state table
/// holds one row per price level instead of one per path.
#[derive(Debug, Clone, Serialize)]
pub struct LevelsReport {
    pub level_count: usize,
    pub critical_level: usize,
    pub max_path_probability: f64,
}

/// One row of the decision table. In level-grouped mode `omega` is the
/// up-move count of the level, `p`, `p_star`, `q`, `m` are level totals,
/// `h` is the per-path payoff, and `x` is the selected fraction.
#[derive(Debug, Clone, Serialize)]
pub struct StateRow {
    pub omega: usize,
    pub p: f64,
    pub p_star: f64,
    pub h: f64,
    pub q: f64,
    pub m: f64,
    pub x: f64,
    pub v_terminal: f64,
    pub success: bool,
    pub shortfall: f64,
}

pub const CSV_HEADER: &str = "omega,p,p_star,h,q,m,x,v_terminal,success,shortfall";

impl Report {
    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        text.push('\n');
        text
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.states {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.omega,
                row.p,
                row.p_star,
                row.h,
                row.q,
                row.m,
                row.x,
                row.v_terminal,
                u8::from(row.success),
                row.shortfall,
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            problem: "a".into(),
            mode: Some("greedy".into()),
            price: 10.0,
            budget: 5.0,
            alpha: 0.5,
            objective: 0.4,
            success_probability: 0.4,
            expected_shortfall: 12.0,
            initial_cost: 0.0,
            bounds: BoundsReport {
                z_greedy: Some(0.4),
                greedy_error_bound: Some(0.6),
                z_exact: None,
                z_dantzig: Some(0.7),
            },
            optimal: None,
            critical_state: Some(1),
            sacrificed_state: None,
            oracle_z: None,
            strategy_available: true,
            levels: None,
            states: vec![StateRow {
                omega: 1,
                p: 0.6,
                p_star: 0.5,
                h: 20.0,
                q: 1.0,
                m: 1.0,
                x: 0.0,
                v_terminal: 0.0,
                success: false,
                shortfall: 12.0,
            }],
            runtime_ms: 0.125,
        }
    }

    #[test]
    fn json_roundtrips_doubles() {
        let report = sample();
        let value: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(value["bounds"]["z_dantzig"].as_f64().unwrap(), 0.7);
        assert_eq!(value["states"][0]["h"].as_f64().unwrap(), 20.0);
    }

    #[test]
    fn csv_has_fixed_header() {
        let csv = sample().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "1,0.6,0.5,20,1,1,0,0,0,12");
    }
}
