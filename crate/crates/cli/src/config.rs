//! Run configuration: one JSON document selecting a model, a claim, and
//! a budget.

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub claim: ClaimSpec,
    pub budget: BudgetSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// One-risky-asset binomial model, expanded to a path-explicit tree
    /// (or collapsed to price levels with `--levels`).
    Binomial {
        s0: f64,
        up: f64,
        down: f64,
        #[serde(default)]
        rate: f64,
        p_up: f64,
        periods: u32,
    },
    /// Direct terminal-state table: real-world and risk-neutral state
    /// probabilities, plus optional terminal prices for strike claims.
    /// No price tree, so no strategy reconstruction.
    Table {
        p: Vec<f64>,
        p_star: Vec<f64>,
        #[serde(default)]
        prices: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClaimSpec {
    /// Call on the terminal price. In the binomial model the strike is in
    /// cash units at maturity; in table mode it applies to the given
    /// prices directly.
    Call { strike: f64 },
    /// Put on the terminal price, same conventions as the call.
    Put { strike: f64 },
    /// Explicit discounted payoff vector, one entry per terminal state.
    Payoffs { values: Vec<f64> },
}

/// Budget: exactly one of the absolute value `v` or the fraction
/// α of the perfect-hedge price.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub fraction: Option<f64>,
}

impl BudgetSpec {
    pub fn validate(&self) -> Result<(), String> {
        match (self.value, self.fraction) {
            (Some(_), Some(_)) => {
                Err("budget must give either `value` or `fraction`, not both".into())
            }
            (None, None) => Err("budget needs a `value` or a `fraction`".into()),
            _ => Ok(()),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        config.budget.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_binomial_call_config() {
        let text = r#"{
            "model": {"type": "binomial", "s0": 100.0, "up": 1.2, "down": 0.8,
                      "rate": 0.0, "p_up": 0.6, "periods": 1},
            "claim": {"type": "call", "strike": 100.0},
            "budget": {"value": 5.0}
        }"#;
        let config = RunConfig::from_json(text).unwrap();
        assert!(matches!(config.model, ModelSpec::Binomial { periods: 1, .. }));
        assert!(matches!(config.claim, ClaimSpec::Call { .. }));
        assert_eq!(config.budget.value, Some(5.0));
    }

    #[test]
    fn rejects_double_budget() {
        let text = r#"{
            "model": {"type": "table", "p": [0.5, 0.5], "p_star": [0.5, 0.5]},
            "claim": {"type": "payoffs", "values": [1.0, 0.0]},
            "budget": {"value": 0.2, "fraction": 0.4}
        }"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = r#"{
            "model": {"type": "table", "p": [0.5, 0.5], "p_star": [0.5, 0.5], "bogus": 1},
            "claim": {"type": "payoffs", "values": [1.0, 0.0]},
            "budget": {"value": 0.2}
        }"#;
        assert!(RunConfig::from_json(text).is_err());
    }
}
