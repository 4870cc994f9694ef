//! Solver dispatch: configuration in, report out, with the exit-code
//! contract (0 ok, 2 config, 3 model, 4 degenerate claim, 5 node budget
//! exhausted without an optimality proof).

use std::fmt;
use std::time::Instant;

use hedge_core::hedging::{
    self, HedgeBudget, HedgeError, ProblemAMode, QWeights, VanillaClaim,
};
use hedge_core::knapsack::{self, KnapsackError};
use hedge_core::market::{self, BinomialParams, Claim, MarketError, MeasurePair, ScenarioTree};
use hedge_core::money_tol;

use crate::config::{ClaimSpec, ModelSpec, RunConfig};
use crate::report::{BoundsReport, LevelsReport, Report, StateRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    A,
    ARand,
    B,
    C,
    D,
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::A => "a",
            Problem::ARand => "a-rand",
            Problem::B => "b",
            Problem::C => "c",
            Problem::D => "d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub problem: Problem,
    pub mode: Option<Mode>,
    pub oracle: bool,
    pub levels: bool,
    pub node_budget: u64,
}

pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Model(String),
    DegenerateClaim,
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::DegenerateClaim => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Model(msg) => write!(f, "model error: {msg}"),
            CliError::DegenerateClaim => {
                write!(f, "degenerate claim: the perfect-hedge price is zero")
            }
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

fn market_error(e: MarketError) -> CliError {
    match e {
        MarketError::Arbitrage(_)
        | MarketError::Incomplete { .. }
        | MarketError::RedundantAssets { .. } => CliError::Model(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

fn hedge_error(e: HedgeError) -> CliError {
    match e {
        HedgeError::DegenerateClaim => CliError::DegenerateClaim,
        HedgeError::BudgetExceedsPrice { .. } | HedgeError::InvalidBudget(_) => {
            CliError::Config(e.to_string())
        }
        HedgeError::Market(m) => market_error(m),
        HedgeError::Knapsack(k) => CliError::Config(k.to_string()),
    }
}

/// Everything a per-state solve needs, with the tree present only for
/// the binomial model.
struct MarketData {
    tree: Option<ScenarioTree>,
    measures: MeasurePair,
    claim: Claim,
    weights: QWeights,
    price: f64,
    budget: HedgeBudget,
}

/// Normalized per-problem results, shared by the tree and table paths.
struct Solved {
    objective: f64,
    success: f64,
    shortfall: f64,
    initial_cost: f64,
    bounds: BoundsReport,
    optimal: Option<bool>,
    critical_state: Option<usize>,
    sacrificed_state: Option<usize>,
    decisions: Vec<f64>,
    terminal_values: Vec<f64>,
}

pub fn execute(config: &RunConfig, options: &Options) -> Result<Outcome, CliError> {
    if options.levels {
        return execute_levels(config, options);
    }

    let start = Instant::now();
    let data = build_market(config)?;
    let solved = solve(&data, options)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    let oracle_z = if options.oracle {
        if options.problem != Problem::A {
            return Err(CliError::Config(String::from(
                "--oracle applies only to problem a",
            )));
        }
        let instance =
            hedging::reduce_problem_a(&data.claim, &data.measures, &data.budget)
                .map_err(hedge_error)?;
        let oracle = knapsack::brute_force_01(&instance).map_err(|e| match e {
            KnapsackError::TooManyItems { items, max } => CliError::Config(format!(
                "--oracle brute force handles at most {max} states, model has {items}"
            )),
            other => CliError::Config(other.to_string()),
        })?;
        Some(oracle.objective)
    } else {
        None
    };

    let states = state_rows(&data, &solved.decisions, &solved.terminal_values);
    let exit_code = match solved.optimal {
        Some(false) => 5,
        _ => 0,
    };
    let mode = match (options.problem, effective_mode(options)) {
        (Problem::A, Mode::Exact) => Some("exact".to_string()),
        (Problem::A, Mode::Greedy) => Some("greedy".to_string()),
        _ => None,
    };

    let report = Report {
        problem: options.problem.name().to_string(),
        mode,
        price: data.price,
        budget: data.budget.value,
        alpha: data.budget.alpha,
        objective: solved.objective,
        success_probability: solved.success,
        expected_shortfall: solved.shortfall,
        initial_cost: solved.initial_cost,
        bounds: solved.bounds,
        optimal: solved.optimal,
        critical_state: solved.critical_state.map(|i| i + 1),
        sacrificed_state: solved.sacrificed_state.map(|i| i + 1),
        oracle_z,
        strategy_available: data.tree.is_some(),
        levels: None,
        states,
        runtime_ms,
    };
    Ok(Outcome { report, exit_code })
}

fn effective_mode(options: &Options) -> Mode {
    options.mode.unwrap_or(Mode::Greedy)
}

fn build_market(config: &RunConfig) -> Result<MarketData, CliError> {
    let (tree, measures, terminal_prices) = match &config.model {
        ModelSpec::Binomial {
            s0,
            up,
            down,
            rate,
            p_up,
            periods,
        } => {
            let params = BinomialParams {
                s0: *s0,
                up: *up,
                down: *down,
                rate: *rate,
                p_up: *p_up,
                periods: *periods,
            };
            let tree = params.build_tree().map_err(market_error)?;
            let measures = market::risk_neutral_measure(&tree).map_err(market_error)?;
            // Strikes bite on the cash price at maturity, so undo the
            // discounting for the payoff comparison (and redo it after).
            let discount = (1.0 + rate).powi(*periods as i32);
            let cash_prices: Vec<f64> = tree
                .terminal_prices(1)
                .iter()
                .map(|x| x * discount)
                .collect();
            (Some((tree, discount)), measures, Some(cash_prices))
        }
        ModelSpec::Table { p, p_star, prices } => {
            let measures =
                MeasurePair::new(p.clone(), p_star.clone()).map_err(market_error)?;
            if let Some(prices) = prices {
                if prices.len() != measures.len() {
                    return Err(CliError::Config(format!(
                        "table lists {} states but {} prices",
                        measures.len(),
                        prices.len()
                    )));
                }
            }
            (None, measures, prices.clone())
        }
    };

    let (tree, discount) = match tree {
        Some((tree, discount)) => (Some(tree), discount),
        None => (None, 1.0),
    };

    let payoffs: Vec<f64> = match &config.claim {
        ClaimSpec::Payoffs { values } => {
            if values.len() != measures.len() {
                return Err(CliError::Config(format!(
                    "claim lists {} payoffs but the model has {} states",
                    values.len(),
                    measures.len()
                )));
            }
            values.clone()
        }
        ClaimSpec::Call { strike } => strike_payoffs(&terminal_prices, discount, |s| {
            (s - strike).max(0.0)
        })?,
        ClaimSpec::Put { strike } => strike_payoffs(&terminal_prices, discount, |s| {
            (strike - s).max(0.0)
        })?,
    };
    let claim = Claim::new(payoffs).map_err(market_error)?;
    let price = market::price(&claim, &measures).map_err(market_error)?;

    let budget = match (config.budget.value, config.budget.fraction) {
        (Some(v), None) => HedgeBudget::from_value(v, &claim, &measures),
        (None, Some(a)) => HedgeBudget::from_fraction(a, &claim, &measures),
        _ => unreachable!("BudgetSpec::validate runs at parse time"),
    }
    .map_err(hedge_error)?;
    let weights = QWeights::compute(&claim, &measures).map_err(hedge_error)?;

    Ok(MarketData {
        tree,
        measures,
        claim,
        weights,
        price,
        budget,
    })
}

fn strike_payoffs(
    terminal_prices: &Option<Vec<f64>>,
    discount: f64,
    payoff: impl Fn(f64) -> f64,
) -> Result<Vec<f64>, CliError> {
    let prices = terminal_prices.as_ref().ok_or_else(|| {
        CliError::Config(String::from(
            "strike claims need terminal prices; add `prices` to the table model",
        ))
    })?;
    Ok(prices.iter().map(|&s| payoff(s) / discount).collect())
}

fn solve(data: &MarketData, options: &Options) -> Result<Solved, CliError> {
    match &data.tree {
        Some(tree) => solve_on_tree(data, tree, options),
        None => solve_on_table(data, options),
    }
    .map_err(hedge_error)
}

fn solve_on_tree(
    data: &MarketData,
    tree: &ScenarioTree,
    options: &Options,
) -> Result<Solved, HedgeError> {
    let (claim, measures, budget) = (&data.claim, &data.measures, &data.budget);
    let solution = match options.problem {
        Problem::A => {
            let mode = match effective_mode(options) {
                Mode::Exact => ProblemAMode::Exact,
                Mode::Greedy => ProblemAMode::Greedy,
            };
            hedging::solve_problem_a_with_node_budget(
                claim,
                measures,
                tree,
                budget,
                mode,
                options.node_budget,
            )?
        }
        Problem::ARand => {
            hedging::solve_problem_a_randomized(claim, measures, tree, budget)?
        }
        Problem::B => hedging::solve_problem_b(claim, measures, tree, budget.value)?,
        Problem::C => hedging::solve_problem_c(claim, measures, tree, budget)?,
        Problem::D => hedging::solve_problem_d(claim, measures, tree, budget)?,
    };

    let objective = headline_objective(options.problem, &solution.bounds, &solution);
    Ok(Solved {
        objective,
        success: solution.success_probability,
        shortfall: solution.expected_shortfall,
        initial_cost: solution.initial_cost,
        bounds: bounds_report(&solution.bounds),
        optimal: solution.bounds.exact_proven_optimal,
        critical_state: solution.critical_state,
        sacrificed_state: solution.sacrificed_state,
        terminal_values: solution.value_process.terminal_values().to_vec(),
        decisions: solution.decisions,
    })
}

/// Table mode: no price process, so the solvers are composed from the
/// reductions directly and the terminal values are the modified payoffs.
fn solve_on_table(data: &MarketData, options: &Options) -> Result<Solved, HedgeError> {
    let (claim, measures, budget) = (&data.claim, &data.measures, &data.budget);
    let h = claim.payoffs();

    let (decisions, terminal, bounds, optimal, critical, sacrificed) = match options.problem {
        Problem::A => {
            let instance = hedging::reduce_problem_a(claim, measures, budget)?;
            match effective_mode(options) {
                Mode::Exact => {
                    let sol =
                        knapsack::solve_exact_01_with_budget(&instance, options.node_budget)?;
                    let dantzig = knapsack::solve_continuous(&instance.relax())
                        .ok()
                        .map(|s| s.objective);
                    let terminal: Vec<f64> =
                        h.iter().zip(&sol.decisions).map(|(h, x)| h * x).collect();
                    let bounds = BoundsReport {
                        z_exact: Some(sol.objective),
                        z_dantzig: dantzig,
                        ..BoundsReport::default()
                    };
                    (
                        sol.decisions,
                        terminal,
                        bounds,
                        Some(sol.proven_optimal),
                        None,
                        None,
                    )
                }
                Mode::Greedy => {
                    let sol = knapsack::solve_greedy(&instance)?;
                    let terminal: Vec<f64> =
                        h.iter().zip(&sol.decisions).map(|(h, x)| h * x).collect();
                    let bounds = BoundsReport {
                        z_greedy: Some(sol.objective),
                        greedy_error_bound: sol.error_bound,
                        z_dantzig: sol.dantzig_bound,
                        ..BoundsReport::default()
                    };
                    (sol.decisions, terminal, bounds, None, sol.critical_item, None)
                }
            }
        }
        Problem::ARand => {
            let instance = hedging::reduce_problem_a(claim, measures, budget)?.relax();
            let sol = knapsack::solve_continuous(&instance)?;
            let terminal: Vec<f64> =
                h.iter().zip(&sol.decisions).map(|(h, x)| h * x).collect();
            let bounds = BoundsReport {
                z_dantzig: Some(sol.objective),
                ..BoundsReport::default()
            };
            (sol.decisions, terminal, bounds, None, sol.critical_item, None)
        }
        Problem::B => {
            let (payoff, sacrificed, _lambda) =
                hedging::quasi_replication_payoff(claim, measures, budget.value)?;
            let mut decisions = vec![1.0; measures.len()];
            decisions[sacrificed] = 0.0;
            (
                decisions,
                payoff,
                BoundsReport::default(),
                None,
                None,
                Some(sacrificed),
            )
        }
        Problem::C => {
            let instance = hedging::reduce_problem_c(claim, measures, budget)?;
            let sol = knapsack::solve_continuous(&instance)?;
            let mut psi = sol.decisions;
            for (x, &hi) in psi.iter_mut().zip(h) {
                if hi == 0.0 {
                    *x = 0.0;
                }
            }
            let terminal: Vec<f64> = h.iter().zip(&psi).map(|(h, x)| h * x).collect();
            let bounds = BoundsReport {
                z_dantzig: Some(sol.objective),
                ..BoundsReport::default()
            };
            (psi, terminal, bounds, None, sol.critical_item, None)
        }
        Problem::D => {
            let (payoff, sacrificed, _phi) =
                hedging::problem_d_payoff(claim, measures, budget)?;
            (
                payoff.clone(),
                payoff,
                BoundsReport::default(),
                None,
                None,
                Some(sacrificed),
            )
        }
    };

    let success = market::success_probability_terminal(&terminal, claim, measures)?;
    let shortfall = market::expected_shortfall_terminal(&terminal, claim, measures)?;
    let initial_cost: f64 = measures
        .p_star()
        .iter()
        .zip(&terminal)
        .map(|(q, v)| q * v)
        .sum();

    let objective = match options.problem {
        Problem::A => bounds.z_exact.or(bounds.z_greedy).unwrap_or(success),
        Problem::ARand => bounds.z_dantzig.unwrap_or(success),
        Problem::B => success,
        Problem::C | Problem::D => shortfall,
    };
    Ok(Solved {
        objective,
        success,
        shortfall,
        initial_cost,
        bounds,
        optimal,
        critical_state: critical,
        sacrificed_state: sacrificed,
        decisions,
        terminal_values: terminal,
    })
}

fn headline_objective(
    problem: Problem,
    bounds: &hedging::SolutionBounds,
    solution: &hedging::HedgeSolution,
) -> f64 {
    match problem {
        Problem::A => bounds
            .z_exact
            .or(bounds.z_greedy)
            .unwrap_or(solution.success_probability),
        Problem::ARand => bounds.z_dantzig.unwrap_or(solution.success_probability),
        Problem::B => solution.success_probability,
        Problem::C | Problem::D => solution.expected_shortfall,
    }
}

fn bounds_report(bounds: &hedging::SolutionBounds) -> BoundsReport {
    BoundsReport {
        z_greedy: bounds.z_greedy,
        greedy_error_bound: bounds.greedy_error_bound,
        z_exact: bounds.z_exact,
        z_dantzig: bounds.z_dantzig,
    }
}

fn state_rows(data: &MarketData, decisions: &[f64], terminal: &[f64]) -> Vec<StateRow> {
    let h = data.claim.payoffs();
    (0..data.measures.len())
        .map(|i| {
            let v = terminal[i];
            StateRow {
                omega: i + 1,
                p: data.measures.p()[i],
                p_star: data.measures.p_star()[i],
                h: h[i],
                q: data.weights.q[i],
                m: data.weights.m[i],
                x: decisions[i],
                v_terminal: v,
                success: v >= h[i] - money_tol(h[i]),
                shortfall: data.measures.p()[i] * (h[i] - v).max(0.0),
            }
        })
        .collect()
}

/// Level-grouped greedy for large binomial models: never materializes
/// the 2^N paths. Table rows are per level; `p`, `p_star`, `q`, `m` are
/// level totals and `x` is the fraction of the level's paths selected.
fn execute_levels(config: &RunConfig, options: &Options) -> Result<Outcome, CliError> {
    if options.problem != Problem::A {
        return Err(CliError::Config(String::from(
            "--levels applies only to problem a",
        )));
    }
    if effective_mode(options) != Mode::Greedy {
        return Err(CliError::Config(String::from(
            "--levels supports greedy mode only",
        )));
    }
    if options.oracle {
        return Err(CliError::Config(String::from(
            "--oracle cannot be combined with --levels",
        )));
    }
    let ModelSpec::Binomial {
        s0,
        up,
        down,
        rate,
        p_up,
        periods,
    } = &config.model
    else {
        return Err(CliError::Config(String::from(
            "--levels needs a binomial model",
        )));
    };
    let vanilla = match &config.claim {
        ClaimSpec::Call { strike } => VanillaClaim::Call { strike: *strike },
        ClaimSpec::Put { strike } => VanillaClaim::Put { strike: *strike },
        ClaimSpec::Payoffs { .. } => {
            return Err(CliError::Config(String::from(
                "--levels needs a call or put claim (payoffs are path-indexed)",
            )));
        }
    };
    let params = BinomialParams {
        s0: *s0,
        up: *up,
        down: *down,
        rate: *rate,
        p_up: *p_up,
        periods: *periods,
    };

    let start = Instant::now();
    let model = hedging::binomial_levels(&params, vanilla).map_err(hedge_error)?;
    if model.price <= 0.0 {
        return Err(CliError::DegenerateClaim);
    }
    let v = match (config.budget.value, config.budget.fraction) {
        (Some(v), None) => v,
        (None, Some(a)) => {
            if !(0.0..1.0).contains(&a) {
                return Err(CliError::Config(String::from(
                    "budget fraction must lie in [0, 1)",
                )));
            }
            a * model.price
        }
        _ => unreachable!("BudgetSpec::validate runs at parse time"),
    };
    let solution = model.greedy(v).map_err(hedge_error)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut states = Vec::with_capacity(model.levels());
    let mut shortfall_total = 0.0;
    for k in 0..model.levels() {
        let p_level = model.counts[k] * model.path_p[k];
        let p_star_level = model.counts[k] * model.path_p_star[k];
        let h = model.payoffs[k];
        let fraction = if model.counts[k] > 0.0 {
            solution.selected[k] / model.counts[k]
        } else {
            0.0
        };
        let v_terminal = fraction * h;
        let shortfall = p_level * (h - v_terminal).max(0.0);
        shortfall_total += shortfall;
        states.push(StateRow {
            omega: k,
            p: p_level,
            p_star: p_star_level,
            h,
            q: p_star_level * h / model.price,
            m: p_level * h / model.expected_payoff,
            x: fraction,
            v_terminal,
            success: fraction == 1.0,
            shortfall,
        });
    }

    let report = Report {
        problem: options.problem.name().to_string(),
        mode: Some("greedy".to_string()),
        price: model.price,
        budget: v,
        alpha: v / model.price,
        objective: solution.z_greedy,
        success_probability: solution.z_greedy,
        expected_shortfall: shortfall_total,
        initial_cost: solution.initial_cost,
        bounds: BoundsReport {
            z_greedy: Some(solution.z_greedy),
            greedy_error_bound: Some(solution.error_bound),
            z_dantzig: Some(solution.dantzig_bound),
            z_exact: None,
        },
        optimal: None,
        critical_state: None,
        sacrificed_state: None,
        oracle_z: None,
        strategy_available: false,
        levels: Some(LevelsReport {
            level_count: model.levels(),
            critical_level: solution.critical_level,
            max_path_probability: model.max_path_probability(),
        }),
        states,
        runtime_ms,
    };
    Ok(Outcome {
        report,
        exit_code: 0,
    })
}
