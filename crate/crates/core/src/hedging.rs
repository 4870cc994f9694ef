//! Partial-hedging problems reduced to knapsack form.
//!
//! Four problems are covered, all under an initial-capital cap `v` below
//! the perfect-hedge price 𝔼*(H):
//!
//! * success-probability maximization over admissible strategies
//!   (a 0-1 knapsack over terminal states),
//! * the same without admissibility (quasi-replication: replicate H in
//!   all but one sacrificed state),
//! * expected-shortfall minimization over admissible strategies
//!   (a continuous knapsack),
//! * the same without admissibility (a variable-upper-bound knapsack
//!   whose closed form adjusts the last state in ratio order).
//!
//! The Neyman-Pearson construction is included as an independent
//! cross-check of the continuous-knapsack optimum, and level grouping
//! collapses binomial state spaces from 2^N paths to at most N+1 levels.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::knapsack::{
    self, capacity_tol, KnapsackError, KnapsackInstance, KnapsackSolution, Variant,
    DEFAULT_NODE_BUDGET,
};
use crate::market::{
    self, BinomialParams, Claim, MarketError, MeasurePair, ScenarioTree, Strategy, ValueProcess,
};
use crate::numeric::{binomial_coefficient, pow_int};
use crate::PROB_ABS_TOL;

#[derive(Debug, Clone, PartialEq)]
pub enum HedgeError {
    /// 𝔼*(H) = 0: the ℚ weights (and every reduction) are undefined.
    DegenerateClaim,
    /// The budget is not strictly below the perfect-hedge price.
    BudgetExceedsPrice { budget: f64, price: f64 },
    InvalidBudget(String),
    Market(MarketError),
    Knapsack(KnapsackError),
}

impl fmt::Display for HedgeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HedgeError::DegenerateClaim => {
                write!(f, "degenerate claim: the perfect-hedge price is zero")
            }
            HedgeError::BudgetExceedsPrice { budget, price } => write!(
                f,
                "budget must be strictly below the perfect-hedge price \
                 (budget {budget}, price {price})"
            ),
            HedgeError::InvalidBudget(msg) => write!(f, "invalid budget: {msg}"),
            HedgeError::Market(e) => write!(f, "{e}"),
            HedgeError::Knapsack(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for HedgeError {}

impl From<MarketError> for HedgeError {
    fn from(e: MarketError) -> Self {
        HedgeError::Market(e)
    }
}

impl From<KnapsackError> for HedgeError {
    fn from(e: KnapsackError) -> Self {
        HedgeError::Knapsack(e)
    }
}

/// Initial-capital cap: the absolute value `v` and the fraction
/// α = v / 𝔼*(H) of the perfect-hedge price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeBudget {
    pub value: f64,
    pub alpha: f64,
}

impl HedgeBudget {
    /// Budget from an absolute capital cap. Requires 0 ≤ v < 𝔼*(H).
    pub fn from_value(
        value: f64,
        claim: &Claim,
        measures: &MeasurePair,
    ) -> Result<Self, HedgeError> {
        let price = market::price(claim, measures)?;
        if price <= 0.0 {
            return Err(HedgeError::DegenerateClaim);
        }
        if !value.is_finite() || value < 0.0 {
            return Err(HedgeError::InvalidBudget(String::from(
                "budget must be finite and non-negative",
            )));
        }
        // Strictly below the perfect-hedge price, by at least the
        // monetary tolerance: a budget inside the rounding floor of the
        // price cannot be meaningfully distinguished from it.
        if value >= price - crate::money_tol(price) {
            return Err(HedgeError::BudgetExceedsPrice {
                budget: value,
                price,
            });
        }
        Ok(Self {
            value,
            alpha: value / price,
        })
    }

    /// Budget from a fraction α ∈ [0, 1) of the perfect-hedge price.
    pub fn from_fraction(
        alpha: f64,
        claim: &Claim,
        measures: &MeasurePair,
    ) -> Result<Self, HedgeError> {
        if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
            return Err(HedgeError::InvalidBudget(String::from(
                "fraction must lie in [0, 1)",
            )));
        }
        let price = market::price(claim, measures)?;
        if price <= 0.0 {
            return Err(HedgeError::DegenerateClaim);
        }
        Ok(Self {
            value: alpha * price,
            alpha,
        })
    }
}

/// State weights of the auxiliary measures:
/// qᵢ = ℙ*(ωᵢ)·hᵢ / 𝔼*(H) and mᵢ = ℙ(ωᵢ)·hᵢ / 𝔼(H).
#[derive(Debug, Clone)]
pub struct QWeights {
    pub q: Vec<f64>,
    pub m: Vec<f64>,
}

impl QWeights {
    pub fn compute(claim: &Claim, measures: &MeasurePair) -> Result<Self, HedgeError> {
        let price = market::price(claim, measures)?;
        if price <= 0.0 {
            return Err(HedgeError::DegenerateClaim);
        }
        // ℙ and ℙ* are equivalent, so 𝔼*(H) > 0 forces 𝔼(H) > 0.
        let mean = expectation(measures.p(), claim.payoffs());
        let q = measures
            .p_star()
            .iter()
            .zip(claim.payoffs())
            .map(|(&ps, &h)| ps * h / price)
            .collect();
        let m = measures
            .p()
            .iter()
            .zip(claim.payoffs())
            .map(|(&p, &h)| p * h / mean)
            .collect();
        Ok(Self { q, m })
    }
}

/// A randomized test: a per-state fraction ψᵢ ∈ [0, 1].
#[derive(Debug, Clone)]
pub struct RandomizedTest {
    psi: Vec<f64>,
}

impl RandomizedTest {
    pub fn new(psi: Vec<f64>) -> Result<Self, HedgeError> {
        if psi
            .iter()
            .any(|&x| !x.is_finite() || x < -PROB_ABS_TOL || x > 1.0 + PROB_ABS_TOL)
        {
            return Err(HedgeError::InvalidBudget(String::from(
                "randomized test values must lie in [0, 1]",
            )));
        }
        let psi = psi.into_iter().map(|x| x.clamp(0.0, 1.0)).collect();
        Ok(Self { psi })
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    /// 𝔼(ψ) under the given state probabilities.
    pub fn expectation(&self, probs: &[f64]) -> f64 {
        expectation(probs, &self.psi)
    }
}

/// Output of the Neyman-Pearson construction.
#[derive(Debug, Clone)]
pub struct NeymanPearson {
    /// The optimal level c*.
    pub c_star: f64,
    /// Fractional mass γ placed on the critical level set.
    pub gamma: f64,
    /// The optimal randomized test ψ.
    pub test: RandomizedTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    AExact,
    AGreedy,
    ARandomized,
    B,
    C,
    D,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::AExact => "a (exact)",
            ProblemKind::AGreedy => "a (greedy)",
            ProblemKind::ARandomized => "a-rand",
            ProblemKind::B => "b",
            ProblemKind::C => "c",
            ProblemKind::D => "d",
        }
    }
}

/// Mode for the success-probability problem under admissibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemAMode {
    Exact,
    Greedy,
}

/// Certified objective bounds attached to a solution, where applicable.
#[derive(Debug, Clone, Default)]
pub struct SolutionBounds {
    /// Greedy objective z^G.
    pub z_greedy: Option<f64>,
    /// Greedy error certificate: z^G ≤ z ≤ z^G + bound.
    pub greedy_error_bound: Option<f64>,
    /// Exact 0-1 objective z^A.
    pub z_exact: Option<f64>,
    /// Continuous-relaxation optimum z* (Dantzig bound).
    pub z_dantzig: Option<f64>,
    /// Whether the exact search finished within its node budget.
    pub exact_proven_optimal: Option<bool>,
}

/// A solved partial-hedging problem: the modified claim, its replicating
/// strategy, and the evaluation metrics.
#[derive(Debug, Clone)]
pub struct HedgeSolution {
    pub problem: ProblemKind,
    /// Terminal payoff of the modified claim actually hedged.
    pub modified_payoff: Vec<f64>,
    /// Per-state decision: the knapsack indicator, the randomized test,
    /// or (for the variable-bound problem) the terminal value itself.
    pub decisions: Vec<f64>,
    pub strategy: Strategy,
    pub value_process: ValueProcess,
    /// V₀ of the replicating strategy.
    pub initial_cost: f64,
    pub success_probability: f64,
    pub expected_shortfall: f64,
    pub bounds: SolutionBounds,
    /// Original index of the critical (split) state, for the continuous
    /// and greedy reductions.
    pub critical_state: Option<usize>,
    /// Original index of the sacrificed state, for the quasi-replication
    /// problems.
    pub sacrificed_state: Option<usize>,
}

fn expectation(probs: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, v) in probs.iter().zip(values) {
        acc += p * v;
    }
    acc
}

/// 0-1 knapsack behind the admissible success-probability problem:
/// gains p, weights q, capacity α.
pub fn reduce_problem_a(
    claim: &Claim,
    measures: &MeasurePair,
    budget: &HedgeBudget,
) -> Result<KnapsackInstance, HedgeError> {
    let qw = QWeights::compute(claim, measures)?;
    Ok(KnapsackInstance::binary(
        measures.p().to_vec(),
        qw.q,
        budget.alpha,
    )?)
}

/// Continuous knapsack behind the admissible shortfall problem:
/// gains m, weights q, capacity α.
pub fn reduce_problem_c(
    claim: &Claim,
    measures: &MeasurePair,
    budget: &HedgeBudget,
) -> Result<KnapsackInstance, HedgeError> {
    let qw = QWeights::compute(claim, measures)?;
    Ok(KnapsackInstance::continuous(qw.m, qw.q, budget.alpha)?)
}

/// Success-probability maximization over admissible strategies, with the
/// default branch-and-bound node budget in exact mode.
pub fn solve_problem_a(
    claim: &Claim,
    measures: &MeasurePair,
    tree: &ScenarioTree,
    budget: &HedgeBudget,
    mode: ProblemAMode,
) -> Result<HedgeSolution, HedgeError> {
    solve_problem_a_with_node_budget(claim, measures, tree, budget, mode, DEFAULT_NODE_BUDGET)
}

/// Success-probability maximization with an explicit node budget.
pub fn solve_problem_a_with_node_budget(
    claim: &Claim,
    measures: &MeasurePair,
    tree: &ScenarioTree,
    budget: &HedgeBudget,
    mode: ProblemAMode,
    node_budget: u64,
) -> Result<HedgeSolution, HedgeError> {
    let instance = reduce_problem_a(claim, measures, budget)?;
    let (solution, kind) = match mode {
        ProblemAMode::Exact => (
            knapsack::solve_exact_01_with_budget(&instance, node_budget)?,
            ProblemKind::AExact,
        ),
        ProblemAMode::Greedy => (knapsack::solve_greedy(&instance)?, ProblemKind::AGreedy),
    };
    // Dantzig bound of the shared relaxation, for the certificate line.
    let dantzig = match mode {
        ProblemAMode::Greedy => solution.dantzig_bound,
        ProblemAMode::Exact => knapsack::solve_continuous(&instance.relax())
            .ok()
            .map(|s| s.objective),
    };

    let modified_payoff: Vec<f64> = claim
        .payoffs()
        .iter()
        .zip(&solution.decisions)
        .map(|(&h, &x)| h * x)
        .collect();
    let bounds = match kind {
        ProblemKind::AExact => SolutionBounds {
            z_exact: Some(solution.objective),
            z_dantzig: dantzig,
            exact_proven_optimal: Some(solution.proven_optimal),
            ..SolutionBounds::default()
        },
        _ => SolutionBounds {
            z_greedy: Some(solution.objective),
            greedy_error_bound: solution.error_bound,
            z_dantzig: dantzig,
            ..SolutionBounds::default()
        },
    };
    assemble(
        kind,
        claim,
        measures,
        tree,
        modified_payoff,
        solution.decisions,
        bounds,
        solution.critical_item,
        None,
    )
}

/// Success-ratio maximization via the continuous relaxation: the optimal
/// randomized test ψ* equals the continuous knapsack solution, and the
/// replicated claim H·ψ* costs exactly v.
pub fn solve_problem_a_randomized(
    claim: &Claim,
    measures: &MeasurePair,
    tree: &ScenarioTree,
    budget: &HedgeBudget,
) -> Result<HedgeSolution, HedgeError> {
    let instance = reduce_problem_a(claim, measures, budget)?.relax();
    let solution = knapsack::solve_continuous(&instance)?;
    let psi = RandomizedTest::new(solution.decisions.clone())?;
    let modified_payoff: Vec<f64> = claim
        .payoffs()
        .iter()
        .zip(psi.values())
        .map(|(&h, &x)| h * x)
        .collect();
    let bounds = SolutionBounds {
        z_dantzig: Some(solution.objective),
        ..SolutionBounds::default()
    };
    assemble(
        ProblemKind::ARandomized,
        claim,
        measures,
        tree,
        modified_payoff,
        solution.decisions,
        bounds,
        solution.critical_item,
        None,
    )
}

/// The Neyman-Pearson construction for the success-ratio problem: level
/// c*, fractional mass γ on the critical set, and the optimal test ψ.
///
/// The generalized density dℙ/dℚ is pᵢ/qᵢ, with +∞ on states where
/// qᵢ = 0. Its optimal value 𝔼(ψ) always agrees with the continuous
/// knapsack optimum z*.
pub fn neyman_pearson_test(
    claim: &Claim,
    measures: &MeasurePair,
    budget: &HedgeBudget,
) -> Result<NeymanPearson, HedgeError> {
    let qw = QWeights::compute(claim, measures)?;
    let price = market::price(claim, measures)?;
    let n = measures.len();
    let alpha = budget.alpha;

    // Distinct finite density levels, over states with q > 0.
    let density: Vec<f64> = measures
        .p()
        .iter()
        .zip(&qw.q)
        .map(|(&p, &q)| if q > 0.0 { p / q } else { f64::INFINITY })
        .collect();
    let mut levels: Vec<f64> = density.iter().copied().filter(|r| r.is_finite()).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("densities are never NaN"));
    levels.dedup();

    // Smallest level with ℚ(dℙ/dℚ > level) ≤ α; one exists because the
    // mass above the largest finite level is zero.
    let mass_above = |level: f64| -> f64 {
        let mut acc = 0.0;
        for (&r, &q) in density.iter().zip(&qw.q) {
            if r > level {
                acc += q;
            }
        }
        acc
    };
    let mut chosen = None;
    for &level in &levels {
        let above = mass_above(level);
        if above <= alpha {
            chosen = Some((level, above));
            break;
        }
    }
    let (level, above) = chosen.expect("a qualifying level always exists");

    let mut level_mass = 0.0;
    for (&r, &q) in density.iter().zip(&qw.q) {
        if r == level {
            level_mass += q;
        }
    }
    let gamma = ((alpha - above) / level_mass).clamp(0.0, 1.0);

    let mut psi = vec![0.0; n];
    for (i, &r) in density.iter().enumerate() {
        psi[i] = if r > level {
            1.0
        } else if r == level {
            gamma
        } else {
            0.0
        };
    }

    Ok(NeymanPearson {
        c_star: level / price,
        gamma,
        test: RandomizedTest::new(psi)?,
    })
}

/// Quasi-replication payoff for the unconstrained success problem:
/// replicate H everywhere except the least-likely state, which absorbs
/// the budget deficit. Returns (payoff, sacrificed index, λ).
pub fn quasi_replication_payoff(
    claim: &Claim,
    measures: &MeasurePair,
    v0: f64,
) -> Result<(Vec<f64>, usize, f64), HedgeError> {
    let price = market::price(claim, measures)?;
    if !v0.is_finite() {
        return Err(HedgeError::InvalidBudget(String::from(
            "initial capital must be finite",
        )));
    }
    if v0 >= price - crate::money_tol(price) {
        return Err(HedgeError::BudgetExceedsPrice {
            budget: v0,
            price,
        });
    }

    // Least-likely state; ties go to the smallest index.
    let mut sacrificed = 0;
    for (i, &p) in measures.p().iter().enumerate() {
        if p < measures.p()[sacrificed] {
            sacrificed = i;
        }
    }

    let mut rest_cost = 0.0;
    for (i, (&ps, &h)) in measures.p_star().iter().zip(claim.payoffs()).enumerate() {
        if i != sacrificed {
            rest_cost += ps * h;
        }
    }
    let lambda = (v0 - rest_cost) / measures.p_star()[sacrificed];

    let mut payoff = claim.payoffs().to_vec();
    payoff[sacrificed] = lambda;
    Ok((payoff, sacrificed, lambda))
}

/// Success-probability maximization without admissibility: the optimal
/// quasi-replicating strategy. `v0` may be any capital below 𝔼*(H).
pub fn solve_problem_b(
    claim: &Claim,
    measures: &MeasurePair,
    tree: &ScenarioTree,
    v0: f64,
) -> Result<HedgeSolution, HedgeError> {
    let (payoff, sacrificed, _lambda) = quasi_replication_payoff(claim, measures, v0)?;
    let mut decisions = vec![1.0; measures.len()];
    decisions[sacrificed] = 0.0;
    assemble(
        ProblemKind::B,
        claim,
        measures,
        tree,
        payoff,
        decisions,
        SolutionBounds::default(),
        None,
        Some(sacrificed),
    )
}

/// Expected-shortfall minimization over admissible strategies: hedge
/// H·ψ^C where ψ^C solves the continuous knapsack with gains m.
/// ψ is set to 0 on zero-payoff states (where it is arbitrary).
pub fn solve_problem_c(
    claim: &Claim,
    measures: &MeasurePair,
    tree: &ScenarioTree,
    budget: &HedgeBudget,
) -> Result<HedgeSolution, HedgeError> {
    let instance = reduce_problem_c(claim, measures, budget)?;
    let solution = knapsack::solve_continuous(&instance)?;
    let mut psi = solution.decisions;
    for (x, &h) in psi.iter_mut().zip(claim.payoffs()) {
        if h == 0.0 {
            *x = 0.0;
        }
    }
    let modified_payoff: Vec<f64> = claim
        .payoffs()
        .iter()
        .zip(&psi)
        .map(|(&h, &x)| h * x)
        .collect();
    let bounds = SolutionBounds {
        z_dantzig: Some(solution.objective),
        ..SolutionBounds::default()
    };
    assemble(
        ProblemKind::C,
        claim,
        measures,
        tree,
        modified_payoff,
        psi,
        bounds,
        solution.critical_item,
        None,
    )
}

/// Modified payoff for the unconstrained shortfall problem: the
/// variable-bound knapsack (gains p, weights p*, capacity v, bounds h)
/// replicated directly. Returns (payoff, sacrificed index, φ).
pub fn problem_d_payoff(
    claim: &Claim,
    measures: &MeasurePair,
    budget: &HedgeBudget,
) -> Result<(Vec<f64>, usize, f64), HedgeError> {
    let instance = KnapsackInstance::variable_bound(
        measures.p().to_vec(),
        measures.p_star().to_vec(),
        budget.value,
        claim.payoffs().to_vec(),
    )?;
    let solution = knapsack::solve_variable_bound(&instance)?;
    let sacrificed = solution
        .critical_item
        .expect("variable-bound solutions always adjust one item");
    let phi = solution.decisions[sacrificed];
    Ok((solution.decisions, sacrificed, phi))
}

/// Expected-shortfall minimization without admissibility: replicate H in
/// every state except the one with the smallest dℙ/dℙ* ratio, whose
/// payoff φ absorbs the budget constraint exactly.
pub fn solve_problem_d(
    claim: &Claim,
    measures: &MeasurePair,
    tree: &ScenarioTree,
    budget: &HedgeBudget,
) -> Result<HedgeSolution, HedgeError> {
    let (payoff, sacrificed, _phi) = problem_d_payoff(claim, measures, budget)?;
    assemble(
        ProblemKind::D,
        claim,
        measures,
        tree,
        payoff.clone(),
        payoff,
        SolutionBounds::default(),
        None,
        Some(sacrificed),
    )
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    problem: ProblemKind,
    claim: &Claim,
    measures: &MeasurePair,
    tree: &ScenarioTree,
    modified_payoff: Vec<f64>,
    decisions: Vec<f64>,
    bounds: SolutionBounds,
    critical_state: Option<usize>,
    sacrificed_state: Option<usize>,
) -> Result<HedgeSolution, HedgeError> {
    let (strategy, value_process) = market::replicate(&modified_payoff, tree, measures)?;
    let success_probability = market::success_probability(&value_process, claim, measures)?;
    let expected_shortfall = market::expected_shortfall(&value_process, claim, measures)?;
    Ok(HedgeSolution {
        problem,
        modified_payoff,
        decisions,
        initial_cost: value_process.initial_value(),
        success_probability,
        expected_shortfall,
        strategy,
        value_process,
        bounds,
        critical_state,
        sacrificed_state,
    })
}

/// Items of a 0-1 instance merged by an exact per-item key. The grouped
/// instance sums gains and weights per group; `members` expands each
/// grouped item back to the original indices.
#[derive(Debug, Clone)]
pub struct LevelGrouping {
    pub instance: KnapsackInstance,
    pub members: Vec<Vec<usize>>,
}

/// Groups items with identical keys. Keys should come from model
/// structure (terminal prices, up-move counts) so that equality is
/// exact, not a floating-point coincidence of computed ratios.
pub fn group_levels(
    instance: &KnapsackInstance,
    level_keys: &[f64],
) -> Result<LevelGrouping, HedgeError> {
    if instance.variant() != Variant::Binary {
        return Err(HedgeError::Knapsack(KnapsackError::WrongVariant {
            expected: Variant::Binary,
            found: instance.variant(),
        }));
    }
    if level_keys.len() != instance.len() {
        return Err(HedgeError::Knapsack(KnapsackError::InvalidInstance(
            String::from("one level key per item is required"),
        )));
    }
    if level_keys.iter().any(|k| !k.is_finite()) {
        return Err(HedgeError::Knapsack(KnapsackError::InvalidInstance(
            String::from("level keys must be finite"),
        )));
    }

    let mut keys: Vec<f64> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (item, &key) in level_keys.iter().enumerate() {
        match keys.iter().position(|&k| k == key) {
            Some(g) => members[g].push(item),
            None => {
                keys.push(key);
                members.push(vec![item]);
            }
        }
    }

    let gains: Vec<f64> = members
        .iter()
        .map(|ms| ms.iter().map(|&i| instance.gains()[i]).sum())
        .collect();
    let weights: Vec<f64> = members
        .iter()
        .map(|ms| ms.iter().map(|&i| instance.weights()[i]).sum())
        .collect();
    Ok(LevelGrouping {
        instance: KnapsackInstance::binary(gains, weights, instance.capacity())?,
        members,
    })
}

/// Greedy over grouped levels, refined element-wise inside the critical
/// level. Produces the same selection (and objective) as the plain
/// element-wise greedy, with the work bounded by the level count instead
/// of the item count.
pub fn solve_greedy_grouped(
    instance: &KnapsackInstance,
    level_keys: &[f64],
) -> Result<KnapsackSolution, HedgeError> {
    let grouping = group_levels(instance, level_keys)?;
    let total = instance.total_weight();
    let capacity = instance.capacity();
    if total <= capacity + capacity_tol(capacity) {
        return Err(HedgeError::Knapsack(KnapsackError::CapacityNotBinding {
            capacity,
            total_weight: total,
        }));
    }

    let group_order = knapsack::order_by_ratio(&grouping.instance);
    let tol = capacity_tol(capacity);
    let mut decisions = vec![0.0; instance.len()];
    let mut cum = 0.0;
    let mut critical = None;

    'groups: for &g in &group_order {
        let gw = grouping.instance.weights()[g];
        if cum + gw <= capacity + tol {
            for &item in &grouping.members[g] {
                decisions[item] = 1.0;
            }
            cum += gw;
            continue;
        }
        // Critical level: take members one by one in element ratio order.
        let mut members = grouping.members[g].clone();
        members.sort_by(|&a, &b| {
            let ratio = |i: usize| {
                if instance.weights()[i] == 0.0 {
                    f64::INFINITY
                } else {
                    instance.gains()[i] / instance.weights()[i]
                }
            };
            ratio(b).partial_cmp(&ratio(a)).expect("ratios are never NaN")
        });
        for &item in &members {
            let next = cum + instance.weights()[item];
            if next > capacity + tol {
                critical = Some(item);
                break 'groups;
            }
            decisions[item] = 1.0;
            cum = next;
        }
        // The group total exceeded the capacity but the member-by-member
        // sums did not: a rounding disagreement; move on.
    }

    let critical = critical.ok_or(HedgeError::Knapsack(KnapsackError::CapacityNotBinding {
        capacity,
        total_weight: total,
    }))?;
    let mut objective = 0.0;
    for (g, x) in instance.gains().iter().zip(&decisions) {
        objective += g * x;
    }
    let fraction = ((capacity - cum) / instance.weights()[critical]).clamp(0.0, 1.0);
    Ok(KnapsackSolution {
        objective,
        decisions,
        critical_item: Some(critical),
        dantzig_bound: Some(objective + fraction * instance.gains()[critical]),
        error_bound: Some(instance.gains()[critical]),
        proven_optimal: false,
        nodes_explored: 0,
    })
}

/// A vanilla claim on the terminal price, for level-grouped binomial
/// models. Strikes are in cash units at maturity; payoffs are reported
/// discounted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VanillaClaim {
    Call { strike: f64 },
    Put { strike: f64 },
}

impl VanillaClaim {
    fn discounted_payoff(&self, terminal_cash_price: f64, discount: f64) -> f64 {
        match *self {
            VanillaClaim::Call { strike } => (terminal_cash_price - strike).max(0.0) / discount,
            VanillaClaim::Put { strike } => (strike - terminal_cash_price).max(0.0) / discount,
        }
    }
}

/// A binomial model collapsed to its N+1 terminal price levels. Each
/// level k (the number of up-moves) stores the path count C(N,k) and the
/// per-path quantities; all paths within a level are interchangeable for
/// a path-independent claim.
#[derive(Debug, Clone)]
pub struct LevelModel {
    /// Path count per level, as a double (exact up to N = 52).
    pub counts: Vec<f64>,
    /// Per-path real-world probability p^k (1-p)^(N-k).
    pub path_p: Vec<f64>,
    /// Per-path risk-neutral probability q^k (1-q)^(N-k).
    pub path_p_star: Vec<f64>,
    /// Discounted claim payoff per level.
    pub payoffs: Vec<f64>,
    /// Discounted terminal risky price per level.
    pub prices: Vec<f64>,
    /// Perfect-hedge price 𝔼*(H).
    pub price: f64,
    /// Real-world expectation 𝔼(H).
    pub expected_payoff: f64,
}

/// Collapses a binomial model and a path-independent claim to levels
/// without materializing the 2^N paths.
pub fn binomial_levels(
    params: &BinomialParams,
    claim: VanillaClaim,
) -> Result<LevelModel, HedgeError> {
    params.validate()?;
    let n = params.periods;
    let q = params.risk_neutral_up();
    let discount = pow_int(1.0 + params.rate, n);

    let len = n as usize + 1;
    let mut counts = Vec::with_capacity(len);
    let mut path_p = Vec::with_capacity(len);
    let mut path_p_star = Vec::with_capacity(len);
    let mut payoffs = Vec::with_capacity(len);
    let mut prices = Vec::with_capacity(len);
    for k in 0..=n {
        counts.push(binomial_coefficient(n, k));
        path_p.push(pow_int(params.p_up, k) * pow_int(1.0 - params.p_up, n - k));
        path_p_star.push(pow_int(q, k) * pow_int(1.0 - q, n - k));
        let cash = params.s0 * pow_int(params.up, k) * pow_int(params.down, n - k);
        prices.push(cash / discount);
        payoffs.push(claim.discounted_payoff(cash, discount));
    }

    let mut price = 0.0;
    let mut expected_payoff = 0.0;
    for k in 0..len {
        price += counts[k] * path_p_star[k] * payoffs[k];
        expected_payoff += counts[k] * path_p[k] * payoffs[k];
    }
    Ok(LevelModel {
        counts,
        path_p,
        path_p_star,
        payoffs,
        prices,
        price,
        expected_payoff,
    })
}

/// Greedy result over a level model.
#[derive(Debug, Clone)]
pub struct LevelGreedySolution {
    /// Greedy success probability z^G.
    pub z_greedy: f64,
    /// Per-path gain of the critical level: the certified error bound.
    pub error_bound: f64,
    /// Continuous-relaxation optimum z*.
    pub dantzig_bound: f64,
    /// Paths selected per level (a whole count, except within the
    /// critical level where the remainder is cut off).
    pub selected: Vec<f64>,
    /// Level holding the critical element.
    pub critical_level: usize,
    /// Cost 𝔼*(H·1_Γ) of the selected set.
    pub initial_cost: f64,
}

impl LevelModel {
    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    /// The largest single-path real-world probability, max(p, 1-p)^N.
    pub fn max_path_probability(&self) -> f64 {
        self.path_p.iter().fold(0.0f64, |acc, &p| acc.max(p))
    }

    /// Level-grouped greedy for the success-probability problem: order
    /// levels by the per-path p/q ratio, take whole levels while they
    /// fit, then as many paths of the critical level as remain
    /// affordable. Equivalent to element-wise greedy over all 2^N paths.
    pub fn greedy(&self, budget_value: f64) -> Result<LevelGreedySolution, HedgeError> {
        if self.price <= 0.0 {
            return Err(HedgeError::DegenerateClaim);
        }
        if !budget_value.is_finite() || budget_value < 0.0 {
            return Err(HedgeError::InvalidBudget(String::from(
                "budget must be finite and non-negative",
            )));
        }
        if budget_value >= self.price {
            return Err(HedgeError::BudgetExceedsPrice {
                budget: budget_value,
                price: self.price,
            });
        }
        let alpha = budget_value / self.price;
        let levels = self.levels();

        // Per-path knapsack weight of each level.
        let q: Vec<f64> = (0..levels)
            .map(|k| self.path_p_star[k] * self.payoffs[k] / self.price)
            .collect();
        let ratio: Vec<f64> = (0..levels)
            .map(|k| {
                if q[k] == 0.0 {
                    f64::INFINITY
                } else {
                    self.path_p[k] / q[k]
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..levels).collect();
        order.sort_by(|&a, &b| ratio[b].partial_cmp(&ratio[a]).expect("no NaN ratios"));

        let tol = capacity_tol(alpha);
        let mut selected = vec![0.0; levels];
        let mut cum = 0.0;
        let mut z_greedy = 0.0;
        let mut critical = None;
        for &k in &order {
            let level_cost = self.counts[k] * q[k];
            if cum + level_cost <= alpha + tol {
                selected[k] = self.counts[k];
                cum += level_cost;
                z_greedy += self.counts[k] * self.path_p[k];
                continue;
            }
            // Critical level: whole paths only.
            let affordable = floor_nonneg((alpha - cum) / q[k]).min(self.counts[k]);
            selected[k] = affordable;
            cum += affordable * q[k];
            z_greedy += affordable * self.path_p[k];
            critical = Some(k);
            break;
        }
        let critical = critical.ok_or_else(|| {
            HedgeError::InvalidBudget(String::from("budget is not binding after rounding"))
        })?;

        let residual_fraction = ((alpha - cum) / q[critical]).clamp(0.0, 1.0);
        Ok(LevelGreedySolution {
            z_greedy,
            error_bound: self.path_p[critical],
            dantzig_bound: z_greedy + residual_fraction * self.path_p[critical],
            selected,
            critical_level: critical,
            initial_cost: cum * self.price,
        })
    }
}

/// floor(x) for non-negative x without `std`. Values at or above 2^53
/// are already integers in double precision.
fn floor_nonneg(x: f64) -> f64 {
    if x >= 9_007_199_254_740_992.0 {
        return x;
    }
    let t = x as u64 as f64;
    if t > x {
        t - 1.0
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::build_binomial;
    use crate::money_tol;

    /// The worked one-period call: S0=100, u=1.2, d=0.8, r=0, p=0.6,
    /// strike 100, so h=(20,0), 𝔼*(H)=10.
    fn call_market() -> (ScenarioTree, MeasurePair, Claim) {
        let tree = build_binomial(100.0, 1.2, 0.8, 0.0, 0.6, 1).unwrap();
        let measures = market::risk_neutral_measure(&tree).unwrap();
        let claim = Claim::new(vec![20.0, 0.0]).unwrap();
        (tree, measures, claim)
    }

    #[test]
    fn budget_validation() {
        let (_, measures, claim) = call_market();
        let b = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        assert!((b.alpha - 0.5).abs() < 1e-15);
        assert!(matches!(
            HedgeBudget::from_value(10.0, &claim, &measures),
            Err(HedgeError::BudgetExceedsPrice { .. })
        ));
        assert!(HedgeBudget::from_value(0.0, &claim, &measures).is_ok());
        let zero = Claim::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            HedgeBudget::from_value(0.0, &zero, &measures),
            Err(HedgeError::DegenerateClaim)
        ));
    }

    #[test]
    fn q_weights_of_the_call() {
        let (_, measures, claim) = call_market();
        let qw = QWeights::compute(&claim, &measures).unwrap();
        assert!((qw.q[0] - 1.0).abs() < 1e-15);
        assert_eq!(qw.q[1], 0.0);
        assert!((qw.m[0] - 1.0).abs() < 1e-15);
        assert_eq!(qw.m[1], 0.0);
    }

    #[test]
    fn reduction_a_matches_hand_computation() {
        let (_, measures, claim) = call_market();
        let budget = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        let inst = reduce_problem_a(&claim, &measures, &budget).unwrap();
        assert_eq!(inst.gains(), &[0.6, 0.4]);
        assert!((inst.weights()[0] - 1.0).abs() < 1e-15);
        assert_eq!(inst.weights()[1], 0.0);
        assert!((inst.capacity() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reduction_rejects_zero_claim() {
        let (_, measures, _) = call_market();
        let claim = Claim::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            QWeights::compute(&claim, &measures),
            Err(HedgeError::DegenerateClaim)
        ));
    }

    #[test]
    fn problem_a_exact_on_the_call() {
        let (tree, measures, claim) = call_market();
        let budget = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        let sol =
            solve_problem_a(&claim, &measures, &tree, &budget, ProblemAMode::Exact).unwrap();
        assert_eq!(sol.decisions, vec![0.0, 1.0]);
        assert_eq!(sol.modified_payoff, vec![0.0, 0.0]);
        assert!((sol.bounds.z_exact.unwrap() - 0.4).abs() < 1e-15);
        assert!((sol.success_probability - 0.4).abs() < 1e-12);
        assert!(market::is_admissible(&sol.value_process));
    }

    #[test]
    fn problem_a_greedy_on_the_call() {
        let (tree, measures, claim) = call_market();
        let budget = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        let sol =
            solve_problem_a(&claim, &measures, &tree, &budget, ProblemAMode::Greedy).unwrap();
        assert!((sol.bounds.z_greedy.unwrap() - 0.4).abs() < 1e-15);
        assert!((sol.bounds.greedy_error_bound.unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(sol.critical_state, Some(0));
    }

    #[test]
    fn problem_a_randomized_on_the_call() {
        let (tree, measures, claim) = call_market();
        let budget = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        let sol = solve_problem_a_randomized(&claim, &measures, &tree, &budget).unwrap();
        assert_eq!(sol.decisions, vec![0.5, 1.0]);
        assert_eq!(sol.modified_payoff, vec![10.0, 0.0]);
        assert!((sol.initial_cost - 5.0).abs() < 1e-12);
        assert!((sol.bounds.z_dantzig.unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn neyman_pearson_on_the_call() {
        let (_, measures, claim) = call_market();
        let budget = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        let np = neyman_pearson_test(&claim, &measures, &budget).unwrap();
        assert!((np.c_star - 0.06).abs() < 1e-15);
        assert!((np.gamma - 0.5).abs() < 1e-15);
        assert_eq!(np.test.values(), &[0.5, 1.0]);
        assert!((np.test.expectation(measures.p()) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn problem_b_on_the_call() {
        let (tree, measures, claim) = call_market();
        let sol = solve_problem_b(&claim, &measures, &tree, 5.0).unwrap();
        assert_eq!(sol.sacrificed_state, Some(1));
        assert_eq!(sol.modified_payoff, vec![20.0, -10.0]);
        assert!((sol.initial_cost - 5.0).abs() < 1e-12);
        assert!((sol.success_probability - 0.6).abs() < 1e-12);
        assert!(!market::is_admissible(&sol.value_process));
    }

    #[test]
    fn problem_b_ties_break_to_smallest_index() {
        let tree = build_binomial(100.0, 1.2, 0.8, 0.0, 0.5, 1).unwrap();
        let measures = market::risk_neutral_measure(&tree).unwrap();
        let claim = Claim::new(vec![20.0, 5.0]).unwrap();
        let (_, sacrificed, _) = quasi_replication_payoff(&claim, &measures, 3.0).unwrap();
        assert_eq!(sacrificed, 0);
    }

    #[test]
    fn problem_b_success_is_one_minus_min_p_for_positive_claims() {
        let tree = build_binomial(100.0, 1.3, 0.9, 0.0, 0.7, 3).unwrap();
        let measures = market::risk_neutral_measure(&tree).unwrap();
        let claim = Claim::new(vec![3.0; 8]).unwrap();
        let sol = solve_problem_b(&claim, &measures, &tree, 1.5).unwrap();
        let min_p = measures.p().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((sol.success_probability - (1.0 - min_p)).abs() < 1e-12);
    }

    #[test]
    fn problem_c_on_the_call() {
        let (tree, measures, claim) = call_market();
        let budget = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        let sol = solve_problem_c(&claim, &measures, &tree, &budget).unwrap();
        assert_eq!(sol.decisions, vec![0.5, 0.0]);
        assert_eq!(sol.modified_payoff, vec![10.0, 0.0]);
        assert!((sol.expected_shortfall - 6.0).abs() < 1e-12);
        assert!((sol.initial_cost - 5.0).abs() < 1e-12);
        assert_eq!(sol.critical_state, Some(0));
    }

    #[test]
    fn problem_d_on_the_call() {
        let (tree, measures, claim) = call_market();
        let budget = HedgeBudget::from_value(5.0, &claim, &measures).unwrap();
        let sol = solve_problem_d(&claim, &measures, &tree, &budget).unwrap();
        assert_eq!(sol.sacrificed_state, Some(1));
        assert_eq!(sol.modified_payoff, vec![20.0, -10.0]);
        assert!((sol.expected_shortfall - 4.0).abs() < 1e-12);
        assert!((sol.initial_cost - 5.0).abs() < 1e-12);
    }

    #[test]
    fn problem_d_uniform_ratio_sacrifices_last() {
        // u = 1.5, d = 0.5, r = 0 give q = 0.5 exactly, so with
        // p_up = 0.5 the ratios p/p* all tie; the last state loses.
        let tree = build_binomial(100.0, 1.5, 0.5, 0.0, 0.5, 2).unwrap();
        let measures = market::risk_neutral_measure(&tree).unwrap();
        let claim = Claim::new(vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        let budget = HedgeBudget::from_value(1.0, &claim, &measures).unwrap();
        let (_, sacrificed, _) = problem_d_payoff(&claim, &measures, &budget).unwrap();
        assert_eq!(sacrificed, 3);
    }

    #[test]
    fn grouping_distinct_keys_is_identity() {
        let inst =
            KnapsackInstance::binary(vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5], 0.5).unwrap();
        let grouping = group_levels(&inst, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(grouping.members.len(), 3);
        assert_eq!(grouping.instance.gains(), inst.gains());
    }

    #[test]
    fn grouped_greedy_matches_plain_greedy_on_binomial_trees() {
        for periods in 1..=8u32 {
            let tree = build_binomial(100.0, 1.15, 0.85, 0.01, 0.55, periods).unwrap();
            let measures = market::risk_neutral_measure(&tree).unwrap();
            let payoffs: Vec<f64> = tree
                .terminal_prices(1)
                .iter()
                .map(|x| (x - 95.0).max(0.0))
                .collect();
            let claim = Claim::new(payoffs).unwrap();
            let budget = HedgeBudget::from_fraction(0.4, &claim, &measures).unwrap();
            let inst = reduce_problem_a(&claim, &measures, &budget).unwrap();
            let keys = tree.terminal_prices(1);

            let plain = knapsack::solve_greedy(&inst).unwrap();
            let grouped = solve_greedy_grouped(&inst, &keys).unwrap();
            assert_eq!(plain.objective, grouped.objective, "N={periods}");
            assert_eq!(plain.decisions, grouped.decisions, "N={periods}");
        }
    }

    #[test]
    fn binomial_levels_match_tree_quantities() {
        let params = BinomialParams {
            s0: 100.0,
            up: 1.2,
            down: 0.8,
            rate: 0.0,
            p_up: 0.6,
            periods: 10,
        };
        let model = binomial_levels(&params, VanillaClaim::Call { strike: 100.0 }).unwrap();
        assert_eq!(model.levels(), 11);

        let tree = params.build_tree().unwrap();
        let measures = market::risk_neutral_measure(&tree).unwrap();
        let payoffs: Vec<f64> = tree
            .terminal_prices(1)
            .iter()
            .map(|x| (x - 100.0).max(0.0))
            .collect();
        let claim = Claim::new(payoffs).unwrap();
        let tree_price = market::price(&claim, &measures).unwrap();
        assert!((model.price - tree_price).abs() < money_tol(tree_price));

        let total_paths: f64 = model.counts.iter().sum();
        assert_eq!(total_paths, 1024.0);
    }

    #[test]
    fn level_greedy_matches_elementwise_greedy() {
        let params = BinomialParams {
            s0: 100.0,
            up: 1.25,
            down: 0.85,
            rate: 0.02,
            p_up: 0.65,
            periods: 9,
        };
        let model = binomial_levels(&params, VanillaClaim::Call { strike: 105.0 }).unwrap();
        let v = 0.35 * model.price;
        let levels = model.greedy(v).unwrap();

        let tree = params.build_tree().unwrap();
        let measures = market::risk_neutral_measure(&tree).unwrap();
        let discount = pow_int(1.02, 9);
        let payoffs: Vec<f64> = tree
            .terminal_prices(1)
            .iter()
            .map(|x| (x * discount - 105.0).max(0.0) / discount)
            .collect();
        let claim = Claim::new(payoffs).unwrap();
        let budget = HedgeBudget::from_value(v, &claim, &measures).unwrap();
        let inst = reduce_problem_a(&claim, &measures, &budget).unwrap();
        let plain = knapsack::solve_greedy(&inst).unwrap();

        assert!((levels.z_greedy - plain.objective).abs() < 1e-12);
        assert!((levels.error_bound - plain.error_bound.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn max_path_probability_closed_form() {
        let params = BinomialParams {
            s0: 100.0,
            up: 1.2,
            down: 0.8,
            rate: 0.0,
            p_up: 0.9,
            periods: 100,
        };
        let model = binomial_levels(&params, VanillaClaim::Call { strike: 100.0 }).unwrap();
        let expect = pow_int(0.9, 100);
        assert!((model.max_path_probability() - expect).abs() <= 1e-15 * expect);
    }
}
