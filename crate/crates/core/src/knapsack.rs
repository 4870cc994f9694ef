//! Real-valued knapsack solvers.
//!
//! All gains, weights, and capacities are doubles; nothing here assumes
//! integer data, so classical integer dynamic programming is out. The
//! exact 0-1 solver is a depth-first branch-and-bound pruned by the
//! continuous (Dantzig) relaxation, with a brute-force oracle for small
//! instances and closed forms for the continuous and variable-bound
//! variants.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Default node budget for the exact 0-1 solver.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Largest instance the brute-force oracle accepts.
pub const BRUTE_FORCE_MAX_ITEMS: usize = 25;

/// Capacity comparisons use this absolute tolerance, scaled by (1 + c),
/// so cancellation near the boundary cannot flip the critical element.
#[inline]
pub fn capacity_tol(capacity: f64) -> f64 {
    1e-12 * (1.0 + capacity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Decisions are 0 or 1.
    Binary,
    /// Decisions range over [0, 1].
    Continuous01,
    /// Decisions are bounded above by per-item bounds and unbounded below.
    VariableBound,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Binary => "binary",
            Variant::Continuous01 => "continuous",
            Variant::VariableBound => "variable-bound",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KnapsackError {
    /// Construction-time validation failure.
    InvalidInstance(String),
    /// A solver was handed the wrong variant.
    WrongVariant { expected: Variant, found: Variant },
    /// Continuous/greedy need `capacity < total weight`; every item fits.
    CapacityNotBinding { capacity: f64, total_weight: f64 },
    /// Brute force refuses instances past [`BRUTE_FORCE_MAX_ITEMS`].
    TooManyItems { items: usize, max: usize },
}

impl fmt::Display for KnapsackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnapsackError::InvalidInstance(msg) => write!(f, "invalid knapsack instance: {msg}"),
            KnapsackError::WrongVariant { expected, found } => {
                write!(f, "expected a {expected} instance, found {found}")
            }
            KnapsackError::CapacityNotBinding {
                capacity,
                total_weight,
            } => write!(
                f,
                "capacity {capacity} admits the full selection (total weight {total_weight}); \
                 the constraint must be binding"
            ),
            KnapsackError::TooManyItems { items, max } => {
                write!(f, "brute force refused: {items} items exceeds the cap of {max}")
            }
        }
    }
}

impl core::error::Error for KnapsackError {}

/// A knapsack instance over real-valued data.
#[derive(Debug, Clone)]
pub struct KnapsackInstance {
    gains: Vec<f64>,
    weights: Vec<f64>,
    capacity: f64,
    upper_bounds: Option<Vec<f64>>,
    variant: Variant,
}

impl KnapsackInstance {
    /// 0-1 instance: maximize Σ gᵢxᵢ subject to Σ wᵢxᵢ ≤ c, xᵢ ∈ {0,1}.
    pub fn binary(gains: Vec<f64>, weights: Vec<f64>, capacity: f64) -> Result<Self, KnapsackError> {
        Self::validate_common(&gains, &weights, capacity)?;
        Ok(Self {
            gains,
            weights,
            capacity,
            upper_bounds: None,
            variant: Variant::Binary,
        })
    }

    /// Continuous relaxation: xᵢ ∈ [0,1].
    pub fn continuous(
        gains: Vec<f64>,
        weights: Vec<f64>,
        capacity: f64,
    ) -> Result<Self, KnapsackError> {
        Self::validate_common(&gains, &weights, capacity)?;
        Ok(Self {
            gains,
            weights,
            capacity,
            upper_bounds: None,
            variant: Variant::Continuous01,
        })
    }

    /// Variable-bound instance: xᵢ ≤ uᵢ, unbounded below, all weights positive.
    pub fn variable_bound(
        gains: Vec<f64>,
        weights: Vec<f64>,
        capacity: f64,
        upper_bounds: Vec<f64>,
    ) -> Result<Self, KnapsackError> {
        Self::validate_common(&gains, &weights, capacity)?;
        if upper_bounds.len() != gains.len() {
            return Err(KnapsackError::InvalidInstance(String::from(
                "upper bound count differs from item count",
            )));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(KnapsackError::InvalidInstance(String::from(
                "variable-bound weights must be strictly positive",
            )));
        }
        if upper_bounds.iter().any(|&u| !(u >= 0.0) || !u.is_finite()) {
            return Err(KnapsackError::InvalidInstance(String::from(
                "upper bounds must be finite and non-negative",
            )));
        }
        // The exact-budget identity Σ wᵢxᵢ = c with xᵢ ≤ uᵢ needs c ≤ Σ uᵢwᵢ.
        let bound_cost = crate::numeric::kahan_sum(
            upper_bounds.iter().zip(&weights).map(|(&u, &w)| u * w),
        );
        if capacity > bound_cost + capacity_tol(capacity) {
            return Err(KnapsackError::InvalidInstance(String::from(
                "capacity exceeds the cost of the fully bound selection",
            )));
        }
        Ok(Self {
            gains,
            weights,
            capacity,
            upper_bounds: Some(upper_bounds),
            variant: Variant::VariableBound,
        })
    }

    fn validate_common(gains: &[f64], weights: &[f64], capacity: f64) -> Result<(), KnapsackError> {
        if gains.len() != weights.len() {
            return Err(KnapsackError::InvalidInstance(String::from(
                "gain count differs from weight count",
            )));
        }
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(KnapsackError::InvalidInstance(String::from(
                "gains must be finite and non-negative",
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(KnapsackError::InvalidInstance(String::from(
                "weights must be finite and non-negative",
            )));
        }
        if !capacity.is_finite() || capacity < 0.0 {
            return Err(KnapsackError::InvalidInstance(String::from(
                "capacity must be finite and non-negative",
            )));
        }
        Ok(())
    }

    /// The same data with the 0-1 constraint relaxed to [0, 1].
    pub fn relax(&self) -> Self {
        let mut out = self.clone();
        out.variant = Variant::Continuous01;
        out.upper_bounds = None;
        out
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn upper_bounds(&self) -> Option<&[f64]> {
        self.upper_bounds.as_deref()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn total_weight(&self) -> f64 {
        crate::numeric::kahan_sum(self.weights.iter().copied())
    }

    fn expect_variant(&self, expected: Variant) -> Result<(), KnapsackError> {
        if self.variant == expected {
            Ok(())
        } else {
            Err(KnapsackError::WrongVariant {
                expected,
                found: self.variant,
            })
        }
    }
}

/// Solver output. `decisions` is indexed by original item position.
#[derive(Debug, Clone)]
pub struct KnapsackSolution {
    /// Per-item decision: 0/1 for binary, a fraction for continuous, a
    /// real (possibly negative on the adjusted item) for variable-bound.
    pub decisions: Vec<f64>,
    /// Objective Σ gᵢxᵢ, always recomputed from `decisions` in original
    /// item order so that equal decision vectors give bit-equal values.
    pub objective: f64,
    /// Original index of the critical (first unaffordable) or adjusted item.
    pub critical_item: Option<usize>,
    /// Continuous-relaxation optimum z*; an upper bound for the 0-1 optimum.
    pub dantzig_bound: Option<f64>,
    /// Greedy error certificate: the critical item's gain.
    pub error_bound: Option<f64>,
    /// Whether optimality is proven (closed forms and completed searches).
    pub proven_optimal: bool,
    /// Branch-and-bound nodes visited (0 for closed-form solvers).
    pub nodes_explored: u64,
}

/// Canonical objective: left-to-right dot product in original item order.
/// Both the exact solver and the brute-force oracle report this value, so
/// identical decision vectors always yield bit-identical objectives.
fn canonical_objective(gains: &[f64], decisions: &[f64]) -> f64 {
    let mut z = 0.0;
    for (g, x) in gains.iter().zip(decisions) {
        z += g * x;
    }
    z
}

/// Permutation sorting items by gain/weight ratio, non-increasing.
///
/// Zero-weight items rank first (ratio +∞); ties keep ascending original
/// index, so the order is deterministic.
pub fn order_by_ratio(instance: &KnapsackInstance) -> Vec<usize> {
    let ratio = |i: usize| -> f64 {
        if instance.weights[i] == 0.0 {
            f64::INFINITY
        } else {
            instance.gains[i] / instance.weights[i]
        }
    };
    let mut perm: Vec<usize> = (0..instance.len()).collect();
    perm.sort_by(|&a, &b| ratio(b).partial_cmp(&ratio(a)).expect("ratios are never NaN"));
    perm
}

/// Critical element of `perm` under `capacity`: the first position whose
/// cumulative weight exceeds the capacity (with the scaled tolerance).
/// Returns `(position, prefix_weight)`; position == perm.len() means the
/// whole selection fits.
fn critical_position(
    weights: &[f64],
    perm: &[usize],
    capacity: f64,
) -> (usize, f64) {
    let tol = capacity_tol(capacity);
    let mut cum = 0.0;
    for (pos, &item) in perm.iter().enumerate() {
        let next = cum + weights[item];
        if next > capacity + tol {
            return (pos, cum);
        }
        cum = next;
    }
    (perm.len(), cum)
}

/// Optimal solution of the continuous relaxation: take items in ratio
/// order, split the critical element so the budget is exhausted exactly.
pub fn solve_continuous(instance: &KnapsackInstance) -> Result<KnapsackSolution, KnapsackError> {
    instance.expect_variant(Variant::Continuous01)?;
    let total = instance.total_weight();
    if total <= instance.capacity + capacity_tol(instance.capacity) {
        return Err(KnapsackError::CapacityNotBinding {
            capacity: instance.capacity,
            total_weight: total,
        });
    }

    let perm = order_by_ratio(instance);
    let (pos, prefix_weight) = critical_position(&instance.weights, &perm, instance.capacity);
    if pos == perm.len() {
        // The running sums disagree with the total within rounding.
        return Err(KnapsackError::CapacityNotBinding {
            capacity: instance.capacity,
            total_weight: total,
        });
    }
    let critical = perm[pos];

    let mut decisions = vec![0.0; instance.len()];
    for &item in &perm[..pos] {
        decisions[item] = 1.0;
    }
    let residual = instance.capacity - prefix_weight;
    let fraction = (residual / instance.weights[critical]).clamp(0.0, 1.0);
    decisions[critical] = fraction;

    let objective = canonical_objective(&instance.gains, &decisions);
    Ok(KnapsackSolution {
        decisions,
        objective,
        critical_item: Some(critical),
        dantzig_bound: Some(objective),
        error_bound: None,
        proven_optimal: true,
        nodes_explored: 0,
    })
}

/// Greedy solution: everything strictly before the critical element.
///
/// Certifies `z_greedy ≤ z_exact ≤ z_greedy + error_bound` where the
/// error bound is the critical item's gain.
pub fn solve_greedy(instance: &KnapsackInstance) -> Result<KnapsackSolution, KnapsackError> {
    instance.expect_variant(Variant::Binary)?;
    let total = instance.total_weight();
    if total <= instance.capacity + capacity_tol(instance.capacity) {
        return Err(KnapsackError::CapacityNotBinding {
            capacity: instance.capacity,
            total_weight: total,
        });
    }

    let perm = order_by_ratio(instance);
    let (pos, prefix_weight) = critical_position(&instance.weights, &perm, instance.capacity);
    if pos == perm.len() {
        return Err(KnapsackError::CapacityNotBinding {
            capacity: instance.capacity,
            total_weight: total,
        });
    }
    let critical = perm[pos];

    let mut decisions = vec![0.0; instance.len()];
    for &item in &perm[..pos] {
        decisions[item] = 1.0;
    }
    let objective = canonical_objective(&instance.gains, &decisions);
    let residual = instance.capacity - prefix_weight;
    let fraction = (residual / instance.weights[critical]).clamp(0.0, 1.0);
    Ok(KnapsackSolution {
        decisions,
        objective,
        critical_item: Some(critical),
        dantzig_bound: Some(objective + fraction * instance.gains[critical]),
        error_bound: Some(instance.gains[critical]),
        proven_optimal: false,
        nodes_explored: 0,
    })
}

/// Closed form for the variable-bound variant: in ratio order every item
/// sits at its upper bound except the last, which absorbs the budget
/// residual (and may go negative). Consumes the capacity exactly.
pub fn solve_variable_bound(instance: &KnapsackInstance) -> Result<KnapsackSolution, KnapsackError> {
    instance.expect_variant(Variant::VariableBound)?;
    let bounds = instance
        .upper_bounds
        .as_ref()
        .expect("variable-bound instances always carry bounds");
    if instance.is_empty() {
        return Err(KnapsackError::InvalidInstance(String::from(
            "variable-bound instance needs at least one item",
        )));
    }

    let perm = order_by_ratio(instance);
    let last = *perm.last().expect("non-empty");
    let mut decisions = vec![0.0; instance.len()];
    let mut spent = 0.0;
    for &item in &perm[..perm.len() - 1] {
        decisions[item] = bounds[item];
        spent += bounds[item] * instance.weights[item];
    }
    decisions[last] = (instance.capacity - spent) / instance.weights[last];

    let objective = canonical_objective(&instance.gains, &decisions);
    Ok(KnapsackSolution {
        decisions,
        objective,
        critical_item: Some(last),
        dantzig_bound: None,
        error_bound: None,
        proven_optimal: true,
        nodes_explored: 0,
    })
}

/// Total order on candidate solutions: higher objective wins; on exact
/// objective ties the lexicographically smallest decision vector in ratio
/// order wins. Shared by the exact solver and the brute-force oracle.
fn better(
    z_new: f64,
    x_new: &[f64],
    z_best: f64,
    x_best: &[f64],
    perm: &[usize],
) -> bool {
    if z_new != z_best {
        return z_new > z_best;
    }
    for &item in perm {
        let (a, b) = (x_new[item], x_best[item]);
        if a != b {
            return a < b;
        }
    }
    false
}

/// Exhaustive 0-1 oracle for instances with at most
/// [`BRUTE_FORCE_MAX_ITEMS`] items. Applies the same tie-break rule as
/// [`solve_exact_01`], so the two agree on the decision vector as well as
/// the objective.
pub fn brute_force_01(instance: &KnapsackInstance) -> Result<KnapsackSolution, KnapsackError> {
    instance.expect_variant(Variant::Binary)?;
    let n = instance.len();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(KnapsackError::TooManyItems {
            items: n,
            max: BRUTE_FORCE_MAX_ITEMS,
        });
    }
    let perm = order_by_ratio(instance);
    let tol = capacity_tol(instance.capacity);

    let mut best_x = vec![0.0; n];
    let mut best_z = 0.0;
    let mut x = vec![0.0; n];
    for mask in 0u32..(1u32 << n) {
        let mut weight = 0.0;
        let mut feasible = true;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                weight += instance.weights[i];
                if weight > instance.capacity + tol {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = f64::from(mask >> i & 1);
        }
        let z = canonical_objective(&instance.gains, &x);
        if better(z, &x, best_z, &best_x, &perm) {
            best_z = z;
            best_x.copy_from_slice(&x);
        }
    }

    Ok(KnapsackSolution {
        decisions: best_x,
        objective: best_z,
        critical_item: None,
        dantzig_bound: None,
        error_bound: None,
        proven_optimal: true,
        nodes_explored: 0,
    })
}

/// Exact 0-1 solver with the default node budget.
pub fn solve_exact_01(instance: &KnapsackInstance) -> Result<KnapsackSolution, KnapsackError> {
    solve_exact_01_with_budget(instance, DEFAULT_NODE_BUDGET)
}

/// Depth-first branch-and-bound pruned by the Dantzig bound.
///
/// Integer-weight tricks are unavailable for real data, so the search
/// relies entirely on the relaxation bound. Pruning keeps a small slack
/// so that optima tied in objective value survive to be tie-broken
/// lexicographically; zero-weight items are committed up front. If the
/// node budget runs out, the best solution found so far is returned with
/// `proven_optimal == false`.
pub fn solve_exact_01_with_budget(
    instance: &KnapsackInstance,
    node_budget: u64,
) -> Result<KnapsackSolution, KnapsackError> {
    instance.expect_variant(Variant::Binary)?;
    let n = instance.len();
    let perm = order_by_ratio(instance);

    // Items in ratio order, with g=0 ∧ w=0 items dropped (their decision
    // stays 0) and free w=0 items taken unconditionally.
    let mut free: Vec<usize> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    for &item in &perm {
        let (g, w) = (instance.gains[item], instance.weights[item]);
        if w == 0.0 {
            if g > 0.0 {
                free.push(item);
            }
        } else {
            active.push(item);
        }
    }

    let k = active.len();
    let mut cum_gain = vec![0.0; k + 1];
    let mut cum_weight = vec![0.0; k + 1];
    for (i, &item) in active.iter().enumerate() {
        cum_gain[i + 1] = cum_gain[i] + instance.gains[item];
        cum_weight[i + 1] = cum_weight[i] + instance.weights[item];
    }
    let free_gain: f64 = free.iter().map(|&i| instance.gains[i]).sum();

    // Dantzig bound on the subproblem over active[from..] with residual
    // capacity rc, relative to the cumulative arrays.
    let upper_bound = |from: usize, rc: f64| -> f64 {
        // First position p ≥ from with cum_weight[p+1] - cum_weight[from] > rc.
        let target = cum_weight[from] + rc;
        let mut lo = from;
        let mut hi = k;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cum_weight[mid + 1] > target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let mut bound = cum_gain[lo] - cum_gain[from];
        if lo < k {
            let residual = target - cum_weight[lo];
            let item = active[lo];
            bound += (residual / instance.weights[item]).max(0.0) * instance.gains[item];
        }
        bound
    };

    let tol = capacity_tol(instance.capacity);

    // Greedy incumbent: a valid lower bound from the start.
    let mut best_x = vec![0.0; n];
    for &item in &free {
        best_x[item] = 1.0;
    }
    {
        let mut cum = 0.0;
        for &item in &active {
            let next = cum + instance.weights[item];
            if next > instance.capacity + tol {
                break;
            }
            best_x[item] = 1.0;
            cum = next;
        }
    }
    let mut best_z = canonical_objective(&instance.gains, &best_x);

    // Iterative DFS over (depth, decision) to keep the stack flat for
    // instances with thousands of states. Running gain/weight are kept
    // incrementally; only candidate leaves recompute the canonical
    // objective for the tie-break.
    enum Step {
        Enter(usize),
        Undo(usize),
    }
    let mut x = vec![0.0; n];
    for &item in &free {
        x[item] = 1.0;
    }
    let mut used = 0.0;
    let mut gained = free_gain;
    let mut nodes: u64 = 0;
    let mut exhausted = false;
    let mut stack = vec![Step::Enter(0)];

    while let Some(step) = stack.pop() {
        match step {
            Step::Undo(depth) => {
                let item = active[depth];
                x[item] = 0.0;
                used -= instance.weights[item];
                gained -= instance.gains[item];
            }
            Step::Enter(depth) => {
                nodes += 1;
                if nodes > node_budget {
                    exhausted = true;
                    break;
                }
                let slack = 1e-12 * (1.0 + best_z.abs());
                if depth == k {
                    if gained >= best_z - slack {
                        let z = canonical_objective(&instance.gains, &x);
                        if better(z, &x, best_z, &best_x, &perm) {
                            best_z = z;
                            best_x.copy_from_slice(&x);
                        }
                    }
                    continue;
                }
                let bound = gained + upper_bound(depth, instance.capacity - used);
                // Strict pruning with slack: subtrees that merely tie the
                // incumbent may still hold the lex-smaller optimum.
                if bound < best_z - slack {
                    continue;
                }
                let item = active[depth];
                // Exclude branch is pushed first so the include branch
                // (which drives the incumbent up fast) is explored first.
                stack.push(Step::Enter(depth + 1));
                if used + instance.weights[item] <= instance.capacity + tol {
                    stack.push(Step::Undo(depth));
                    stack.push(Step::Enter(depth + 1));
                    // Applied immediately; undone by the Undo marker.
                    x[item] = 1.0;
                    used += instance.weights[item];
                    gained += instance.gains[item];
                }
            }
        }
    }

    Ok(KnapsackSolution {
        decisions: best_x,
        objective: best_z,
        critical_item: None,
        dantzig_bound: None,
        error_bound: None,
        proven_optimal: !exhausted,
        nodes_explored: nodes,
    })
}
