//! Finite complete discrete-time markets on scenario trees.
//!
//! Everything is expressed in units of the numéraire asset (asset 0),
//! whose discounted price is identically 1. Trees are path-explicit: the
//! terminal states are the full root-to-leaf paths, carrying ordinals
//! ω₁..ωₙ in depth-first order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::numeric::{kahan_sum, pow_int, solve_linear, LinearSolve};
use crate::{money_tol, PROB_ABS_TOL};

/// Hard cap for path-explicit binomial construction (2^periods leaves).
/// Larger models should use the level-grouped route instead.
pub const MAX_BINOMIAL_PERIODS: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum MarketError {
    /// No strictly positive one-period martingale measure exists.
    Arbitrage(String),
    /// The one-period model at `node` does not span its successor states.
    Incomplete { node: usize },
    /// Redundant assets at `node`: the minimum-norm holdings failed to
    /// reproduce the successor values.
    RedundantAssets { node: usize },
    DimensionMismatch { expected: usize, found: usize },
    InvalidTree(String),
    InvalidParameter(String),
    InvalidClaim(String),
    InvalidMeasure(String),
}

impl fmt::Display for MarketError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketError::Arbitrage(msg) => write!(f, "arbitrage: {msg}"),
            MarketError::Incomplete { node } => {
                write!(f, "market incomplete at node {node}: one-period model does not span")
            }
            MarketError::RedundantAssets { node } => {
                write!(f, "redundant assets at node {node}: holdings do not reproduce values")
            }
            MarketError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected} states, found {found}")
            }
            MarketError::InvalidTree(msg) => write!(f, "invalid scenario tree: {msg}"),
            MarketError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            MarketError::InvalidClaim(msg) => write!(f, "invalid claim: {msg}"),
            MarketError::InvalidMeasure(msg) => write!(f, "invalid measure: {msg}"),
        }
    }
}

impl core::error::Error for MarketError {}

/// One node of a scenario tree.
#[derive(Debug, Clone)]
pub struct Node {
    /// Time index, 0 at the root.
    pub time: usize,
    /// Discounted asset prices (1, X⁽¹⁾, …, X⁽ᵈ⁾).
    pub prices: Vec<f64>,
    /// Child node ids; empty for terminal nodes.
    pub children: Vec<usize>,
    /// Conditional real-world branch probability per child.
    pub branch_probs: Vec<f64>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }
}

/// A finite filtered market: a rooted tree of price states.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    nodes: Vec<Node>,
    parents: Vec<Option<usize>>,
    terminals: Vec<usize>,
    periods: usize,
    asset_count: usize,
}

impl ScenarioTree {
    /// Validates the tree invariants and freezes the terminal ordering
    /// (depth-first, following each node's child order).
    pub fn new(nodes: Vec<Node>) -> Result<Self, MarketError> {
        if nodes.is_empty() {
            return Err(MarketError::InvalidTree(String::from("no nodes")));
        }
        let asset_count = nodes[0].prices.len();
        if asset_count == 0 {
            return Err(MarketError::InvalidTree(String::from("no assets")));
        }
        if nodes[0].time != 0 {
            return Err(MarketError::InvalidTree(String::from("root must have time 0")));
        }

        for (id, node) in nodes.iter().enumerate() {
            if node.prices.len() != asset_count {
                return Err(MarketError::InvalidTree(format!(
                    "node {id}: expected {asset_count} asset prices"
                )));
            }
            if (node.prices[0] - 1.0).abs() > PROB_ABS_TOL {
                return Err(MarketError::InvalidTree(format!(
                    "node {id}: numéraire price must be 1, found {}",
                    node.prices[0]
                )));
            }
            if node.prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(MarketError::InvalidTree(format!(
                    "node {id}: prices must be finite and non-negative"
                )));
            }
            if !node.children.is_empty() {
                if node.children.len() < 2 {
                    return Err(MarketError::InvalidTree(format!(
                        "node {id}: non-terminal nodes need at least 2 children"
                    )));
                }
                if node.branch_probs.len() != node.children.len() {
                    return Err(MarketError::InvalidTree(format!(
                        "node {id}: branch probability count differs from child count"
                    )));
                }
                if node.branch_probs.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
                    return Err(MarketError::InvalidTree(format!(
                        "node {id}: branch probabilities must be strictly positive"
                    )));
                }
                let total = kahan_sum(node.branch_probs.iter().copied());
                if (total - 1.0).abs() > PROB_ABS_TOL {
                    return Err(MarketError::InvalidTree(format!(
                        "node {id}: branch probabilities sum to {total}, not 1"
                    )));
                }
            }
        }

        // Depth-first walk from the root: establishes reachability, the
        // parent map, and the terminal ordinal order.
        let mut parents = vec![None; nodes.len()];
        let mut seen = vec![false; nodes.len()];
        let mut terminals = Vec::new();
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(id) = stack.pop() {
            let node = &nodes[id];
            if node.is_terminal() {
                terminals.push(id);
                continue;
            }
            for &child in node.children.iter().rev() {
                if child >= nodes.len() {
                    return Err(MarketError::InvalidTree(format!(
                        "node {id}: child {child} out of range"
                    )));
                }
                if seen[child] {
                    return Err(MarketError::InvalidTree(format!(
                        "node {child} has more than one parent"
                    )));
                }
                if nodes[child].time != node.time + 1 {
                    return Err(MarketError::InvalidTree(format!(
                        "node {child}: time must be parent time + 1"
                    )));
                }
                seen[child] = true;
                parents[child] = Some(id);
                stack.push(child);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(MarketError::InvalidTree(String::from(
                "tree contains nodes unreachable from the root",
            )));
        }

        let periods = nodes[terminals[0]].time;
        if terminals.iter().any(|&t| nodes[t].time != periods) {
            return Err(MarketError::InvalidTree(String::from(
                "all terminal nodes must sit at the same time index",
            )));
        }

        Ok(Self {
            nodes,
            parents,
            terminals,
            periods,
            asset_count,
        })
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parents[id]
    }

    /// Terminal node ids in ordinal (depth-first) order.
    pub fn terminal_nodes(&self) -> &[usize] {
        &self.terminals
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Number of traded assets including the numéraire (d + 1).
    pub fn asset_count(&self) -> usize {
        self.asset_count
    }

    /// Node ids from the root to the given terminal ordinal, inclusive.
    pub fn path_nodes_to_terminal(&self, ordinal: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.periods + 1);
        let mut id = self.terminals[ordinal];
        loop {
            path.push(id);
            match self.parents[id] {
                Some(p) => id = p,
                None => break,
            }
        }
        path.reverse();
        path
    }

    /// Real-world path probabilities per terminal ordinal: the product of
    /// conditional branch probabilities along each root-to-leaf path.
    pub fn real_world_path_probabilities(&self) -> Vec<f64> {
        path_products(self, |id, idx| self.nodes[id].branch_probs[idx])
    }

    /// Terminal prices of one asset, in ordinal order.
    pub fn terminal_prices(&self, asset: usize) -> Vec<f64> {
        self.terminals
            .iter()
            .map(|&id| self.nodes[id].prices[asset])
            .collect()
    }
}

/// Products of per-branch factors along every root-to-leaf path, in
/// terminal ordinal order. Factors are multiplied root-to-leaf, so paths
/// through the same branches always give the bit-identical product.
fn path_products<F: Fn(usize, usize) -> f64>(tree: &ScenarioTree, branch: F) -> Vec<f64> {
    let mut out = vec![0.0; tree.terminals.len()];
    let mut ordinal = 0;
    let mut stack: Vec<(usize, f64)> = vec![(0, 1.0)];
    while let Some((id, prob)) = stack.pop() {
        let node = &tree.nodes[id];
        if node.is_terminal() {
            out[ordinal] = prob;
            ordinal += 1;
            continue;
        }
        for (idx, &child) in node.children.iter().enumerate().rev() {
            stack.push((child, prob * branch(id, idx)));
        }
    }
    out
}

/// Real-world and risk-neutral probabilities over terminal states.
#[derive(Debug, Clone)]
pub struct MeasurePair {
    p: Vec<f64>,
    p_star: Vec<f64>,
}

impl MeasurePair {
    pub fn new(p: Vec<f64>, p_star: Vec<f64>) -> Result<Self, MarketError> {
        if p.is_empty() || p.len() != p_star.len() {
            return Err(MarketError::InvalidMeasure(String::from(
                "measures must be non-empty and of equal length",
            )));
        }
        for (name, v) in [("real-world", &p), ("risk-neutral", &p_star)] {
            if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(MarketError::InvalidMeasure(format!(
                    "{name} probabilities must be strictly positive"
                )));
            }
            let total = kahan_sum(v.iter().copied());
            if (total - 1.0).abs() > PROB_ABS_TOL {
                return Err(MarketError::InvalidMeasure(format!(
                    "{name} probabilities sum to {total}, not 1"
                )));
            }
        }
        Ok(Self { p, p_star })
    }

    /// Number of terminal states.
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Real-world state probabilities ℙ(ωᵢ).
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Risk-neutral state probabilities ℙ*(ωᵢ).
    pub fn p_star(&self) -> &[f64] {
        &self.p_star
    }
}

/// A discounted European claim: one non-negative payoff per terminal state.
#[derive(Debug, Clone)]
pub struct Claim {
    payoffs: Vec<f64>,
}

impl Claim {
    pub fn new(payoffs: Vec<f64>) -> Result<Self, MarketError> {
        if payoffs.is_empty() {
            return Err(MarketError::InvalidClaim(String::from("no payoffs")));
        }
        if payoffs.iter().any(|h| !h.is_finite() || *h < 0.0) {
            return Err(MarketError::InvalidClaim(String::from(
                "payoffs must be finite and non-negative",
            )));
        }
        Ok(Self { payoffs })
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoffs
    }

    pub fn len(&self) -> usize {
        self.payoffs.len()
    }
}

/// A predictable trading strategy: the holdings vector assigned at each
/// non-terminal node and held over the following period.
#[derive(Debug, Clone)]
pub struct Strategy {
    holdings: Vec<Vec<f64>>,
}

impl Strategy {
    /// Holdings assigned at `node`, or `None` for terminal nodes.
    pub fn holdings(&self, node: usize) -> Option<&[f64]> {
        let h = &self.holdings[node];
        if h.is_empty() {
            None
        } else {
            Some(h)
        }
    }
}

/// The value of a strategy at every node, plus the terminal slice in
/// ordinal order.
#[derive(Debug, Clone)]
pub struct ValueProcess {
    node_values: Vec<f64>,
    terminal_values: Vec<f64>,
}

impl ValueProcess {
    /// A value process carrying only terminal information (used when no
    /// price tree is available and only terminal metrics are needed).
    pub fn from_terminal(values: Vec<f64>) -> Self {
        Self {
            node_values: values.clone(),
            terminal_values: values,
        }
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    pub fn terminal_values(&self) -> &[f64] {
        &self.terminal_values
    }

    /// Initial cost V₀.
    pub fn initial_value(&self) -> f64 {
        self.node_values[0]
    }
}

/// Parameters of a one-risky-asset binomial model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialParams {
    pub s0: f64,
    pub up: f64,
    pub down: f64,
    pub rate: f64,
    pub p_up: f64,
    pub periods: u32,
}

impl BinomialParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !self.s0.is_finite() || self.s0 <= 0.0 {
            return Err(MarketError::InvalidParameter(String::from(
                "initial price must be positive",
            )));
        }
        if !(self.p_up > 0.0 && self.p_up < 1.0) {
            return Err(MarketError::InvalidParameter(String::from(
                "branch probability must lie strictly between 0 and 1",
            )));
        }
        if self.periods < 1 {
            return Err(MarketError::InvalidParameter(String::from(
                "at least one period is required",
            )));
        }
        let growth = 1.0 + self.rate;
        if !(self.down > 0.0 && self.down < growth && growth < self.up) {
            return Err(MarketError::Arbitrage(format!(
                "factor ordering must satisfy 0 < down < 1 + rate < up, \
                 found down={}, 1+rate={growth}, up={}",
                self.down, self.up
            )));
        }
        Ok(())
    }

    /// Discounted risky price after `ups` up-moves out of `t` steps,
    /// computed from the move counts so that every path to the same
    /// price level sees the bit-identical value.
    pub fn discounted_price(&self, t: u32, ups: u32) -> f64 {
        self.s0 * pow_int(self.up, ups) * pow_int(self.down, t - ups)
            / pow_int(1.0 + self.rate, t)
    }

    /// One-period risk-neutral up probability (1 + r − d) / (u − d).
    pub fn risk_neutral_up(&self) -> f64 {
        (1.0 + self.rate - self.down) / (self.up - self.down)
    }

    pub fn build_tree(&self) -> Result<ScenarioTree, MarketError> {
        self.validate()?;
        if self.periods > MAX_BINOMIAL_PERIODS {
            return Err(MarketError::InvalidParameter(format!(
                "a path-explicit tree with {} periods is too large; \
                 the cap is {MAX_BINOMIAL_PERIODS} (use level grouping beyond it)",
                self.periods
            )));
        }
        let periods = self.periods as usize;
        let total = (1usize << (periods + 1)) - 1;
        let mut nodes: Vec<Node> = Vec::with_capacity(total);
        let mut ups = vec![0u32; total];
        for id in 0..total {
            let (time, up_count) = if id == 0 {
                (0usize, 0u32)
            } else {
                let parent = (id - 1) / 2;
                let is_up = id == 2 * parent + 1;
                (nodes[parent].time + 1, ups[parent] + u32::from(is_up))
            };
            ups[id] = up_count;
            let risky = self.discounted_price(time as u32, up_count);
            let (children, branch_probs) = if time < periods {
                (
                    vec![2 * id + 1, 2 * id + 2],
                    vec![self.p_up, 1.0 - self.p_up],
                )
            } else {
                (Vec::new(), Vec::new())
            };
            nodes.push(Node {
                time,
                prices: vec![1.0, risky],
                children,
                branch_probs,
            });
        }
        ScenarioTree::new(nodes)
    }
}

/// Builds a path-explicit binomial tree with 2^periods terminal states.
/// Prices are discounted by the riskless numéraire (1 + rate)^t; the
/// terminal ordinals enumerate paths up-first.
pub fn build_binomial(
    s0: f64,
    up_factor: f64,
    down_factor: f64,
    period_rate: f64,
    p_up: f64,
    periods: u32,
) -> Result<ScenarioTree, MarketError> {
    BinomialParams {
        s0,
        up: up_factor,
        down: down_factor,
        rate: period_rate,
        p_up,
        periods,
    }
    .build_tree()
}

/// One-period risk-neutral branch probabilities per node (empty for
/// terminals). Errors if any node admits arbitrage or fails uniqueness.
pub fn risk_neutral_branch_probabilities(
    tree: &ScenarioTree,
) -> Result<Vec<Vec<f64>>, MarketError> {
    let assets = tree.asset_count();
    let mut out = vec![Vec::new(); tree.node_count()];
    for id in 0..tree.node_count() {
        let node = tree.node(id);
        if node.is_terminal() {
            continue;
        }
        let m = node.children.len();
        // Binomial node with a single risky asset: the closed form
        // (X₀ − X_down) / (X_up − X_down) avoids elimination round-off.
        if m == 2 && assets == 2 {
            let xu = tree.node(node.children[0]).prices[1];
            let xd = tree.node(node.children[1]).prices[1];
            let x0 = node.prices[1];
            let denom = xu - xd;
            if denom.abs() > 1e-12 * (1.0 + xu.abs().max(xd.abs())) {
                let q = (x0 - xd) / denom;
                if q <= PROB_ABS_TOL || 1.0 - q <= PROB_ABS_TOL {
                    return Err(MarketError::Arbitrage(format!(
                        "one-period martingale measure at node {id} is not strictly positive"
                    )));
                }
                out[id] = vec![q, 1.0 - q];
                continue;
            }
        }
        // Rows: one per asset (row 0, the numéraire, enforces Σq = 1);
        // columns: one unknown per child.
        let mut a = vec![0.0; assets * m];
        let mut b = vec![0.0; assets];
        for asset in 0..assets {
            for (j, &child) in node.children.iter().enumerate() {
                a[asset * m + j] = tree.node(child).prices[asset];
            }
            b[asset] = node.prices[asset];
        }
        out[id] = match solve_linear(&a, &b, assets, m) {
            LinearSolve::Inconsistent => {
                return Err(MarketError::Arbitrage(format!(
                    "no one-period martingale measure at node {id}"
                )));
            }
            LinearSolve::Unique(q) => {
                if q.iter().any(|&qi| qi <= PROB_ABS_TOL) {
                    return Err(MarketError::Arbitrage(format!(
                        "one-period martingale measure at node {id} is not strictly positive"
                    )));
                }
                q
            }
            LinearSolve::Underdetermined {
                particular,
                null_basis,
            } => {
                if null_basis.len() == 1
                    && !positive_segment_exists(&particular, &null_basis[0])
                {
                    return Err(MarketError::Arbitrage(format!(
                        "no strictly positive one-period martingale measure at node {id}"
                    )));
                }
                // A whole family of positive solutions: the one-period
                // model cannot be complete.
                return Err(MarketError::Incomplete { node: id });
            }
        };
    }
    Ok(out)
}

/// Whether {t : particular + t·direction > 0 componentwise} is a
/// non-degenerate interval.
fn positive_segment_exists(particular: &[f64], direction: &[f64]) -> bool {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (&p, &d) in particular.iter().zip(direction) {
        if d.abs() <= 1e-15 {
            if p <= PROB_ABS_TOL {
                return false;
            }
        } else {
            let boundary = (PROB_ABS_TOL - p) / d;
            if d > 0.0 {
                lo = lo.max(boundary);
            } else {
                hi = hi.min(boundary);
            }
        }
    }
    lo < hi
}

/// Derives the measure pair of an arbitrage-free complete tree:
/// real-world path probabilities alongside the risk-neutral ones built
/// from the unique one-period martingale measures.
pub fn risk_neutral_measure(tree: &ScenarioTree) -> Result<MeasurePair, MarketError> {
    let branch = risk_neutral_branch_probabilities(tree)?;
    let p = tree.real_world_path_probabilities();
    let p_star = path_products(tree, |id, idx| branch[id][idx]);
    MeasurePair::new(p, p_star)
}

/// Arbitrage-free price 𝔼*(H) of a claim, in numéraire units.
pub fn price(claim: &Claim, measures: &MeasurePair) -> Result<f64, MarketError> {
    if claim.len() != measures.len() {
        return Err(MarketError::DimensionMismatch {
            expected: measures.len(),
            found: claim.len(),
        });
    }
    Ok(expectation(measures.p_star(), claim.payoffs()))
}

/// Plain dot product; kept in one place so price-like quantities are
/// always accumulated in the same order.
pub(crate) fn expectation(probs: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, v) in probs.iter().zip(values) {
        acc += p * v;
    }
    acc
}

/// Replicates an arbitrary (possibly negative) terminal payoff by
/// backward induction, returning the strategy and its value process.
///
/// At each node the holdings solve the (children × assets) system that
/// matches the successor values; with more assets than children the
/// minimum-norm solution is taken, provided it reproduces the values.
pub fn replicate(
    payoff: &[f64],
    tree: &ScenarioTree,
    measures: &MeasurePair,
) -> Result<(Strategy, ValueProcess), MarketError> {
    if payoff.len() != tree.terminal_count() {
        return Err(MarketError::DimensionMismatch {
            expected: tree.terminal_count(),
            found: payoff.len(),
        });
    }
    if measures.len() != tree.terminal_count() {
        return Err(MarketError::DimensionMismatch {
            expected: tree.terminal_count(),
            found: measures.len(),
        });
    }
    if payoff.iter().any(|v| !v.is_finite()) {
        return Err(MarketError::InvalidClaim(String::from(
            "payoff must be finite",
        )));
    }

    let assets = tree.asset_count();
    let mut values = vec![0.0; tree.node_count()];
    let mut holdings = vec![Vec::new(); tree.node_count()];
    for (ordinal, &id) in tree.terminal_nodes().iter().enumerate() {
        values[id] = payoff[ordinal];
    }

    // Nodes in reverse depth-first discovery order; children always
    // precede their parent when walking backwards.
    let order = depth_first_order(tree);
    for &id in order.iter().rev() {
        let node = tree.node(id);
        if node.is_terminal() {
            continue;
        }
        let m = node.children.len();
        let mut a = vec![0.0; m * assets];
        let mut b = vec![0.0; m];
        for (j, &child) in node.children.iter().enumerate() {
            for asset in 0..assets {
                a[j * assets + asset] = tree.node(child).prices[asset];
            }
            b[j] = values[child];
        }
        let xi = solve_holdings(&a, &b, m, assets, id)?;
        values[id] = expectation(&xi, &node.prices);
        holdings[id] = xi;
    }

    let terminal_values = tree
        .terminal_nodes()
        .iter()
        .map(|&id| values[id])
        .collect();
    Ok((
        Strategy { holdings },
        ValueProcess {
            node_values: values,
            terminal_values,
        },
    ))
}

fn depth_first_order(tree: &ScenarioTree) -> Vec<usize> {
    let mut order = Vec::with_capacity(tree.node_count());
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        order.push(id);
        for &child in tree.node(id).children.iter().rev() {
            stack.push(child);
        }
    }
    order
}

fn solve_holdings(
    a: &[f64],
    b: &[f64],
    m: usize,
    assets: usize,
    node: usize,
) -> Result<Vec<f64>, MarketError> {
    if assets < m {
        return Err(MarketError::Incomplete { node });
    }
    if assets == m {
        return match solve_linear(a, b, m, assets) {
            LinearSolve::Unique(xi) => Ok(xi),
            LinearSolve::Underdetermined { particular, .. } => {
                verify_holdings(a, b, m, assets, &particular)
                    .then_some(particular)
                    .ok_or(MarketError::RedundantAssets { node })
            }
            LinearSolve::Inconsistent => Err(MarketError::Incomplete { node }),
        };
    }
    // More assets than successor states: minimum-norm holdings through
    // the Gram system (A Aᵀ) y = b, ξ = Aᵀ y.
    let mut gram = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            let mut acc = 0.0;
            for k in 0..assets {
                acc += a[r * assets + k] * a[c * assets + k];
            }
            gram[r * m + c] = acc;
        }
    }
    match solve_linear(&gram, b, m, m) {
        LinearSolve::Unique(y) => {
            let mut xi = vec![0.0; assets];
            for (k, xik) in xi.iter_mut().enumerate() {
                let mut acc = 0.0;
                for r in 0..m {
                    acc += a[r * assets + k] * y[r];
                }
                *xik = acc;
            }
            verify_holdings(a, b, m, assets, &xi)
                .then_some(xi)
                .ok_or(MarketError::RedundantAssets { node })
        }
        _ => Err(MarketError::Incomplete { node }),
    }
}

fn verify_holdings(a: &[f64], b: &[f64], m: usize, assets: usize, xi: &[f64]) -> bool {
    let scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for r in 0..m {
        let mut acc = 0.0;
        for k in 0..assets {
            acc += a[r * assets + k] * xi[k];
        }
        if (acc - b[r]).abs() > money_tol(scale) {
            return false;
        }
    }
    true
}

/// Whether the value process stays non-negative (within the monetary
/// tolerance at its own scale) at every node.
pub fn is_admissible(vp: &ValueProcess) -> bool {
    let scale = vp
        .node_values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = money_tol(scale);
    vp.node_values.iter().all(|&v| v >= -tol)
}

/// ℙ(V_T ≥ H): total real-world probability of the terminal states where
/// the strategy covers the claim (with a tolerant comparison, so exact
/// replication on the success set survives rounding).
pub fn success_probability(
    vp: &ValueProcess,
    claim: &Claim,
    measures: &MeasurePair,
) -> Result<f64, MarketError> {
    success_probability_terminal(vp.terminal_values(), claim, measures)
}

/// Success probability from a raw terminal-value slice.
pub fn success_probability_terminal(
    terminal: &[f64],
    claim: &Claim,
    measures: &MeasurePair,
) -> Result<f64, MarketError> {
    check_state_dims(terminal.len(), claim, measures)?;
    let mut total = 0.0;
    for ((&v, &h), &p) in terminal
        .iter()
        .zip(claim.payoffs())
        .zip(measures.p())
    {
        if v >= h - money_tol(h) {
            total += p;
        }
    }
    Ok(total)
}

/// 𝔼[(H − V_T)⁺]: the expected uncovered loss.
pub fn expected_shortfall(
    vp: &ValueProcess,
    claim: &Claim,
    measures: &MeasurePair,
) -> Result<f64, MarketError> {
    expected_shortfall_terminal(vp.terminal_values(), claim, measures)
}

/// Expected shortfall from a raw terminal-value slice.
pub fn expected_shortfall_terminal(
    terminal: &[f64],
    claim: &Claim,
    measures: &MeasurePair,
) -> Result<f64, MarketError> {
    check_state_dims(terminal.len(), claim, measures)?;
    let mut total = 0.0;
    for ((&v, &h), &p) in terminal
        .iter()
        .zip(claim.payoffs())
        .zip(measures.p())
    {
        total += p * (h - v).max(0.0);
    }
    Ok(total)
}

fn check_state_dims(
    found: usize,
    claim: &Claim,
    measures: &MeasurePair,
) -> Result<(), MarketError> {
    if claim.len() != measures.len() || found != measures.len() {
        return Err(MarketError::DimensionMismatch {
            expected: measures.len(),
            found,
        });
    }
    Ok(())
}

/// Largest violation of the self-financing identity
/// ξ_parent · X_v = ξ_v · X_v over interior rebalancing nodes.
pub fn self_financing_defect(tree: &ScenarioTree, strategy: &Strategy) -> f64 {
    let mut worst = 0.0f64;
    for id in 0..tree.node_count() {
        let node = tree.node(id);
        if node.is_terminal() {
            continue;
        }
        let Some(parent) = tree.parent(id) else {
            continue;
        };
        let incoming = expectation(&strategy.holdings[parent], &node.prices);
        let outgoing = expectation(&strategy.holdings[id], &node.prices);
        worst = worst.max((incoming - outgoing).abs());
    }
    worst
}

/// Largest violation of the one-step martingale identity
/// Σ q*_child V_child = V_node under the risk-neutral branch measure.
pub fn martingale_defect(tree: &ScenarioTree, vp: &ValueProcess) -> Result<f64, MarketError> {
    let branch = risk_neutral_branch_probabilities(tree)?;
    let mut worst = 0.0f64;
    for id in 0..tree.node_count() {
        let node = tree.node(id);
        if node.is_terminal() {
            continue;
        }
        let mut acc = 0.0;
        for (idx, &child) in node.children.iter().enumerate() {
            acc += branch[id][idx] * vp.node_values[child];
        }
        worst = worst.max((acc - vp.node_values[id]).abs());
    }
    Ok(worst)
}

/// Largest gap between the realized terminal values and a target payoff.
pub fn replication_defect(vp: &ValueProcess, payoff: &[f64]) -> f64 {
    vp.terminal_values
        .iter()
        .zip(payoff)
        .fold(0.0f64, |acc, (v, t)| acc.max((v - t).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_period() -> (ScenarioTree, MeasurePair) {
        let tree = build_binomial(100.0, 1.2, 0.8, 0.0, 0.6, 1).unwrap();
        let measures = risk_neutral_measure(&tree).unwrap();
        (tree, measures)
    }

    #[test]
    fn binomial_one_period_prices() {
        let (tree, _) = one_period();
        assert_eq!(tree.terminal_count(), 2);
        let prices = tree.terminal_prices(1);
        assert_eq!(prices, vec![120.0, 80.0]);
    }

    #[test]
    fn binomial_two_period_path_probabilities() {
        let tree = build_binomial(100.0, 1.2, 0.8, 0.0, 0.6, 2).unwrap();
        let p = tree.real_world_path_probabilities();
        let expect = [0.36, 0.24, 0.24, 0.16];
        for (got, want) in p.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn binomial_arbitrage_boundaries() {
        // 1.05 < 1.07 < 1.1 holds, so this builds.
        assert!(build_binomial(100.0, 1.1, 1.05, 0.07, 0.5, 1).is_ok());
        // 1 + r = 1.07 > up = 1.05 is an arbitrage.
        assert!(matches!(
            build_binomial(100.0, 1.05, 0.9, 0.07, 0.5, 1),
            Err(MarketError::Arbitrage(_))
        ));
    }

    #[test]
    fn risk_neutral_one_period() {
        let (_, measures) = one_period();
        assert!((measures.p_star()[0] - 0.5).abs() < 1e-12);
        assert!((measures.p_star()[1] - 0.5).abs() < 1e-12);
        assert_eq!(measures.p(), &[0.6, 0.4]);
    }

    #[test]
    fn risk_neutral_two_period_uniform() {
        let tree = build_binomial(100.0, 1.2, 0.8, 0.0, 0.6, 2).unwrap();
        let measures = risk_neutral_measure(&tree).unwrap();
        for &q in measures.p_star() {
            assert!((q - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn risk_neutral_matches_closed_form_with_rate() {
        let params = BinomialParams {
            s0: 50.0,
            up: 1.25,
            down: 0.9,
            rate: 0.05,
            p_up: 0.7,
            periods: 3,
        };
        let tree = params.build_tree().unwrap();
        let measures = risk_neutral_measure(&tree).unwrap();
        let q = params.risk_neutral_up();
        for (ordinal, &p_star) in measures.p_star().iter().enumerate() {
            let downs = (ordinal as u32).count_ones();
            let ups = 3 - downs;
            let want = pow_int(q, ups) * pow_int(1.0 - q, downs);
            assert!((p_star - want).abs() < 1e-12);
        }
    }

    #[test]
    fn numeraire_only_market_is_incomplete() {
        let nodes = vec![
            Node {
                time: 0,
                prices: vec![1.0],
                children: vec![1, 2],
                branch_probs: vec![0.5, 0.5],
            },
            Node {
                time: 1,
                prices: vec![1.0],
                children: vec![],
                branch_probs: vec![],
            },
            Node {
                time: 1,
                prices: vec![1.0],
                children: vec![],
                branch_probs: vec![],
            },
        ];
        let tree = ScenarioTree::new(nodes).unwrap();
        assert!(matches!(
            risk_neutral_measure(&tree),
            Err(MarketError::Incomplete { node: 0 })
        ));
    }

    #[test]
    fn price_call_and_degenerate_claims() {
        let (_, measures) = one_period();
        let call = Claim::new(vec![20.0, 0.0]).unwrap();
        assert!((price(&call, &measures).unwrap() - 10.0).abs() < 1e-12);
        let zero = Claim::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(price(&zero, &measures).unwrap(), 0.0);
        let unit = Claim::new(vec![1.0, 1.0]).unwrap();
        assert!((price(&unit, &measures).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn replicate_call_holdings() {
        let (tree, measures) = one_period();
        let (strategy, vp) = replicate(&[10.0, 0.0], &tree, &measures).unwrap();
        let h = strategy.holdings(0).unwrap();
        assert!((h[1] - 0.25).abs() < 1e-12);
        assert!((h[0] + 20.0).abs() < 1e-12);
        assert!((vp.initial_value() - 5.0).abs() < 1e-12);
        assert!(is_admissible(&vp));
    }

    #[test]
    fn replicate_negative_payoff() {
        let (tree, measures) = one_period();
        let (strategy, vp) = replicate(&[20.0, -10.0], &tree, &measures).unwrap();
        let h = strategy.holdings(0).unwrap();
        assert!((h[1] - 0.75).abs() < 1e-12);
        assert!((h[0] + 70.0).abs() < 1e-12);
        assert!((vp.initial_value() - 5.0).abs() < 1e-12);
        assert!(!is_admissible(&vp));
    }

    #[test]
    fn replicate_constant_payoff_is_numeraire_only() {
        let tree = build_binomial(100.0, 1.2, 0.8, 0.0, 0.6, 3).unwrap();
        let measures = risk_neutral_measure(&tree).unwrap();
        let payoff = vec![7.5; tree.terminal_count()];
        let (strategy, vp) = replicate(&payoff, &tree, &measures).unwrap();
        for id in 0..tree.node_count() {
            assert!((vp.node_values()[id] - 7.5).abs() < 1e-12);
            if let Some(h) = strategy.holdings(id) {
                assert!((h[0] - 7.5).abs() < 1e-9);
                assert!(h[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn replicate_checks_dimensions() {
        let (tree, measures) = one_period();
        assert!(matches!(
            replicate(&[1.0], &tree, &measures),
            Err(MarketError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn success_probability_and_shortfall_examples() {
        let (_, measures) = one_period();
        let claim = Claim::new(vec![20.0, 0.0]).unwrap();
        let vp = ValueProcess::from_terminal(vec![10.0, 0.0]);
        assert!((success_probability(&vp, &claim, &measures).unwrap() - 0.4).abs() < 1e-12);
        assert!((expected_shortfall(&vp, &claim, &measures).unwrap() - 6.0).abs() < 1e-12);

        let vp = ValueProcess::from_terminal(vec![20.0, -10.0]);
        assert!((success_probability(&vp, &claim, &measures).unwrap() - 0.6).abs() < 1e-12);
        assert!((expected_shortfall(&vp, &claim, &measures).unwrap() - 4.0).abs() < 1e-12);

        let vp = ValueProcess::from_terminal(vec![20.0, 0.0]);
        assert!((success_probability(&vp, &claim, &measures).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(expected_shortfall(&vp, &claim, &measures).unwrap(), 0.0);
    }

    #[test]
    fn admissibility_boundary() {
        let vp = ValueProcess::from_terminal(vec![0.0, 0.0]);
        assert!(is_admissible(&vp));
        let vp = ValueProcess::from_terminal(vec![1.0, -0.5]);
        assert!(!is_admissible(&vp));
    }

    #[test]
    fn self_financing_and_martingale_hold_after_replication() {
        let tree = build_binomial(80.0, 1.15, 0.85, 0.02, 0.55, 4).unwrap();
        let measures = risk_neutral_measure(&tree).unwrap();
        let payoff: Vec<f64> = tree
            .terminal_prices(1)
            .iter()
            .map(|s| (s - 75.0).max(0.0))
            .collect();
        let (strategy, vp) = replicate(&payoff, &tree, &measures).unwrap();
        assert!(self_financing_defect(&tree, &strategy) < 1e-9);
        assert!(martingale_defect(&tree, &vp).unwrap() < 1e-9);
        assert!(replication_defect(&vp, &payoff) < 1e-9);
        let expect_price = expectation(measures.p_star(), &payoff);
        assert!((vp.initial_value() - expect_price).abs() < money_tol(expect_price));
    }

    #[test]
    fn tree_validation_rejects_bad_probabilities() {
        let nodes = vec![
            Node {
                time: 0,
                prices: vec![1.0, 100.0],
                children: vec![1, 2],
                branch_probs: vec![0.7, 0.4],
            },
            Node {
                time: 1,
                prices: vec![1.0, 120.0],
                children: vec![],
                branch_probs: vec![],
            },
            Node {
                time: 1,
                prices: vec![1.0, 80.0],
                children: vec![],
                branch_probs: vec![],
            },
        ];
        assert!(matches!(
            ScenarioTree::new(nodes),
            Err(MarketError::InvalidTree(_))
        ));
    }
}
