//! Partial hedging of European claims in finite, complete discrete-time
//! markets, solved through real-valued knapsack problems.
//!
//! The crate is split into three layers:
//!
//! * [`market`] — scenario trees, risk-neutral measures, claim pricing,
//!   replication by backward induction, and strategy diagnostics
//!   (self-financing, admissibility, success probability, expected
//!   shortfall).
//! * [`knapsack`] — real-valued knapsack solvers: continuous relaxation
//!   with critical element, greedy with a certified error bound, exact
//!   0-1 branch-and-bound, a brute-force oracle, and the
//!   variable-upper-bound variant used when admissibility is dropped.
//! * [`hedging`] — the reductions tying the two together: success
//!   probability maximization and expected-shortfall minimization, each
//!   with and without the admissibility constraint, plus the
//!   Neyman-Pearson cross-check and level grouping for binomial models.
//!
//! The core is `no_std` (with `alloc`); all IO, configuration, and report
//! formats live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod hedging;
pub mod knapsack;
pub mod market;
mod numeric;

/// Relative tolerance for comparisons between monetary values
/// (prices, payoffs, portfolio values).
pub const MONEY_REL_TOL: f64 = 1e-9;

/// Absolute tolerance for probability sums and capacity bookkeeping.
pub const PROB_ABS_TOL: f64 = 1e-12;

/// Tolerance for a monetary comparison at the given scale.
#[inline]
pub fn money_tol(scale: f64) -> f64 {
    MONEY_REL_TOL * (1.0 + scale.abs())
}
