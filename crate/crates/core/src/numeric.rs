//! Small numeric kernels shared by the market and knapsack layers:
//! compensated summation, integer powers, binomial coefficients, and a
//! dense Gaussian solver with rank/null-space reporting.

use alloc::vec;
use alloc::vec::Vec;

/// Kahan-compensated sum. Keeps probability sums accurate enough that an
/// absolute 1e-12 check stays meaningful even over millions of terms.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for x in xs {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// x^n by square-and-multiply. Deterministic and available without `std`.
pub fn pow_int(x: f64, n: u32) -> f64 {
    let mut base = x;
    let mut exp = n;
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

/// C(n, k) as a double, via the multiplicative formula.
/// Exact for small n, accurate to ~1e-15 relative error up to n ≈ 1000.
pub fn binomial_coefficient(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * f64::from(n - i) / f64::from(i + 1);
    }
    acc
}

/// Outcome of reducing a dense linear system `A x = b`.
pub enum LinearSolve {
    /// Exactly one solution.
    Unique(Vec<f64>),
    /// Affine solution set: `particular + span(null_basis)`.
    Underdetermined {
        particular: Vec<f64>,
        null_basis: Vec<Vec<f64>>,
    },
    /// No solution at all.
    Inconsistent,
}

/// Row-echelon reduction with partial pivoting on the augmented system.
///
/// `a` is row-major with `rows * cols` entries; `b` has `rows` entries.
/// Pivots smaller than `1e-12 * max|entry|` are treated as zero.
pub fn solve_linear(a: &[f64], b: &[f64], rows: usize, cols: usize) -> LinearSolve {
    let mut m = vec![0.0; rows * (cols + 1)];
    let mut scale: f64 = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            m[r * (cols + 1) + c] = a[r * cols + c];
            scale = scale.max(a[r * cols + c].abs());
        }
        m[r * (cols + 1) + cols] = b[r];
        scale = scale.max(b[r].abs());
    }
    let tol = 1e-12 * scale.max(1.0);
    let w = cols + 1;

    let mut pivot_col_of_row = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        let mut best = row;
        for r in row..rows {
            if m[r * w + col].abs() > m[best * w + col].abs() {
                best = r;
            }
        }
        if row >= rows || m[best * w + col].abs() <= tol {
            continue;
        }
        if best != row {
            for c in 0..w {
                m.swap(row * w + c, best * w + c);
            }
        }
        let piv = m[row * w + col];
        for r in 0..rows {
            if r != row {
                let f = m[r * w + col] / piv;
                if f != 0.0 {
                    for c in col..w {
                        m[r * w + c] -= f * m[row * w + c];
                    }
                }
            }
        }
        pivot_col_of_row.push((row, col));
        row += 1;
        if row == rows {
            break;
        }
    }

    for r in row..rows {
        if m[r * w + cols].abs() > tol {
            return LinearSolve::Inconsistent;
        }
    }

    let mut particular = vec![0.0; cols];
    let mut is_pivot_col = vec![false; cols];
    for &(r, c) in &pivot_col_of_row {
        particular[c] = m[r * w + cols] / m[r * w + c];
        is_pivot_col[c] = true;
    }

    let free_cols: Vec<usize> = (0..cols).filter(|&c| !is_pivot_col[c]).collect();
    if free_cols.is_empty() {
        return LinearSolve::Unique(particular);
    }

    let mut null_basis = Vec::with_capacity(free_cols.len());
    for &fc in &free_cols {
        let mut v = vec![0.0; cols];
        v[fc] = 1.0;
        for &(r, c) in &pivot_col_of_row {
            v[c] = -m[r * w + fc] / m[r * w + c];
        }
        null_basis.push(v);
    }
    LinearSolve::Underdetermined {
        particular,
        null_basis,
    }
}
