//! Small log-space helpers shared by the analytic modules.

/// `ln(n!)`, by direct summation (exact to a few ulps for the sizes used here).
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Table of `ln(k!)` for `k = 0..=n`.
pub fn ln_factorial_table(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    t.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        t.push(acc);
    }
    t
}

/// `ln(sum(exp(x)))`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Erlang-B blocking for offered load `rho` on `servers` servers, by the
/// standard recursion `B_k = rho B_{k-1} / (k + rho B_{k-1})`.
pub fn erlang_b(rho: f64, servers: u32) -> f64 {
    let mut b = 1.0;
    for k in 1..=servers {
        b = rho * b / (f64::from(k) + rho * b);
    }
    b
}
