//! Per-mode functional calculus of the linear operator `L = ∂̸ − P`.
//!
//! On one pair the symbol `L̂(m) = i M(m) − P` is Hermitian with
//! `L̂² + L̂ = |m|² Id`, so every function of `L̂` is `a Id + b L̂` with `a, b`
//! fixed by the two eigenvalues `λ₊ = −(1+σ)/2`, `λ₋ = (σ−1)/2`,
//! `σ = √(1 + 4|m|²)`.

use num_complex::Complex64;

/// `(λ₊, λ₋)` at real wave numbers.
pub fn eigenvalues(m1: f64, m2: f64) -> (f64, f64) {
    let sigma = (1.0 + 4.0 * (m1 * m1 + m2 * m2)).sqrt();
    (-(1.0 + sigma) / 2.0, (sigma - 1.0) / 2.0)
}

/// Applies `L̂(m)` to every pair of a mode vector in block layout.
pub fn apply(m1: f64, m2: f64, pairs: usize, x: &[Complex64], out: &mut [Complex64]) {
    let i = Complex64::new(0.0, 1.0);
    let n = pairs;
    for j in 0..n {
        let (a, b, c, d) = (j, n + j, 2 * n + j, 3 * n + j);
        let (q1, q2, p1, p2) = (x[a], x[b], x[c], x[d]);
        out[a] = i * (-m1 * p1 + m2 * p2);
        out[b] = i * (-m2 * p1 - m1 * p2);
        out[c] = i * (m1 * q1 + m2 * q2) - p1;
        out[d] = i * (-m2 * q1 + m1 * q2) - p2;
    }
}

/// Coefficients `(a, b)` with `f(L̂) = a Id + b L̂`.
pub fn calculus<F: Fn(f64) -> f64>(m1: f64, m2: f64, f: F) -> (f64, f64) {
    let (lp, lm) = eigenvalues(m1, m2);
    let b = (f(lp) - f(lm)) / (lp - lm);
    (f(lm) - b * lm, b)
}

/// `out = a x + b L̂ x`.
pub fn apply_function(
    m1: f64,
    m2: f64,
    pairs: usize,
    ab: (f64, f64),
    x: &[Complex64],
    out: &mut [Complex64],
) {
    apply(m1, m2, pairs, x, out);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = ab.0 * xi + ab.1 * *o;
    }
}
