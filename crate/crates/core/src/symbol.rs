//! Fourier symbol of the linearized Floer operator `D = ∂_s + ∂̸ − P`.
//!
//! At s-frequency `ξ` and torus mode `(m₁, m₂)` the symbol is
//! `D̂ = iξ Id + i M(m) − P` with the per-pair 4×4 matrix `M(m)` and
//! `P = diag(0, 0, 1, 1)`. For `n > 1` the same block acts on every pair.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold of the eigenvalue lower bound
/// `|λ±|² ≥ ξ² + ½(m₁² + m₂²)` for `m₁² + m₂² > N`, as found by
/// [`minimal_n_search`]. The bound is an equality for `λ₋` at `m₁² + m₂² = 2`.
pub const N_MIN: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolQuery {
    pub xi: f64,
    pub m1: i64,
    pub m2: i64,
}

impl SymbolQuery {
    pub fn new(xi: f64, m1: i64, m2: i64) -> Self {
        Self { xi, m1, m2 }
    }

    pub fn m_squared(&self) -> f64 {
        (self.m1 * self.m1 + self.m2 * self.m2) as f64
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The per-pair symbol matrix in `(q₁, q₂, p₁, p₂)` order.
pub fn symbol_matrix(q: SymbolQuery) -> Matrix4<Complex64> {
    let (m1, m2) = (q.m1 as f64, q.m2 as f64);
    let i = c(0.0, 1.0);
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0, 0.0, -m1, m2,
        0.0, 0.0, -m2, -m1,
        m1, m2, 0.0, 0.0,
        -m2, m1, 0.0, 0.0,
    );
    let mut out = m.map(|x| i * x);
    for d in 0..4 {
        out[(d, d)] += i * q.xi;
    }
    out[(2, 2)] -= 1.0;
    out[(3, 3)] -= 1.0;
    out
}

/// Block replication of [`symbol_matrix`] on `ℝ^{4n}` with the block layout
/// `(q₁, q₂, p₁, p₂)`, pair `j` at indices `(j, n+j, 2n+j, 3n+j)`.
pub fn symbol_matrix_pairs(q: SymbolQuery, n: usize) -> DMatrix<Complex64> {
    let block = symbol_matrix(q);
    let mut out = DMatrix::zeros(4 * n, 4 * n);
    for j in 0..n {
        let idx = [j, n + j, 2 * n + j, 3 * n + j];
        for (a, &r) in idx.iter().enumerate() {
            for (b, &col) in idx.iter().enumerate() {
                out[(r, col)] = block[(a, b)];
            }
        }
    }
    out
}

/// `(m₁² + m₂² + ξ² + iξ)²`.
pub fn det_formula(q: SymbolQuery) -> Complex64 {
    let base = c(q.m_squared() + q.xi * q.xi, q.xi);
    base * base
}

/// `λ± = ½ i (i + 2ξ ± i√(1 + 4m₁² + 4m₂²))`, returned as `(λ₊, λ₋)`.
pub fn eigen_formula(q: SymbolQuery) -> (Complex64, Complex64) {
    let sigma = (1.0 + 4.0 * q.m_squared()).sqrt();
    let i = c(0.0, 1.0);
    let half_i = 0.5 * i;
    let plus = half_i * (i + 2.0 * q.xi + i * sigma);
    let minus = half_i * (i + 2.0 * q.xi - i * sigma);
    (plus, minus)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetReport {
    pub numeric: Complex64,
    pub formula: Complex64,
    /// `|numeric − formula| / max(|formula|, 1)`.
    pub residual: f64,
}

pub fn symbol_det(q: SymbolQuery) -> DetReport {
    let numeric = symbol_matrix(q).determinant();
    let formula = det_formula(q);
    DetReport {
        numeric,
        formula,
        residual: (numeric - formula).norm() / formula.norm().max(1.0),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EigReport {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub numeric: [Complex64; 4],
    /// Multiset distance between the numeric spectrum and
    /// `{λ₊, λ₊, λ₋, λ₋}`, relative to `max(|λ|, 1)`.
    pub residual: f64,
}

/// Greedy multiset matching distance, relative to `max(scale, 1)`.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().chain(b).map(|z| z.norm()).fold(1.0_f64, f64::max);
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    for x in a {
        let (best, dist) = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, y)| (i, (x - y).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, v| {
                if v.1 < acc.1 {
                    v
                } else {
                    acc
                }
            });
        if best == usize::MAX {
            return f64::INFINITY;
        }
        used[best] = true;
        worst = worst.max(dist);
    }
    worst / scale
}

/// Numeric spectrum of the 4×4 symbol via complex Schur decomposition.
pub fn numeric_eigenvalues(q: SymbolQuery) -> Result<[Complex64; 4]> {
    let ev = symbol_matrix(q)
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::Singular("Schur decomposition did not converge".into()))?;
    Ok([ev[0], ev[1], ev[2], ev[3]])
}

pub fn symbol_eigs(q: SymbolQuery) -> Result<EigReport> {
    let (lp, lm) = eigen_formula(q);
    let numeric = numeric_eigenvalues(q)?;
    let residual = multiset_distance(&numeric, &[lp, lp, lm, lm]);
    Ok(EigReport {
        lambda_plus: lp,
        lambda_minus: lm,
        numeric,
        residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolReport {
    pub query: SymbolQuery,
    /// Row-major `[re, im]` entries.
    pub matrix: Vec<Vec<[f64; 2]>>,
    pub det: DetReport,
    pub eigs: EigReport,
    /// `|det − Πλ| / max(|det|, 1)`.
    pub det_eig_residual: f64,
    pub invertible: bool,
}

pub fn symbol_report(q: SymbolQuery) -> Result<SymbolReport> {
    let m = symbol_matrix(q);
    let det = symbol_det(q);
    let eigs = symbol_eigs(q)?;
    let prod = eigs.numeric.iter().fold(c(1.0, 0.0), |acc, z| acc * z);
    Ok(SymbolReport {
        query: q,
        matrix: (0..4)
            .map(|r| (0..4).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
            .collect(),
        det_eig_residual: (det.numeric - prod).norm() / det.numeric.norm().max(1.0),
        invertible: det.formula.norm() > 0.0,
        det,
        eigs,
    })
}

/// `min± |λ±(ξ, m)|² − ξ² − ½|m|²`, the margin of the eigenvalue lower bound.
pub fn lower_bound_margin(xi: f64, m_sq: f64) -> f64 {
    let sigma = (1.0 + 4.0 * m_sq).sqrt();
    let i = c(0.0, 1.0);
    let half_i = 0.5 * i;
    let plus = half_i * (i + 2.0 * xi + i * sigma);
    let minus = half_i * (i + 2.0 * xi - i * sigma);
    plus.norm_sqr().min(minus.norm_sqr()) - xi * xi - 0.5 * m_sq
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginStatus {
    Holds,
    Fails,
    Inconclusive,
}

/// Certified worst case of the margin over `ξ ∈ [−X, X]` for one `|m|²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginCertificate {
    pub m_squared: u64,
    pub witness: (i64, i64),
    pub worst_xi: f64,
    pub margin: f64,
    /// Certified interval for the minimum margin.
    pub lower: f64,
    pub upper: f64,
    pub grid_points: usize,
    pub status: MarginStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimalNCertificate {
    pub n_min: u64,
    pub m_bound: i64,
    pub xi_bound: f64,
    /// Absolute roundoff allowance used to accept equality cases.
    pub roundoff: f64,
    /// Smallest certified margin lower bound among `|m|² > n_min`.
    pub margin: f64,
    pub certified: bool,
    pub samples: Vec<MarginCertificate>,
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Certifies the minimum of the margin over `ξ ∈ [−xi_bound, xi_bound]`.
///
/// A uniform grid is refined until the Lipschitz-based enclosure width drops
/// below `roundoff` or the sign is decided; the grid minimum is polished by
/// golden-section search.
pub fn certify_margin(
    m_sq: u64,
    witness: (i64, i64),
    xi_bound: f64,
    roundoff: f64,
) -> MarginCertificate {
    let f = |xi: f64| lower_bound_margin(xi, m_sq as f64);
    let mut points = 65;
    loop {
        let h = 2.0 * xi_bound / (points - 1) as f64;
        let vals: Vec<f64> = (0..points).map(|k| f(-xi_bound + k as f64 * h)).collect();
        let lip = vals
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / h)
            .fold(0.0_f64, f64::max);
        let (imin, vmin) = vals
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, v| if v.1 < acc.1 { v } else { acc },
            );
        let x0 = -xi_bound + imin as f64 * h;
        let lo = (x0 - h).max(-xi_bound);
        let hi = (x0 + h).min(xi_bound);
        let (xg, vg) = golden_min(&f, lo, hi, 80);
        let (worst_xi, margin) = if vg < vmin { (xg, vg) } else { (x0, vmin) };
        // Between grid nodes the margin can dip at most lip·h/2 below them; the
        // factor 2 covers the finite-difference estimate of the slope.
        let width = lip * h + roundoff;
        let lower = margin.min(vmin - width);
        let upper = margin;
        let status = if lower >= -roundoff {
            MarginStatus::Holds
        } else if upper < -roundoff {
            MarginStatus::Fails
        } else if points < (1 << 16) {
            points = 2 * points - 1;
            continue;
        } else {
            MarginStatus::Inconclusive
        };
        return MarginCertificate {
            m_squared: m_sq,
            witness,
            worst_xi,
            margin,
            lower,
            upper,
            grid_points: points,
            status,
        };
    }
}

/// Smallest `N` such that the lower bound holds for every integer mode with
/// `N < m₁² + m₂² ≤ m_bound²` and every `|ξ| ≤ xi_bound`.
pub fn minimal_n_search(xi_bound: f64, m_bound: i64) -> Result<MinimalNCertificate> {
    if !(xi_bound > 0.0) || !xi_bound.is_finite() || m_bound < 1 {
        return Err(Error::InvalidArgument(
            "bounds must be positive and finite".into(),
        ));
    }
    let cap = (m_bound * m_bound) as u64;
    let mut witnesses = std::collections::BTreeMap::new();
    for m1 in 0..=m_bound {
        for m2 in 0..=m1 {
            let s = (m1 * m1 + m2 * m2) as u64;
            if s >= 1 && s <= cap {
                witnesses.entry(s).or_insert((m1, m2));
            }
        }
    }
    // Float error of |λ|² − ξ² grows like ξ²·ε.
    let roundoff = 64.0 * f64::EPSILON * (1.0 + xi_bound * xi_bound + cap as f64);
    let samples: Vec<MarginCertificate> = witnesses
        .iter()
        .map(|(&s, &w)| certify_margin(s, w, xi_bound, roundoff))
        .collect();
    let n_min = samples
        .iter()
        .filter(|c| c.status != MarginStatus::Holds)
        .map(|c| c.m_squared)
        .max()
        .unwrap_or(0);
    let certified = samples
        .iter()
        .all(|c| c.status != MarginStatus::Inconclusive);
    let margin = samples
        .iter()
        .filter(|c| c.m_squared > n_min)
        .map(|c| c.lower)
        .fold(f64::INFINITY, f64::min);
    Ok(MinimalNCertificate {
        n_min,
        m_bound,
        xi_bound,
        roundoff,
        margin,
        certified,
        samples,
    })
}
