//! Constant-coefficient linear algebra of complex-regularized polysymplectic
//! vector spaces.
//!
//! Bilinear forms are stored as matrices with `ω(X, Y) = Xᵀ Ω Y`. Coordinates
//! on `ℝ^{4n}` are ordered in four blocks `(q₁, q₂, p₁, p₂)` of `n` entries, so
//! pair `j` uses indices `(j, n+j, 2n+j, 3n+j)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for exact-algebra identities.
pub const ALGEBRA_TOL: f64 = 1e-10;

/// Row-major JSON conversion for real matrices.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != nc) {
        return Err(Error::DimensionMismatch {
            expected: nc,
            found: bad.len(),
        });
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

fn identity(d: usize) -> DMatrix<f64> {
    DMatrix::identity(d, d)
}

/// The block `i = [[0, −Id_n], [Id_n, 0]]` acting on one `ℝ^{2n}` slot.
fn block_i(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        m[(j, n + j)] = -1.0;
        m[(n + j, j)] = 1.0;
    }
    m
}

/// Input to the structure checks: two forms and a complex structure.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedPair {
    pub omega1: DMatrix<f64>,
    pub omega2: DMatrix<f64>,
    pub i: DMatrix<f64>,
}

impl RegularizedPair {
    pub fn dim(&self) -> usize {
        self.omega1.nrows()
    }
}

/// A regularized pair together with a compatible metric `g` and almost
/// complex structures `J`, `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTriple {
    pub omega1: DMatrix<f64>,
    pub omega2: DMatrix<f64>,
    pub i: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

/// JSON form of a [`StructureTriple`], matrices row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleJson {
    pub dim: usize,
    pub omega1: Vec<Vec<f64>>,
    pub omega2: Vec<Vec<f64>>,
    #[serde(rename = "I")]
    pub i: Vec<Vec<f64>>,
    #[serde(rename = "J")]
    pub j: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

impl StructureTriple {
    pub fn dim(&self) -> usize {
        self.omega1.nrows()
    }

    pub fn pairs(&self) -> usize {
        self.dim() / 4
    }

    pub fn pair(&self) -> RegularizedPair {
        RegularizedPair {
            omega1: self.omega1.clone(),
            omega2: self.omega2.clone(),
            i: self.i.clone(),
        }
    }

    pub fn to_json(&self) -> TripleJson {
        TripleJson {
            dim: self.dim(),
            omega1: to_rows(&self.omega1),
            omega2: to_rows(&self.omega2),
            i: to_rows(&self.i),
            j: to_rows(&self.j),
            k: to_rows(&self.k),
            g: to_rows(&self.g),
        }
    }

    /// Residuals of the six triple identities plus the symmetry and
    /// positivity of `g`.
    pub fn identity_residuals(&self) -> TripleResiduals {
        let d = self.dim();
        let id = identity(d);
        let scale = op_norm(&self.omega1).max(op_norm(&self.omega2)).max(1.0);
        let g_eigs =
            nalgebra::SymmetricEigen::new((&self.g + self.g.transpose()) * 0.5).eigenvalues;
        TripleResiduals {
            j_squared: op_norm(&(&self.j * &self.j + &id)),
            k_squared: op_norm(&(&self.k * &self.k + &id)),
            anticommute: op_norm(&(&self.j * &self.k + &self.k * &self.j)),
            ij_minus_k: op_norm(&(&self.i * &self.j - &self.k)),
            omega1_gj: op_norm(&(&self.omega1 - &self.g * &self.j)) / scale,
            omega2_gk: op_norm(&(&self.omega2 - &self.g * &self.k)) / scale,
            g_asymmetry: op_norm(&(&self.g - self.g.transpose())) / scale,
            g_min_eigenvalue: g_eigs.min(),
        }
    }
}

/// Operator-norm residuals of the triple identities.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TripleResiduals {
    pub j_squared: f64,
    pub k_squared: f64,
    pub anticommute: f64,
    pub ij_minus_k: f64,
    pub omega1_gj: f64,
    pub omega2_gk: f64,
    pub g_asymmetry: f64,
    pub g_min_eigenvalue: f64,
}

impl TripleResiduals {
    pub fn max_identity(&self) -> f64 {
        [
            self.j_squared,
            self.k_squared,
            self.anticommute,
            self.ij_minus_k,
            self.omega1_gj,
            self.omega2_gk,
            self.g_asymmetry,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn pass(&self, tol: f64) -> bool {
        self.max_identity() < tol && self.g_min_eigenvalue > 0.0
    }
}

/// Flat Darboux-frame structure on `ℝ^{4n}`.
pub fn standard_structures(n: usize) -> Result<StructureTriple> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = 4 * n;
    let bi = block_i(n);
    let mut i = DMatrix::zeros(d, d);
    i.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&bi);
    i.view_mut((2 * n, 2 * n), (2 * n, 2 * n))
        .copy_from(&(-&bi));
    let mut j = DMatrix::zeros(d, d);
    for r in 0..2 * n {
        j[(r, 2 * n + r)] = -1.0;
        j[(2 * n + r, r)] = 1.0;
    }
    let mut k = DMatrix::zeros(d, d);
    k.view_mut((0, 2 * n), (2 * n, 2 * n)).copy_from(&(-&bi));
    k.view_mut((2 * n, 0), (2 * n, 2 * n)).copy_from(&(-&bi));
    Ok(StructureTriple {
        omega1: j.clone(),
        omega2: k.clone(),
        i,
        j,
        k,
        g: identity(d),
    })
}

/// Outcome of one named identity check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
}

/// Result of [`check_regularized_pair`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairReport {
    pub dim: usize,
    pub tolerance: f64,
    pub checks: Vec<CheckItem>,
    pub max_violation: f64,
    pub pass: bool,
}

impl PairReport {
    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn check_square(m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if m.nrows() != d { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

/// Validates `ω₁, ω₂` antisymmetric and non-degenerate, `I² = −Id` and
/// `ω₂ = −ω₁ I`. Residuals are relative to the input scale.
pub fn check_regularized_pair(pair: &RegularizedPair, tol: f64) -> Result<PairReport> {
    let d = pair.omega1.nrows();
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::BadDimension(d, 2));
    }
    check_square(&pair.omega1, d)?;
    check_square(&pair.omega2, d)?;
    check_square(&pair.i, d)?;
    let n1 = op_norm(&pair.omega1).max(f64::MIN_POSITIVE);
    let n2 = op_norm(&pair.omega2).max(f64::MIN_POSITIVE);
    let ni = op_norm(&pair.i).max(1.0);
    let min_sv = |m: &DMatrix<f64>| {
        let sv = m.clone().singular_values();
        sv.min() / sv.max().max(f64::MIN_POSITIVE)
    };
    let mut checks = vec![
        (
            "omega1 antisymmetric",
            op_norm(&(&pair.omega1 + pair.omega1.transpose())) / n1,
        ),
        (
            "omega2 antisymmetric",
            op_norm(&(&pair.omega2 + pair.omega2.transpose())) / n2,
        ),
        (
            "I^2 = -Id",
            op_norm(&(&pair.i * &pair.i + identity(d))) / (ni * ni),
        ),
        (
            "omega2 = -omega1(., I.)",
            op_norm(&(&pair.omega2 + &pair.omega1 * &pair.i)) / (n2 + n1 * ni),
        ),
    ]
    .into_iter()
    .map(|(name, residual)| CheckItem {
        name: name.into(),
        residual,
        pass: residual < tol,
    })
    .collect::<Vec<_>>();
    for (name, m) in [
        ("omega1 non-degenerate", &pair.omega1),
        ("omega2 non-degenerate", &pair.omega2),
    ] {
        let s = min_sv(m);
        checks.push(CheckItem {
            name: name.into(),
            residual: s,
            pass: s > tol,
        });
    }
    let max_violation = checks
        .iter()
        .filter(|c| !c.name.ends_with("non-degenerate"))
        .map(|c| c.residual)
        .fold(0.0, f64::max);
    let pass = checks.iter().all(|c| c.pass);
    Ok(PairReport {
        dim: d,
        tolerance: tol,
        checks,
        max_violation,
        pass,
    })
}

/// Options for [`compatible_triple`].
#[derive(Debug, Clone, Copy)]
pub struct CompatibleOptions {
    /// Replace the auxiliary metric by `(G + IᵀGI)/2` before use.
    pub symmetrize: bool,
    pub tol: f64,
}

impl Default for CompatibleOptions {
    fn default() -> Self {
        Self {
            symmetrize: true,
            tol: ALGEBRA_TOL,
        }
    }
}

/// Builds `(g, J, K)` by polar decomposition of `A₁`, where
/// `ωᵢ(X, Y) = (X, AᵢY)` for the auxiliary inner product.
pub fn compatible_triple(
    pair: &RegularizedPair,
    aux_metric: Option<&DMatrix<f64>>,
    opts: CompatibleOptions,
) -> Result<StructureTriple> {
    let report = check_regularized_pair(pair, opts.tol)?;
    if !report.pass {
        return Err(Error::InvalidArgument(format!(
            "not a regularized pair: {}",
            report.failed().join(", ")
        )));
    }
    let d = pair.dim();
    let mut g0 = match aux_metric {
        Some(m) => {
            check_square(m, d)?;
            m.clone()
        }
        None => identity(d),
    };
    let scale = op_norm(&g0).max(f64::MIN_POSITIVE);
    let invariance = op_norm(&(pair.i.transpose() * &g0 * &pair.i - &g0)) / scale;
    if invariance > opts.tol {
        if !opts.symmetrize {
            return Err(Error::NotInvariant(invariance));
        }
        g0 = (&g0 + pair.i.transpose() * &g0 * &pair.i) * 0.5;
    }
    g0 = (&g0 + g0.transpose()) * 0.5;
    let chol = g0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("auxiliary metric is not positive-definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    // Forms in G-orthonormal coordinates: Ã = L⁻¹ Ω L⁻ᵀ.
    let a1 = &l_inv * &pair.omega1 * l_inv.transpose();
    let a2 = &l_inv * &pair.omega2 * l_inv.transpose();
    let m = &a1 * a1.transpose();
    let eig = nalgebra::SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(min_ev > opts.tol * max_ev) {
        return Err(Error::Singular(format!(
            "A1 A1^T has eigenvalue {min_ev:.3e} (max {max_ev:.3e})"
        )));
    }
    let v = &eig.eigenvectors;
    let sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_sqrt_d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()));
    let b = v * sqrt_d * v.transpose();
    let b_inv = v * inv_sqrt_d * v.transpose();
    let jt = &b_inv * &a1;
    let kt = &b_inv * &a2;
    let lt = l.transpose();
    let lt_inv = l_inv.transpose();
    let j = &lt_inv * jt * &lt;
    let k = &lt_inv * kt * &lt;
    let g = &l * b * &lt;
    let g = (&g + g.transpose()) * 0.5;
    Ok(StructureTriple {
        omega1: pair.omega1.clone(),
        omega2: pair.omega2.clone(),
        i: pair.i.clone(),
        j,
        k,
        g,
    })
}

/// `ωᶜ = ω₁ + iω₂`.
pub fn holomorphic_form(
    omega1: &DMatrix<f64>,
    omega2: &DMatrix<f64>,
) -> Result<DMatrix<Complex64>> {
    if omega1.shape() != omega2.shape() {
        return Err(Error::DimensionMismatch {
            expected: omega1.nrows(),
            found: omega2.nrows(),
        });
    }
    Ok(DMatrix::from_fn(omega1.nrows(), omega1.ncols(), |r, c| {
        Complex64::new(omega1[(r, c)], omega2[(r, c)])
    }))
}

/// Inverse of [`holomorphic_form`]: `(Re ωᶜ, Im ωᶜ)`.
pub fn split_holomorphic(omega_c: &DMatrix<Complex64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (omega_c.map(|z| z.re), omega_c.map(|z| z.im))
}

/// Behaviour of `ωᶜ` on the eigenspaces of `I`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolomorphicReport {
    /// `max |ωᶜ X| / |ωᶜ|` over the spanning set `X = v + iIv` of `T^{(0,1)}`.
    pub annihilation_residual: f64,
    /// Complex rank of `ωᶜ` restricted to `T^{(1,0)}`.
    pub rank_on_holomorphic: usize,
    /// Complex dimension of `T^{(1,0)}`.
    pub holomorphic_dim: usize,
}

/// Checks that `ωᶜ` annihilates `T^{(0,1)}` and is non-degenerate on `T^{(1,0)}`.
pub fn holomorphic_correspondence(pair: &RegularizedPair) -> Result<HolomorphicReport> {
    let d = pair.dim();
    check_square(&pair.i, d)?;
    let wc = holomorphic_form(&pair.omega1, &pair.omega2)?;
    let norm = wc
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let ic = pair.i.map(|x| Complex64::new(x, 0.0));
    let iu = Complex64::new(0.0, 1.0);
    let mut residual = 0.0_f64;
    let mut holo = DMatrix::<Complex64>::zeros(d, d);
    for col in 0..d {
        let mut e = DVector::<Complex64>::zeros(d);
        e[col] = Complex64::new(1.0, 0.0);
        let ie = &ic * &e;
        let x = &e + &ie * iu;
        let y = &e - &ie * iu;
        let wx = &wc * &x;
        let xn = x
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        residual = residual.max(wx.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / (norm * xn));
        holo.set_column(col, &y);
    }
    // Spanning set of T^{(1,0)} has rank d/2; the restricted form is Yᵀ ωᶜ Y.
    let restricted = holo.transpose() * &wc * &holo;
    let sv = restricted.clone().singular_values();
    let rank = sv.iter().filter(|s| **s > 1e-9 * sv.max()).count();
    Ok(HolomorphicReport {
        annihilation_residual: residual,
        rank_on_holomorphic: rank,
        holomorphic_dim: d / 2,
    })
}

fn complex_coordinate_map(n: usize) -> DMatrix<Complex64> {
    let mut c = DMatrix::<Complex64>::zeros(2 * n, 4 * n);
    for j in 0..n {
        c[(j, j)] = Complex64::new(1.0, 0.0);
        c[(j, n + j)] = Complex64::new(0.0, 1.0);
        c[(n + j, 2 * n + j)] = Complex64::new(1.0, 0.0);
        c[(n + j, 3 * n + j)] = Complex64::new(0.0, -1.0);
    }
    c
}

/// Random regularized pair on `ℝ^{4n}`.
///
/// A random holomorphic symplectic matrix `W` in the holomorphic coordinates
/// `(q₁ + iq₂, p₁ − ip₂)` is pulled back to `ωᶜ = CᵀWC`, split into real and
/// imaginary parts, and conjugated by a random real change of basis.
pub fn random_regularized_pair<R: Rng>(n: usize, rng: &mut R) -> Result<RegularizedPair> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let m = 2 * n;
    let c = complex_coordinate_map(n);
    let base_i = standard_structures(n)?.i;
    loop {
        let gm = DMatrix::<Complex64>::from_fn(m, m, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let w = &gm - gm.transpose();
        if w.determinant().norm() < 1e-3 {
            continue;
        }
        let wc = c.transpose() * w * &c;
        let (o1, o2) = split_holomorphic(&wc);
        let a = DMatrix::<f64>::from_fn(4 * n, 4 * n, |r, col| {
            let base = if r == col { 1.0 } else { 0.0 };
            base + 0.3 * rng.gen_range(-1.0..1.0)
        });
        let Some(a_inv) = a.clone().try_inverse() else {
            continue;
        };
        let sv = a.clone().singular_values();
        if sv.min() < 0.2 * sv.max() {
            continue;
        }
        return Ok(RegularizedPair {
            omega1: a.transpose() * o1 * &a,
            omega2: a.transpose() * o2 * &a,
            i: &a_inv * &base_i * &a,
        });
    }
}

/// Finite-difference data of a current at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurrentSample {
    pub point: Vec<f64>,
    pub value: [f64; 2],
    /// Rows `dF₁`, `dF₂`.
    pub jacobian: [Vec<f64>; 2],
    pub cr_residuals: [f64; 4],
    /// `X_F` from the `F₁` derivatives, `J ∇F₁`.
    pub x_f: Vec<f64>,
}

/// Result of [`current_check`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurrentReport {
    pub is_current: bool,
    pub tolerance: f64,
    pub step: f64,
    /// Maximum over samples of the four Cauchy–Riemann relation residuals.
    pub relation_max: [f64; 4],
    pub max_cr_residual: f64,
    /// Largest disagreement between the `F₁`, `F₂` and holomorphic forms of `X_F`.
    /// `None` when the relations fail.
    pub field_mismatch: Option<f64>,
    pub samples: Vec<CurrentSample>,
}

/// Tests whether `F: ℝ^{4n} → ℝ²` is a current by the Cauchy–Riemann relations
/// in the chart `(q₁ + iq₂, p₁ − ip₂)`, using central differences.
pub fn current_check<F>(
    f: F,
    n: usize,
    points: &[Vec<f64>],
    step: f64,
    tol: f64,
) -> Result<CurrentReport>
where
    F: Fn(&[f64]) -> [f64; 2],
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let d = 4 * n;
    let mut relation_max = [0.0_f64; 4];
    let mut samples = Vec::with_capacity(points.len());
    let mut mismatch = 0.0_f64;
    for point in points {
        if point.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: point.len(),
            });
        }
        let value = f(point);
        let mut jac = [vec![0.0; d], vec![0.0; d]];
        let mut x = point.clone();
        for c in 0..d {
            x[c] = point[c] + step;
            let fp = f(&x);
            x[c] = point[c] - step;
            let fm = f(&x);
            x[c] = point[c];
            for r in 0..2 {
                jac[r][c] = (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        let (f1, f2) = (&jac[0], &jac[1]);
        let mut cr = [0.0_f64; 4];
        let mut x_f = vec![0.0; d];
        for j in 0..n {
            let (q1, q2, p1, p2) = (j, n + j, 2 * n + j, 3 * n + j);
            let rel = [
                f1[q1] - f2[q2],
                f1[q2] + f2[q1],
                f1[p1] + f2[p2],
                f1[p2] - f2[p1],
            ];
            for (a, r) in cr.iter_mut().zip(rel) {
                *a = a.max(r.abs());
            }
            let from_f1 = [-f1[p1], -f1[p2], f1[q1], f1[q2]];
            let from_f2 = [f2[p2], -f2[p1], f2[q2], -f2[q1]];
            // Holomorphic field 𝒳_q = −∂F/∂z_p, 𝒳_p = ∂F/∂z_q mapped back to real slots.
            let from_holo = [-f1[p1], -f2[p1], f1[q1], -f2[q1]];
            for (slot, idx) in [q1, q2, p1, p2].into_iter().enumerate() {
                x_f[idx] = from_f1[slot];
                mismatch = mismatch
                    .max((from_f1[slot] - from_f2[slot]).abs())
                    .max((from_f1[slot] - from_holo[slot]).abs());
            }
        }
        for (a, r) in relation_max.iter_mut().zip(cr) {
            *a = a.max(r);
        }
        samples.push(CurrentSample {
            point: point.clone(),
            value,
            jacobian: jac,
            cr_residuals: cr,
            x_f,
        });
    }
    let max_cr = relation_max.iter().copied().fold(0.0, f64::max);
    let is_current = max_cr < tol;
    Ok(CurrentReport {
        is_current,
        tolerance: tol,
        step,
        relation_max,
        max_cr_residual: max_cr,
        field_mismatch: is_current.then_some(mismatch),
        samples,
    })
}
