//! Fiberwise convex Lagrangians, the Legendre transform and the
//! Euler–Lagrange residual on the torus.
//!
//! Positions and velocities use the block layout `(x₁, x₂)` of `2n` entries.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Nonlinearity;
use crate::error::{Error, Result};
use crate::torus::{self, grid_point, Derivative, Layout, TorusField};

/// Iteration cap of the inner maximization.
pub const LEGENDRE_MAX_ITER: usize = 50;
/// Gradient tolerance of the inner maximization.
pub const LEGENDRE_TOL: f64 = 1e-10;

/// `L(t, q, v)`, convex in `v`.
pub trait FiberConvex: Send + Sync + fmt::Debug {
    fn pairs(&self) -> usize;
    fn value(&self, t: [f64; 2], q: &[f64], v: &[f64]) -> f64;
    fn grad_v(&self, t: [f64; 2], q: &[f64], v: &[f64], out: &mut [f64]);
    fn grad_q(&self, t: [f64; 2], q: &[f64], v: &[f64], out: &mut [f64]);
    fn hess_v(&self, t: [f64; 2], q: &[f64], v: &[f64]) -> DMatrix<f64>;
}

/// A validated Lagrangian.
#[derive(Debug, Clone)]
pub struct LagrangianSpec {
    l: Arc<dyn FiberConvex>,
}

impl LagrangianSpec {
    /// Spot-checks positive semidefiniteness of `∂²_v L` at random samples.
    pub fn new(l: Arc<dyn FiberConvex>) -> Result<Self> {
        let d = 2 * l.pairs();
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0e4);
        for _ in 0..16 {
            let t = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..6.3)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let h = l.hess_v(t, &q, &v);
            let min = nalgebra::SymmetricEigen::new((&h + h.transpose()) * 0.5)
                .eigenvalues
                .min();
            if min < -1e-12 {
                return Err(Error::NotConvex(min));
            }
        }
        Ok(Self { l })
    }

    pub fn inner(&self) -> &Arc<dyn FiberConvex> {
        &self.l
    }

    pub fn pairs(&self) -> usize {
        self.l.pairs()
    }
}

/// `L = ½|v|² − V(t, q)` with `V` read from a nonlinearity at `p = 0`.
#[derive(Debug, Clone)]
pub struct MechanicalLagrangian {
    potential: Arc<dyn Nonlinearity>,
}

impl MechanicalLagrangian {
    pub fn new(potential: Arc<dyn Nonlinearity>) -> Self {
        Self { potential }
    }

    fn lift(&self, q: &[f64]) -> Vec<f64> {
        let mut z = q.to_vec();
        z.resize(4 * self.potential.pairs(), 0.0);
        z
    }

    /// `V(t, q)`.
    pub fn potential(&self, t: [f64; 2], q: &[f64]) -> f64 {
        self.potential.value(t, &self.lift(q))
    }

    /// The closed form `H = ½|p|² + V(t, q)`.
    pub fn hamiltonian_closed_form(&self, t: [f64; 2], q: &[f64], p: &[f64]) -> f64 {
        0.5 * p.iter().map(|x| x * x).sum::<f64>() + self.potential(t, q)
    }
}

impl FiberConvex for MechanicalLagrangian {
    fn pairs(&self) -> usize {
        self.potential.pairs()
    }

    fn value(&self, t: [f64; 2], q: &[f64], v: &[f64]) -> f64 {
        0.5 * v.iter().map(|x| x * x).sum::<f64>() - self.potential(t, q)
    }

    fn grad_v(&self, _t: [f64; 2], _q: &[f64], v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }

    fn grad_q(&self, t: [f64; 2], q: &[f64], _v: &[f64], out: &mut [f64]) {
        let z = self.lift(q);
        let mut g = vec![0.0; z.len()];
        self.potential.gradient(t, &z, &mut g);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o = -gi;
        }
    }

    fn hess_v(&self, _t: [f64; 2], q: &[f64], _v: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(q.len(), q.len())
    }
}

/// Result of the inner maximization `max_v (⟨p, v⟩ − L)`.
#[derive(Debug, Clone)]
pub struct LegendrePoint {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// `H(t, q, p) = max_v (⟨p, v⟩ − L(t, q, v))` by damped Newton from `v = p`.
pub fn legendre(l: &LagrangianSpec, t: [f64; 2], q: &[f64], p: &[f64]) -> Result<LegendrePoint> {
    legendre_raw(l.inner().as_ref(), t, q, p)
}

fn legendre_raw(l: &dyn FiberConvex, t: [f64; 2], q: &[f64], p: &[f64]) -> Result<LegendrePoint> {
    let d = 2 * l.pairs();
    if q.len() != d || p.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if q.len() != d { q.len() } else { p.len() },
        });
    }
    let objective = |v: &[f64]| p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - l.value(t, q, v);
    let mut v = p.to_vec();
    let mut g = vec![0.0; d];
    let scale = p.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let mut fv = objective(&v);
    for iter in 0..=LEGENDRE_MAX_ITER {
        l.grad_v(t, q, &v, &mut g);
        let grad = DVector::from_iterator(d, p.iter().zip(&g).map(|(a, b)| a - b));
        let gnorm = grad.amax();
        if gnorm <= LEGENDRE_TOL * scale {
            return Ok(LegendrePoint {
                value: fv,
                argmax: v,
                iterations: iter,
                gradient_norm: gnorm,
            });
        }
        if iter == LEGENDRE_MAX_ITER {
            return Err(Error::LegendreNoConvergence {
                iterations: iter,
                gradient: gnorm,
            });
        }
        let hess = l.hess_v(t, q, &v);
        let step = hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .or_else(|| hess.clone().lu().solve(&grad))
            .unwrap_or_else(|| grad.clone());
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = v
                .iter()
                .zip(step.iter())
                .map(|(a, b)| a + alpha * b)
                .collect();
            let ft = objective(&trial);
            if ft >= fv - 1e-14 * fv.abs().max(1.0) || alpha < 1e-8 {
                v = trial;
                fv = ft;
                break;
            }
            alpha *= 0.5;
        }
    }
    unreachable!("loop returns on the final iteration")
}

/// The Legendre transform of a Lagrangian viewed as a fiberwise convex
/// function of `p`, so that the transform can be applied twice.
#[derive(Debug, Clone)]
pub struct LegendreDual {
    l: LagrangianSpec,
}

impl LegendreDual {
    pub fn new(l: LagrangianSpec) -> Self {
        Self { l }
    }

    fn point(&self, t: [f64; 2], q: &[f64], p: &[f64]) -> LegendrePoint {
        legendre(&self.l, t, q, p)
            .unwrap_or_else(|e| panic!("inner Legendre transform failed: {e}"))
    }
}

impl FiberConvex for LegendreDual {
    fn pairs(&self) -> usize {
        self.l.pairs()
    }

    fn value(&self, t: [f64; 2], q: &[f64], p: &[f64]) -> f64 {
        self.point(t, q, p).value
    }

    /// `∂H/∂p = v*(p)`.
    fn grad_v(&self, t: [f64; 2], q: &[f64], p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.point(t, q, p).argmax);
    }

    /// `∂H/∂q = −∂L/∂q` at the maximizer.
    fn grad_q(&self, t: [f64; 2], q: &[f64], p: &[f64], out: &mut [f64]) {
        let v = self.point(t, q, p).argmax;
        self.l.inner().grad_q(t, q, &v, out);
        out.iter_mut().for_each(|x| *x = -*x);
    }

    /// `∂²H/∂p² = (∂²L/∂v²)⁻¹` at the maximizer.
    fn hess_v(&self, t: [f64; 2], q: &[f64], p: &[f64]) -> DMatrix<f64> {
        let v = self.point(t, q, p).argmax;
        let h = self.l.inner().hess_v(t, q, &v);
        h.clone().try_inverse().unwrap_or(h)
    }
}

/// Euler–Lagrange residual on a position field `q` with `v = 2∂_t q`:
/// rows `∂L/∂q₁ − ∂₁P₁ + ∂₂P₂` and `∂L/∂q₂ − ∂₁P₂ − ∂₂P₁`, `P = ∂L/∂v`.
pub fn euler_lagrange_residual(l: &LagrangianSpec, q: &TorusField) -> Result<TorusField> {
    let n = l.pairs();
    let layout = Layout::Position { pairs: n };
    if q.layout() != layout {
        return Err(Error::Layout(format!(
            "expected {layout:?}, got {:?}",
            q.layout()
        )));
    }
    let grid = q.grid();
    let dt = torus::derivative(q, Derivative::Dt)?;
    let v_field = dt.scaled(2.0);
    let d = 2 * n;
    let mut pmom = TorusField::zeros(layout, grid)?;
    let mut lq = TorusField::zeros(layout, grid)?;
    let (mut qi, mut vi, mut out) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for j in 0..grid {
        for k in 0..grid {
            let t = [grid_point(grid, j), grid_point(grid, k)];
            q.gather(j, k, &mut qi);
            v_field.gather(j, k, &mut vi);
            l.inner().grad_v(t, &qi, &vi, &mut out);
            pmom.scatter(j, k, &out);
            l.inner().grad_q(t, &qi, &vi, &mut out);
            lq.scatter(j, k, &out);
        }
    }
    let d1 = torus::derivative(&pmom, Derivative::D1)?;
    let d2 = torus::derivative(&pmom, Derivative::D2)?;
    let np = grid * grid;
    let mut data = lq.data().to_vec();
    for jp in 0..n {
        let (a, b) = (jp, n + jp);
        for idx in 0..np {
            data[a * np + idx] += -d1.data()[a * np + idx] + d2.data()[b * np + idx];
            data[b * np + idx] += -d1.data()[b * np + idx] - d2.data()[a * np + idx];
        }
    }
    TorusField::from_data(layout, grid, data)
}

/// `∂̸Z − ∇H(Z)` for the Legendre transform `H` of `l`, evaluated pointwise
/// through the inner maximization: `∇_p H = v*`, `∇_q H = −∂_q L(q, v*)`.
pub fn legendre_residual(l: &LagrangianSpec, z: &TorusField) -> Result<TorusField> {
    let n = l.pairs();
    let layout = Layout::Phase { pairs: n };
    if z.layout() != layout {
        return Err(Error::Layout(format!(
            "expected {layout:?}, got {:?}",
            z.layout()
        )));
    }
    let triple = crate::structure::standard_structures(n)?;
    let mut out = torus::dirac(z, &triple)?;
    let grid = z.grid();
    let d = 2 * n;
    let mut zi = vec![0.0; 2 * d];
    let mut lq = vec![0.0; d];
    let mut row = vec![0.0; 2 * d];
    for j in 0..grid {
        for k in 0..grid {
            let t = [grid_point(grid, j), grid_point(grid, k)];
            z.gather(j, k, &mut zi);
            let (q, p) = zi.split_at(d);
            let point = legendre(l, t, q, p)?;
            l.inner().grad_q(t, q, &point.argmax, &mut lq);
            out.gather(j, k, &mut row);
            for c in 0..d {
                row[c] += lq[c];
                row[d + c] -= point.argmax[c];
            }
            out.scatter(j, k, &row);
        }
    }
    Ok(out)
}

/// Comparison of the Euler–Lagrange residual of `q` with the Hamiltonian
/// residual of `Z = (q, ∂L/∂v)`, `v = 2∂_t q`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EquivalenceReport {
    /// Max over the grid of the Euler–Lagrange residual.
    pub lagrange_max: f64,
    /// Max over the grid of the position rows of the Hamiltonian residual.
    pub hamilton_max: f64,
    /// Max difference of the two.
    pub defect: f64,
    /// Max of the momentum rows, which vanish by construction of `p`.
    pub momentum_rows: f64,
}

pub fn lagrange_hamilton_equivalence(
    l: &LagrangianSpec,
    q: &TorusField,
) -> Result<EquivalenceReport> {
    let n = l.pairs();
    let el = euler_lagrange_residual(l, q)?;
    let v = torus::derivative(q, Derivative::Dt)?.scaled(2.0);
    let grid = q.grid();
    let d = 2 * n;
    let mut pmom = TorusField::zeros(Layout::Position { pairs: n }, grid)?;
    let (mut qi, mut vi, mut out) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for j in 0..grid {
        for k in 0..grid {
            let t = [grid_point(grid, j), grid_point(grid, k)];
            q.gather(j, k, &mut qi);
            v.gather(j, k, &mut vi);
            l.inner().grad_v(t, &qi, &vi, &mut out);
            pmom.scatter(j, k, &out);
        }
    }
    let z = TorusField::stack(Layout::Phase { pairs: n }, &[q, &pmom])?;
    let r = legendre_residual(l, &z)?;
    let np = q.points();
    let pos = &r.data()[..d * np];
    let defect = pos
        .iter()
        .zip(el.data())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(EquivalenceReport {
        lagrange_max: el.max_abs(),
        hamilton_max: pos.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        defect,
        momentum_rows: r.data()[d * np..]
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.abs())),
    })
}
