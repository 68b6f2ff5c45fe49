//! Hamiltonians `H = ½|p|² + h` with a momentum cut-off, the regularized
//! system `∂̸Z = ∇H(Z)`, the action functional, the Hofer norm, the
//! Legendre/Euler–Lagrange correspondence and the De Donder–Weyl system.

pub mod ddw;
pub mod hofer;
pub mod lagrangian;
pub mod potential;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::structure::StructureTriple;
use crate::torus::{self, grid_point, Derivative, Layout, TorusField};

pub use hofer::{hofer_norm, HoferEstimate, HoferSampling};
pub use potential::{builtin, Nonlinearity, PotentialConfig};

/// Relative tolerance of the construction-time gradient check.
pub const GRADIENT_CHECK_TOL: f64 = 1e-6;

/// Smoothstep cut-off `χ_ρ` and its derivative at `x = |p|²`.
///
/// `χ = 1` on `x ≤ ρ−1`, `0` on `x ≥ ρ`, `1 − (3u² − 2u³)` with `u = x − (ρ−1)`
/// in between. An infinite `ρ` disables the cut-off.
pub fn cutoff(rho: f64, x: f64) -> (f64, f64) {
    if rho.is_infinite() || x <= rho - 1.0 {
        return (1.0, 0.0);
    }
    if x >= rho {
        return (0.0, 0.0);
    }
    let u = x - (rho - 1.0);
    (
        1.0 - (3.0 * u * u - 2.0 * u * u * u),
        -(6.0 * u - 6.0 * u * u),
    )
}

/// `H = ½|p|² + χ_ρ(|p|²) h(t, Z)`.
#[derive(Clone)]
pub struct HamiltonianSpec {
    h: Arc<dyn Nonlinearity>,
    rho: f64,
}

impl fmt::Debug for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSpec")
            .field("h", &self.h)
            .field("rho", &self.rho)
            .finish()
    }
}

impl HamiltonianSpec {
    /// Builds the spec after checking `∇h` against central differences at
    /// deterministic random points.
    pub fn new(h: Arc<dyn Nonlinearity>, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive, got {rho}"
            )));
        }
        if h.pairs() == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let err = gradient_check(h.as_ref(), 12, 0x5eed);
        if !(err <= GRADIENT_CHECK_TOL) {
            return Err(Error::GradientCheck(err));
        }
        Ok(Self { h, rho })
    }

    /// `h ≡ 0` without cut-off.
    pub fn free(pairs: usize) -> Self {
        Self {
            h: Arc::new(potential::Zero { pairs }),
            rho: f64::INFINITY,
        }
    }

    pub fn pairs(&self) -> usize {
        self.h.pairs()
    }

    pub fn dim(&self) -> usize {
        4 * self.pairs()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn nonlinearity(&self) -> &Arc<dyn Nonlinearity> {
        &self.h
    }

    pub fn time_dependent(&self) -> bool {
        self.h.time_dependent()
    }

    /// Same `h`, different cut-off radius.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive, got {rho}"
            )));
        }
        Ok(Self {
            h: self.h.clone(),
            rho,
        })
    }

    fn p_squared(&self, z: &[f64]) -> f64 {
        let n = self.pairs();
        z[2 * n..4 * n].iter().map(|x| x * x).sum()
    }

    /// `h̃ = χ_ρ(|p|²) h`.
    pub fn h_tilde(&self, t: [f64; 2], z: &[f64]) -> f64 {
        let (chi, _) = cutoff(self.rho, self.p_squared(z));
        if chi == 0.0 {
            0.0
        } else {
            chi * self.h.value(t, z)
        }
    }

    /// `∇h̃` including the chain-rule term `2χ′(|p|²) h p`.
    pub fn grad_h_tilde(&self, t: [f64; 2], z: &[f64], out: &mut [f64]) {
        let n = self.pairs();
        let (chi, dchi) = cutoff(self.rho, self.p_squared(z));
        if chi == 0.0 && dchi == 0.0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        self.h.gradient(t, z, out);
        out.iter_mut().for_each(|x| *x *= chi);
        if dchi != 0.0 {
            let hv = self.h.value(t, z);
            for c in 2 * n..4 * n {
                out[c] += 2.0 * dchi * hv * z[c];
            }
        }
    }

    /// `H(t, Z)`.
    pub fn hamiltonian(&self, t: [f64; 2], z: &[f64]) -> f64 {
        0.5 * self.p_squared(z) + self.h_tilde(t, z)
    }

    /// `∇H = (β∂_q h̃, p + β∂_p h̃)` with weight `β` on the nonlinearity.
    pub fn grad_hamiltonian(&self, t: [f64; 2], z: &[f64], weight: f64, out: &mut [f64]) {
        let n = self.pairs();
        self.grad_h_tilde(t, z, out);
        out.iter_mut().for_each(|x| *x *= weight);
        for c in 2 * n..4 * n {
            out[c] += z[c];
        }
    }

    /// `∂²_q h̃` (the `2n × 2n` position block), from the analytic Hessian when
    /// available, otherwise by central differences of the gradient.
    pub fn hessian_qq(&self, t: [f64; 2], z: &[f64]) -> DMatrix<f64> {
        let n = self.pairs();
        let (chi, _) = cutoff(self.rho, self.p_squared(z));
        if chi == 0.0 {
            return DMatrix::zeros(2 * n, 2 * n);
        }
        if let Some(h) = self.h.hessian(t, z) {
            return h.view((0, 0), (2 * n, 2 * n)).into_owned() * chi;
        }
        let step = 1e-5;
        let mut x = z.to_vec();
        let mut gp = vec![0.0; 4 * n];
        let mut gm = vec![0.0; 4 * n];
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for c in 0..2 * n {
            x[c] = z[c] + step;
            self.h.gradient(t, &x, &mut gp);
            x[c] = z[c] - step;
            self.h.gradient(t, &x, &mut gm);
            x[c] = z[c];
            for r in 0..2 * n {
                out[(r, c)] = chi * (gp[r] - gm[r]) / (2.0 * step);
            }
        }
        (&out + out.transpose()) * 0.5
    }
}

/// Largest relative mismatch between `∇h` and central differences of `h`.
pub fn gradient_check(h: &dyn Nonlinearity, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4 * h.pairs();
    let mut worst = 0.0_f64;
    let mut g = vec![0.0; d];
    for _ in 0..samples {
        let t = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];
        let mut z: Vec<f64> = (0..d)
            .map(|c| {
                if c < 2 * h.pairs() {
                    rng.gen_range(0.0..6.3)
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        h.gradient(t, &z, &mut g);
        let scale = g.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let step = 1e-5;
        for c in 0..d {
            let x0 = z[c];
            z[c] = x0 + step;
            let fp = h.value(t, &z);
            z[c] = x0 - step;
            let fm = h.value(t, &z);
            z[c] = x0;
            let fd = (fp - fm) / (2.0 * step);
            worst = worst.max((fd - g[c]).abs() / scale);
        }
    }
    worst
}

fn check_phase(spec: &HamiltonianSpec, z: &TorusField) -> Result<()> {
    let expected = Layout::Phase {
        pairs: spec.pairs(),
    };
    if z.layout() != expected {
        return Err(Error::Layout(format!(
            "expected {expected:?}, got {:?}",
            z.layout()
        )));
    }
    Ok(())
}

/// Applies `f(t, z, out)` at every grid point of a phase-space field.
fn pointwise<F>(z: &TorusField, mut f: F) -> TorusField
where
    F: FnMut([f64; 2], &[f64], &mut [f64]),
{
    let n = z.grid();
    let c = z.components();
    let mut out = TorusField::from_data_unchecked(z.layout(), n, vec![0.0; z.data().len()]);
    let mut zi = vec![0.0; c];
    let mut oi = vec![0.0; c];
    for j in 0..n {
        for k in 0..n {
            z.gather(j, k, &mut zi);
            f([grid_point(n, j), grid_point(n, k)], &zi, &mut oi);
            out.scatter(j, k, &oi);
        }
    }
    out
}

/// Grid mean of `f(t, z)`.
fn pointwise_mean<F>(z: &TorusField, mut f: F) -> f64
where
    F: FnMut([f64; 2], &[f64]) -> f64,
{
    let n = z.grid();
    let mut zi = vec![0.0; z.components()];
    let mut total = 0.0;
    for j in 0..n {
        for k in 0..n {
            z.gather(j, k, &mut zi);
            total += f([grid_point(n, j), grid_point(n, k)], &zi);
        }
    }
    total / (n * n) as f64
}

/// Field-level `∇H(Z)`.
pub fn grad_h(spec: &HamiltonianSpec, z: &TorusField) -> Result<TorusField> {
    grad_h_weighted(spec, z, 1.0)
}

/// Field-level `∇H` with weight `β` on the nonlinearity.
pub fn grad_h_weighted(spec: &HamiltonianSpec, z: &TorusField, weight: f64) -> Result<TorusField> {
    check_phase(spec, z)?;
    Ok(pointwise(z, |t, zi, out| {
        spec.grad_hamiltonian(t, zi, weight, out)
    }))
}

/// Field-level `β∇h̃` (no quadratic part).
pub fn grad_nonlinear(spec: &HamiltonianSpec, z: &TorusField, weight: f64) -> Result<TorusField> {
    check_phase(spec, z)?;
    Ok(pointwise(z, |t, zi, out| {
        spec.grad_h_tilde(t, zi, out);
        out.iter_mut().for_each(|x| *x *= weight);
    }))
}

/// Grid mean of `h̃(t, Z(t))`.
pub fn mean_h_tilde(spec: &HamiltonianSpec, z: &TorusField) -> Result<f64> {
    check_phase(spec, z)?;
    Ok(pointwise_mean(z, |t, zi| spec.h_tilde(t, zi)))
}

/// Grid mean of `∂²_q h̃(t, Z(t))`.
pub fn mean_hessian_qq(spec: &HamiltonianSpec, z: &TorusField) -> Result<DMatrix<f64>> {
    check_phase(spec, z)?;
    let n = z.grid();
    let d = 2 * spec.pairs();
    let mut acc = DMatrix::zeros(d, d);
    let mut zi = vec![0.0; z.components()];
    for j in 0..n {
        for k in 0..n {
            z.gather(j, k, &mut zi);
            acc += spec.hessian_qq([grid_point(n, j), grid_point(n, k)], &zi);
        }
    }
    Ok(acc / (n * n) as f64)
}

/// `∂̸Z − ∇H(Z)`.
pub fn hamiltonian_residual(
    spec: &HamiltonianSpec,
    z: &TorusField,
    triple: &StructureTriple,
) -> Result<TorusField> {
    hamiltonian_residual_weighted(spec, z, triple, 1.0)
}

pub fn hamiltonian_residual_weighted(
    spec: &HamiltonianSpec,
    z: &TorusField,
    triple: &StructureTriple,
    weight: f64,
) -> Result<TorusField> {
    let d = torus::dirac(z, triple)?;
    d.sub(&grad_h_weighted(spec, z, weight)?)
}

/// `2∂_t q` as real components `(∂₁q₁ + ∂₂q₂, ∂₁q₂ − ∂₂q₁)` per pair, laid out
/// like the momentum block.
pub fn two_dt_q(z: &TorusField) -> Result<Vec<f64>> {
    let n = torus::phase_pairs(z)?;
    let dt = torus::derivative(z, Derivative::Dt)?;
    let np = z.points();
    Ok(dt.data()[..2 * n * np].iter().map(|x| 2.0 * x).collect())
}

/// `A_H(Z) = ∫ (⟨p, 2∂_t q⟩ − H) dV` with unit total volume.
pub fn action(spec: &HamiltonianSpec, z: &TorusField) -> Result<f64> {
    action_weighted(spec, z, 1.0)
}

/// Action of `½|p|² + β h̃`.
pub fn action_weighted(spec: &HamiltonianSpec, z: &TorusField, weight: f64) -> Result<f64> {
    check_phase(spec, z)?;
    let n = spec.pairs();
    let np = z.points();
    let v = two_dt_q(z)?;
    let p = &z.data()[2 * n * np..];
    let kinetic: f64 = p
        .iter()
        .zip(&v)
        .map(|(pi, vi)| pi * vi - 0.5 * pi * pi)
        .sum::<f64>()
        / np as f64;
    let h = if weight == 0.0 {
        0.0
    } else {
        weight * mean_h_tilde(spec, z)?
    };
    Ok(kinetic - h)
}
