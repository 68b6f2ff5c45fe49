//! Negative `L²`-gradient flow of the action,
//! `∂_s Z = −∂̸Z + ∇H̃(Z)`, with the `β_r` homotopy and an IMEX spectral
//! integrator.
//!
//! The linear part `L = ∂̸ − P` is treated implicitly per Fourier mode and the
//! nonlinearity `β(s)∇h̃` explicitly. Half of the spectrum of `L` is negative,
//! so this initial-value flow grows along those modes; [`solve`] provides a
//! sign-corrected flow with the same fixed points for locating solutions.

pub mod beta;
pub mod linear;
pub mod solve;
pub mod trajectory;

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{self, HamiltonianSpec};
use crate::structure::{standard_structures, StructureTriple};
use crate::torus::{self, mode_transform, Layout, ModeField, TorusField};

pub use beta::{BetaProfile, Profile};
pub use solve::{flow_to_solution, FlowMode, FlowOutcome, FlowStatus, SolveOptions};
pub use trajectory::{
    energy, energy_bound_check, energy_density, energy_identity_check, max_principle_check,
    run_trajectory, EnergyBound, EnergyIdentity, MaxPrincipleReport, StepSample, Trajectory,
    TrajectoryOptions,
};

/// Default step size.
pub const DEFAULT_DS: f64 = 1e-2;
/// Default residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default flow-time budget.
pub const DEFAULT_S_MAX: f64 = 1e3;
/// Number of diagnostics rows kept by a [`FlowState`].
pub const DIAGNOSTIC_CAPACITY: usize = 1 << 16;

/// One diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub s: f64,
    pub action: f64,
    pub residual: f64,
    pub max_p2: f64,
    /// Cumulative `∫∫|∂_s Z|²`.
    pub energy: f64,
}

/// A point on a flow line.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub z: TorusField,
    pub s: f64,
    pub spec: HamiltonianSpec,
    pub profile: Profile,
    pub ds: f64,
    pub diagnostics: VecDeque<Diagnostic>,
    triple: StructureTriple,
}

impl FlowState {
    pub fn new(
        z: TorusField,
        spec: HamiltonianSpec,
        profile: Profile,
        s: f64,
        ds: f64,
    ) -> Result<Self> {
        let layout = Layout::Phase {
            pairs: spec.pairs(),
        };
        if z.layout() != layout {
            return Err(Error::Layout(format!(
                "expected {layout:?}, got {:?}",
                z.layout()
            )));
        }
        if !(ds > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {ds}"
            )));
        }
        z.ensure_finite()?;
        let triple = standard_structures(spec.pairs())?;
        Ok(Self {
            z,
            s,
            spec,
            profile,
            ds,
            diagnostics: VecDeque::new(),
            triple,
        })
    }

    pub fn triple(&self) -> &StructureTriple {
        &self.triple
    }

    pub fn weight(&self) -> f64 {
        self.profile.weight(self.s)
    }

    /// Action of `½|p|² + β(s)h̃` at the current state.
    pub fn action(&self) -> Result<f64> {
        hamiltonian::action_weighted(&self.spec, &self.z, self.weight())
    }

    /// `L²` norm of `∂̸Z − ∇H̃_s(Z)`.
    pub fn residual_norm(&self) -> Result<f64> {
        Ok(hamiltonian::hamiltonian_residual_weighted(
            &self.spec,
            &self.z,
            &self.triple,
            self.weight(),
        )?
        .l2_norm())
    }

    pub fn diagnostic(&self, energy: f64) -> Result<Diagnostic> {
        Ok(Diagnostic {
            s: self.s,
            action: self.action()?,
            residual: self.residual_norm()?,
            max_p2: self.z.max_p_squared()?,
            energy,
        })
    }

    pub fn record(&mut self, row: Diagnostic) {
        if self.diagnostics.len() == DIAGNOSTIC_CAPACITY {
            self.diagnostics.pop_front();
        }
        self.diagnostics.push_back(row);
    }

    /// One IMEX step of size `ds` followed by a diagnostics row.
    ///
    /// For the autonomous profile a step that raises the action is rejected
    /// and retried at half size; `ds` is updated to the accepted size.
    pub fn advance(&mut self) -> Result<StepReport> {
        let a0 = self.action()?;
        let mut ds = self.ds;
        let mut rejected = 0;
        loop {
            let z1 = imex_update(&self.spec, &self.profile, &self.z, self.s, ds)?;
            let a1 =
                hamiltonian::action_weighted(&self.spec, &z1, self.profile.weight(self.s + ds))?;
            let increase = a1 - a0 > 1e-12 * (1.0 + a0.abs());
            if self.profile.is_autonomous() && (increase || !z1.is_finite()) && ds > 1e-12 {
                ds *= 0.5;
                rejected += 1;
                continue;
            }
            let kinetic = z1.sub(&self.z)?.l2_norm().powi(2) / ds;
            let energy = self.diagnostics.back().map_or(0.0, |d| d.energy) + kinetic;
            self.z = z1;
            self.s += ds;
            self.ds = ds;
            let row = self.diagnostic(energy)?;
            self.record(row);
            return Ok(StepReport {
                ds,
                rejected,
                action_before: a0,
                action_after: row.action,
            });
        }
    }
}

/// Outcome of [`FlowState::advance`].
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub ds: f64,
    pub rejected: usize,
    pub action_before: f64,
    pub action_after: f64,
}

/// `−∂̸Z + ∇H̃^{ρ,r}_s(Z)` with `β(s)` weighting `h̃` only.
pub fn floer_rhs(state: &FlowState) -> Result<TorusField> {
    let d = torus::dirac(&state.z, &state.triple)?;
    let g = hamiltonian::grad_h_weighted(&state.spec, &state.z, state.weight())?;
    g.sub(&d)
}

/// One IMEX Euler step: `(Id + Δs L̂(m)) Ẑ⁺ = Ẑ + Δs β(s) ∇̂h̃` per mode.
pub fn imex_step(state: &FlowState, ds: f64) -> Result<FlowState> {
    if !(ds > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {ds}"
        )));
    }
    let z = imex_update(&state.spec, &state.profile, &state.z, state.s, ds)?;
    let mut next = state.clone();
    next.z = z;
    next.s += ds;
    next.ds = ds;
    Ok(next)
}

/// Smallest `|1 + Δs λ|` accepted by the per-mode solve.
pub const SINGULAR_SOLVE_TOL: f64 = 1e-12;

pub(crate) fn imex_update(
    spec: &HamiltonianSpec,
    profile: &Profile,
    z: &TorusField,
    s: f64,
    ds: f64,
) -> Result<TorusField> {
    let n = spec.pairs();
    let weight = profile.weight(s);
    let mut zhat = mode_transform(z);
    let nhat = if weight == 0.0 {
        None
    } else {
        Some(mode_transform(&hamiltonian::grad_nonlinear(
            spec, z, weight,
        )?))
    };
    linear_solve(&mut zhat, nhat.as_ref(), n, ds)?;
    let out = zhat.to_field();
    Ok(out)
}

fn linear_solve(zhat: &mut ModeField, nhat: Option<&ModeField>, n: usize, ds: f64) -> Result<()> {
    let c = 4 * n;
    let grid = zhat.grid();
    let np = grid * grid;
    let ndata = nhat.map(ModeField::data);
    let mut rhs = vec![Complex64::new(0.0, 0.0); c];
    // map_modes visits modes in storage order.
    let mut flat = 0usize;
    zhat.try_map_modes(|m1, m2, v| {
        let (a, b) = (flat / grid, flat % grid);
        let here = flat;
        flat += 1;
        rhs.copy_from_slice(v);
        if let Some(nd) = ndata {
            for (comp, r) in rhs.iter_mut().enumerate() {
                *r += ds * nd[comp * np + here];
            }
        }
        let (lp, lm) = linear::eigenvalues(m1, m2);
        for lam in [lp, lm] {
            if (1.0 + ds * lam).abs() < SINGULAR_SOLVE_TOL {
                return Err(Error::SingularModeSolve {
                    m1: torus::wave_number(grid, a),
                    m2: torus::wave_number(grid, b),
                    ds,
                });
            }
        }
        let ab = linear::calculus(m1, m2, |lam| 1.0 / (1.0 + ds * lam));
        linear::apply_function(m1, m2, n, ab, &rhs, v);
        Ok(())
    })
}

/// Spectral projection of `z` onto the `λ ≥ 0` (`nonnegative`) or `λ < 0`
/// eigenspaces of `L̂` on every mode.
///
/// The nonnegative part decays monotonically under the linear flow.
pub fn spectral_projection(z: &TorusField, nonnegative: bool) -> Result<TorusField> {
    let n = torus::phase_pairs(z)?;
    let mut zhat = mode_transform(z);
    let mut x = vec![Complex64::new(0.0, 0.0); 4 * n];
    zhat.map_modes(|m1, m2, v| {
        x.copy_from_slice(v);
        let ab = linear::calculus(m1, m2, |lam| {
            f64::from(u8::from((lam >= 0.0) == nonnegative))
        });
        linear::apply_function(m1, m2, n, ab, &x, v);
    });
    Ok(zhat.to_field())
}
