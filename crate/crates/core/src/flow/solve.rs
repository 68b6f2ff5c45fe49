//! Locating solutions of `∂̸Z = ∇H̃(Z)` by flowing to a fixed point.
//!
//! [`FlowMode::Gradient`] iterates the IMEX step of the Floer flow with step
//! halving on action increase. Because `L = ∂̸ − P` has a negative half
//! spectrum, that flow only settles at solutions that are stable for it.
//!
//! [`FlowMode::Signed`] flows along `∂_s Z = −S(LZ − β∇h̃)` with
//! `S = sign(L̂)` on every mode, `S = −1` on the constant momentum block and
//! `S = −sign(∂²_q h̃)` (averaged over the torus) on the constant position
//! block. It has the same fixed points, contracts onto saddles as well as
//! extrema, and is integrated by
//! `(Id + Δs|L̂|) Ẑ⁺ = Ẑ + Δs S N̂` with a linearly implicit constant block.
//! Steps that raise the residual norm are halved.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{linear, Diagnostic, FlowState, Profile};
use crate::error::{Error, Result};
use crate::hamiltonian::{self, HamiltonianSpec};
use crate::torus::{mode_transform, Layout, ModeField, TorusField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    Signed,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub s_max: f64,
    pub ds: f64,
    pub ds_max: f64,
    pub growth: f64,
    pub mode: FlowMode,
    pub max_steps: usize,
    /// Wall-clock budget in seconds.
    pub wall_clock: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: super::DEFAULT_TOL,
            s_max: super::DEFAULT_S_MAX,
            ds: super::DEFAULT_DS,
            ds_max: 100.0,
            growth: 1.5,
            mode: FlowMode::Signed,
            max_steps: 200_000,
            wall_clock: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    Diverged,
    /// Flow-time, step or wall-clock budget used up.
    Exhausted,
    /// Step size collapsed without progress.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub status: FlowStatus,
    pub reason: Option<String>,
    pub solution: TorusField,
    pub s_reached: f64,
    pub residual_norm: f64,
    pub steps: usize,
    pub rejected: usize,
    pub history: Vec<Diagnostic>,
}

impl FlowOutcome {
    pub fn converged(&self) -> bool {
        self.status == FlowStatus::Converged
    }
}

/// Divergence threshold on `max|p|²` when the cut-off is disabled.
pub const UNBOUNDED_P2_LIMIT: f64 = 1e12;

fn p2_limit(spec: &HamiltonianSpec) -> f64 {
    if spec.rho().is_finite() {
        2.0 * spec.rho()
    } else {
        UNBOUNDED_P2_LIMIT
    }
}

/// Flows `z0` under the autonomous profile until the `L²` residual of
/// `∂̸Z = ∇H̃(Z)` drops below `tol`.
pub fn flow_to_solution(
    z0: &TorusField,
    spec: &HamiltonianSpec,
    opts: &SolveOptions,
) -> Result<FlowOutcome> {
    if !(opts.tol > 0.0) || !(opts.ds > 0.0) {
        return Err(Error::InvalidArgument("tol and ds must be positive".into()));
    }
    let layout = Layout::Phase {
        pairs: spec.pairs(),
    };
    if z0.layout() != layout {
        return Err(Error::Layout(format!(
            "expected {layout:?}, got {:?}",
            z0.layout()
        )));
    }
    z0.ensure_finite()?;
    match opts.mode {
        FlowMode::Signed => signed_flow(z0, spec, opts),
        FlowMode::Gradient => gradient_flow(z0, spec, opts),
    }
}

struct Eval {
    z: TorusField,
    zhat: ModeField,
    nhat: ModeField,
    residual: f64,
    action: f64,
    max_p2: f64,
    /// Mean position Hessian of `h̃`.
    hessian: DMatrix<f64>,
}

fn evaluate(spec: &HamiltonianSpec, z: TorusField) -> Result<Eval> {
    let n = spec.pairs();
    let c = 4 * n;
    let zhat = mode_transform(&z);
    let nfield = hamiltonian::grad_nonlinear(spec, &z, 1.0)?;
    let nhat = mode_transform(&nfield);
    let mean_h = hamiltonian::mean_h_tilde(spec, &z)?;
    let grid = z.grid();
    let np = grid * grid;
    let zd = zhat.data();
    let nd = nhat.data();
    let mut x = vec![Complex64::new(0.0, 0.0); c];
    let mut lx = vec![Complex64::new(0.0, 0.0); c];
    let mut res2 = 0.0;
    let mut quad = 0.0;
    for flat in 0..np {
        let m1 = crate::torus::derivative_wave_number(grid, flat / grid);
        let m2 = crate::torus::derivative_wave_number(grid, flat % grid);
        for (comp, slot) in x.iter_mut().enumerate() {
            *slot = zd[comp * np + flat];
        }
        linear::apply(m1, m2, n, &x, &mut lx);
        for comp in 0..c {
            res2 += (lx[comp] - nd[comp * np + flat]).norm_sqr();
            quad += (x[comp].conj() * lx[comp]).re;
        }
    }
    let hessian = hamiltonian::mean_hessian_qq(spec, &z)?;
    Ok(Eval {
        max_p2: z.max_p_squared()?,
        z,
        zhat,
        nhat,
        residual: res2.sqrt(),
        action: 0.5 * quad - mean_h,
        hessian,
    })
}

/// One step of the signed flow from an evaluated state.
///
/// Modes whose symbol reduces to `−P` (the constant mode and the Nyquist
/// corners, where first derivatives vanish) carry the kernel treatment.
fn signed_update(ev: &Eval, n: usize, ds: f64) -> TorusField {
    let c = 4 * n;
    let grid = ev.z.grid();
    let np = grid * grid;
    let mut zhat = ev.zhat.clone();
    let nd = ev.nhat.data();
    // Position kernel step Δq = Δs (Id + Δs|H̄|)⁻¹ S₀ N̂_q with S₀ = −sign(H̄).
    let eig = SymmetricEigen::new((&ev.hessian + ev.hessian.transpose()) * 0.5);
    let scale = DVector::from_iterator(
        2 * n,
        eig.eigenvalues.iter().map(|&mu| {
            let s0 = if mu > 0.0 { -1.0 } else { 1.0 };
            ds * s0 / (1.0 + ds * mu.abs())
        }),
    );
    let kernel: DMatrix<f64> =
        &eig.eigenvectors * DMatrix::from_diagonal(&scale) * eig.eigenvectors.transpose();
    let mut rhs = vec![Complex64::new(0.0, 0.0); c];
    let mut sn = vec![Complex64::new(0.0, 0.0); c];
    let mut flat = 0usize;
    zhat.map_modes(|m1, m2, v| {
        let here = flat;
        flat += 1;
        for (comp, r) in rhs.iter_mut().enumerate() {
            *r = nd[comp * np + here];
        }
        if m1 == 0.0 && m2 == 0.0 {
            for r in 0..2 * n {
                let mut acc = Complex64::new(0.0, 0.0);
                for col in 0..2 * n {
                    acc += kernel[(r, col)] * rhs[col];
                }
                v[r] += acc;
            }
            // Momentum block: S = −1, |L̂| = 1.
            for comp in 2 * n..c {
                v[comp] = (v[comp] - ds * rhs[comp]) / (1.0 + ds);
            }
            return;
        }
        // v ← (Id + Δs|L̂|)⁻¹ (v + Δs sign(L̂) N̂)
        let sign = linear::calculus(m1, m2, f64::signum);
        linear::apply_function(m1, m2, n, sign, &rhs, &mut sn);
        for (vi, si) in v.iter_mut().zip(&sn) {
            *vi += ds * si;
        }
        let resolvent = linear::calculus(m1, m2, |lam| 1.0 / (1.0 + ds * lam.abs()));
        rhs.copy_from_slice(v);
        linear::apply_function(m1, m2, n, resolvent, &rhs, v);
    });
    zhat.to_field()
}

fn signed_flow(
    z0: &TorusField,
    spec: &HamiltonianSpec,
    opts: &SolveOptions,
) -> Result<FlowOutcome> {
    let n = spec.pairs();
    let start = Instant::now();
    let limit = p2_limit(spec);
    let mut ev = evaluate(spec, z0.clone())?;
    let r0 = ev.residual.max(opts.tol);
    let mut s = 0.0;
    let mut ds = opts.ds;
    let mut steps = 0;
    let mut rejected = 0;
    let mut energy = 0.0;
    let mut history = vec![Diagnostic {
        s,
        action: ev.action,
        residual: ev.residual,
        max_p2: ev.max_p2,
        energy,
    }];
    let finish =
        |status, reason: Option<String>, ev: Eval, s, steps, rejected, history| FlowOutcome {
            status,
            reason,
            residual_norm: ev.residual,
            solution: ev.z,
            s_reached: s,
            steps,
            rejected,
            history,
        };
    loop {
        if ev.residual < opts.tol {
            return Ok(finish(
                FlowStatus::Converged,
                None,
                ev,
                s,
                steps,
                rejected,
                history,
            ));
        }
        if !ev.z.is_finite() || ev.max_p2 > limit || ev.residual > 1e8 * r0 {
            let reason = format!(
                "max|p|^2 = {:.3e}, residual = {:.3e} at s = {s:.4}",
                ev.max_p2, ev.residual
            );
            return Ok(finish(
                FlowStatus::Diverged,
                Some(reason),
                ev,
                s,
                steps,
                rejected,
                history,
            ));
        }
        let out_of_time = opts
            .wall_clock
            .is_some_and(|w| start.elapsed().as_secs_f64() > w);
        if s >= opts.s_max || steps >= opts.max_steps || out_of_time {
            let reason = format!("budget exhausted at s = {s:.4} after {steps} steps");
            return Ok(finish(
                FlowStatus::Exhausted,
                Some(reason),
                ev,
                s,
                steps,
                rejected,
                history,
            ));
        }
        let step = ds.min(opts.s_max - s).max(f64::MIN_POSITIVE);
        let trial = signed_update(&ev, n, step);
        let next = if trial.is_finite() {
            Some(evaluate(spec, trial)?)
        } else {
            None
        };
        match next {
            Some(nx) if nx.residual <= ev.residual * (1.0 + 1e-3) || nx.residual < opts.tol => {
                energy += nx.z.sub(&ev.z)?.l2_norm().powi(2) / step;
                s += step;
                steps += 1;
                ev = nx;
                history.push(Diagnostic {
                    s,
                    action: ev.action,
                    residual: ev.residual,
                    max_p2: ev.max_p2,
                    energy,
                });
                ds = (ds * opts.growth).min(opts.ds_max);
            }
            _ => {
                rejected += 1;
                ds *= 0.5;
                if ds < 1e-10 {
                    let reason = format!("step size collapsed at s = {s:.4}");
                    return Ok(finish(
                        FlowStatus::Stalled,
                        Some(reason),
                        ev,
                        s,
                        steps,
                        rejected,
                        history,
                    ));
                }
            }
        }
    }
}

fn gradient_flow(
    z0: &TorusField,
    spec: &HamiltonianSpec,
    opts: &SolveOptions,
) -> Result<FlowOutcome> {
    let start = Instant::now();
    let limit = p2_limit(spec);
    let mut state = FlowState::new(z0.clone(), spec.clone(), Profile::Constant, 0.0, opts.ds)?;
    let first = state.diagnostic(0.0)?;
    state.record(first);
    let r0 = first.residual.max(opts.tol);
    let mut steps = 0;
    let mut rejected = 0;
    loop {
        let last = *state.diagnostics.back().expect("recorded above");
        let (status, reason) = if last.residual < opts.tol {
            (Some(FlowStatus::Converged), None)
        } else if !state.z.is_finite() || last.max_p2 > limit || last.residual > 1e8 * r0 {
            (
                Some(FlowStatus::Diverged),
                Some(format!(
                    "max|p|^2 = {:.3e}, residual = {:.3e} at s = {:.4}",
                    last.max_p2, last.residual, state.s
                )),
            )
        } else if state.s >= opts.s_max
            || steps >= opts.max_steps
            || opts
                .wall_clock
                .is_some_and(|w| start.elapsed().as_secs_f64() > w)
        {
            (
                Some(FlowStatus::Exhausted),
                Some(format!(
                    "budget exhausted at s = {:.4} after {steps} steps",
                    state.s
                )),
            )
        } else {
            (None, None)
        };
        if let Some(status) = status {
            return Ok(FlowOutcome {
                status,
                reason,
                solution: state.z.clone(),
                s_reached: state.s,
                residual_norm: last.residual,
                steps,
                rejected,
                history: state.diagnostics.iter().copied().collect(),
            });
        }
        state.ds = state.ds.min(opts.s_max - state.s).max(1e-12);
        let report = state.advance()?;
        rejected += report.rejected;
        steps += 1;
    }
}
