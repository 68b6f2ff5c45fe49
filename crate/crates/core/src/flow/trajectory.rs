//! Fixed-step flow trajectories, the energy identity, the maximum principle
//! and the energy density.
//!
//! Samples are stored at uniform `s`. The energy uses the difference
//! quotients of consecutive states, `Σ |Z_{k+1} − Z_k|² / Δs`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{imex_update, Profile};
use crate::error::{Error, Result};
use crate::hamiltonian::{self, HamiltonianSpec};
use crate::structure::standard_structures;
use crate::torus::{self, Derivative, Layout, TorusField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub s_start: f64,
    pub s_end: f64,
    pub ds: f64,
    /// Store the field every `checkpoint_every` steps (0 stores none).
    pub checkpoint_every: usize,
}

/// Scalars recorded at one `s` sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub s: f64,
    /// Action of `½|p|² + β(s)h̃` at `Z_s`.
    pub action: f64,
    /// `β′(s) · ∫h̃(Z_s)`.
    pub beta_prime_h: f64,
    /// `|Z_{k+1} − Z_k|² / Δs²` for the step leaving this sample (0 at the end).
    pub kinetic: f64,
    pub max_p2: f64,
    /// `L²` residual of `∂̸Z = ∇H̃_s(Z)`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub ds: f64,
    pub profile: Profile,
    pub samples: Vec<StepSample>,
    /// `(sample index, field)`.
    pub checkpoints: Vec<(usize, TorusField)>,
}

fn sample(spec: &HamiltonianSpec, profile: &Profile, z: &TorusField, s: f64) -> Result<StepSample> {
    let triple = standard_structures(spec.pairs())?;
    let w = profile.weight(s);
    let dh = profile.derivative(s);
    Ok(StepSample {
        s,
        action: hamiltonian::action_weighted(spec, z, w)?,
        beta_prime_h: if dh == 0.0 {
            0.0
        } else {
            dh * hamiltonian::mean_h_tilde(spec, z)?
        },
        kinetic: 0.0,
        max_p2: z.max_p_squared()?,
        residual: hamiltonian::hamiltonian_residual_weighted(spec, z, &triple, w)?.l2_norm(),
    })
}

/// Integrates the Floer flow with fixed `Δs` from `z0` at `s_start`.
pub fn run_trajectory(
    z0: &TorusField,
    spec: &HamiltonianSpec,
    profile: Profile,
    opts: &TrajectoryOptions,
) -> Result<Trajectory> {
    if !(opts.ds > 0.0) || !(opts.s_end > opts.s_start) {
        return Err(Error::InvalidArgument(
            "need ds > 0 and s_end > s_start".into(),
        ));
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
    let steps = ((opts.s_end - opts.s_start) / opts.ds).round() as usize;
    let mut z = z0.clone();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut checkpoints = Vec::new();
    let mut current = sample(spec, &profile, &z, opts.s_start)?;
    for k in 0..steps {
        if opts.checkpoint_every > 0 && k % opts.checkpoint_every == 0 {
            checkpoints.push((k, z.clone()));
        }
        let s = opts.s_start + k as f64 * opts.ds;
        let z1 = imex_update(spec, &profile, &z, s, opts.ds)?;
        if !z1.is_finite() {
            return Err(Error::NonFinite("trajectory state"));
        }
        current.kinetic = (z1.sub(&z)?.l2_norm() / opts.ds).powi(2);
        samples.push(current);
        z = z1;
        current = sample(spec, &profile, &z, opts.s_start + (k + 1) as f64 * opts.ds)?;
    }
    if opts.checkpoint_every > 0 {
        checkpoints.push((steps, z.clone()));
    }
    samples.push(current);
    Ok(Trajectory {
        ds: opts.ds,
        profile,
        samples,
        checkpoints,
    })
}

impl Trajectory {
    fn window(&self, s0: f64, s1: f64) -> Result<(usize, usize)> {
        let tol = 1e-9 * self.ds;
        let a = self.samples.iter().position(|x| x.s >= s0 - tol);
        let b = self.samples.iter().rposition(|x| x.s <= s1 + tol);
        match (a, b) {
            (Some(a), Some(b)) if b > a => Ok((a, b)),
            (Some(a), Some(b)) => Err(Error::InsufficientSamples(b.saturating_sub(a) + 1)),
            _ => Err(Error::InsufficientSamples(0)),
        }
    }

    pub fn first(&self) -> &StepSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &StepSample {
        self.samples
            .last()
            .expect("trajectories hold at least one sample")
    }

    /// Whether both ends solve their equation to `tol`.
    pub fn converged_ends(&self, tol: f64) -> bool {
        self.first().residual < tol && self.last().residual < tol
    }

    /// Writes `steps.csv`, checkpoint fields and a `trajectory.json` manifest
    /// with the s-index of every checkpoint. `extra` is stored verbatim.
    pub fn write(&self, dir: &Path, extra: serde_json::Value) -> Result<()> {
        fs::create_dir_all(dir.join("fields"))?;
        let mut csv = fs::File::create(dir.join("steps.csv"))?;
        writeln!(csv, "s,action,beta_prime_h,kinetic,max_p2,residual")?;
        for x in &self.samples {
            writeln!(
                csv,
                "{:.12e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                x.s, x.action, x.beta_prime_h, x.kinetic, x.max_p2, x.residual
            )?;
        }
        let mut entries = Vec::new();
        for (idx, field) in &self.checkpoints {
            let name = format!("fields/z_{idx:07}.field");
            field.write_binary(&dir.join(&name))?;
            entries.push(CheckpointEntry {
                index: *idx,
                s: self.samples[*idx].s,
                file: name,
            });
        }
        let manifest = TrajectoryManifest {
            ds: self.ds,
            profile: self.profile,
            samples: self.samples.len(),
            checkpoints: entries,
            extra,
        };
        fs::write(
            dir.join("trajectory.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    /// Reads a trajectory written by [`Trajectory::write`].
    pub fn read(dir: &Path) -> Result<(Trajectory, serde_json::Value)> {
        let manifest: TrajectoryManifest =
            serde_json::from_str(&fs::read_to_string(dir.join("trajectory.json"))?)?;
        let text = fs::read_to_string(dir.join("steps.csv"))?;
        let mut samples = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("steps.csv: {e}")))?;
            if v.len() != 6 {
                return Err(Error::Format(format!("steps.csv: bad row `{line}`")));
            }
            samples.push(StepSample {
                s: v[0],
                action: v[1],
                beta_prime_h: v[2],
                kinetic: v[3],
                max_p2: v[4],
                residual: v[5],
            });
        }
        if samples.len() != manifest.samples {
            return Err(Error::Format(format!(
                "manifest lists {} samples, steps.csv has {}",
                manifest.samples,
                samples.len()
            )));
        }
        let checkpoints = manifest
            .checkpoints
            .iter()
            .map(|c| Ok((c.index, TorusField::read_binary(&dir.join(&c.file))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            Trajectory {
                ds: manifest.ds,
                profile: manifest.profile,
                samples,
                checkpoints,
            },
            manifest.extra,
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointEntry {
    index: usize,
    s: f64,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryManifest {
    ds: f64,
    profile: Profile,
    samples: usize,
    checkpoints: Vec<CheckpointEntry>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// `∫_{s0}^{s1} ∫ |∂_s Z|²` from the stored step quotients.
pub fn energy(traj: &Trajectory, s0: f64, s1: f64) -> Result<f64> {
    let (a, b) = traj.window(s0, s1)?;
    Ok(traj.samples[a..b].iter().map(|x| x.kinetic * traj.ds).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentity {
    pub energy: f64,
    /// `A(s0) − A(s1)`.
    pub action_drop: f64,
    /// `∫ β′(s) ∫h̃(Z_s) ds` by the trapezoid rule.
    pub beta_term: f64,
    /// `|E − (A(s0) − A(s1) − β-term)|`.
    pub defect: f64,
}

pub fn energy_identity_check(traj: &Trajectory, s0: f64, s1: f64) -> Result<EnergyIdentity> {
    let (a, b) = traj.window(s0, s1)?;
    let e = energy(traj, s0, s1)?;
    let drop = traj.samples[a].action - traj.samples[b].action;
    let beta_term: f64 = traj.samples[a..=b]
        .windows(2)
        .map(|w| 0.5 * traj.ds * (w[0].beta_prime_h + w[1].beta_prime_h))
        .sum();
    Ok(EnergyIdentity {
        energy: e,
        action_drop: drop,
        beta_term,
        defect: (e - (drop - beta_term)).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub max_p2: f64,
    pub rho: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Largest `|p(s, t)|²` over the trajectory against `ρ`.
pub fn max_principle_check(traj: &Trajectory, rho: f64) -> MaxPrincipleReport {
    let max_p2 = traj.samples.iter().map(|x| x.max_p2).fold(0.0, f64::max);
    let tolerance = 1e-8;
    MaxPrincipleReport {
        max_p2,
        rho,
        tolerance,
        holds: max_p2 <= rho + tolerance,
    }
}

/// `e = ½(|∂_s Z|² + |∂₁Z|² + |∂₂Z|²)` at the middle of three consecutive
/// states, with a central difference in `s`.
pub fn energy_density(
    prev: &TorusField,
    mid: &TorusField,
    next: &TorusField,
    ds: f64,
) -> Result<TorusField> {
    prev.check_compatible(mid)?;
    next.check_compatible(mid)?;
    let ds_z = next.sub(prev)?.scaled(0.5 / ds);
    let d1 = torus::derivative(mid, Derivative::D1)?;
    let d2 = torus::derivative(mid, Derivative::D2)?;
    let np = mid.points();
    let mut e = vec![0.0; np];
    for c in 0..mid.components() {
        for (idx, slot) in e.iter_mut().enumerate() {
            let (a, b, d) = (
                ds_z.component(c)[idx],
                d1.component(c)[idx],
                d2.component(c)[idx],
            );
            *slot += 0.5 * (a * a + b * b + d * d);
        }
    }
    TorusField::from_data(Layout::Scalar, mid.grid(), e)
}

/// `(∂_s² + Δ)e` at the middle of three consecutive densities.
pub fn density_operator(
    prev: &TorusField,
    mid: &TorusField,
    next: &TorusField,
    ds: f64,
) -> Result<TorusField> {
    let dss = next.sub(mid)?.sub(&mid.sub(prev)?)?.scaled(1.0 / (ds * ds));
    dss.add(&torus::laplacian(mid))
}

/// Energy identity and Hofer bound over a whole trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBound {
    pub identity: EnergyIdentity,
    /// `‖h̃ρ‖_Hofer` as sampled.
    pub hofer: f64,
    /// `2‖h̃ρ‖_Hofer`.
    pub bound: f64,
    pub within_bound: bool,
    /// Residuals at the two ends.
    pub end_residuals: [f64; 2],
    pub max_principle: MaxPrincipleReport,
}

/// Slack added to the Hofer bound.
pub const ENERGY_BOUND_SLACK: f64 = 1e-2;

pub fn energy_bound_check(
    traj: &Trajectory,
    spec: &HamiltonianSpec,
    sampling: &hamiltonian::HoferSampling,
) -> Result<EnergyBound> {
    let identity = energy_identity_check(traj, traj.first().s, traj.last().s)?;
    let hofer = hamiltonian::hofer_norm(spec, sampling)?.value;
    let bound = 2.0 * hofer;
    Ok(EnergyBound {
        identity,
        hofer,
        bound,
        within_bound: identity.energy <= bound + ENERGY_BOUND_SLACK,
        end_residuals: [traj.first().residual, traj.last().residual],
        max_principle: max_principle_check(traj, spec.rho()),
    })
}
