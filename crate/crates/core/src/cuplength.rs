//! Multistart search for solutions of `∂̸Z = ∇H(Z)` with `H = ½|p|² + V`,
//! deduplication of the limits and a count against the bound `2n + 1`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_to_solution, FlowMode, FlowStatus, SolveOptions};
use crate::hamiltonian::{self, HamiltonianSpec, HoferSampling, PotentialConfig};
use crate::torus::{self, grid_point, random_band_limited, Layout, TorusField};

/// Seed lattice spacing offset, a fraction of the spacing chosen to avoid
/// symmetric points of trig potentials.
pub const DEFAULT_LATTICE_OFFSET: f64 = 0.381_966;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartConfig {
    /// Constant seeds on a `lattice_per_axis^{2n}` lattice of `T^{2n}`.
    pub lattice_per_axis: usize,
    /// Lattice offset as a fraction of the spacing.
    pub lattice_offset: f64,
    /// Random band-limited seeds.
    pub random: usize,
    pub seed: u64,
    /// Highest perturbation mode.
    pub band: i64,
    pub q_amplitude: f64,
    pub p_amplitude: f64,
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            lattice_per_axis: 6,
            lattice_offset: DEFAULT_LATTICE_OFFSET,
            random: 20,
            seed: 7,
            band: 2,
            q_amplitude: 0.3,
            p_amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub residual: f64,
    /// Dedup radius `δ` in quotient-`L²` units.
    pub dedup_delta: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-8,
            dedup_delta: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub s_max: f64,
    pub max_steps: usize,
    pub wall_clock_seconds: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            s_max: 1e3,
            max_steps: 20_000,
            wall_clock_seconds: Some(600.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSettings {
    pub ds: f64,
    pub ds_max: f64,
    pub growth: f64,
    pub mode: FlowMode,
}

impl Default for FlowSettings {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            ds: d.ds,
            ds_max: d.ds_max,
            growth: d.growth,
            mode: d.mode,
        }
    }
}

/// Experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub grid: usize,
    pub potential: PotentialConfig,
    /// Optional user estimate of `‖V‖_{C³}`; informational.
    pub c3_norm_estimate: Option<f64>,
    /// Cut-off radius; `None` selects [`default_rho`].
    pub rho: Option<f64>,
    pub starts: StartConfig,
    pub tolerances: Tolerances,
    pub budget: Budget,
    pub flow: FlowSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 1,
            grid: 32,
            potential: PotentialConfig::cos_sum(1, 0.1),
            c3_norm_estimate: None,
            rho: None,
            starts: StartConfig::default(),
            tolerances: Tolerances::default(),
            budget: Budget::default(),
            flow: FlowSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.grid < 8 || !self.grid.is_multiple_of(2) {
            return Err(Error::BadGrid(self.grid));
        }
        if !(self.tolerances.residual > 0.0) {
            return bad("residual tolerance must be positive".into());
        }
        if !(self.tolerances.dedup_delta > 10.0 * self.tolerances.residual) {
            return bad("dedup delta must exceed 10 x residual tolerance".into());
        }
        if self.starts.lattice_per_axis == 0 && self.starts.random == 0 {
            return bad("no seeds requested".into());
        }
        if let Some(r) = self.rho {
            if !(r > 1.0) {
                return bad(format!("rho must exceed 1, got {r}"));
            }
        }
        if !(self.flow.ds > 0.0)
            || !(self.flow.ds_max >= self.flow.ds)
            || !(self.flow.growth >= 1.0)
        {
            return bad("flow step settings are inconsistent".into());
        }
        if !self.potential.epsilon().is_finite() {
            return Err(Error::NonFinite("epsilon"));
        }
        if let Some(c3) = self.c3_norm_estimate {
            if !c3.is_finite() {
                return bad("C3-norm estimate must be finite".into());
            }
        }
        Ok(())
    }

    /// Lattice seeds plus random seeds.
    pub fn seed_count(&self) -> usize {
        self.starts.lattice_per_axis.pow(2 * self.n as u32) + self.starts.random
    }

    /// The Hamiltonian with the configured or default cut-off.
    pub fn spec(&self) -> Result<HamiltonianSpec> {
        let h = self.potential.build(self.n)?;
        let free = HamiltonianSpec::new(h, f64::INFINITY)?;
        let rho = match self.rho {
            Some(r) => r,
            None => default_rho(&free, self.grid)?,
        };
        free.with_rho(rho)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tolerances.residual,
            s_max: self.budget.s_max,
            ds: self.flow.ds,
            ds_max: self.flow.ds_max,
            growth: self.flow.growth,
            mode: self.flow.mode,
            max_steps: self.budget.max_steps,
            wall_clock: None,
        }
    }
}

/// `4 + B` with `B = (2 G_q)²`, `G_q` the sampled sup of `|∇_q h|` at `p = 0`.
///
/// For `p`-independent `h` a solution has `−2∂_t̄ p = ∇_q h`, so `|p|` is of
/// the order of `|∇_q h|`; the margin keeps the cut-off shell
/// `[ρ−1, ρ]` away from found solutions. Checked after the run.
pub fn default_rho(free: &HamiltonianSpec, grid: usize) -> Result<f64> {
    let n = free.pairs();
    let per_axis: usize = if n == 1 { 32 } else { 8 };
    let dims = 2 * n;
    let mut z = vec![0.0; 4 * n];
    let mut g = vec![0.0; 4 * n];
    let mut gq = 0.0_f64;
    let times: Vec<[f64; 2]> = if free.time_dependent() {
        let tn = grid.min(16);
        (0..tn * tn)
            .map(|i| [grid_point(tn, i / tn), grid_point(tn, i % tn)])
            .collect()
    } else {
        vec![[0.0, 0.0]]
    };
    for idx in 0..per_axis.pow(dims as u32) {
        let mut rem = idx;
        for zc in z.iter_mut().take(dims) {
            *zc = grid_point(per_axis, rem % per_axis);
            rem /= per_axis;
        }
        for &t in &times {
            free.nonlinearity().gradient(t, &z, &mut g);
            gq = gq.max(g[..dims].iter().map(|x| x * x).sum::<f64>().sqrt());
        }
    }
    Ok(4.0 + (2.0 * gq).powi(2))
}

/// Constants of the lower bound `A(Z) ≥ c₀‖p‖² − c₁` for solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBound {
    pub c0: f64,
    pub c1: f64,
    pub sup_h: f64,
    /// Bound on `|∂_p h̃|`.
    pub grad_p: f64,
}

/// At a solution `2∂_t q = p + ∂_p h̃`, so
/// `A = ∫ ½|p|² + ⟨p, ∂_p h̃⟩ − h̃ ≥ ¼‖p‖² − (G_p² + sup h̃)`, and
/// `A ≥ ½‖p‖² − sup h̃` when `∂_p h̃ ≡ 0`.
pub fn action_bound(spec: &HamiltonianSpec) -> Result<ActionBound> {
    let sampling = HoferSampling::default_for(spec);
    let h = spec.nonlinearity();
    let n = spec.pairs();
    let dims = 2 * n;
    let per_axis = sampling.q_per_axis;
    let times: Vec<[f64; 2]> = if spec.time_dependent() {
        let tn = sampling.time_per_axis;
        (0..tn * tn)
            .map(|i| [grid_point(tn, i / tn), grid_point(tn, i % tn)])
            .collect()
    } else {
        vec![[0.0, 0.0]]
    };
    let rho = spec.rho();
    let mut shells = vec![0.0];
    if h.momentum_dependent() && rho.is_finite() {
        shells.extend((1..=16).map(|s| rho.sqrt() * s as f64 / 16.0));
    }
    let mut z = vec![0.0; 4 * n];
    let mut g = vec![0.0; 4 * n];
    let (mut sup_h, mut sup_abs, mut gp) = (f64::NEG_INFINITY, 0.0_f64, 0.0_f64);
    for idx in 0..per_axis.pow(dims as u32) {
        let mut rem = idx;
        for zc in z.iter_mut().take(dims) {
            *zc = grid_point(per_axis, rem % per_axis);
            rem /= per_axis;
        }
        for &t in &times {
            for (si, &r) in shells.iter().enumerate() {
                z[dims..].iter_mut().for_each(|x| *x = 0.0);
                // Alternate the momentum direction across shells.
                z[dims + si % dims] = r;
                let v = spec.h_tilde(t, &z);
                sup_h = sup_h.max(v);
                sup_abs = sup_abs.max(h.value(t, &z).abs());
                spec.grad_h_tilde(t, &z, &mut g);
                gp = gp.max(g[dims..].iter().map(|x| x * x).sum::<f64>().sqrt());
            }
        }
    }
    if rho.is_finite() {
        sup_h = sup_h.max(0.0);
    }
    // Sampled sups get a 5% margin of the oscillation scale.
    let margin = 0.05 * sup_abs;
    let sup_h = sup_h + margin;
    let (c0, grad_p) = if !h.momentum_dependent() && rho.is_infinite() {
        (0.5, 0.0)
    } else if !h.momentum_dependent() {
        // ∂_p h̃ = 2χ′ h p with |χ′| ≤ 3/2 and |p| ≤ √ρ.
        (0.25, 3.0 * rho.sqrt() * (sup_abs + margin))
    } else {
        (0.25, 1.05 * gp)
    };
    let c1 = if c0 == 0.5 {
        sup_h
    } else {
        grad_p * grad_p + sup_h
    };
    Ok(ActionBound {
        c0,
        c1,
        sup_h,
        grad_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Constant,
    Nonconstant,
}

/// A converged flow limit.
#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub seed_id: usize,
    pub field: TorusField,
    pub action: f64,
    pub residual: f64,
    pub classification: Classification,
    pub q_mean: Vec<f64>,
    pub p_l2: f64,
    pub max_p2: f64,
    /// `H¹` seminorm `(Σ|m|²|ĉ(m)|²)^{1/2}`.
    pub seminorm: f64,
    pub s_reached: f64,
    pub steps: usize,
}

/// JSON metadata of a record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordMeta {
    pub seed_id: usize,
    pub action: f64,
    pub residual: f64,
    pub classification: Classification,
    pub q_mean: Vec<f64>,
    pub p_l2: f64,
    pub max_p2: f64,
    pub seminorm: f64,
    pub s_reached: f64,
    pub steps: usize,
    pub cluster: Option<usize>,
    pub field_file: String,
}

/// What happened to one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed_id: usize,
    pub status: FlowStatus,
    pub reason: Option<String>,
    pub action: f64,
    pub residual: f64,
    pub s_reached: f64,
    pub steps: usize,
    /// `(s, action)` samples of the flow.
    #[serde(skip)]
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct MultistartResult {
    pub records: Vec<SolutionRecord>,
    pub outcomes: Vec<SeedOutcome>,
    pub spec: HamiltonianSpec,
}

/// Seed field number `id`: lattice constants first, then random perturbations.
pub fn seed_field(config: &ExperimentConfig, id: usize) -> Result<TorusField> {
    let n = config.n;
    let dims = 2 * n;
    let layout = Layout::Phase { pairs: n };
    let lattice = config.starts.lattice_per_axis.pow(dims as u32);
    let mut values = vec![0.0; 4 * n];
    if id < lattice {
        let l = config.starts.lattice_per_axis;
        let mut rem = id;
        for v in values.iter_mut().take(dims) {
            let a = rem % l;
            rem /= l;
            *v = 2.0 * std::f64::consts::PI * (a as f64 + config.starts.lattice_offset) / l as f64;
        }
        return TorusField::constant(layout, config.grid, &values);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(
        config
            .starts
            .seed
            .wrapping_add((id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    for v in values.iter_mut().take(dims) {
        *v = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    }
    let base = TorusField::constant(layout, config.grid, &values)?;
    let band = config.starts.band.max(1);
    let q_pert = random_band_limited(
        Layout::Position { pairs: n },
        config.grid,
        band,
        config.starts.q_amplitude,
        false,
        &mut rng,
    )?;
    let p_pert = random_band_limited(
        Layout::Position { pairs: n },
        config.grid,
        band,
        config.starts.p_amplitude,
        false,
        &mut rng,
    )?;
    let pert = TorusField::stack(layout, &[&q_pert, &p_pert])?;
    base.add(&pert)
}

fn seminorm_h1(field: &TorusField) -> f64 {
    let modes = torus::mode_transform(field);
    let n = field.grid();
    let mut total = 0.0;
    for c in 0..field.components() {
        for a in 0..n {
            for b in 0..n {
                let (m1, m2) = (
                    torus::wave_number(n, a) as f64,
                    torus::wave_number(n, b) as f64,
                );
                if let Some(z) =
                    modes.coefficient(c, torus::wave_number(n, a), torus::wave_number(n, b))
                {
                    total += (m1 * m1 + m2 * m2) * z.norm_sqr();
                }
            }
        }
    }
    total.sqrt()
}

/// Runs the flow from every seed on `jobs` worker threads.
pub fn multistart_solve(config: &ExperimentConfig, jobs: usize) -> Result<MultistartResult> {
    config.validate()?;
    let spec = config.spec()?;
    let count = config.seed_count();
    let seeds = (0..count)
        .map(|id| seed_field(config, id))
        .collect::<Result<Vec<_>>>()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let base_opts = config.solve_options();
    let wall = config.budget.wall_clock_seconds;
    let results: Vec<Result<(SeedOutcome, Option<SolutionRecord>)>> = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(id, z0)| {
                let mut opts = base_opts;
                if let Some(w) = wall {
                    let left = w - start.elapsed().as_secs_f64();
                    if left <= 0.0 {
                        return Ok((
                            SeedOutcome {
                                seed_id: id,
                                status: FlowStatus::Exhausted,
                                reason: Some("wall-clock budget spent before start".into()),
                                action: f64::NAN,
                                residual: f64::NAN,
                                s_reached: 0.0,
                                steps: 0,
                                trace: Vec::new(),
                            },
                            None,
                        ));
                    }
                    opts.wall_clock = Some(left);
                }
                let out = flow_to_solution(z0, &spec, &opts)?;
                let action = hamiltonian::action(&spec, &out.solution)?;
                let outcome = SeedOutcome {
                    seed_id: id,
                    status: out.status,
                    reason: out.reason.clone(),
                    action,
                    residual: out.residual_norm,
                    s_reached: out.s_reached,
                    steps: out.steps,
                    trace: out.history.iter().map(|d| (d.s, d.action)).collect(),
                };
                if !out.converged() {
                    return Ok((outcome, None));
                }
                let field = out.solution;
                let means = field.means();
                let p_l2 = {
                    let np = field.points();
                    let p = &field.data()[2 * config.n * np..];
                    (p.iter().map(|x| x * x).sum::<f64>() / np as f64).sqrt()
                };
                let seminorm = seminorm_h1(&field);
                let classification = if seminorm < 10.0 * config.tolerances.residual {
                    Classification::Constant
                } else {
                    Classification::Nonconstant
                };
                let record = SolutionRecord {
                    seed_id: id,
                    action,
                    residual: out.residual_norm,
                    classification,
                    q_mean: means[..2 * config.n].to_vec(),
                    p_l2,
                    max_p2: field.max_p_squared()?,
                    seminorm,
                    s_reached: out.s_reached,
                    steps: out.steps,
                    field,
                };
                Ok((outcome, Some(record)))
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut outcomes = Vec::with_capacity(count);
    for r in results {
        let (o, rec) = r?;
        outcomes.push(o);
        records.extend(rec);
    }
    Ok(MultistartResult {
        records,
        outcomes,
        spec,
    })
}

/// `L²` distance on `(q mod 2πℤ^{2n}, p)`.
///
/// The optimal lattice shift rounds the mean difference of each position
/// component to the nearest multiple of `2π`.
pub fn quotient_distance(a: &TorusField, b: &TorusField) -> Result<f64> {
    let n = torus::phase_pairs(a)?;
    a.check_compatible(b)?;
    let np = a.points();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut total = 0.0;
    for c in 0..4 * n {
        let (ca, cb) = (a.component(c), b.component(c));
        let shift = if c < 2 * n {
            let mean = ca.iter().zip(cb).map(|(x, y)| x - y).sum::<f64>() / np as f64;
            two_pi * (mean / two_pi).round()
        } else {
            0.0
        };
        total += ca
            .iter()
            .zip(cb)
            .map(|(x, y)| (x - y - shift).powi(2))
            .sum::<f64>();
    }
    Ok((total / np as f64).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    /// Index into the record list of the lowest-residual member.
    pub representative: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DedupResult {
    pub clusters: Vec<Cluster>,
    /// Cluster index per record.
    pub assignment: Vec<usize>,
    pub continuum: bool,
    pub continuum_reason: Option<String>,
}

/// Greedy clustering under [`quotient_distance`] with radius `δ`, plus the
/// continuum detector: a single-linkage component at scale `δ` wider than
/// `10δ`, or a constant representative at a degenerate critical point.
pub fn dedup(
    records: &[SolutionRecord],
    delta: f64,
    spec: Option<&HamiltonianSpec>,
) -> Result<DedupResult> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .residual
            .total_cmp(&records[b].residual)
            .then(records[a].seed_id.cmp(&records[b].seed_id))
    });
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut assignment = vec![usize::MAX; records.len()];
    for &i in &order {
        let mut found = None;
        for (ci, c) in clusters.iter().enumerate() {
            if quotient_distance(&records[i].field, &records[c.representative].field)? <= delta {
                found = Some(ci);
                break;
            }
        }
        match found {
            Some(ci) => {
                clusters[ci].members.push(i);
                assignment[i] = ci;
            }
            None => {
                assignment[i] = clusters.len();
                clusters.push(Cluster {
                    representative: i,
                    members: vec![i],
                });
            }
        }
    }
    let mut continuum_reason = None;
    // Single linkage at scale δ between representatives.
    let reps: Vec<usize> = clusters.iter().map(|c| c.representative).collect();
    let k = reps.len();
    let mut dist = vec![0.0; k * k];
    for a in 0..k {
        for b in a + 1..k {
            let d = quotient_distance(&records[reps[a]].field, &records[reps[b]].field)?;
            dist[a * k + b] = d;
            dist[b * k + a] = d;
        }
    }
    let mut comp: Vec<usize> = (0..k).collect();
    fn root(comp: &mut [usize], mut x: usize) -> usize {
        while comp[x] != x {
            comp[x] = comp[comp[x]];
            x = comp[x];
        }
        x
    }
    for a in 0..k {
        for b in a + 1..k {
            if dist[a * k + b] <= 2.0 * delta {
                let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
                comp[ra] = rb;
            }
        }
    }
    let mut diameter = 0.0_f64;
    for a in 0..k {
        for b in a + 1..k {
            if root(&mut comp, a) == root(&mut comp, b) {
                diameter = diameter.max(dist[a * k + b]);
            }
        }
    }
    if diameter > 10.0 * delta {
        continuum_reason = Some(format!(
            "single-linkage cluster diameter {diameter:.3e} > 10 delta"
        ));
    }
    if let (None, Some(spec)) = (&continuum_reason, spec) {
        for c in &clusters {
            let r = &records[c.representative];
            if r.classification != Classification::Constant {
                continue;
            }
            let h = reduced_hessian(spec, &r.q_mean);
            let eig = SymmetricEigen::new(h.clone()).eigenvalues;
            let scale = eig.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let min = eig.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            if min <= 1e-9 * scale.max(1.0) {
                continuum_reason = Some(format!(
                    "degenerate critical point at q = {:?} (min |Hessian eigenvalue| {min:.3e})",
                    r.q_mean
                ));
                break;
            }
        }
    }
    Ok(DedupResult {
        clusters,
        assignment,
        continuum: continuum_reason.is_some(),
        continuum_reason,
    })
}

fn time_samples(spec: &HamiltonianSpec) -> Vec<[f64; 2]> {
    if spec.time_dependent() {
        let tn = 32;
        (0..tn * tn)
            .map(|i| [grid_point(tn, i / tn), grid_point(tn, i % tn)])
            .collect()
    } else {
        vec![[0.0, 0.0]]
    }
}

/// `∫ ∇_q h(t, q, 0) dt` for constant `q`.
pub fn reduced_gradient(spec: &HamiltonianSpec, q: &[f64]) -> DVector<f64> {
    let n = spec.pairs();
    let ts = time_samples(spec);
    let mut z = vec![0.0; 4 * n];
    z[..2 * n].copy_from_slice(q);
    let mut g = vec![0.0; 4 * n];
    let mut acc = DVector::zeros(2 * n);
    for &t in &ts {
        spec.grad_h_tilde(t, &z, &mut g);
        for c in 0..2 * n {
            acc[c] += g[c];
        }
    }
    acc / ts.len() as f64
}

/// `∫ ∂²_q h(t, q, 0) dt` for constant `q`.
pub fn reduced_hessian(spec: &HamiltonianSpec, q: &[f64]) -> DMatrix<f64> {
    let n = spec.pairs();
    let ts = time_samples(spec);
    let mut z = vec![0.0; 4 * n];
    z[..2 * n].copy_from_slice(q);
    let mut acc = DMatrix::zeros(2 * n, 2 * n);
    for &t in &ts {
        acc += spec.hessian_qq(t, &z);
    }
    acc / ts.len() as f64
}

/// Newton iteration on the reduced gradient from `q0`; returns the root and
/// the final gradient norm, or `None` if the Hessian is singular.
pub fn critical_point_newton(spec: &HamiltonianSpec, q0: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut q = DVector::from_column_slice(q0);
    for _ in 0..60 {
        let g = reduced_gradient(spec, q.as_slice());
        let gn = g.norm();
        if gn < 1e-14 {
            return Some((q.as_slice().to_vec(), gn));
        }
        let h = reduced_hessian(spec, q.as_slice());
        let step = h.lu().solve(&g)?;
        q -= step;
    }
    let gn = reduced_gradient(spec, q.as_slice()).norm();
    Some((q.as_slice().to_vec(), gn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// One line of the action-sorted table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub cluster: usize,
    pub seed_id: usize,
    pub action: f64,
    pub residual: f64,
    pub classification: Classification,
    pub q_mean: Vec<f64>,
    pub p_l2: f64,
    pub max_p2: f64,
    pub members: usize,
    pub lower_bound_ok: bool,
    /// Distance of `q̄` to the Newton root of the reduced gradient (constants only).
    pub critical_point_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordChecks {
    pub residuals_below_tol: bool,
    pub max_principle: bool,
    /// `max|p|² ≤ ρ − 1` on every record, so the cut-off never acts.
    pub cutoff_inactive: bool,
    pub action_lower_bound: bool,
    /// `None` when there are no constant records.
    pub constants_at_critical_points: Option<bool>,
    pub max_critical_point_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountReport {
    pub status: CountStatus,
    pub pass: bool,
    pub distinct: usize,
    pub bound: usize,
    pub continuum_detected: bool,
    pub continuum_reason: Option<String>,
    pub seeds: usize,
    pub converged: usize,
    pub diverged: usize,
    pub exhausted: usize,
    pub rho: f64,
    pub action_bound: ActionBound,
    pub checks: RecordChecks,
    /// Representatives sorted by decreasing action.
    pub table: Vec<TableRow>,
}

/// Full run: multistart, dedup, per-record checks and the count.
#[derive(Debug, Clone)]
pub struct CountRun {
    pub result: MultistartResult,
    pub dedup: DedupResult,
    pub report: CountReport,
}

/// Runs the experiment and certifies `distinct ≥ 2n + 1`.
pub fn verify_count(config: &ExperimentConfig, jobs: usize) -> Result<CountRun> {
    let result = multistart_solve(config, jobs)?;
    let spec = &result.spec;
    let tol = config.tolerances.residual;
    let dedup_res = dedup(&result.records, config.tolerances.dedup_delta, Some(spec))?;
    let bound = action_bound(spec)?;
    let rho = spec.rho();
    let mut table = Vec::new();
    let mut lb_all = true;
    let mut crit_all: Option<bool> = None;
    let mut crit_max: Option<f64> = None;
    for (ci, c) in dedup_res.clusters.iter().enumerate() {
        let r = &result.records[c.representative];
        let lower_bound_ok = r.action >= bound.c0 * r.p_l2 * r.p_l2 - bound.c1 - 1e-9;
        let crit = if r.classification == Classification::Constant {
            let d = critical_point_newton(spec, &r.q_mean).map(|(q, _)| {
                q.iter()
                    .zip(&r.q_mean)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            });
            // A singular reduced Hessian with zero gradient is itself critical.
            let d = d.or_else(|| (reduced_gradient(spec, &r.q_mean).norm() < tol).then_some(0.0));
            let ok = d.is_some_and(|d| d < 1e-6);
            crit_all = Some(crit_all.unwrap_or(true) && ok);
            crit_max = Some(crit_max.unwrap_or(0.0_f64).max(d.unwrap_or(f64::INFINITY)));
            d
        } else {
            None
        };
        lb_all &= lower_bound_ok;
        table.push(TableRow {
            cluster: ci,
            seed_id: r.seed_id,
            action: r.action,
            residual: r.residual,
            classification: r.classification,
            q_mean: r.q_mean.clone(),
            p_l2: r.p_l2,
            max_p2: r.max_p2,
            members: c.members.len(),
            lower_bound_ok,
            critical_point_distance: crit,
        });
    }
    // Non-representative records must satisfy the bound too.
    for r in &result.records {
        lb_all &= r.action >= bound.c0 * r.p_l2 * r.p_l2 - bound.c1 - 1e-9;
    }
    table.sort_by(|a, b| {
        b.action
            .total_cmp(&a.action)
            .then(a.cluster.cmp(&b.cluster))
    });
    let checks = RecordChecks {
        residuals_below_tol: result.records.iter().all(|r| r.residual < tol),
        max_principle: result.records.iter().all(|r| r.max_p2 <= rho + 1e-8),
        cutoff_inactive: result.records.iter().all(|r| r.max_p2 <= rho - 1.0),
        action_lower_bound: lb_all,
        constants_at_critical_points: crit_all,
        max_critical_point_distance: crit_max,
    };
    let distinct = dedup_res.clusters.len();
    let bound_count = 2 * config.n + 1;
    let count = |s: FlowStatus| result.outcomes.iter().filter(|o| o.status == s).count();
    let exhausted = count(FlowStatus::Exhausted) + count(FlowStatus::Stalled);
    let status = if dedup_res.continuum || distinct >= bound_count {
        CountStatus::Pass
    } else if exhausted > 0 {
        CountStatus::Inconclusive
    } else {
        CountStatus::Fail
    };
    let report = CountReport {
        status,
        pass: status == CountStatus::Pass,
        distinct,
        bound: bound_count,
        continuum_detected: dedup_res.continuum,
        continuum_reason: dedup_res.continuum_reason.clone(),
        seeds: result.outcomes.len(),
        converged: count(FlowStatus::Converged),
        diverged: count(FlowStatus::Diverged),
        exhausted,
        rho,
        action_bound: bound,
        checks,
        table,
    };
    Ok(CountRun {
        result,
        dedup: dedup_res,
        report,
    })
}

/// Writes `records/`, `summary.csv` and `report.json` into `dir`.
pub fn write_run_dir(dir: &Path, run: &CountRun) -> Result<()> {
    let rec_dir = dir.join("records");
    fs::create_dir_all(&rec_dir)?;
    let mut cluster_of_seed = vec![None; run.result.outcomes.len()];
    for (ri, r) in run.result.records.iter().enumerate() {
        cluster_of_seed[r.seed_id] = Some(run.dedup.assignment[ri]);
        let stem = format!("record_{:05}", r.seed_id);
        r.field
            .write_binary(&rec_dir.join(format!("{stem}.field")))?;
        let meta = RecordMeta {
            seed_id: r.seed_id,
            action: r.action,
            residual: r.residual,
            classification: r.classification,
            q_mean: r.q_mean.clone(),
            p_l2: r.p_l2,
            max_p2: r.max_p2,
            seminorm: r.seminorm,
            s_reached: r.s_reached,
            steps: r.steps,
            cluster: Some(run.dedup.assignment[ri]),
            field_file: format!("{stem}.field"),
        };
        fs::write(
            rec_dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&meta)?,
        )?;
    }
    let mut csv = fs::File::create(dir.join("summary.csv"))?;
    writeln!(
        csv,
        "seed,converged,status,action,residual,cluster,s_reached,steps"
    )?;
    for o in &run.result.outcomes {
        let status = serde_json::to_value(o.status)?;
        writeln!(
            csv,
            "{},{},{},{:.12e},{:.6e},{},{:.6},{}",
            o.seed_id,
            o.status == FlowStatus::Converged,
            status.as_str().unwrap_or("unknown"),
            o.action,
            o.residual,
            cluster_of_seed[o.seed_id].map_or(String::new(), |c| c.to_string()),
            o.s_reached,
            o.steps
        )?;
    }
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&run.report)? + "\n",
    )?;
    Ok(())
}
