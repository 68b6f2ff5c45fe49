use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    input_error, plots, Branch, CommandOutcome, CuplengthArgs, DdwArgs, EnergyArgs, ExitStatus,
    FlowArgs, LegendreArgs, ModeArg, ProblemArgs, RunContext, SeedArgs, StructuresArgs, SymbolArgs,
};
use crate::cuplength::{self, CountStatus, ExperimentConfig, StartConfig};
use crate::error::Result;
use crate::flow::{
    self, energy_bound_check, flow_to_solution, run_trajectory, BetaProfile, FlowMode, FlowStatus,
    Profile, SolveOptions, Trajectory, TrajectoryOptions,
};
use crate::hamiltonian::ddw::{ddw_kernel_witness, ddw_residual, FreeDdw};
use crate::hamiltonian::lagrangian::{
    lagrange_hamilton_equivalence, legendre, LagrangianSpec, MechanicalLagrangian,
};
use crate::hamiltonian::{builtin, HoferSampling, PotentialConfig};
use crate::structure::{
    check_regularized_pair, compatible_triple, from_rows, holomorphic_correspondence,
    random_regularized_pair, standard_structures, to_rows, CompatibleOptions, RegularizedPair,
};
use crate::symbol::{self, SymbolQuery};
use crate::torus::{self, Layout, TorusField};

/// The flagship experiment bundled with the binary.
pub const FLAGSHIP_CONFIG: &str = include_str!("../../examples/trig_n1.json");

pub(super) fn dispatch(cmd: &super::Command, ctx: &mut RunContext) -> Result<CommandOutcome> {
    use super::Command as C;
    match cmd {
        C::Structures(a) => structures(a, ctx),
        C::Symbol(a) => symbol_sweep(a, ctx),
        C::Flow(a) => flow_cmd(a, ctx),
        C::Energy(a) => energy_cmd(a, ctx),
        C::Cuplength(a) => cuplength_cmd(a, ctx),
        C::LegendreCheck(a) => legendre_cmd(a, ctx),
        C::DdwDemo(a) => ddw_cmd(a, ctx),
    }
}

fn dry_run_outcome(ctx: &RunContext) -> CommandOutcome {
    ctx.say("dry run: inputs valid");
    CommandOutcome {
        status: ExitStatus::Pass,
        summary: json!({ "dry_run": true }),
    }
}

fn plot_or_warn(ctx: &RunContext, what: &str, result: Result<()>) {
    if let Err(e) = result {
        eprintln!("warning: plot {what} skipped: {e}");
    } else {
        ctx.say(format!("plot: {what}"));
    }
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| format!("{:5.1}", m[(r, c)] + 0.0))
            .collect();
        let _ = writeln!(s, "  [{}]", row.join(" "));
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairInput {
    omega1: Vec<Vec<f64>>,
    omega2: Vec<Vec<f64>>,
    #[serde(alias = "I")]
    i: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aux_metric: Option<Vec<Vec<f64>>>,
}

fn structures(args: &StructuresArgs, ctx: &mut RunContext) -> Result<CommandOutcome> {
    if !(args.tol > 0.0) {
        return Err(input_error("tolerance must be positive"));
    }
    let (input, source) = match (args.standard, &args.input, args.random) {
        (Some(n), None, None) => {
            let t = standard_structures(n)?;
            (
                PairInput {
                    omega1: to_rows(&t.omega1),
                    omega2: to_rows(&t.omega2),
                    i: to_rows(&t.i),
                    aux_metric: None,
                },
                None,
            )
        }
        (None, Some(path), None) => {
            let text = fs::read_to_string(path)?;
            let parsed: PairInput = serde_json::from_str(&text)?;
            (parsed, Some(path.as_path()))
        }
        (None, None, Some(n)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let p = random_regularized_pair(n, &mut rng)?;
            (
                PairInput {
                    omega1: to_rows(&p.omega1),
                    omega2: to_rows(&p.omega2),
                    i: to_rows(&p.i),
                    aux_metric: None,
                },
                None,
            )
        }
        _ => {
            return Err(input_error(
                "give exactly one of --standard, --input, --random",
            ))
        }
    };
    let input = ctx.snapshot(source, &input)?;
    let pair = RegularizedPair {
        omega1: from_rows(&input.omega1)?,
        omega2: from_rows(&input.omega2)?,
        i: from_rows(&input.i)?,
    };
    let aux = input.aux_metric.as_deref().map(from_rows).transpose()?;
    let d = pair.omega1.nrows();
    for (name, m) in [("omega2", &pair.omega2), ("i", &pair.i)] {
        if m.nrows() != d {
            return Err(input_error(format!(
                "{name} is {}x{}, expected {d}x{d}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    if let Some(g) = &aux {
        if g.nrows() != d {
            return Err(input_error(format!(
                "aux_metric is {}x{}, expected {d}x{d}",
                g.nrows(),
                g.ncols()
            )));
        }
    }
    let pair_report = check_regularized_pair(&pair, args.tol)?;
    if ctx.dry_run {
        return Ok(dry_run_outcome(ctx));
    }
    for c in &pair_report.checks {
        ctx.say(format!(
            "{:<28} {:.3e}  {}",
            c.name,
            c.residual,
            if c.pass { "ok" } else { "FAILED" }
        ));
    }
    if !pair_report.pass {
        let failed = pair_report.failed().join(", ");
        ctx.say(format!("not a regularized pair: {failed}"));
        let report = json!({ "pass": false, "failed": pair_report.failed(), "pair": pair_report });
        ctx.write_json("report.json", &report)?;
        return Ok(CommandOutcome {
            status: ExitStatus::Fail,
            summary: json!({ "pass": false, "failed": failed }),
        });
    }
    let opts = CompatibleOptions {
        symmetrize: !args.strict,
        tol: args.tol,
    };
    let triple = compatible_triple(&pair, aux.as_ref(), opts)?;
    let residuals = triple.identity_residuals();
    let holo = holomorphic_correspondence(&pair)?;
    let pass = residuals.pass(args.tol) && holo.annihilation_residual < args.tol;
    ctx.say(format!("J =\n{}", format_matrix(&triple.j)));
    ctx.say(format!("K =\n{}", format_matrix(&triple.k)));
    ctx.say(format!(
        "max identity residual {:.3e}",
        residuals.max_identity()
    ));
    ctx.say(format!(
        "holomorphic form: annihilation {:.3e}, rank {} of {}",
        holo.annihilation_residual, holo.rank_on_holomorphic, holo.holomorphic_dim
    ));
    let report = json!({
        "pass": pass,
        "pair": pair_report,
        "triple": triple.to_json(),
        "residuals": residuals,
        "holomorphic": holo,
        "symmetrized_aux_metric": !args.strict,
    });
    ctx.write_json("report.json", &report)?;
    Ok(CommandOutcome {
        status: ExitStatus::from_pass(pass),
        summary: json!({ "pass": pass, "max_identity_residual": residuals.max_identity() }),
    })
}

/// Residual threshold of the symbol sweep.
pub const SYMBOL_TOL: f64 = 1e-10;

fn symbol_sweep(args: &SymbolArgs, ctx: &mut RunContext) -> Result<CommandOutcome> {
    let xis: Vec<f64> = match args.xi {
        Some(x) => vec![x],
        None => {
            if args.xi_steps == 0 || !(args.xi_max >= args.xi_min) {
                return Err(input_error("need xi_steps >= 1 and xi_max >= xi_min"));
            }
            if args.xi_steps == 1 {
                vec![args.xi_min]
            } else {
                (0..args.xi_steps)
                    .map(|k| {
                        args.xi_min
                            + (args.xi_max - args.xi_min) * k as f64 / (args.xi_steps - 1) as f64
                    })
                    .collect()
            }
        }
    };
    if xis.iter().any(|x| !x.is_finite()) || args.m_bound < 0 {
        return Err(input_error("xi must be finite and m_bound nonnegative"));
    }
    if !(args.certificate_xi > 0.0) || args.certificate_m <= 0 {
        return Err(input_error("certificate bounds must be positive"));
    }
    ctx.snapshot(
        None,
        &json!({
            "xi": xis,
            "m_bound": args.m_bound,
            "certificate_xi": args.certificate_xi,
            "certificate_m": args.certificate_m,
        }),
    )?;
    if ctx.dry_run {
        return Ok(dry_run_outcome(ctx));
    }
    let mut csv = String::from(
        "xi,m1,m2,det_re,det_im,formula_re,formula_im,det_residual,\
         lambda_plus_re,lambda_plus_im,lambda_minus_re,lambda_minus_im,eig_residual,margin\n",
    );
    let (mut max_det, mut max_eig, mut rows) = (0.0_f64, 0.0_f64, 0usize);
    for &xi in &xis {
        for m1 in -args.m_bound..=args.m_bound {
            for m2 in -args.m_bound..=args.m_bound {
                let q = SymbolQuery::new(xi, m1, m2);
                let det = symbol::symbol_det(q);
                let eig = symbol::symbol_eigs(q)?;
                let margin = symbol::lower_bound_margin(xi, q.m_squared());
                max_det = max_det.max(det.residual);
                max_eig = max_eig.max(eig.residual);
                rows += 1;
                let _ = writeln!(
                    csv,
                    "{xi},{m1},{m2},{:.17e},{:.17e},{:.17e},{:.17e},{:.3e},{:.17e},{:.17e},{:.17e},{:.17e},{:.3e},{:.17e}",
                    det.numeric.re,
                    det.numeric.im,
                    det.formula.re,
                    det.formula.im,
                    det.residual,
                    eig.lambda_plus.re,
                    eig.lambda_plus.im,
                    eig.lambda_minus.re,
                    eig.lambda_minus.im,
                    eig.residual,
                    margin
                );
            }
        }
    }
    fs::write(ctx.dir.join("symbol.csv"), csv)?;
    let cert = symbol::minimal_n_search(args.certificate_xi, args.certificate_m)?;
    ctx.write_json("certificate.json", &cert)?;
    let pass = max_det < SYMBOL_TOL && max_eig < SYMBOL_TOL;
    ctx.say(format!("rows {rows}"));
    ctx.say(format!(
        "max det residual {max_det:.3e}, max eigenvalue residual {max_eig:.3e}"
    ));
    ctx.say(format!(
        "N_min = {} (margin {:.3e}, certified {})",
        cert.n_min, cert.margin, cert.certified
    ));
    let summary = json!({
        "pass": pass,
        "rows": rows,
        "max_det_residual": max_det,
        "max_eig_residual": max_eig,
        "n_min": cert.n_min,
        "margin": cert.margin,
        "certified": cert.certified,
    });
    ctx.write_json("report.json", &summary)?;
    Ok(CommandOutcome {
        status: ExitStatus::from_pass(pass),
        summary,
    })
}

/// Reads or assembles the problem description and resolves `ρ`.
fn resolve_problem(args: &ProblemArgs, ctx: &mut RunContext) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
        None => {
            let potential = if args.h == "zero" {
                PotentialConfig::Zero
            } else {
                builtin(&args.h, args.n, args.epsilon)?;
                PotentialConfig::Builtin {
                    name: args.h.clone(),
                    epsilon: args.epsilon,
                }
            };
            let c = ExperimentConfig {
                n: args.n,
                grid: args.grid,
                potential,
                rho: args.rho,
                ..ExperimentConfig::default()
            };
            c.validate()?;
            c
        }
    };
    let spec = config.spec()?;
    config.rho = Some(spec.rho());
    ctx.snapshot(args.config.as_deref(), &config)
}

fn build_seed(seed: &SeedArgs, config: &ExperimentConfig) -> Result<TorusField> {
    let (n, grid) = (config.n, config.grid);
    let layout = Layout::Phase { pairs: n };
    let chosen = [
        seed.seed_mode.is_some(),
        seed.seed_constant.is_some(),
        seed.seed_random.is_some(),
    ];
    if chosen.iter().filter(|&&c| c).count() > 1 {
        return Err(input_error(
            "give at most one of --seed-mode, --seed-constant, --seed-random",
        ));
    }
    if let Some(m) = &seed.seed_mode {
        if m.len() != 2 {
            return Err(input_error("--seed-mode takes M1,M2"));
        }
        let (m1, m2) = (m[0] as f64, m[1] as f64);
        let a = seed.amplitude;
        let raw = TorusField::from_fn(layout, grid, |t, out| {
            out.iter_mut().for_each(|x| *x = 0.0);
            out[0] = a * (m1 * t[0] + m2 * t[1]).cos();
        })?;
        return flow::spectral_projection(&raw, seed.branch == Branch::Nonnegative);
    }
    if let Some(q) = &seed.seed_constant {
        if q.len() != 2 * n {
            return Err(input_error(format!(
                "--seed-constant needs {} values",
                2 * n
            )));
        }
        let mut v = q.clone();
        v.resize(4 * n, 0.0);
        return TorusField::constant(layout, grid, &v);
    }
    // Same perturbation as the multistart runner's random seeds.
    let random = ExperimentConfig {
        starts: StartConfig {
            lattice_per_axis: 0,
            random: 1,
            seed: seed.seed_random.unwrap_or(0),
            ..StartConfig::default()
        },
        ..config.clone()
    };
    cuplength::seed_field(&random, 0)
}

fn homotopy_trajectory(
    config: &ExperimentConfig,
    z0: &TorusField,
    r: f64,
    ds: f64,
    checkpoint_every: usize,
) -> Result<Trajectory> {
    if !(r > 0.0) || !(ds > 0.0) {
        return Err(input_error("need r > 0 and ds > 0"));
    }
    let spec = config.spec()?;
    let beta = BetaProfile::new(r, config.n);
    let opts = TrajectoryOptions {
        s_start: -2.0,
        s_end: beta.support_end() + 1.0,
        ds,
        checkpoint_every,
    };
    run_trajectory(z0, &spec, Profile::Homotopy(beta), &opts)
}

fn flow_cmd(args: &FlowArgs, ctx: &mut RunContext) -> Result<CommandOutcome> {
    let config = resolve_problem(&args.problem, ctx)?;
    let z0 = if args.homotopy.is_some()
        && args.seed.seed_mode.is_none()
        && args.seed.seed_constant.is_none()
        && args.seed.seed_random.is_none()
    {
        let mut v = vec![0.5; 2 * config.n];
        v.resize(4 * config.n, 0.0);
        TorusField::constant(Layout::Phase { pairs: config.n }, config.grid, &v)?
    } else {
        build_seed(&args.seed, &config)?
    };
    if !(args.tol > 0.0) || !(args.ds > 0.0) || !(args.s_max > 0.0) {
        return Err(input_error("tol, ds and s_max must be positive"));
    }
    if ctx.dry_run {
        return Ok(dry_run_outcome(ctx));
    }
    let spec = config.spec()?;
    if let Some(r) = args.homotopy {
        let traj = homotopy_trajectory(&config, &z0, r, args.ds, args.checkpoint_every)?;
        traj.write(&ctx.dir.join("trajectory"), json!({ "config": config }))?;
        let mp = flow::max_principle_check(&traj, spec.rho());
        let id = flow::energy_identity_check(&traj, traj.first().s, traj.last().s)?;
        ctx.say(format!("samples {}", traj.samples.len()));
        ctx.say(format!(
            "energy {:.6e}, identity defect {:.3e}, max|p|^2 {:.3e} (rho {:.3})",
            id.energy, id.defect, mp.max_p2, mp.rho
        ));
        if ctx.plots {
            let series: Vec<(f64, f64)> = traj.samples.iter().map(|x| (x.s, x.action)).collect();
            plot_or_warn(
                ctx,
                "action",
                plots::line_plot(&ctx.dir.join("plots/action.png"), &[series], false),
            );
        }
        let summary = json!({
            "homotopy_r": r,
            "samples": traj.samples.len(),
            "energy_identity": id,
            "max_principle": mp,
            "end_residuals": [traj.first().residual, traj.last().residual],
        });
        ctx.write_json("result.json", &summary)?;
        return Ok(CommandOutcome {
            status: ExitStatus::from_pass(mp.holds),
            summary,
        });
    }
    let opts = SolveOptions {
        tol: args.tol,
        s_max: args.s_max,
        ds: args.ds,
        mode: match args.mode {
            ModeArg::Signed => FlowMode::Signed,
            ModeArg::Gradient => FlowMode::Gradient,
        },
        max_steps: args.max_steps,
        ..SolveOptions::default()
    };
    let out = flow_to_solution(&z0, &spec, &opts)?;
    let mut csv = String::from("s,action,residual,max_p2,energy\n");
    for d in &out.history {
        let _ = writeln!(
            csv,
            "{:.12e},{:.17e},{:.17e},{:.17e},{:.17e}",
            d.s, d.action, d.residual, d.max_p2, d.energy
        );
    }
    fs::write(ctx.dir.join("diagnostics.csv"), csv)?;
    out.solution.write_binary(&ctx.dir.join("final.field"))?;
    let monotone = out
        .history
        .windows(2)
        .all(|w| w[1].action <= w[0].action + 1e-12 * (1.0 + w[0].action.abs()));
    ctx.say(format!(
        "status {:?} after {} steps, s = {:.4}, residual {:.3e}",
        out.status, out.steps, out.s_reached, out.residual_norm
    ));
    if let Some(reason) = &out.reason {
        ctx.say(format!("reason: {reason}"));
    }
    ctx.say(format!("action monotone: {monotone}"));
    if ctx.plots {
        let action: Vec<(f64, f64)> = out.history.iter().map(|d| (d.s, d.action)).collect();
        let residual: Vec<(f64, f64)> = out.history.iter().map(|d| (d.s, d.residual)).collect();
        plot_or_warn(
            ctx,
            "action",
            plots::line_plot(&ctx.dir.join("plots/action.png"), &[action], false),
        );
        plot_or_warn(
            ctx,
            "residual",
            plots::line_plot(&ctx.dir.join("plots/residual.png"), &[residual], true),
        );
        plot_or_warn(
            ctx,
            "q1 heatmap",
            plots::heatmap(&ctx.dir.join("plots/q1_final.png"), &out.solution, 0),
        );
    }
    let action = crate::hamiltonian::action(&spec, &out.solution)?;
    let summary = json!({
        "status": out.status,
        "reason": out.reason,
        "steps": out.steps,
        "rejected": out.rejected,
        "s_reached": out.s_reached,
        "residual": out.residual_norm,
        "action": action,
        "action_monotone": monotone,
    });
    ctx.write_json("result.json", &summary)?;
    let status = match out.status {
        FlowStatus::Converged => ExitStatus::Pass,
        FlowStatus::Diverged => ExitStatus::Fail,
        FlowStatus::Exhausted | FlowStatus::Stalled => ExitStatus::Inconclusive,
    };
    Ok(CommandOutcome { status, summary })
}

/// Identity-defect threshold of the energy check.
pub const ENERGY_DEFECT_TOL: f64 = 1e-3;

fn energy_cmd(args: &EnergyArgs, ctx: &mut RunContext) -> Result<CommandOutcome> {
    let (traj, config) = match &args.trajectory {
        Some(dir) => {
            let (traj, extra) = Trajectory::read(dir)?;
            let config: ExperimentConfig = serde_json::from_value(
                extra
                    .get("config")
                    .cloned()
                    .ok_or_else(|| input_error("trajectory.json lacks the config"))?,
            )?;
            config.validate()?;
            let config = ctx.snapshot(Some(&dir.join("trajectory.json")), &config)?;
            if ctx.dry_run {
                return Ok(dry_run_outcome(ctx));
            }
            (traj, config)
        }
        None => {
            let config = resolve_problem(&args.problem, ctx)?;
            let n = config.n;
            let mut q0 = args.q0.clone().unwrap_or_else(|| vec![0.5; 2 * n]);
            if q0.len() != 2 * n {
                return Err(input_error(format!("--q0 needs {} values", 2 * n)));
            }
            if ctx.dry_run {
                return Ok(dry_run_outcome(ctx));
            }
            q0.resize(4 * n, 0.0);
            let z0 = TorusField::constant(Layout::Phase { pairs: n }, config.grid, &q0)?;
            let traj = homotopy_trajectory(&config, &z0, args.r, args.ds, 100)?;
            traj.write(&ctx.dir.join("trajectory"), json!({ "config": config }))?;
            (traj, config)
        }
    };
    let spec = config.spec()?;
    let check = energy_bound_check(&traj, &spec, &HoferSampling::default_for(&spec))?;
    let converged = check.end_residuals.iter().all(|&r| r < args.end_tol);
    let identity_ok = check.identity.defect < ENERGY_DEFECT_TOL;
    ctx.say(format!("E = {:.6e}", check.identity.energy));
    ctx.say(format!("2|h|_Hofer = {:.6e}", check.bound));
    ctx.say(format!("identity defect = {:.3e}", check.identity.defect));
    ctx.say(format!(
        "max|p|^2 = {:.3e} (rho {:.3}), ends residual {:.1e} / {:.1e}",
        check.max_principle.max_p2,
        check.max_principle.rho,
        check.end_residuals[0],
        check.end_residuals[1]
    ));
    if ctx.plots {
        let series: Vec<(f64, f64)> = traj.samples.iter().map(|x| (x.s, x.action)).collect();
        plot_or_warn(
            ctx,
            "action",
            plots::line_plot(&ctx.dir.join("plots/action.png"), &[series], false),
        );
    }
    let pass = identity_ok && check.within_bound && check.max_principle.holds;
    let status = if !converged {
        ExitStatus::Inconclusive
    } else {
        ExitStatus::from_pass(pass)
    };
    let summary = json!({
        "pass": pass,
        "ends_converged": converged,
        "energy": check.identity.energy,
        "hofer_bound": check.bound,
        "identity_defect": check.identity.defect,
        "check": check,
    });
    ctx.write_json("energy.json", &summary)?;
    Ok(CommandOutcome { status, summary })
}

fn cuplength_cmd(args: &CuplengthArgs, ctx: &mut RunContext) -> Result<CommandOutcome> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path)?,
        None => FLAGSHIP_CONFIG.to_string(),
    };
    let config = ExperimentConfig::from_json(&text)?;
    let source = args
        .config
        .as_deref()
        .unwrap_or(Path::new("<bundled trig_n1.json>"));
    let config = ctx.snapshot(Some(source), &config)?;
    if ctx.dry_run {
        return Ok(dry_run_outcome(ctx));
    }
    ctx.say(format!(
        "seeds {} on {} threads",
        config.seed_count(),
        ctx.jobs
    ));
    let run = cuplength::verify_count(&config, ctx.jobs)?;
    cuplength::write_run_dir(&ctx.dir, &run)?;
    let r = &run.report;
    ctx.say(format!(
        "converged {} diverged {} exhausted {} of {}",
        r.converged, r.diverged, r.exhausted, r.seeds
    ));
    ctx.say("cluster  action          residual   kind         members  q-mean");
    for row in &r.table {
        let q: Vec<String> = row.q_mean.iter().map(|x| format!("{x:.6}")).collect();
        ctx.say(format!(
            "{:>7}  {:+.8e}  {:.2e}  {:<11}  {:>7}  [{}]",
            row.cluster,
            row.action,
            row.residual,
            format!("{:?}", row.classification).to_lowercase(),
            row.members,
            q.join(", ")
        ));
    }
    if let Some(reason) = &r.continuum_reason {
        ctx.say(format!("continuum detected: {reason}"));
    }
    ctx.say(format!(
        "distinct {} bound {} status {:?}",
        r.distinct, r.bound, r.status
    ));
    if ctx.plots {
        let series: Vec<Vec<(f64, f64)>> = run
            .result
            .outcomes
            .iter()
            .map(|o| o.trace.clone())
            .collect();
        plot_or_warn(
            ctx,
            "action traces",
            plots::line_plot(&ctx.dir.join("plots/action_traces.png"), &series, false),
        );
        for (ci, c) in run.dedup.clusters.iter().enumerate() {
            let field = &run.result.records[c.representative].field;
            plot_or_warn(
                ctx,
                &format!("cluster {ci} heatmap"),
                plots::heatmap(
                    &ctx.dir.join(format!("plots/cluster_{ci:03}_q1.png")),
                    field,
                    0,
                ),
            );
        }
    }
    let status = match r.status {
        CountStatus::Pass => ExitStatus::Pass,
        CountStatus::Fail => ExitStatus::Fail,
        CountStatus::Inconclusive => ExitStatus::Inconclusive,
    };
    Ok(CommandOutcome {
        status,
        summary: json!({
            "distinct": r.distinct,
            "bound": r.bound,
            "status": r.status,
            "continuum_detected": r.continuum_detected,
        }),
    })
}

/// Threshold of the Lagrange–Hamilton comparison.
pub const LEGENDRE_DEFECT_TOL: f64 = 1e-8;

fn legendre_cmd(args: &LegendreArgs, ctx: &mut RunContext) -> Result<CommandOutcome> {
    if args.samples == 0 {
        return Err(input_error("samples must be positive"));
    }
    let h = builtin(&args.h, 1, args.epsilon)?;
    if h.momentum_dependent() {
        return Err(input_error(
            "the mechanical Lagrangian needs a momentum-independent potential",
        ));
    }
    torus::TorusField::zeros(Layout::Scalar, args.grid)?;
    ctx.snapshot(
        None,
        &json!({ "h": args.h, "epsilon": args.epsilon, "samples": args.samples, "grid": args.grid, "seed": args.seed }),
    )?;
    if ctx.dry_run {
        return Ok(dry_run_outcome(ctx));
    }
    let mech = Arc::new(MechanicalLagrangian::new(h));
    let l = LagrangianSpec::new(mech.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut reports = Vec::new();
    let mut worst = 0.0_f64;
    for k in 0..args.samples {
        let q = torus::random_band_limited(
            Layout::Position { pairs: 1 },
            args.grid,
            3,
            0.5,
            true,
            &mut rng,
        )?;
        let rep = lagrange_hamilton_equivalence(&l, &q)?;
        worst = worst.max(rep.defect).max(rep.momentum_rows);
        ctx.say(format!(
            "sample {k:>3}: EL residual {:.3e}, Hamiltonian residual {:.3e}, defect {:.3e}",
            rep.lagrange_max, rep.hamilton_max, rep.defect
        ));
        reports.push(rep);
    }
    let mut closed = 0.0_f64;
    for _ in 0..100 {
        let t = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];
        let q = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];
        let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let v = legendre(&l, t, &q, &p)?.value;
        closed = closed.max((v - mech.hamiltonian_closed_form(t, &q, &p)).abs());
    }
    ctx.say(format!(
        "max defect {worst:.3e}, Legendre vs closed form {closed:.3e}"
    ));
    let pass = worst < LEGENDRE_DEFECT_TOL && closed < 1e-10;
    let summary = json!({ "pass": pass, "max_defect": worst, "closed_form_defect": closed, "samples": reports });
    ctx.write_json("legendre.json", &summary)?;
    Ok(CommandOutcome {
        status: ExitStatus::from_pass(pass),
        summary: json!({ "pass": pass, "max_defect": worst, "closed_form_defect": closed }),
    })
}

/// Residual threshold of the kernel witnesses.
pub const DDW_TOL: f64 = 1e-12;

fn ddw_cmd(args: &DdwArgs, ctx: &mut RunContext) -> Result<CommandOutcome> {
    if args.samples == 0 || args.band < 1 {
        return Err(input_error("samples and band must be positive"));
    }
    TorusField::zeros(Layout::Scalar, args.grid)?;
    ctx.snapshot(
        None,
        &json!({ "samples": args.samples, "grid": args.grid, "band": args.band, "seed": args.seed }),
    )?;
    if ctx.dry_run {
        return Ok(dry_run_outcome(ctx));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut momenta = Vec::new();
    let mut residuals = Vec::new();
    for _ in 0..args.samples {
        let psi =
            torus::random_band_limited(Layout::Scalar, args.grid, args.band, 1.0, true, &mut rng)?;
        let q0 = rng.gen_range(-1.0..1.0);
        let w = ddw_kernel_witness(&psi, q0)?;
        residuals.push(ddw_residual(&FreeDdw, &w)?.max_abs());
        momenta.push(w.select(Layout::Components { count: 2 }, &[1, 2])?);
    }
    // Rank of the momentum parts: the kernel is not finite-dimensional.
    let k = momenta.len();
    let gram = DMatrix::from_fn(k, k, |a, b| {
        torus::l2_inner(&momenta[a], &momenta[b]).unwrap_or(f64::NAN)
    });
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let top = eig.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let rank = eig
        .iter()
        .filter(|x| x.abs() > 1e-10 * top.max(1e-300))
        .count();
    let max = residuals.iter().fold(0.0_f64, |m, &x| m.max(x));
    ctx.say(format!(
        "witnesses {k}, independent {rank}, max residual {max:.3e}"
    ));
    let pass = max < DDW_TOL;
    let summary =
        json!({ "pass": pass, "max_residual": max, "residuals": residuals, "independent": rank });
    ctx.write_json("ddw.json", &summary)?;
    Ok(CommandOutcome {
        status: ExitStatus::from_pass(pass),
        summary: json!({ "pass": pass, "max_residual": max, "independent": rank }),
    })
}
