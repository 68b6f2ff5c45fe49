use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use polyfloer::flow::{
    energy, energy_bound_check, energy_density, energy_identity_check, floer_rhs, flow_to_solution,
    imex_step, max_principle_check, run_trajectory, spectral_projection, BetaProfile, FlowMode,
    FlowState, FlowStatus, Profile, SolveOptions, Trajectory, TrajectoryOptions,
};
use polyfloer::hamiltonian::potential::TrigPotential;
use polyfloer::hamiltonian::{action, HamiltonianSpec, HoferSampling};
use polyfloer::symbol::{symbol_matrix, SymbolQuery};
use polyfloer::torus::{mode_transform, random_band_limited, Layout, TorusField};
use polyfloer::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PHASE1: Layout = Layout::Phase { pairs: 1 };

fn cos_sum(eps: f64, rho: f64) -> HamiltonianSpec {
    HamiltonianSpec::new(Arc::new(TrigPotential::cos_sum(1, eps)), rho).unwrap()
}

fn random_phase(grid: usize, band: i64, amplitude: f64, seed: u64) -> TorusField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_band_limited(PHASE1, grid, band, amplitude, true, &mut rng).unwrap()
}

fn state(z: TorusField, spec: HamiltonianSpec) -> FlowState {
    FlowState::new(z, spec, Profile::Constant, 0.0, 1e-2).unwrap()
}

/// Mode vector `ẑ(m)` across the four components.
fn mode_vector(z: &TorusField, m1: i64, m2: i64) -> Vector4<Complex64> {
    let modes = mode_transform(z);
    Vector4::from_fn(|c, _| modes.coefficient(c, m1, m2).unwrap())
}

/// `exp(−s L̂(m)) x` from the eigen-decomposition of the Hermitian symbol.
fn exact_linear(m1: i64, m2: i64, s: f64, x: &Vector4<Complex64>) -> Vector4<Complex64> {
    let l: Matrix4<Complex64> = symbol_matrix(SymbolQuery::new(0.0, m1, m2));
    let eig = SymmetricEigen::new(l);
    let d = Matrix4::from_diagonal(
        &eig.eigenvalues
            .map(|lam| Complex64::new((-s * lam).exp(), 0.0)),
    );
    eig.eigenvectors * d * eig.eigenvectors.adjoint() * x
}

fn single_q_mode(grid: usize) -> TorusField {
    TorusField::from_fn(PHASE1, grid, |t, out| out[0] = 0.3 * t[0].cos()).unwrap()
}

#[test]
fn beta_support_and_plateau() {
    for r in [1.0, 1.5, 2.0, 3.0] {
        let b = BetaProfile::new(r, 1);
        assert_eq!(b.k, 2);
        let end = b.support_end();
        assert!((end - (3.0 * r + 1.0)).abs() < 1e-15);
        for i in 0..=4000 {
            let s = -3.0 + (end + 5.0) * i as f64 / 4000.0;
            let (v, d) = (b.value(s), b.derivative(s));
            if s <= -1.0 || s >= end {
                assert_eq!(v, 0.0);
            }
            if (0.0..=3.0 * r).contains(&s) {
                assert_eq!(v, 1.0);
            }
            if s > -1.0 && s < 0.0 {
                assert!((0.0..=2.0).contains(&d));
            }
            if s > 3.0 * r && s < end {
                assert!((-2.0..=0.0).contains(&d));
            }
        }
    }
}

#[test]
fn beta_vanishes_as_r_goes_to_zero() {
    let sup = |r: f64| {
        let b = BetaProfile::new(r, 1);
        (0..=2000)
            .map(|i| -1.0 + (b.support_end() + 1.0) * i as f64 / 2000.0)
            .map(|s| (b.value(s).abs(), b.derivative(s).abs()))
            .fold((0.0_f64, 0.0_f64), |a, x| (a.0.max(x.0), a.1.max(x.1)))
    };
    let mut last = (f64::INFINITY, f64::INFINITY);
    for r in [0.5, 0.1, 0.01, 0.001] {
        let now = sup(r);
        assert!(now.0 < last.0 && now.1 < last.1);
        last = now;
    }
    assert!(last.0 < 1e-5 && last.1 < 1e-5);
    assert_eq!(sup(0.0), (0.0, 0.0));
}

#[test]
fn rhs_examples() {
    // Exact constant solution: rhs vanishes.
    let spec = cos_sum(0.1, f64::INFINITY);
    let z = TorusField::constant(PHASE1, 16, &[PI, 0.0, 0.0, 0.0]).unwrap();
    assert!(floer_rhs(&state(z, spec)).unwrap().max_abs() < 1e-15);

    // h ≡ 0 and constant momentum: rhs = (0, p₀).
    let z = TorusField::constant(PHASE1, 16, &[0.7, -0.2, 0.5, -1.5]).unwrap();
    let rhs = floer_rhs(&state(z, HamiltonianSpec::free(1))).unwrap();
    assert_eq!(rhs.means(), vec![0.0, 0.0, 0.5, -1.5]);

    // Single q-mode with h ≡ 0: rhs = −L̂(m)ẑ mode by mode.
    let z = single_q_mode(16);
    let rhs = floer_rhs(&state(z.clone(), HamiltonianSpec::free(1))).unwrap();
    for m1 in [-1, 1] {
        let l = symbol_matrix(SymbolQuery::new(0.0, m1, 0));
        let want = -(l * mode_vector(&z, m1, 0));
        assert!((mode_vector(&rhs, m1, 0) - want).norm() < 1e-14);
    }
}

#[test]
fn imex_step_matches_matrix_exponential_to_second_order() {
    let z = single_q_mode(16);
    let x = mode_vector(&z, 1, 0);
    let mut errs = Vec::new();
    for ds in [1e-2, 5e-3, 2.5e-3] {
        let next = imex_step(&state(z.clone(), HamiltonianSpec::free(1)), ds).unwrap();
        errs.push((mode_vector(&next.z, 1, 0) - exact_linear(1, 0, ds, &x)).norm());
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (3.5..4.5).contains(&ratio),
            "local error ratio {ratio}, errors {errs:?}"
        );
    }
}

#[test]
fn imex_global_error_is_first_order() {
    let z = single_q_mode(16);
    let x = mode_vector(&z, 1, 0);
    let s_end = 0.5;
    let exact = exact_linear(1, 0, s_end, &x);
    let err = |ds: f64| {
        let mut st = state(z.clone(), HamiltonianSpec::free(1));
        for _ in 0..(s_end / ds).round() as usize {
            st = imex_step(&st, ds).unwrap();
        }
        (mode_vector(&st.z, 1, 0) - exact).norm()
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    let ratio = e1 / e2;
    assert!((1.8..2.2).contains(&ratio), "{e1} {e2}");
}

#[test]
fn fixed_point_is_preserved() {
    let spec = cos_sum(0.1, f64::INFINITY);
    let z = TorusField::constant(PHASE1, 16, &[PI, 0.0, 0.0, 0.0]).unwrap();
    let next = imex_step(&state(z.clone(), spec), 0.05).unwrap();
    assert!(next.z.sub(&z).unwrap().max_abs() < 1e-12);
}

#[test]
fn unit_step_hits_the_singular_constant_mode() {
    let z = TorusField::zeros(PHASE1, 8).unwrap();
    let err = imex_step(&state(z, HamiltonianSpec::free(1)), 1.0).unwrap_err();
    assert!(matches!(err, Error::SingularModeSolve { m1: 0, m2: 0, .. }));
}

#[test]
fn exact_solution_returns_immediately() {
    let spec = cos_sum(0.1, f64::INFINITY);
    let z = TorusField::constant(PHASE1, 16, &[PI, PI, 0.0, 0.0]).unwrap();
    for mode in [FlowMode::Signed, FlowMode::Gradient] {
        let out = flow_to_solution(
            &z,
            &spec,
            &SolveOptions {
                mode,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.converged());
        assert_eq!(out.s_reached, 0.0);
        assert_eq!(out.steps, 0);
    }
}

#[test]
fn start_near_minimum_converges_to_it() {
    // V = ε(cos q₁ + cos q₂) is minimal at (π, π). The constant position block
    // of the plain gradient flow climbs V, so only the signed flow settles there.
    let spec = cos_sum(0.1, f64::INFINITY);
    let z = TorusField::constant(PHASE1, 16, &[PI + 0.2, PI - 0.1, 0.0, 0.0]).unwrap();
    let out = flow_to_solution(&z, &spec, &SolveOptions::default()).unwrap();
    assert!(out.converged(), "{:?}", out.reason);
    assert!(out.residual_norm < 1e-8);
    let m = out.solution.means();
    assert!(
        (m[0] - PI).abs() < 1e-7 && (m[1] - PI).abs() < 1e-7,
        "{m:?}"
    );
    assert!((action(&spec, &out.solution).unwrap() - 0.2).abs() < 1e-10);
}

#[test]
fn gradient_flow_settles_at_the_maximum_of_v() {
    let spec = cos_sum(0.1, f64::INFINITY);
    let z = TorusField::constant(PHASE1, 16, &[0.2, -0.1, 0.0, 0.0]).unwrap();
    let opts = SolveOptions {
        mode: FlowMode::Gradient,
        ..Default::default()
    };
    let out = flow_to_solution(&z, &spec, &opts).unwrap();
    assert!(out.converged(), "{:?}", out.reason);
    let m = out.solution.means();
    assert!(m[0].abs() < 1e-7 && m[1].abs() < 1e-7, "{m:?}");
    for w in out.history.windows(2) {
        assert!(w[1].action <= w[0].action + 1e-12);
    }
}

#[test]
fn free_flow_collapses_to_a_constant() {
    let mut z = random_phase(16, 3, 0.1, 21);
    let means = z.means();
    for (c, m) in means.iter().enumerate().take(2) {
        z.component_mut(c).iter_mut().for_each(|x| *x -= m);
    }
    let out = flow_to_solution(&z, &HamiltonianSpec::free(1), &SolveOptions::default()).unwrap();
    assert_eq!(out.status, FlowStatus::Converged);
    assert!(out.residual_norm < 1e-8);
    let m = out.solution.means();
    let fluct = out
        .solution
        .sub(&TorusField::constant(PHASE1, 16, &m).unwrap())
        .unwrap()
        .max_abs();
    // The smallest nonzero |λ| is (√5 − 1)/2, so the fluctuation is within tol/0.6.
    assert!(fluct < 2e-8);
    assert!(m[2].abs() < 1e-8 && m[3].abs() < 1e-8);
}

#[test]
fn stationary_trajectory_has_no_energy() {
    let spec = cos_sum(0.1, f64::INFINITY);
    let z = TorusField::constant(PHASE1, 16, &[0.0, PI, 0.0, 0.0]).unwrap();
    let opts = TrajectoryOptions {
        s_start: 0.0,
        s_end: 1.0,
        ds: 0.01,
        checkpoint_every: 10,
    };
    let traj = run_trajectory(&z, &spec, Profile::Constant, &opts).unwrap();
    assert_eq!(energy(&traj, 0.0, 1.0).unwrap(), 0.0);
    assert_eq!(energy_identity_check(&traj, 0.0, 1.0).unwrap().defect, 0.0);
    let cps = &traj.checkpoints;
    let e = energy_density(&cps[0].1, &cps[1].1, &cps[2].1, 0.1).unwrap();
    assert_eq!(e.max_abs(), 0.0);
    assert!(matches!(
        energy(&traj, 0.5, 0.5),
        Err(Error::InsufficientSamples(_))
    ));
}

#[test]
fn autonomous_energy_identity() {
    let spec = cos_sum(0.2, f64::INFINITY);
    let z = spectral_projection(&random_phase(16, 2, 0.05, 3), true).unwrap();
    let opts = TrajectoryOptions {
        s_start: 0.0,
        s_end: 1.0,
        ds: 1e-3,
        checkpoint_every: 0,
    };
    let traj = run_trajectory(&z, &spec, Profile::Constant, &opts).unwrap();
    let id = energy_identity_check(&traj, 0.0, 1.0).unwrap();
    assert_eq!(id.beta_term, 0.0);
    assert!(id.energy > 0.0);
    assert!(id.defect < 1e-4, "{id:?}");
    for w in traj.samples.windows(2) {
        assert!(w[1].action <= w[0].action + 1e-12);
    }
}

#[test]
fn homotopy_energy_bound_and_max_principle() {
    let rho = 4.0;
    let spec = cos_sum(0.1, rho);
    let beta = BetaProfile::new(1.0, 1);
    let z = TorusField::constant(PHASE1, 16, &[0.4, -1.1, 0.0, 0.0]).unwrap();
    let opts = TrajectoryOptions {
        s_start: -2.0,
        s_end: beta.support_end() + 1.0,
        ds: 0.01,
        checkpoint_every: 100,
    };
    let traj = run_trajectory(&z, &spec, Profile::Homotopy(beta), &opts).unwrap();
    let sampling = HoferSampling::default_for(&spec);
    let rep = energy_bound_check(&traj, &spec, &sampling).unwrap();
    assert!(traj.converged_ends(1e-6), "{:?}", rep.end_residuals);
    assert!(rep.identity.defect < 1e-3, "{:?}", rep.identity);
    assert!(rep.identity.beta_term.abs() > 0.0);
    assert!((rep.hofer - 0.4).abs() < 1e-12);
    assert!(rep.within_bound && rep.identity.energy <= 0.8 + 1e-2);
    assert!(rep.max_principle.holds && rep.max_principle.max_p2 <= rho);
    assert!(max_principle_check(&traj, 1e-30).max_p2 == rep.max_principle.max_p2);
}

#[test]
fn density_decays_along_linear_flow_of_a_decaying_mode() {
    let raw = TorusField::from_fn(PHASE1, 16, |t, out| out[2] = 0.5 * t[0].cos()).unwrap();
    let z = spectral_projection(&raw, true).unwrap();
    let opts = TrajectoryOptions {
        s_start: 0.0,
        s_end: 2.0,
        ds: 0.01,
        checkpoint_every: 1,
    };
    let traj = run_trajectory(&z, &HamiltonianSpec::free(1), Profile::Constant, &opts).unwrap();
    let cps = &traj.checkpoints;
    let mut last = f64::INFINITY;
    for k in (1..cps.len() - 1).step_by(20) {
        let e = energy_density(&cps[k - 1].1, &cps[k].1, &cps[k + 1].1, 0.01).unwrap();
        let mean = e.means()[0];
        assert!(mean < last, "density grew at checkpoint {k}");
        last = mean;
    }
}

#[test]
fn trajectory_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = cos_sum(0.1, f64::INFINITY);
    let z = random_phase(8, 2, 0.05, 8);
    let opts = TrajectoryOptions {
        s_start: 0.0,
        s_end: 0.2,
        ds: 0.01,
        checkpoint_every: 5,
    };
    let traj = run_trajectory(&z, &spec, Profile::Constant, &opts).unwrap();
    traj.write(dir.path(), serde_json::json!({"note": 1}))
        .unwrap();
    let (back, extra) = Trajectory::read(dir.path()).unwrap();
    assert_eq!(extra["note"], 1);
    assert_eq!(back.samples.len(), traj.samples.len());
    assert_eq!(back.checkpoints.len(), traj.checkpoints.len());
    for (a, b) in back.samples.iter().zip(&traj.samples) {
        assert_eq!(a.action, b.action);
        assert_eq!(a.kinetic, b.kinetic);
    }
    assert_eq!(back.checkpoints[1].1.data(), traj.checkpoints[1].1.data());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn beta_slope_is_bounded(r in 0.0f64..4.0, n in 1usize..4) {
        let b = BetaProfile::new(r, n);
        for i in 0..=2000 {
            let s = -2.0 + (b.support_end() + 3.0) * i as f64 / 2000.0;
            prop_assert!(b.derivative(s).abs() <= 2.0);
            prop_assert!((0.0..=1.0).contains(&b.value(s)));
            let h = 1e-6;
            let fd = (b.value(s + h) - b.value(s - h)) / (2.0 * h);
            prop_assert!((fd - b.derivative(s)).abs() < 1e-4);
        }
    }

    #[test]
    fn imex_step_decreases_action(seed in any::<u64>()) {
        let spec = cos_sum(0.2, f64::INFINITY);
        let z = random_phase(16, 2, 0.1, seed);
        let st = state(z, spec.clone());
        let ds = 1e-3;
        let next = imex_step(&st, ds).unwrap();
        let (a0, a1) = (st.action().unwrap(), next.action().unwrap());
        prop_assert!(a1 <= a0 + 10.0 * ds * ds * (1.0 + a0.abs()), "{a0} -> {a1}");
    }

    #[test]
    fn advance_never_raises_the_action(seed in any::<u64>()) {
        let spec = cos_sum(0.2, f64::INFINITY);
        let mut st = state(random_phase(16, 2, 0.3, seed), spec);
        st.ds = 0.05;
        for _ in 0..20 {
            let rep = st.advance().unwrap();
            prop_assert!(rep.action_after <= rep.action_before + 1e-12 * (1.0 + rep.action_before.abs()));
        }
        prop_assert_eq!(st.diagnostics.len(), 20);
    }
}
