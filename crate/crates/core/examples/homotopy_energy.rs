//! Homotopy trajectory with the energy identity, Hofer bound and maximum principle.

use std::sync::Arc;

use polyfloer::flow::{
    energy_bound_check, run_trajectory, BetaProfile, Profile, TrajectoryOptions,
};
use polyfloer::hamiltonian::potential::TrigPotential;
use polyfloer::hamiltonian::{HamiltonianSpec, HoferSampling};
use polyfloer::torus::{Layout, TorusField};

fn main() -> polyfloer::Result<()> {
    let spec = HamiltonianSpec::new(Arc::new(TrigPotential::cos_sum(1, 0.1)), 4.0)?;
    let beta = BetaProfile::new(1.0, 1);
    let z0 = TorusField::constant(Layout::Phase { pairs: 1 }, 16, &[0.4, -1.1, 0.0, 0.0])?;
    let opts = TrajectoryOptions {
        s_start: -2.0,
        s_end: beta.support_end() + 1.0,
        ds: 0.01,
        checkpoint_every: 100,
    };
    let traj = run_trajectory(&z0, &spec, Profile::Homotopy(beta), &opts)?;
    let rep = energy_bound_check(&traj, &spec, &HoferSampling::default_for(&spec))?;
    println!(
        "energy {:.6e}, 2|h|_Hofer {:.6e}, within bound {}",
        rep.identity.energy, rep.bound, rep.within_bound
    );
    println!("identity defect {:.3e}", rep.identity.defect);
    println!(
        "max|p|^2 {:.3e} (rho {})",
        rep.max_principle.max_p2, rep.max_principle.rho
    );
    println!(
        "end residuals {:.1e} {:.1e}",
        rep.end_residuals[0], rep.end_residuals[1]
    );
    Ok(())
}
