//! Signed flow from a perturbed constant to a solution of the trig system.

use std::sync::Arc;

use polyfloer::flow::{flow_to_solution, SolveOptions};
use polyfloer::hamiltonian::potential::TrigPotential;
use polyfloer::hamiltonian::{action, HamiltonianSpec};
use polyfloer::torus::{random_band_limited, Layout, TorusField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> polyfloer::Result<()> {
    let spec = HamiltonianSpec::new(Arc::new(TrigPotential::cos_sum(1, 0.1)), 4.0)?;
    let layout = Layout::Phase { pairs: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = TorusField::constant(layout, 32, &[2.8, 0.3, 0.0, 0.0])?;
    let z0 = base.add(&random_band_limited(layout, 32, 2, 0.02, false, &mut rng)?)?;
    let out = flow_to_solution(&z0, &spec, &SolveOptions::default())?;
    println!(
        "status {:?} after {} steps, s = {:.2}",
        out.status, out.steps, out.s_reached
    );
    println!(
        "residual {:.3e}, action {:+.6e}",
        out.residual_norm,
        action(&spec, &out.solution)?
    );
    println!("q mean {:?}", &out.solution.means()[..2]);
    Ok(())
}
