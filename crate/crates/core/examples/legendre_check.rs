//! Euler–Lagrange and Hamiltonian residuals agree for a mechanical Lagrangian.

use std::sync::Arc;

use polyfloer::hamiltonian::builtin;
use polyfloer::hamiltonian::lagrangian::{
    lagrange_hamilton_equivalence, LagrangianSpec, MechanicalLagrangian,
};
use polyfloer::torus::{random_band_limited, Layout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> polyfloer::Result<()> {
    let l = LagrangianSpec::new(Arc::new(MechanicalLagrangian::new(builtin(
        "cos_sum", 1, 0.1,
    )?)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..5 {
        let q = random_band_limited(Layout::Position { pairs: 1 }, 32, 3, 0.5, true, &mut rng)?;
        let r = lagrange_hamilton_equivalence(&l, &q)?;
        println!(
            "sample {k}: EL {:.3e}  Hamiltonian {:.3e}  defect {:.3e}",
            r.lagrange_max, r.hamilton_max, r.defect
        );
    }
    Ok(())
}
