//! Spectral calculus on T^2: modes, derivatives, the Dirac operator.

use polyfloer::structure::standard_structures;
use polyfloer::torus::{
    dirac, laplacian, mode_transform, random_band_limited, sobolev_norm, Layout, TorusField,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> polyfloer::Result<()> {
    let f = TorusField::from_fn(Layout::Scalar, 16, |t, out| {
        out[0] = (2.0 * t[0] - t[1]).cos()
    })?;
    let modes = mode_transform(&f);
    println!(
        "cos(2t1 - t2): coefficient at (2,-1) = {:.6}",
        modes.coefficient(0, 2, -1).unwrap_or_default()
    );

    let t = standard_structures(1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = random_band_limited(Layout::Phase { pairs: 1 }, 64, 20, 1.0, true, &mut rng)?;
    let dd = dirac(&dirac(&z, &t)?, &t)?;
    let defect = dd.add(&laplacian(&z))?.l2_norm();
    println!(
        "|Dirac^2 z + Laplacian z| = {defect:.3e} (H^2 norm {:.3e})",
        sobolev_norm(&z, 2)
    );
    Ok(())
}
