//! Kernel elements of the free De Donder–Weyl system from stream functions.

use polyfloer::hamiltonian::ddw::{ddw_kernel_witness, ddw_residual, FreeDdw};
use polyfloer::torus::{random_band_limited, Layout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> polyfloer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for band in [1, 2, 4, 8] {
        let psi = random_band_limited(Layout::Scalar, 32, band, 1.0, true, &mut rng)?;
        let w = ddw_kernel_witness(&psi, 0.5)?;
        println!(
            "band {band}: |p| max {:.3}, residual {:.3e}",
            w.max_abs(),
            ddw_residual(&FreeDdw, &w)?.max_abs()
        );
    }
    Ok(())
}
