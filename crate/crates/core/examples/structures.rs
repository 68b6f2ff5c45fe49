//! Compatible triple of a random regularized pair on R^8.

use polyfloer::structure::{
    check_regularized_pair, compatible_triple, holomorphic_correspondence, random_regularized_pair,
    CompatibleOptions, ALGEBRA_TOL,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> polyfloer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pair = random_regularized_pair(2, &mut rng)?;
    let report = check_regularized_pair(&pair, ALGEBRA_TOL)?;
    for c in &report.checks {
        println!(
            "{:<28} {:.3e}  {}",
            c.name,
            c.residual,
            if c.pass { "ok" } else { "FAILED" }
        );
    }
    let triple = compatible_triple(&pair, None, CompatibleOptions::default())?;
    let r = triple.identity_residuals();
    println!(
        "max identity residual {:.3e}, min eigenvalue of g {:.4}",
        r.max_identity(),
        r.g_min_eigenvalue
    );
    let holo = holomorphic_correspondence(&pair)?;
    println!(
        "holomorphic form annihilation {:.3e}",
        holo.annihilation_residual
    );
    Ok(())
}
