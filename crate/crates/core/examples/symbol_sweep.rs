//! Fourier symbol at a few frequencies and the minimal-mode certificate.

use polyfloer::symbol::{minimal_n_search, symbol_report, SymbolQuery};

fn main() -> polyfloer::Result<()> {
    for (xi, m1, m2) in [(0.0, 0, 0), (0.0, 1, 0), (1.5, 2, -1), (-10.0, 7, 3)] {
        let r = symbol_report(SymbolQuery::new(xi, m1, m2))?;
        println!(
            "xi {xi:>5} m ({m1:>2},{m2:>2})  det {:.6}  lambda+ {:.6}  lambda- {:.6}  invertible {}",
            r.det.numeric, r.eigs.lambda_plus, r.eigs.lambda_minus, r.invertible
        );
    }
    let cert = minimal_n_search(100.0, 30)?;
    println!(
        "N_min {} margin {:.3e} certified {}",
        cert.n_min, cert.margin, cert.certified
    );
    Ok(())
}
