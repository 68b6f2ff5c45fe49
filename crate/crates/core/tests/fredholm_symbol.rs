use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use polyfloer::symbol::{
    certify_margin, det_formula, eigen_formula, lower_bound_margin, minimal_n_search,
    multiset_distance, symbol_det, symbol_eigs, symbol_matrix, symbol_matrix_pairs, symbol_report,
    MarginStatus, SymbolQuery, N_MIN,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn q(xi: f64, m1: i64, m2: i64) -> SymbolQuery {
    SymbolQuery::new(xi, m1, m2)
}

/// Margin of the lower bound from `|λ±|² = (1 ± σ)²/4 + ξ²`, worked by hand:
/// `(1 + |m|² − σ) / 2`, independent of `ξ`.
fn margin_by_hand(m_sq: f64) -> f64 {
    (1.0 + m_sq - (1.0 + 4.0 * m_sq).sqrt()) / 2.0
}

#[test]
fn matrix_examples() {
    let z = c(0.0, 0.0);
    let mut minus_p = Matrix4::from_element(z);
    minus_p[(2, 2)] = c(-1.0, 0.0);
    minus_p[(3, 3)] = c(-1.0, 0.0);
    assert_eq!(symbol_matrix(q(0.0, 0, 0)), minus_p);

    let mut shifted = minus_p;
    for d in 0..4 {
        shifted[(d, d)] += c(0.0, 1.0);
    }
    assert_eq!(symbol_matrix(q(1.0, 0, 0)), shifted);

    let i = c(0.0, 1.0);
    #[rustfmt::skip]
    let want = Matrix4::new(
        z, z, -i, z,
        z, z, z, -i,
        i, z, c(-1.0, 0.0), z,
        z, i, z, c(-1.0, 0.0),
    );
    assert_eq!(symbol_matrix(q(0.0, 1, 0)), want);
}

#[test]
fn determinant_examples() {
    let r = symbol_det(q(0.0, 0, 0));
    assert_eq!(r.formula, c(0.0, 0.0));
    assert!(r.numeric.norm() < 1e-15);
    let r = symbol_det(q(1.0, 0, 0));
    assert_eq!(r.formula, c(0.0, 2.0));
    assert!((r.numeric - c(0.0, 2.0)).norm() < 1e-12);
    let r = symbol_det(q(0.0, 1, 0));
    assert_eq!(r.formula, c(1.0, 0.0));
    assert!((r.numeric - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn eigenvalue_examples() {
    let r = symbol_eigs(q(0.0, 0, 0)).unwrap();
    assert!((r.lambda_plus - c(-1.0, 0.0)).norm() < 1e-15);
    assert!(r.lambda_minus.norm() < 1e-15);
    let want = [c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)];
    assert!(multiset_distance(&r.numeric, &want) < 1e-12);

    let s5 = 5f64.sqrt();
    let r = symbol_eigs(q(0.0, 1, 0)).unwrap();
    assert!((r.lambda_plus - c((-1.0 - s5) / 2.0, 0.0)).norm() < 1e-15);
    assert!((r.lambda_minus - c((-1.0 + s5) / 2.0, 0.0)).norm() < 1e-15);
    assert!(r.residual < 1e-10);

    let (lp, lm) = eigen_formula(q(0.0, 10, 10));
    assert!(lp.norm_sqr() >= 100.0 && lm.norm_sqr() >= 100.0);
}

#[test]
fn only_the_origin_is_singular_and_its_kernel_is_constant_positions() {
    for xi in [-2.0, -0.5, 0.0, 0.3, 4.0] {
        for m1 in -3..=3 {
            for m2 in -3..=3 {
                let rep = symbol_report(q(xi, m1, m2)).unwrap();
                assert_eq!(rep.invertible, !(xi == 0.0 && m1 == 0 && m2 == 0));
                assert!(rep.det_eig_residual < 1e-12);
            }
        }
    }
    let m = symbol_matrix(q(0.0, 0, 0));
    for e in [
        Vector4::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)),
        Vector4::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)),
    ] {
        assert_eq!((m * e).norm(), 0.0);
    }
}

#[test]
fn pairs_replicate_the_block() {
    let b = symbol_matrix(q(0.7, 2, -1));
    let big = symbol_matrix_pairs(q(0.7, 2, -1), 3);
    assert_eq!(big.nrows(), 12);
    for j in 0..3 {
        let idx = [j, 3 + j, 6 + j, 9 + j];
        for (a, &r) in idx.iter().enumerate() {
            for (bb, &col) in idx.iter().enumerate() {
                assert_eq!(big[(r, col)], b[(a, bb)]);
            }
        }
    }
    let nonzero = big.iter().filter(|x| x.norm() > 0.0).count();
    let per_block = b.iter().filter(|x| x.norm() > 0.0).count();
    assert_eq!(nonzero, 3 * per_block);
}

#[test]
fn margin_matches_hand_formula_and_minimal_n() {
    for m_sq in [0.0, 1.0, 2.0, 5.0, 8.0, 200.0] {
        for xi in [-10.0, -1.0, 0.0, 1.0, 10.0] {
            assert!(
                (lower_bound_margin(xi, m_sq) - margin_by_hand(m_sq)).abs() < 1e-9 * (1.0 + m_sq)
            );
        }
    }
    assert!(margin_by_hand(1.0) < 0.0);
    assert_eq!(margin_by_hand(2.0), 0.0);
    assert!(margin_by_hand(5.0) > 0.0);

    let cert = minimal_n_search(10.0, 10).unwrap();
    assert_eq!(cert.n_min, u64::from(N_MIN));
    assert_eq!(N_MIN, 1);
    assert!(cert.certified);
    assert!(cert.margin >= -cert.roundoff);
    assert_eq!(
        certify_margin(1, (1, 0), 10.0, 1e-8).status,
        MarginStatus::Fails
    );
    assert_eq!(
        certify_margin(5, (2, 1), 10.0, 1e-8).status,
        MarginStatus::Holds
    );
}

#[test]
fn lower_bound_spot_checks_above_minimal_n() {
    for m1 in -12i64..=12 {
        for m2 in -12i64..=12 {
            let m_sq = (m1 * m1 + m2 * m2) as f64;
            if m_sq <= f64::from(N_MIN) {
                continue;
            }
            for xi in [0.0, 1.0, -1.0, 10.0, -10.0] {
                let (lp, lm) = eigen_formula(q(xi, m1, m2));
                let bound = xi * xi + 0.5 * m_sq;
                assert!(
                    lp.norm_sqr() >= bound - 1e-9 && lm.norm_sqr() >= bound - 1e-9,
                    "({m1},{m2}) ξ={xi}"
                );
            }
        }
    }
    // The zero mode reduces to |λ±|² ≥ ξ², with equality for λ₋ at ξ = 0.
    let (lp, lm) = eigen_formula(q(0.0, 0, 0));
    assert_eq!(lm.norm_sqr(), 0.0);
    assert!(lp.norm_sqr() >= 0.0);
}

#[test]
fn formulas_hold_on_a_large_random_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ab0);
    let (mut det_worst, mut eig_worst) = (0.0_f64, 0.0_f64);
    for _ in 0..10_000 {
        let query = q(
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-100..=100),
            rng.gen_range(-100..=100),
        );
        det_worst = det_worst.max(symbol_det(query).residual);
        eig_worst = eig_worst.max(symbol_eigs(query).unwrap().residual);
    }
    assert!(det_worst < 1e-10, "{det_worst}");
    assert!(eig_worst < 1e-10, "{eig_worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn determinant_is_product_of_formula_eigenvalues(xi in -50.0f64..50.0, m1 in -50i64..50, m2 in -50i64..50) {
        let query = q(xi, m1, m2);
        let (lp, lm) = eigen_formula(query);
        let prod = lp * lp * lm * lm;
        let f = det_formula(query);
        prop_assert!((prod - f).norm() < 1e-12 * f.norm().max(1.0));
    }

    #[test]
    fn symbol_is_normal(xi in -20.0f64..20.0, m1 in -20i64..20, m2 in -20i64..20) {
        let m = symbol_matrix(q(xi, m1, m2));
        let comm = m * m.adjoint() - m.adjoint() * m;
        prop_assert!(comm.norm() < 1e-10 * (1.0 + m.norm()).powi(2));
    }
}
