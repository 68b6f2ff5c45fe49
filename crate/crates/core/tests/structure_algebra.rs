use nalgebra::DMatrix;
use num_complex::Complex64;
use polyfloer::structure::{
    check_regularized_pair, compatible_triple, current_check, holomorphic_correspondence,
    holomorphic_form, op_norm, random_regularized_pair, split_holomorphic, standard_structures,
    CompatibleOptions, RegularizedPair, StructureTriple, ALGEBRA_TOL,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn m4(rows: [[f64; 4]; 4]) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |r, c| rows[r][c])
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn pair_of(t: &StructureTriple) -> RegularizedPair {
    t.pair()
}

#[test]
fn standard_n1_matches_hand_written_matrices() {
    let t = standard_structures(1).unwrap();
    let j = m4([
        [0., 0., -1., 0.],
        [0., 0., 0., -1.],
        [1., 0., 0., 0.],
        [0., 1., 0., 0.],
    ]);
    let k = m4([
        [0., 0., 0., 1.],
        [0., 0., -1., 0.],
        [0., 1., 0., 0.],
        [-1., 0., 0., 0.],
    ]);
    let i = m4([
        [0., -1., 0., 0.],
        [1., 0., 0., 0.],
        [0., 0., 0., 1.],
        [0., 0., -1., 0.],
    ]);
    assert_eq!(t.j, j);
    assert_eq!(t.k, k);
    assert_eq!(t.i, i);
    assert_eq!(t.g, DMatrix::identity(4, 4));
}

#[test]
fn standard_identities_are_exact_for_several_n() {
    for n in 1..=4 {
        let t = standard_structures(n).unwrap();
        let id = DMatrix::<f64>::identity(4 * n, 4 * n);
        assert_eq!(&t.j * &t.j, -&id);
        assert_eq!(&t.k * &t.k, -&id);
        assert_eq!(&t.i * &t.j, t.k);
        assert_eq!(&t.j * &t.k + &t.k * &t.j, DMatrix::zeros(4 * n, 4 * n));
    }
}

#[test]
fn standard_pair_passes_with_zero_residuals() {
    let t = standard_structures(1).unwrap();
    let r = check_regularized_pair(&pair_of(&t), ALGEBRA_TOL).unwrap();
    assert!(r.pass);
    for c in &r.checks {
        if c.name.contains("non-degenerate") {
            continue;
        }
        assert_eq!(c.residual, 0.0, "{}", c.name);
    }
}

#[test]
fn sign_flip_fails_exactly_one_identity() {
    let t = standard_structures(1).unwrap();
    let mut p = pair_of(&t);
    p.omega2 = -p.omega2;
    let r = check_regularized_pair(&p, ALGEBRA_TOL).unwrap();
    assert!(!r.pass);
    assert_eq!(r.failed(), vec!["omega2 = -omega1(., I.)"]);
}

#[test]
fn standard_forms_with_identity_metric_reproduce_standard_triple() {
    let t = standard_structures(1).unwrap();
    let id = DMatrix::identity(4, 4);
    let out = compatible_triple(&pair_of(&t), Some(&id), CompatibleOptions::default()).unwrap();
    assert!(max_abs(&(&out.j - &t.j)) < 1e-14);
    assert!(max_abs(&(&out.k - &t.k)) < 1e-14);
    assert!(max_abs(&(&out.g - &id)) < 1e-14);
}

#[test]
fn doubled_forms_double_the_metric_only() {
    let t = standard_structures(1).unwrap();
    let p = RegularizedPair {
        omega1: &t.omega1 * 2.0,
        omega2: &t.omega2 * 2.0,
        i: t.i.clone(),
    };
    let out = compatible_triple(
        &p,
        Some(&DMatrix::identity(4, 4)),
        CompatibleOptions::default(),
    )
    .unwrap();
    assert!(max_abs(&(&out.g - DMatrix::identity(4, 4) * 2.0)) < 1e-13);
    assert!(max_abs(&(&out.j - &t.j)) < 1e-13);
    assert!(max_abs(&(&out.k - &t.k)) < 1e-13);
}

#[test]
fn strict_mode_rejects_metric_not_invariant_under_i() {
    let t = standard_structures(1).unwrap();
    let mut g = DMatrix::identity(4, 4);
    g[(0, 0)] = 3.0;
    let strict = CompatibleOptions {
        symmetrize: false,
        tol: ALGEBRA_TOL,
    };
    assert!(compatible_triple(&pair_of(&t), Some(&g), strict).is_err());
    let out = compatible_triple(&pair_of(&t), Some(&g), CompatibleOptions::default()).unwrap();
    assert!(out.identity_residuals().pass(1e-10));
}

#[test]
fn non_pair_is_rejected_by_compatible_triple() {
    let t = standard_structures(1).unwrap();
    let mut p = pair_of(&t);
    p.omega2 = -p.omega2;
    assert!(compatible_triple(&p, None, CompatibleOptions::default()).is_err());
}

#[test]
fn holomorphic_form_of_standard_pair_kills_antiholomorphic_vectors() {
    let t = standard_structures(1).unwrap();
    let wc = holomorphic_form(&t.omega1, &t.omega2).unwrap();
    let i_c = t.i.map(|x| Complex64::new(x, 0.0));
    // X = v + i I v satisfies I X = −i X.
    for basis in 0..4 {
        let v = nalgebra::DVector::from_fn(4, |r, _| {
            Complex64::new(f64::from(u8::from(r == basis)), 0.0)
        });
        let x = &v + (&i_c * &v) * Complex64::new(0.0, 1.0);
        let ix = &i_c * &x;
        assert!((ix + &x * Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((&wc * &x).norm() < 1e-15);
    }
    let rep = holomorphic_correspondence(&pair_of(&t)).unwrap();
    assert_eq!(rep.rank_on_holomorphic, rep.holomorphic_dim);
    assert_eq!(rep.holomorphic_dim, 2);
}

#[test]
fn current_examples() {
    let pts: Vec<Vec<f64>> = vec![
        vec![0.3, -0.2, 0.7, 0.1],
        vec![1.0, 0.5, -0.4, 0.9],
        vec![-2.0, 0.1, 0.0, 1.5],
    ];
    let konst = current_check(|_: &[f64]| [1.5, -0.5], 1, &pts, 1e-5, 1e-6).unwrap();
    assert!(konst.is_current);
    for s in &konst.samples {
        assert!(s.x_f.iter().all(|x| x.abs() < 1e-12));
    }
    let poly = |z: &[f64]| {
        let w = Complex64::new(z[0], z[1]) * Complex64::new(z[2], -z[3]);
        [w.re, w.im]
    };
    let r = current_check(poly, 1, &pts, 1e-5, 1e-6).unwrap();
    assert!(r.is_current);
    assert!(r.field_mismatch.unwrap() < 1e-8);
    let r = current_check(|z: &[f64]| [z[0], 0.0], 1, &pts, 1e-5, 1e-6).unwrap();
    assert!(!r.is_current);
    assert!((r.relation_max[0] - 1.0).abs() < 1e-8);
}

fn holomorphic_cubic(coef: [[f64; 2]; 6]) -> impl Fn(&[f64]) -> [f64; 2] {
    move |z: &[f64]| {
        let a = Complex64::new(z[0], z[1]);
        let b = Complex64::new(z[2], -z[3]);
        let c = |k: usize| Complex64::new(coef[k][0], coef[k][1]);
        let w = c(0) + c(1) * a + c(2) * b + c(3) * a * b + c(4) * a * a * a + c(5) * b * b * a;
        [w.re, w.im]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_pairs_give_compatible_triples(seed in any::<u64>(), big in any::<bool>()) {
        let n = if big { 2 } else { 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_regularized_pair(n, &mut rng).unwrap();
        prop_assert!(check_regularized_pair(&p, 1e-10).unwrap().pass);
        let t = compatible_triple(&p, None, CompatibleOptions::default()).unwrap();
        let r = t.identity_residuals();
        prop_assert!(r.max_identity() < 1e-10, "{:?}", r);
        prop_assert!(r.g_min_eigenvalue > 0.0);
        let id = DMatrix::<f64>::identity(4 * n, 4 * n);
        let scale = op_norm(&p.omega1).max(1.0);
        prop_assert!(op_norm(&(&t.j * &t.j + &id)) < 1e-10 * scale);
        prop_assert!(op_norm(&(&t.i * &t.j - &t.k)) < 1e-10 * scale);
        prop_assert!(max_abs(&(&t.g - t.g.transpose())) < 1e-10 * scale);
    }

    #[test]
    fn holomorphic_round_trip_is_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_regularized_pair(1, &mut rng).unwrap();
        let wc = holomorphic_form(&p.omega1, &p.omega2).unwrap();
        let (a, b) = split_holomorphic(&wc);
        prop_assert_eq!(a, p.omega1.clone());
        prop_assert_eq!(b, p.omega2.clone());
        let rep = holomorphic_correspondence(&p).unwrap();
        prop_assert!(rep.annihilation_residual < 1e-10);
        prop_assert_eq!(rep.rank_on_holomorphic, rep.holomorphic_dim);
    }

    #[test]
    fn holomorphic_polynomials_are_currents(
        coef in prop::array::uniform6(prop::array::uniform2(-1.0f64..1.0)),
        pt in prop::collection::vec(-1.5f64..1.5, 4),
    ) {
        let r = current_check(holomorphic_cubic(coef), 1, &[pt], 1e-5, 1e-6).unwrap();
        prop_assert!(r.is_current, "{:?}", r.relation_max);
    }

    #[test]
    fn real_valued_components_are_not_currents(
        a in prop::array::uniform4(0.2f64..1.0),
        pt in prop::collection::vec(-1.5f64..1.5, 4),
    ) {
        let f = move |z: &[f64]| [a[0] * z[0] + a[1] * z[1] + a[2] * z[2] * z[2] + a[3] * z[3], 0.0];
        let r = current_check(f, 1, &[pt], 1e-5, 1e-6).unwrap();
        prop_assert!(!r.is_current);
    }
}
