use descriptor_bvp::bvp::{
    classify, solve_least_squares, solve_min_norm, solve_pinv, solve_regularized, Case,
    ReducedSystem, Regularizer,
};
use descriptor_bvp::linalg::{null_space, pseudoinverse, spectral_norm, ComplexMatrix, C64};
use descriptor_bvp::oracle::{
    det_polynomial, penrose_defect, poly_from_roots, random_matrix, random_regular_pencil, rng,
};
use descriptor_bvp::pencil::{verify_wcf, weierstrass_decompose, WeierstrassForm};
use descriptor_bvp::problem::ProblemFile;
use proptest::prelude::*;

fn spectrum(form: &WeierstrassForm) -> Vec<C64> {
    form.finite_eigenvalues
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.value, e.algebraic_multiplicity))
        .collect()
}

/// Largest distance in a greedy nearest-neighbour matching.
fn spectral_distance(mut a: Vec<C64>, mut b: Vec<C64>) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst: f64 = 0.0;
    while let Some(x) = a.pop() {
        let (i, d) = b
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|s, t| s.1.total_cmp(&t.1))
            .unwrap();
        worst = worst.max(d);
        b.remove(i);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_recovers_construction(p in 0usize..7, q in 0usize..7, seed in any::<u64>()) {
        prop_assume!(p + q > 0);
        let built = random_regular_pencil(p, q, seed, 1e3);
        let (form, _) = weierstrass_decompose(&built.pencil).unwrap();
        prop_assert_eq!((form.p, form.q), (p, q));
        let r = verify_wcf(&built.pencil, &form).unwrap();
        let scale = spectral_norm(built.pencil.f()).unwrap() + spectral_norm(built.pencil.g()).unwrap();
        prop_assert!(r.f_residual.max(r.g_residual) <= 1e-8 * scale, "{:?}", r);
        let d = spectral_distance(spectrum(&form), spectrum(&built.ground_truth));
        prop_assert!(d <= 1e-8, "{:?} layout: spectrum off by {:e}", built.layout, d);
    }

    #[test]
    fn determinant_matches_recovered_spectrum(p in 1usize..6, q in 0usize..5, seed in any::<u64>()) {
        let built = random_regular_pencil(p, q, seed, 1e2);
        let (form, _) = weierstrass_decompose(&built.pencil).unwrap();
        let coeffs = det_polynomial(&built.pencil, 1.0).unwrap();
        let product = poly_from_roots(&spectrum(&form), coeffs[p]);
        let scale = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (i, c) in coeffs.iter().enumerate() {
            let want = product.get(i).copied().unwrap_or_default();
            prop_assert!((c - want).norm() <= 1e-8 * scale, "coefficient {}: {} vs {}", i, c, want);
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal(rows in 1usize..8, extra in 0usize..4, seed in any::<u64>()) {
        let p = rows;
        let rows = rows + extra;
        let mut r = rng(seed);
        let rs = ReducedSystem::new(random_matrix(&mut r, rows, p), random_matrix(&mut r, rows, 1)).unwrap();
        let c = solve_least_squares(&rs).unwrap();
        let gradient = &rs.k.adjoint() * &(&rs.l - &(&rs.k * &c));
        let nk = spectral_norm(&rs.k).unwrap();
        prop_assert!(gradient.norm_fro() <= 1e-8 * nk * rs.l.norm_fro());
    }

    #[test]
    fn min_norm_is_feasible_and_orthogonal_to_kernel(rows in 1usize..5, extra in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = rows + extra;
        let rs = ReducedSystem::new(random_matrix(&mut r, rows, p), random_matrix(&mut r, rows, 1)).unwrap();
        prop_assert_eq!(classify(&rs, p, None).unwrap().case, Case::InfiniteSolutions);
        let c = solve_min_norm(&rs).unwrap();
        let scale = spectral_norm(&rs.k).unwrap() * c.norm_fro() + rs.l.norm_fro();
        prop_assert!((&(&rs.k * &c) - &rs.l).norm_fro() <= 1e-10 * scale);
        let z = null_space(&rs.k, 1e-12).unwrap();
        prop_assert!((&z.adjoint() * &c).norm_fro() <= 1e-10 * c.norm_fro().max(1.0));
        let via_pinv = solve_pinv(&rs).unwrap();
        prop_assert!((&via_pinv - &c).norm_fro() <= 1e-9 * c.norm_fro().max(1.0));
    }

    #[test]
    fn pseudoinverse_satisfies_penrose(rows in 1usize..7, cols in 1usize..7, rank in 0usize..7, seed in any::<u64>()) {
        let mut r = rng(seed);
        let rank = rank.min(rows).min(cols);
        let k = &random_matrix(&mut r, rows, rank) * &random_matrix(&mut r, rank, cols);
        let x = pseudoinverse(&k, None).unwrap();
        prop_assert!(penrose_defect(&k, &x).unwrap() <= 1e-10);
    }

    #[test]
    fn scalar_regularizer_matches_explicit_matrix(rows in 1usize..6, p in 1usize..5, theta in 1e-3f64..1.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let rs = ReducedSystem::new(random_matrix(&mut r, rows, p), random_matrix(&mut r, rows, 1)).unwrap();
        let a = solve_regularized(&rs, &Regularizer::Theta(theta)).unwrap();
        let b = solve_regularized(&rs, &Regularizer::Matrix(ComplexMatrix::identity(p).scale_real(theta))).unwrap();
        let cond = (spectral_norm(&rs.k).unwrap() / theta).powi(2);
        prop_assert!((&a - &b).norm_fro() <= 1e-14 * cond * a.norm_fro().max(1.0));
    }

    #[test]
    fn problem_file_round_trips(seed in any::<u64>(), n in 1usize..9, complex in any::<bool>()) {
        let mut r = rng(seed);
        let mut mat = |rows, cols| {
            let m = random_matrix(&mut r, rows, cols);
            if complex { m } else { ComplexMatrix::from_fn(rows, cols, |i, j| C64::new(m[(i, j)].re, 0.0)) }
        };
        let (f, g, a1, a2, b1, b2) = (mat(3, 3), mat(3, 3), mat(2, 3), mat(1, 3), mat(2, 1), mat(1, 1));
        let text = format!(
            r#"{{"F": {}, "G": {}, "A1": {}, "A2": {}, "B1": {}, "B2": {}, "N": {n}, "options": {{"theta": 0.001, "seed": {seed}}}}}"#,
            json(&f), json(&g), json(&a1), json(&a2), column(&b1), column(&b2)
        );
        let file = ProblemFile::parse(&text).unwrap();
        prop_assert_eq!(&file.f, &f);
        let once = file.to_json_string();
        let again = ProblemFile::parse(&once).unwrap();
        prop_assert_eq!(&again, &file);
        prop_assert_eq!(again.to_json_string(), once);
    }
}

fn entry(z: C64) -> String {
    if z.im == 0.0 {
        format!("{:?}", z.re)
    } else {
        format!("[{:?}, {:?}]", z.re, z.im)
    }
}

fn json(m: &ComplexMatrix) -> String {
    let rows: Vec<String> = (0..m.rows())
        .map(|i| {
            format!(
                "[{}]",
                m.row(i)
                    .iter()
                    .map(|&z| entry(z))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn column(v: &ComplexMatrix) -> String {
    format!(
        "[{}]",
        (0..v.rows())
            .map(|i| entry(v[(i, 0)]))
            .collect::<Vec<_>>()
            .join(", ")
    )
}
