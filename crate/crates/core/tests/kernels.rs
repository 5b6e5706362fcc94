use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use parsimony::linalg::{least_squares, pseudoinverse, svd};
use parsimony::rng::{gaussian_matrix, RngStream};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    gaussian_matrix(rows, cols, &mut RngStream::new(seed).generator())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs(rows in 1usize..50, cols in 1usize..100, seed: u64) {
        let a = random_matrix(rows, cols, seed);
        let dec = svd(&a).unwrap();
        let err = (&a - dec.reconstruct()).norm();
        prop_assert!(err <= 1e-10 * a.norm().max(1.0), "err {err}");
        prop_assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pseudoinverse_identities(rows in 1usize..20, cols in 1usize..30, seed: u64) {
        let a = random_matrix(rows, cols, seed);
        let p = pseudoinverse(&a).unwrap();
        let tol = 1e-9 * a.norm().max(1.0) * p.norm().max(1.0);
        prop_assert!((&a * &p * &a - &a).norm() <= tol);
        prop_assert!((&p * &a * &p - &p).norm() <= tol);
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((&ap - ap.transpose()).norm() <= tol);
        prop_assert!((&pa - pa.transpose()).norm() <= tol);
    }

    #[test]
    fn least_squares_has_least_norm(rows in 1usize..10, extra in 1usize..10, seed: u64) {
        let cols = rows + extra;
        let stream = RngStream::new(seed);
        let a = random_matrix(rows, cols, seed);
        let b = DVector::from_iterator(rows, gaussian_matrix(rows, 1, &mut stream.fork(1).generator()).iter().copied());
        let x = least_squares(&a, &b).unwrap();
        prop_assert!((&a * &x - &b).norm() <= 1e-9 * b.norm().max(1.0));
        // Feasible points are x + (I − A†A)z.
        let proj = DMatrix::identity(cols, cols) - pseudoinverse(&a).unwrap() * &a;
        let mut g = stream.fork(2).generator();
        for _ in 0..50 {
            let z = DVector::from_fn(cols, |_, _| g.gen_range(-3.0..3.0));
            let y = &x + &proj * z;
            prop_assert!(y.norm() >= x.norm() - 1e-9);
        }
    }
}

#[test]
fn stream_is_reproducible() {
    let a = RngStream::new(9).fork(3).fork(1);
    let b = RngStream::new(9).fork(3).fork(1);
    let xs: Vec<u64> = (0..32).map({
        let mut g = a.generator();
        move |_| g.gen()
    }).collect();
    let ys: Vec<u64> = (0..32).map({
        let mut g = b.generator();
        move |_| g.gen()
    }).collect();
    assert_eq!(xs, ys);
}

#[test]
fn sibling_streams_look_independent() {
    // Chi-square test of independence on a 4x4 contingency table of paired draws.
    let root = RngStream::new(2024);
    for (i, j) in [(0, 1), (1, 2), (5, 6)] {
        let mut ga = root.fork(i).generator();
        let mut gb = root.fork(j).generator();
        let draws = 10_000;
        let mut table = [[0usize; 4]; 4];
        for _ in 0..draws {
            let u: f64 = ga.gen();
            let v: f64 = gb.gen();
            table[(u * 4.0) as usize][(v * 4.0) as usize] += 1;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
        let cols: Vec<f64> = (0..4).map(|c| table.iter().map(|r| r[c]).sum::<usize>() as f64).collect();
        let mut chi2 = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                let expected = rows[r] * cols[c] / draws as f64;
                chi2 += (table[r][c] as f64 - expected).powi(2) / expected;
            }
        }
        // 9 degrees of freedom, p = 0.001.
        assert!(chi2 < 27.877, "streams {i},{j}: chi2 = {chi2}");
    }
}
