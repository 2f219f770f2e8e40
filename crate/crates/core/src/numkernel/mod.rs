//! Numerical kernel: complex linear algebra with explicit tolerances, and
//! exact rationals.

mod linalg;
mod rational;

pub use linalg::{
    eigenvalues, eigenvector, hstack, joint_nullspace, least_squares, log2_det_identity_plus,
    normalize_columns, nullspace_basis, range_basis, rank_tol, singular_values, span_contains,
    span_residual, vstack, ComplexMatrix, ComplexVector, Tolerance,
};
pub use rational::{rat, Rational};

#[cfg(test)]
mod props {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn outer_sum(r: usize, c: usize, d: usize, seed: u64) -> ComplexMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let mut h = ComplexMatrix::zeros(r, c);
        for _ in 0..d {
            let a = ComplexMatrix::from_fn(r, 1, |_, _| g());
            let b = ComplexMatrix::from_fn(c, 1, |_, _| g());
            h += a * b.transpose();
        }
        h
    }

    fn matrix_strategy() -> impl Strategy<Value = ComplexMatrix> {
        (1usize..7, 1usize..7, 0usize..4, any::<u64>()).prop_map(|(r, c, d, seed)| outer_sum(r, c, d, seed))
    }

    fn pair_strategy() -> impl Strategy<Value = (ComplexMatrix, ComplexMatrix)> {
        (1usize..7, 1usize..4, 1usize..5, 0usize..4, 0usize..4, any::<u64>()).prop_map(|(r, c1, c2, d1, d2, seed)| {
            (outer_sum(r, c1, d1, seed), outer_sum(r, c2, d2, seed.wrapping_add(1)))
        })
    }

    proptest! {
        #[test]
        fn rank_nullity(h in matrix_strategy()) {
            let tol = Tolerance::default();
            let n = nullspace_basis(&h, &tol);
            prop_assert_eq!(rank_tol(&h, &tol) + n.ncols(), h.ncols());
            prop_assert!((&h * &n).norm() <= tol.residual_tol * h.norm().max(1.0));
            let gram = n.adjoint() * &n;
            prop_assert!((gram - ComplexMatrix::identity(n.ncols(), n.ncols())).norm() <= tol.residual_tol);
        }

        #[test]
        fn containment_matches_rank_test((u, w) in pair_strategy()) {
            let tol = Tolerance::default();
            let joined = hstack(u.nrows(), &[&u, &w]).unwrap();
            let by_rank = rank_tol(&joined, &tol) == rank_tol(&w, &tol);
            prop_assert_eq!(span_contains(&u, &w, &tol).unwrap(), by_rank);
        }
    }
}
