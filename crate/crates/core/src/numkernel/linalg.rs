//! Tolerance-aware complex linear algebra on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Rank and residual thresholds.
///
/// `relative_rank_tol` is compared against `sigma / sigma_max`;
/// `residual_tol` bounds zero-forcing products and projection residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub relative_rank_tol: f64,
    pub residual_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            relative_rank_tol: 1e-9,
            residual_tol: 1e-8,
        }
    }
}

impl Tolerance {
    pub fn new(relative_rank_tol: f64, residual_tol: f64) -> Result<Self> {
        for (name, v) in [("relative_rank_tol", relative_rank_tol), ("residual_tol", residual_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Tolerance(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Tolerance {
            relative_rank_tol,
            residual_tol,
        })
    }
}

/// Singular values in descending order. Empty for an empty matrix.
pub fn singular_values(a: &ComplexMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn rank_from_singular_values(s: &[f64], tol: &Tolerance) -> usize {
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    let cut = tol.relative_rank_tol * smax;
    s.iter().filter(|&&x| x > cut).count()
}

/// Numerical rank: singular values above `relative_rank_tol * sigma_max`.
pub fn rank_tol(a: &ComplexMatrix, tol: &Tolerance) -> usize {
    rank_from_singular_values(&singular_values(a), tol)
}

/// Full SVD of `a` padded with zero rows so that `V` is square.
/// Returns (singular values aligned with rows of v_t, v_t, rank).
fn padded_svd(a: &ComplexMatrix, tol: &Tolerance) -> (Vec<f64>, ComplexMatrix, usize) {
    let (r, c) = a.shape();
    let padded = if r < c {
        let mut p = ComplexMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut sorted = s.clone();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let rank = rank_from_singular_values(&sorted, tol);
    (s, v_t, rank)
}

/// Orthonormal basis of the right nullspace, one column per null direction.
pub fn nullspace_basis(a: &ComplexMatrix, tol: &Tolerance) -> ComplexMatrix {
    let (_, c) = a.shape();
    if c == 0 {
        return ComplexMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return ComplexMatrix::identity(c, c);
    }
    let (s, v_t, rank) = padded_svd(a, tol);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let null_rows = &order[rank..];
    let mut out = ComplexMatrix::zeros(c, null_rows.len());
    for (k, &row) in null_rows.iter().enumerate() {
        for j in 0..c {
            out[(j, k)] = v_t[(row, j)].conj();
        }
    }
    out
}

/// Nullspace of the vertical stack of `mats`.
pub fn joint_nullspace(mats: &[&ComplexMatrix], tol: &Tolerance) -> Result<ComplexMatrix> {
    let stacked = vstack(mats)?;
    Ok(nullspace_basis(&stacked, tol))
}

/// Orthonormal basis of the column space.
pub fn range_basis(a: &ComplexMatrix, tol: &Tolerance) -> ComplexMatrix {
    if a.is_empty() {
        return ComplexMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len())
        .filter(|&k| smax > 0.0 && s[k] > tol.relative_rank_tol * smax)
        .collect();
    let mut out = ComplexMatrix::zeros(a.nrows(), keep.len());
    for (k, &col) in keep.iter().enumerate() {
        out.set_column(k, &u.column(col));
    }
    out
}

/// Whether every column of `u` lies in span(`w`), up to
/// `residual_tol * |column|`.
pub fn span_contains(u: &ComplexMatrix, w: &ComplexMatrix, tol: &Tolerance) -> Result<bool> {
    Ok(span_residual(u, w, tol)? <= tol.residual_tol)
}

/// Largest relative projection residual of the columns of `u` onto
/// span(`w`). Zero columns contribute 0.
pub fn span_residual(u: &ComplexMatrix, w: &ComplexMatrix, tol: &Tolerance) -> Result<f64> {
    if u.nrows() != w.nrows() {
        return Err(Error::Dimension(format!(
            "span_contains: {} rows vs {} rows",
            u.nrows(),
            w.nrows()
        )));
    }
    let q = range_basis(w, tol);
    let mut worst: f64 = 0.0;
    for col in u.column_iter() {
        let n = col.norm();
        if n == 0.0 {
            continue;
        }
        let proj = &q * (q.adjoint() * col);
        let r = (col - proj).norm() / n;
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Minimum-norm least-squares solution of `a x = y` and the residual
/// `|a x - y|`. Rank-deficient `a` is handled through the truncated SVD.
pub fn least_squares(a: &ComplexMatrix, y: &ComplexVector, tol: &Tolerance) -> Result<(ComplexVector, f64)> {
    if a.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "least_squares: {} rows vs rhs of length {}",
            a.nrows(),
            y.len()
        )));
    }
    if a.ncols() == 0 {
        return Ok((ComplexVector::zeros(0), y.norm()));
    }
    if a.nrows() == 0 {
        return Ok((ComplexVector::zeros(a.ncols()), 0.0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = if smax > 0.0 { tol.relative_rank_tol * smax } else { 1.0 };
    let x = svd
        .solve(y, eps)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))?;
    let residual = (a * &x - y).norm();
    Ok((x, residual))
}

/// Horizontal concatenation; all blocks must share the row count.
pub fn hstack(rows: usize, blocks: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        if b.ncols() == 0 {
            continue;
        }
        if b.nrows() != rows {
            return Err(Error::Dimension(format!("hstack: block has {} rows, expected {rows}", b.nrows())));
        }
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    Ok(out)
}

/// Vertical concatenation; all blocks must share the column count.
pub fn vstack(blocks: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    let first = blocks.first().ok_or(Error::MissingConstraintSet)?;
    let cols = first.ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        if b.ncols() != cols {
            return Err(Error::Dimension(format!("vstack: block has {} columns, expected {cols}", b.ncols())));
        }
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    Ok(out)
}

/// Eigenvalues of a square complex matrix, read off the diagonal of its
/// complex Schur form.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<Complex64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|k| t[(k, k)]).collect())
}

/// Unit eigenvector for `lambda`: the right singular vector of
/// `a - lambda I` belonging to its smallest singular value.
pub fn eigenvector(a: &ComplexMatrix, lambda: Complex64) -> ComplexVector {
    let n = a.nrows();
    let shifted = a - ComplexMatrix::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty");
    v_t.row(k).adjoint()
}

/// `log2 det(I + a)` for Hermitian positive semidefinite `a`.
pub fn log2_det_identity_plus(a: &ComplexMatrix) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let m = ComplexMatrix::identity(n, n) + a;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("I + K is not positive definite".into()))?;
    let l = chol.l();
    let v: f64 = (0..n).map(|k| l[(k, k)].re.log2()).sum::<f64>() * 2.0;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical("non-finite log-determinant".into()))
    }
}

/// Scale every nonzero column to unit Euclidean norm.
pub fn normalize_columns(a: &mut ComplexMatrix) {
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= Complex64::new(n, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, c, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn outer_sum(rng: &mut ChaCha8Rng, n: usize, m: usize, d: usize) -> ComplexMatrix {
        let mut h = ComplexMatrix::zeros(n, m);
        for _ in 0..d {
            let a = rand_mat(rng, n, 1);
            let b = rand_mat(rng, m, 1);
            h += &a * b.transpose();
        }
        h
    }

    #[test]
    fn rank_examples() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(rank_tol(&ComplexMatrix::identity(3, 3), &tol), 3);
        assert_eq!(rank_tol(&outer_sum(&mut rng, 4, 4, 1), &tol), 1);
        assert_eq!(rank_tol(&outer_sum(&mut rng, 4, 4, 2), &tol), 2);
        assert_eq!(rank_tol(&ComplexMatrix::zeros(3, 3), &tol), 0);
        assert_eq!(rank_tol(&ComplexMatrix::zeros(0, 4), &tol), 0);
    }

    #[test]
    fn rank_two_outer_sum_matches_exact_rank() {
        // Integer-valued factors: the exact rank of a b^T + c d^T is 2
        // because (a, c) and (b, d) are each linearly independent.
        let tol = Tolerance::default();
        let a = [1.0, 2.0, 0.0, -1.0];
        let b = [3.0, 1.0, 1.0, 0.0];
        let c = [0.0, 1.0, 1.0, 2.0];
        let d = [1.0, -2.0, 0.0, 5.0];
        let h = ComplexMatrix::from_fn(4, 4, |r, s| Complex64::new(a[r] * b[s] + c[r] * d[s], 0.0));
        assert_eq!(rank_tol(&h, &tol), 2);
    }

    #[test]
    fn nullspace_examples() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = nullspace_basis(&ComplexMatrix::zeros(3, 4), &tol);
        assert_eq!(z.shape(), (4, 4));
        assert!((z.adjoint() * &z - ComplexMatrix::identity(4, 4)).norm() < 1e-12);

        let h = outer_sum(&mut rng, 4, 4, 1);
        let n = nullspace_basis(&h, &tol);
        assert_eq!(n.ncols(), 3);
        assert!((&h * &n).norm() < tol.residual_tol);

        assert_eq!(nullspace_basis(&ComplexMatrix::identity(2, 2), &tol).ncols(), 0);

        // wide matrix: 2 x 5 with rank 2 leaves 3 null directions
        let w = rand_mat(&mut rng, 2, 5);
        let n = nullspace_basis(&w, &tol);
        assert_eq!(n.ncols(), 3);
        assert!((&w * &n).norm() < tol.residual_tol);
    }

    #[test]
    fn joint_nullspace_examples() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = outer_sum(&mut rng, 5, 5, 2);
        let b = outer_sum(&mut rng, 5, 5, 2);
        let n = joint_nullspace(&[&a, &b], &tol).unwrap();
        assert_eq!(n.ncols(), 1);
        assert!((&a * &n).norm() < tol.residual_tol && (&b * &n).norm() < tol.residual_tol);

        let id = ComplexMatrix::identity(5, 5);
        assert_eq!(joint_nullspace(&[&a, &id], &tol).unwrap().ncols(), 0);

        let single = joint_nullspace(&[&a], &tol).unwrap();
        assert_eq!(single, nullspace_basis(&a, &tol));

        assert!(matches!(joint_nullspace(&[], &tol), Err(Error::MissingConstraintSet)));
    }

    #[test]
    fn span_examples() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = rand_mat(&mut rng, 5, 2);
        let c = rand_mat(&mut rng, 2, 1);
        assert!(span_contains(&(&w * c), &w, &tol).unwrap());
        let u = rand_mat(&mut rng, 5, 1);
        let stacked = hstack(5, &[&u, &w]).unwrap();
        // independent oracle: the rank jumps iff u leaves span(w)
        let outside = rank_tol(&stacked, &tol) > rank_tol(&w, &tol);
        assert!(outside);
        assert!(!span_contains(&u, &w, &tol).unwrap());
        assert!(span_contains(&ComplexMatrix::zeros(5, 2), &w, &tol).unwrap());
        assert!(span_contains(&u, &ComplexMatrix::zeros(4, 1), &tol).is_err());
    }

    #[test]
    fn least_squares_examples() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = rand_mat(&mut rng, 3, 1).column(0).into_owned();
        let (x, r) = least_squares(&ComplexMatrix::identity(3, 3), &y, &tol).unwrap();
        assert!((x - &y).norm() < 1e-14 && r < 1e-14);

        let a = rand_mat(&mut rng, 6, 3);
        let x0 = rand_mat(&mut rng, 3, 1).column(0).into_owned();
        let (x, r) = least_squares(&a, &(&a * &x0), &tol).unwrap();
        assert!((x - x0).norm() < tol.residual_tol && r < tol.residual_tol);

        // add a component orthogonal to the column span
        let left_null = nullspace_basis(&a.adjoint(), &tol);
        let off = left_null.column(0).into_owned();
        let (_, r) = least_squares(&a, &(&a * rand_mat(&mut rng, 3, 1).column(0) + &off * Complex64::new(0.5, 0.0)), &tol).unwrap();
        assert!((r - 0.5).abs() < 1e-10);
    }

    #[test]
    fn eigen_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = rand_mat(&mut rng, 6, 6);
        let eig = eigenvalues(&a).unwrap();
        assert_eq!(eig.len(), 6);
        for l in eig {
            let v = eigenvector(&a, l);
            assert!((&a * &v - &v * l).norm() < 1e-10);
        }
    }

    #[test]
    fn tolerance_bounds() {
        assert!(Tolerance::new(1e-9, 1e-8).is_ok());
        assert!(Tolerance::new(0.0, 1e-8).is_err());
        assert!(Tolerance::new(1e-9, 1.0).is_err());
    }
}
