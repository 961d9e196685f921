//! Dense linear-algebra kernels shared by the fitting and synthesis paths.
//!
//! Decompositions (symmetric eigendecomposition, Householder QR, small SVD)
//! are delegated to `nalgebra`; this module pins the conventions the rest of
//! the crate relies on: descending eigenvalue order with a deterministic
//! column sign, blocked summation for long accumulations, and a
//! factor-once/solve-many least-squares interface for the tall thin systems
//! produced by the autoregression trainer.

use crate::error::{Result, RevarError};
use crate::ops;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Fixed block size for blocked summation; chosen once so parallel and
/// sequential accumulation orders agree bit-for-bit.
pub const SUM_BLOCK: usize = 1024;

/// Sum of a slice by fixed-size blocks (block partials first, then a
/// sequential pass over partials). Order is independent of caller context.
pub fn blocked_sum(values: &[f64]) -> f64 {
    if values.len() <= SUM_BLOCK {
        return values.iter().sum();
    }
    values
        .chunks(SUM_BLOCK)
        .map(|c| c.iter().sum::<f64>())
        .sum()
}

/// Mean with blocked summation.
pub fn blocked_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    blocked_sum(values) / values.len() as f64
}

/// Dense matrix-vector product with a fixed row-major accumulation order.
/// Records `rows * cols` multiplies on the operation tally.
pub fn matvec(a: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let (rows, cols) = a.dim();
    assert_eq!(cols, x.len(), "matvec shape mismatch");
    ops::record_multiplies((rows * cols) as u64);
    let mut out = Array1::zeros(rows);
    for (r, o) in a.outer_iter().zip(out.iter_mut()) {
        let mut acc = 0.0;
        for (a_ij, x_j) in r.iter().zip(x.iter()) {
            acc += a_ij * x_j;
        }
        *o = acc;
    }
    out
}

/// y = A^T x with the same deterministic ordering as [`matvec`].
pub fn matvec_transposed(a: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let (rows, cols) = a.dim();
    assert_eq!(rows, x.len(), "matvec_transposed shape mismatch");
    ops::record_multiplies((rows * cols) as u64);
    let mut out = Array1::zeros(cols);
    for (r, x_i) in a.outer_iter().zip(x.iter()) {
        for (o, a_ij) in out.iter_mut().zip(r.iter()) {
            *o += a_ij * x_i;
        }
    }
    out
}

/// Elementwise product of two vectors, counted as `n` multiplies.
pub fn diag_mul(d: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    assert_eq!(d.len(), x.len(), "diag_mul shape mismatch");
    ops::record_multiplies(d.len() as u64);
    let mut out = Array1::zeros(d.len());
    for ((o, a), b) in out.iter_mut().zip(d.iter()).zip(x.iter()) {
        *o = a * b;
    }
    out
}

/// Symmetric eigendecomposition with eigenvalues sorted descending, negative
/// round-off clamped to zero, and each eigenvector column flipped so its
/// largest-magnitude entry is positive. The input is symmetrized first to
/// shed accumulation dust.
pub fn symmetric_eigen_desc(matrix: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(RevarError::dims(
            "symmetric eigendecomposition",
            format!("{n}x{n}"),
            format!("{}x{}", n, matrix.ncols()),
        ));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(RevarError::NonFinite("covariance matrix".into()));
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
        }
    }
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src].max(0.0);
        let col = eig.eigenvectors.column(src);
        // Deterministic sign: first entry of largest magnitude must be positive.
        let mut pivot = 0;
        let mut best = 0.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    Ok((vectors, values))
}

/// Max absolute entry of `B^T B - I`; orthonormality defect of the columns.
pub fn orthonormality_defect(basis: ArrayView2<'_, f64>) -> f64 {
    let n = basis.ncols();
    let gram = basis.t().dot(&basis);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Tall thin least squares, factored once and reused across right-hand sides.
///
/// Householder QR of the regressor matrix; rank deficiency is detected on the
/// diagonal of R and resolved with a minimum-norm solution through an SVD of
/// the small triangular factor.
pub struct LeastSquares {
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    rows: usize,
    cols: usize,
    rank_deficient: bool,
}

/// Solution block together with a rank-deficiency flag.
pub struct LeastSquaresSolution {
    /// `cols x k` matrix; column `j` solves `min ||rhs_j - Z beta||`.
    pub coefficients: DMatrix<f64>,
    pub rank_deficient: bool,
}

impl LeastSquares {
    pub fn factor(z: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = z.shape();
        if rows < cols {
            return Err(RevarError::Underdetermined { rows, cols });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(RevarError::NonFinite("regressor matrix".into()));
        }
        let qr = z.qr();
        let r = qr.r();
        let max_diag = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
        let tol = max_diag * (cols as f64) * f64::EPSILON;
        let rank_deficient = (0..cols).any(|i| r[(i, i)].abs() <= tol);
        Ok(LeastSquares {
            qr,
            rows,
            cols,
            rank_deficient,
        })
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// Solve for a block of right-hand sides (`rows x k`).
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<LeastSquaresSolution> {
        if rhs.nrows() != self.rows {
            return Err(RevarError::dims(
                "least-squares right-hand side",
                format!("{} rows", self.rows),
                format!("{} rows", rhs.nrows()),
            ));
        }
        let k = rhs.ncols();
        let mut qtb = rhs.clone();
        self.qr.q_tr_mul(&mut qtb);
        let reduced = qtb.rows(0, self.cols).into_owned();
        let r = self.qr.r();

        let coefficients = if !self.rank_deficient {
            let mut beta = reduced;
            // Back substitution, all right-hand sides at once.
            for i in (0..self.cols).rev() {
                for col in 0..k {
                    let mut acc = beta[(i, col)];
                    for j in (i + 1)..self.cols {
                        acc -= r[(i, j)] * beta[(j, col)];
                    }
                    beta[(i, col)] = acc / r[(i, i)];
                }
            }
            beta
        } else {
            log::warn!(
                "rank-deficient regressor matrix ({}x{}); using minimum-norm solution",
                self.rows,
                self.cols
            );
            minimum_norm_via_svd(&r, &reduced)?
        };
        Ok(LeastSquaresSolution {
            coefficients,
            rank_deficient: self.rank_deficient,
        })
    }
}

/// Minimum-norm solution of `min ||c - R beta||` for a (possibly singular)
/// square triangular factor, via SVD with relative cutoff.
fn minimum_norm_via_svd(r: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = r.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = smax * (r.ncols() as f64) * f64::EPSILON;
    let utc = u.transpose() * c;
    let mut scaled = utc;
    for i in 0..svd.singular_values.len() {
        let s = svd.singular_values[i];
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        for col in 0..scaled.ncols() {
            scaled[(i, col)] *= inv;
        }
    }
    Ok(v_t.transpose() * scaled)
}

/// Copy an `ndarray` matrix into a column-major `nalgebra` matrix.
pub fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Copy a `nalgebra` matrix into an `ndarray` one.
pub fn to_array2(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn to_dvector(a: ArrayView1<'_, f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn blocked_sum_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(blocked_sum(&v), 45.0);
    }

    #[test]
    fn blocked_sum_close_to_naive_on_long_input() {
        let v: Vec<f64> = (0..5000).map(|i| (i as f64).sin()).collect();
        let direct: f64 = v.iter().sum();
        assert_abs_diff_eq!(blocked_sum(&v), direct, epsilon = 1e-9);
    }

    #[test]
    fn eigen_of_two_by_two_exchange_matrix() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let (e, l) = symmetric_eigen_desc(&m).unwrap();
        assert_abs_diff_eq!(l[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1], 1.0, epsilon = 1e-12);
        let s = 1.0 / 2.0f64.sqrt();
        assert_abs_diff_eq!(e[(0, 0)], s, epsilon = 1e-12);
        assert_abs_diff_eq!(e[(1, 0)], s, epsilon = 1e-12);
        // Second column is (1, -1)/sqrt(2) up to the sign rule.
        assert_abs_diff_eq!(e[(0, 1)] * e[(1, 1)], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn eigen_reconstructs_identity() {
        let m = Array2::<f64>::eye(5);
        let (e, l) = symmetric_eigen_desc(&m).unwrap();
        for v in l.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        assert!(orthonormality_defect(e.view()) < 1e-10);
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let m = array![[1.0, f64::NAN], [0.0, 1.0]];
        assert!(matches!(
            symmetric_eigen_desc(&m),
            Err(RevarError::NonFinite(_))
        ));
    }

    #[test]
    fn least_squares_solves_exact_system() {
        // z * [2, -1]^T + 0 noise
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
        let beta_true = DMatrix::from_column_slice(2, 1, &[2.0, -1.0]);
        let rhs = &z * &beta_true;
        let ls = LeastSquares::factor(z).unwrap();
        let sol = ls.solve(&rhs).unwrap();
        assert!(!sol.rank_deficient);
        assert_abs_diff_eq!(sol.coefficients[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.coefficients[(1, 0)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_minimum_norm_on_duplicated_column() {
        // Two identical columns: solutions form a line; minimum norm splits evenly.
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let rhs = DMatrix::from_column_slice(3, 1, &[2.0, 4.0, 6.0]);
        let ls = LeastSquares::factor(z).unwrap();
        assert!(ls.rank_deficient());
        let sol = ls.solve(&rhs).unwrap();
        assert_abs_diff_eq!(sol.coefficients[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.coefficients[(1, 0)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn least_squares_rejects_underdetermined() {
        let z = DMatrix::zeros(2, 5);
        assert!(matches!(
            LeastSquares::factor(z),
            Err(RevarError::Underdetermined { .. })
        ));
    }

    #[test]
    fn matvec_agrees_with_ndarray_dot() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let x = array![1.0, -1.0, 2.0];
        let got = matvec(a.view(), x.view());
        assert_abs_diff_eq!(got[0], 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got[1], 11.0, epsilon = 1e-15);
    }

    #[test]
    fn matvec_records_multiplies() {
        ops::take_multiplies();
        let a = Array2::<f64>::zeros((3, 4));
        let x = Array1::<f64>::zeros(4);
        let _ = matvec(a.view(), x.view());
        assert_eq!(ops::take_multiplies(), 12);
    }
}
