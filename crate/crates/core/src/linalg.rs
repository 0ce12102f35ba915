//! Small dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
/// Column `k` of the returned matrix is the eigenvector for `values[k]`.
pub fn sym_eigen_sorted(m: &Mat) -> (Vec<f64>, Mat) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Mat::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn rank(m: &Mat, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    m.clone().svd(false, false).rank(tol)
}

/// Minimum-norm least-squares solution of `m x = b`, together with the
/// residual norm `‖m x − b‖`.
pub fn min_norm_solve(m: &Mat, b: &Vector) -> (Vector, f64) {
    let svd = m.clone().svd(true, true);
    let scale = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = scale.max(1.0) * 1e-12 * m.nrows().max(m.ncols()) as f64;
    let x = svd
        .solve(b, tol)
        .unwrap_or_else(|_| Vector::zeros(m.ncols()));
    let residual = (m * &x - b).norm();
    (x, residual)
}

/// Assemble a dense matrix from a grid of blocks. Every block in a row must
/// share a row count and every block in a column a column count.
pub fn block_matrix(rows: &[Vec<Mat>]) -> Mat {
    let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
    let widths: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
    let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (row, h) in rows.iter().zip(&heights) {
        let mut c0 = 0;
        for (block, w) in row.iter().zip(&widths) {
            debug_assert_eq!((block.nrows(), block.ncols()), (*h, *w));
            out.view_mut((r0, c0), (*h, *w)).copy_from(block);
            c0 += w;
        }
        r0 += h;
    }
    out
}

pub fn is_positive_definite(m: &Mat) -> bool {
    symmetrize(m).cholesky().is_some()
}

/// `(U ⊗ I_n) x` for an agent-stacked vector `x` (agent blocks of length `n`).
pub fn kron_apply(u: &Mat, x: &Vector, n: usize) -> Vector {
    let agents = u.ncols();
    debug_assert_eq!(x.len(), agents * n);
    let stacked = Mat::from_column_slice(n, agents, x.as_slice());
    let mixed = stacked * u.transpose();
    Vector::from_column_slice(mixed.as_slice())
}

/// `(Uᵀ ⊗ I_n) x`.
pub fn kron_apply_transpose(u: &Mat, x: &Vector, n: usize) -> Vector {
    let agents = u.nrows();
    let stacked = Mat::from_column_slice(n, agents, x.as_slice());
    let mixed = stacked * u;
    Vector::from_column_slice(mixed.as_slice())
}

/// Eigenvalues of a real square matrix (not necessarily symmetric).
pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_abscissa(m: &Mat) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Popov–Belevitch–Hautus stabilizability test: `rank [A − λI, B] = n` for
/// every eigenvalue λ of `A` with non-negative real part.
pub fn is_stabilizable(a: &Mat, b: &Mat, tol: f64) -> bool {
    let n = a.nrows();
    eigenvalues(a)
        .into_iter()
        .filter(|z| z.re >= -tol)
        .all(|z| {
            let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
            for r in 0..n {
                for c in 0..n {
                    let diag = if r == c { z } else { Complex::new(0.0, 0.0) };
                    pbh[(r, c)] = Complex::new(a[(r, c)], 0.0) - diag;
                }
                for c in 0..b.ncols() {
                    pbh[(r, n + c)] = Complex::new(b[(r, c)], 0.0);
                }
            }
            pbh.svd(false, false).rank(tol) == n
        })
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_apply_matches_explicit_kronecker() {
        let u = Mat::from_row_slice(3, 3, &[0.5, 1.0, -2.0, 0.0, 3.0, 1.0, 4.0, -1.0, 0.25]);
        let x = Vector::from_fn(6, |i, _| i as f64 - 1.5);
        let explicit = u.kronecker(&Mat::identity(2, 2)) * &x;
        assert!((kron_apply(&u, &x, 2) - explicit).norm() < 1e-14);
        let explicit_t = u.transpose().kronecker(&Mat::identity(2, 2)) * &x;
        assert!((kron_apply_transpose(&u, &x, 2) - explicit_t).norm() < 1e-14);
    }

    #[test]
    fn sorted_eigen_is_ascending() {
        let m = Mat::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let (vals, vecs) = sym_eigen_sorted(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let recon = &vecs * Mat::from_diagonal(&Vector::from_vec(vals)) * vecs.transpose();
        assert!((recon - m).amax() < 1e-12);
    }

    #[test]
    fn pbh_detects_uncontrollable_unstable_mode() {
        let a = Mat::from_element(1, 1, 1.0);
        assert!(!is_stabilizable(&a, &Mat::zeros(1, 1), 1e-8));
        assert!(is_stabilizable(&a, &Mat::from_element(1, 1, 1.0), 1e-8));
        // stable uncontrolled mode is fine
        assert!(is_stabilizable(
            &Mat::from_element(1, 1, -1.0),
            &Mat::zeros(1, 1),
            1e-8
        ));
    }

    #[test]
    fn min_norm_solution_for_wide_system() {
        let m = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
        let (x, res) = min_norm_solve(&m, &Vector::from_element(1, 2.0));
        assert!(res < 1e-12);
        assert!((x - Vector::from_vec(vec![1.0, 1.0])).norm() < 1e-12);
    }
}
