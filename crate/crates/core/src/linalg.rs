//! Dense linear algebra on `ndarray` storage, backed by `faer`.

use faer::solvers::{SpSolver, SpSolverLstsq};
use faer::Mat;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_faer(a: ArrayView2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: faer::MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m.read(i, j))
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted nonincreasing.
/// Column `i` of the returned matrix is the unit eigenvector of value `i`.
pub fn sym_eig(a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("sym_eig needs a square matrix".into()));
    }
    let evd = to_faer(a).selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();
    // faer returns ascending order
    let values = Array1::from_shape_fn(n, |i| s.read(n - 1 - i));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| u.read(r, n - 1 - c));
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    Ok((values, vectors))
}

/// Thin SVD `a = U diag(s) Vᵀ` with singular values sorted nonincreasing.
pub fn thin_svd(a: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let svd = to_faer(a).thin_svd();
    let k = a.nrows().min(a.ncols());
    let s = svd.s_diagonal();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s.read(j).total_cmp(&s.read(i)));
    let (u, v) = (svd.u(), svd.v());
    let uu = Array2::from_shape_fn((a.nrows(), k), |(r, c)| u.read(r, order[c]));
    let vv = Array2::from_shape_fn((a.ncols(), k), |(r, c)| v.read(r, order[c]));
    let ss = Array1::from_iter(order.iter().map(|&i| s.read(i)));
    if ss.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite singular value".into()));
    }
    Ok((uu, ss, vv))
}

/// Least-squares solution of `a x ≈ b` (a has full column rank).
pub fn lstsq(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "lstsq rows",
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    if a.nrows() < a.ncols() {
        return Err(Error::InvalidInput("underdetermined least-squares system".into()));
    }
    let x = to_faer(a).col_piv_qr().solve_lstsq(to_faer(b));
    let x = from_faer(x.as_ref());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("singular least-squares system".into()));
    }
    Ok(x)
}

/// Solves the square system `a x = b` by partially pivoted LU.
pub fn solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let x = to_faer(a).partial_piv_lu().solve(to_faer(b));
    let x = from_faer(x.as_ref());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("singular linear system".into()));
    }
    Ok(x)
}

pub fn det(a: ArrayView2<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    to_faer(a).determinant()
}

/// Median of a slice (average of the two middle values for even length).
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let n = values.len();
    let mid = n / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Pairwise squared Euclidean distances between the rows of `x`.
pub fn pairwise_sq_dists(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let xi = x.row(i);
        for j in (i + 1)..n {
            let v: f64 = xi
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Sign convention for eigenvectors: first entry with magnitude above
/// `tol` is made positive.
pub(crate) fn fix_sign_first_nonzero(v: &mut ndarray::ArrayViewMut1<f64>, tol: f64) {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > tol) {
        if first < 0.0 {
            v.mapv_inplace(|x| -x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sym_eig_sorted_descending() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (w, v) = sym_eig(a.view()).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
        let r = a.dot(&v.column(0)) - &v.column(0).mapv(|x| 3.0 * x);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn svd_reconstructs() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]];
        let (u, s, v) = thin_svd(a.view()).unwrap();
        assert!(s[0] >= s[1]);
        let rec = u.dot(&Array2::from_diag(&s)).dot(&v.t());
        assert!((rec - &a).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn lstsq_exact_line() {
        let a = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]];
        let b = array![[1.0], [3.0], [5.0]];
        let x = lstsq(a.view(), b.view()).unwrap();
        assert!((x[[0, 0]] - 1.0).abs() < 1e-12 && (x[[1, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn det_and_median() {
        assert!((det(array![[0.0, 1.0], [1.0, 0.0]].view()) + 1.0).abs() < 1e-14);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
