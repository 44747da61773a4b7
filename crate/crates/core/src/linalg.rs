//! Small dense linear-algebra helpers shared by the recursions, filters and
//! oracles. Everything works on dynamically sized `nalgebra` matrices.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Minimum eigenvalue accepted for a "PSD" matrix.
pub const PSD_TOL: f64 = 1e-9;
/// Minimum eigenvalue required for a "PD" matrix.
pub const PD_TOL: f64 = 1e-10;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest elementwise asymmetry |m_ij - m_ji|.
pub fn asymmetry(m: &Mat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.transpose()).amax()
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_psd(m: &Mat, tol: f64) -> bool {
    m.is_square() && asymmetry(m) <= 1e-9 * (1.0 + m.amax()) && min_eigenvalue(m) >= -tol
}

pub fn is_pd(m: &Mat) -> bool {
    m.is_square()
        && asymmetry(m) <= 1e-9 * (1.0 + m.amax())
        && Cholesky::new(symmetrize(m)).is_some()
        && min_eigenvalue(m) > PD_TOL
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &Mat, b: &Mat) -> Option<Mat> {
    Cholesky::new(symmetrize(a)).map(|c| c.solve(b))
}

pub fn quad_form(m: &Mat, x: &Vector) -> f64 {
    x.dot(&(m * x))
}

/// tr(a b) without forming the product.
pub fn trace_product(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// A factor `f` with `f fᵀ = m` for symmetric PSD `m` (tiny negative
/// eigenvalues are clipped).
pub fn psd_factor(m: &Mat) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    if let Some(c) = Cholesky::new(symmetrize(m)) {
        return c.l();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut f = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            f[(i, j)] *= s;
        }
    }
    f
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn psd_pinv(m: &Mat) -> Mat {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut out = Mat::zeros(n, n);
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda > 1e-12 * scale {
            let v = eig.eigenvectors.column(j);
            out += (v * v.transpose()) / *lambda;
        }
    }
    out
}

pub fn is_zero(m: &Mat) -> bool {
    m.iter().all(|x| *x == 0.0)
}

/// Row-major nested representation used by the JSON formats.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Inverse of [`to_rows`]. Ragged input is rejected.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reproduces_singular_psd() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = psd_factor(&m);
        assert!((&f * f.transpose() - &m).amax() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_one() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = psd_pinv(&m);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn trace_product_matches_dense() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.0, 1.0]);
        assert!(((&a * &b).trace() - trace_product(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn pd_rejects_singular() {
        assert!(!is_pd(&Mat::zeros(1, 1)));
        assert!(is_pd(&Mat::identity(2, 2)));
        assert!(is_psd(&Mat::zeros(2, 2), PSD_TOL));
    }
}

/// Serde helpers writing matrix sequences as nested row-major arrays.
pub mod serde_rows {
    use super::{to_rows, Mat};
    use serde::ser::{SerializeSeq, Serializer};

    pub fn seq<S: Serializer>(v: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        let mut out = s.serialize_seq(Some(v.len()))?;
        for m in v {
            out.serialize_element(&to_rows(m))?;
        }
        out.end()
    }

    pub fn opt_seq<S: Serializer>(v: &Option<Vec<Mat>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => seq(v, s),
            None => s.serialize_none(),
        }
    }
}
