//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Apply `f` to the eigenvalues of a symmetric matrix.
pub fn sym_function(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let eig = symmetrize(m).symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = f(l);
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * eig.eigenvectors.transpose()
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix; eigenvalues below
/// `rel_tol * max|eigenvalue|` are treated as zero.
pub fn sym_pinv(m: &Matrix, rel_tol: f64) -> Matrix {
    let scale = sym_eigenvalues(m).iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let cut = rel_tol * scale.max(f64::MIN_POSITIVE);
    sym_function(m, |l| if l.abs() > cut { 1.0 / l } else { 0.0 })
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0f64, |a, &b| a.max(b))
}

pub fn matrix_rank(m: &Matrix, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    sv.iter().filter(|&&s| s > rel_tol * top.max(f64::MIN_POSITIVE)).count()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn norm_inf(v: &Vector) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_projection_is_itself() {
        let p = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let pi = sym_pinv(&p, 1e-12);
        assert!((pi - &p).norm() < 1e-12);
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let p = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sym_function(&p, |l| 1.0 / l.sqrt());
        let inv = p.clone().try_inverse().unwrap();
        assert!((&s * &s - inv).norm() < 1e-12);
    }

    #[test]
    fn rank_and_norm() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(matrix_rank(&m, 1e-12), 1);
        assert!((spectral_norm(&(Matrix::identity(3, 3) * 2.0)) - 2.0).abs() < 1e-12);
    }
}
