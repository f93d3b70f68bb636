//! Small dense matrix helpers on top of `nalgebra`.

use nalgebra::DMatrix;

/// Largest support size accepted anywhere in the crate.
pub const MAX_SUPPORT: usize = 16;

/// Determinants at or below this magnitude are treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

pub type Matrix = DMatrix<f64>;

pub fn ones(k: usize) -> Matrix {
    Matrix::from_element(k, k, 1.0)
}

pub fn identity(k: usize) -> Matrix {
    Matrix::identity(k, k)
}

pub fn diag(v: &[f64]) -> Matrix {
    Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

/// The k-ary symmetric channel matrix `(1 - q) I + (q / k) O`.
pub fn error_matrix(k: usize, q: f64) -> Matrix {
    identity(k) * (1.0 - q) + ones(k) * (q / k as f64)
}

/// Determinant via partially pivoted LU.
pub fn det(m: &Matrix) -> f64 {
    m.clone().lu().determinant()
}

pub fn row_sums(m: &Matrix) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.row(i).sum()).collect()
}

pub fn col_sums(m: &Matrix) -> Vec<f64> {
    (0..m.ncols()).map(|j| m.column(j).sum()).collect()
}

/// Builds a k x k matrix from a row-major slice.
pub fn from_row_major(k: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(k, k, data)
}

pub fn to_row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
