//! Dense row-major matrices and Householder QR, sized for regression designs
//! (tall-and-skinny, a handful of columns).

use crate::error::{Error, Result};

/// Relative magnitude below which an R diagonal entry marks its column as
/// linearly dependent on the preceding ones.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from column vectors, all of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        assert!(!columns.is_empty(), "need at least one column");
        let rows = columns[0].len();
        assert!(
            columns.iter().all(|c| c.len() == rows),
            "columns must have equal length"
        );
        let cols = columns.len();
        let mut m = Matrix::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "need at least one row");
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    /// Returns the matrix restricted to the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (i, &src) in indices.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(src));
        }
        out
    }

    /// Matrix-vector product.
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR of a tall matrix, stored compactly: the Householder vectors
/// live in the lower trapezoid of `qr`, R's strict upper triangle in the
/// upper part, and R's diagonal separately in `r_diag`.
#[derive(Debug, Clone)]
pub struct QrFactorization {
    qr: Matrix,
    r_diag: Vec<f64>,
    scale: Vec<f64>,
    rows: usize,
    cols: usize,
}

/// Computes the Householder QR of `a`. Requires `rows >= cols`.
pub fn qr_decompose(a: &Matrix) -> QrFactorization {
    let rows = a.n_rows();
    let cols = a.n_cols();
    assert!(rows >= cols, "QR requires rows >= cols");
    let mut qr = a.clone();
    let mut r_diag = vec![0.0; cols];
    let mut scale = vec![0.0; cols];

    for k in 0..cols {
        // Column scaling guards against overflow and keeps the reflector
        // well normalized.
        let mut s = 0.0f64;
        for i in k..rows {
            s = s.max(qr.get(i, k).abs());
        }
        if s == 0.0 {
            // Exactly dependent column; leave a zero pivot for rank detection.
            r_diag[k] = 0.0;
            scale[k] = 0.0;
            continue;
        }
        let mut norm2 = 0.0;
        for i in k..rows {
            let v = qr.get(i, k) / s;
            qr.set(i, k, v);
            norm2 += v * v;
        }
        let mut sigma = norm2.sqrt();
        if qr.get(k, k) < 0.0 {
            sigma = -sigma;
        }
        qr.set(k, k, qr.get(k, k) + sigma);
        let c = sigma * qr.get(k, k);
        r_diag[k] = -s * sigma;
        scale[k] = c;

        for j in (k + 1)..cols {
            let mut sum = 0.0;
            for i in k..rows {
                sum += qr.get(i, k) * qr.get(i, j);
            }
            let tau = sum / c;
            for i in k..rows {
                let v = qr.get(i, j) - tau * qr.get(i, k);
                qr.set(i, j, v);
            }
        }
    }

    QrFactorization {
        qr,
        r_diag,
        scale,
        rows,
        cols,
    }
}

impl QrFactorization {
    pub fn r_diag(&self) -> &[f64] {
        &self.r_diag
    }

    /// Indices of columns whose R diagonal falls below
    /// `RANK_TOLERANCE * max |r_kk|`.
    pub fn deficient_columns(&self) -> Vec<usize> {
        let max = self
            .r_diag
            .iter()
            .fold(0.0f64, |acc, &d| acc.max(d.abs()));
        if max == 0.0 {
            return (0..self.cols).collect();
        }
        (0..self.cols)
            .filter(|&k| self.r_diag[k].abs() < RANK_TOLERANCE * max)
            .collect()
    }

    pub fn is_full_rank(&self) -> bool {
        self.deficient_columns().is_empty()
    }

    /// Ratio of largest to smallest |r_kk|; a cheap condition estimate.
    pub fn condition_estimate(&self) -> f64 {
        let mut max = 0.0f64;
        let mut min = f64::INFINITY;
        for &d in &self.r_diag {
            let a = d.abs();
            max = max.max(a);
            min = min.min(a);
        }
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Applies Q^T to `y` in place.
    fn apply_qt(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        for k in 0..self.cols {
            if self.scale[k] == 0.0 {
                continue;
            }
            let mut sum = 0.0;
            for i in k..self.rows {
                sum += self.qr.get(i, k) * y[i];
            }
            let tau = sum / self.scale[k];
            for i in k..self.rows {
                y[i] -= tau * self.qr.get(i, k);
            }
        }
    }

    fn back_substitute(&self, qty: &[f64]) -> Vec<f64> {
        let p = self.cols;
        let mut beta = vec![0.0; p];
        for k in (0..p).rev() {
            let mut sum = qty[k];
            for j in (k + 1)..p {
                sum -= self.qr.get(k, j) * beta[j];
            }
            beta[k] = sum / self.r_diag[k];
        }
        beta
    }

    /// Least-squares solution minimizing `|y - X beta|`. Errors on rank
    /// deficiency; the caller maps column indices to names.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        let deficient = self.deficient_columns();
        if !deficient.is_empty() {
            return Err(Error::RankDeficient {
                columns: deficient.iter().map(|k| format!("#{k}")).collect(),
            });
        }
        let mut work = y.to_vec();
        self.apply_qt(&mut work);
        Ok(self.back_substitute(&work))
    }

    /// `(X^T X)^-1` computed as `R^-1 R^-T`. Requires full rank.
    pub fn xtx_inverse(&self) -> Matrix {
        let p = self.cols;
        // Columns of R^-1 by back substitution against unit vectors.
        let mut rinv = Matrix::zeros(p, p);
        for col in 0..p {
            let mut e = vec![0.0; p];
            e[col] = 1.0;
            let x = self.back_substitute(&e);
            for i in 0..p {
                rinv.set(i, col, x[i]);
            }
        }
        let mut out = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                let mut sum = 0.0;
                for k in 0..p {
                    sum += rinv.get(i, k) * rinv.get(j, k);
                }
                out.set(i, j, sum);
            }
        }
        out
    }
}

/// Cholesky factor (lower triangular) of a symmetric positive-definite
/// matrix; `None` when the matrix is not positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.n_rows();
    assert_eq!(n, a.n_cols(), "cholesky needs a square matrix");
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let l = cholesky(a)?;
    let n = b.len();
    // Forward substitution L z = b.
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l.get(i, k) * z[k];
        }
        z[i] = sum / l.get(i, i);
    }
    // Back substitution L^T x = z.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in (i + 1)..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    Some(x)
}
