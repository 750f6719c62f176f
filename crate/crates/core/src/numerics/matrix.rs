use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Column vector from a slice.
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn outer(a: &[f64], b: &[f64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ v`
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_matvec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "elementwise shape mismatch"
        );
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// `(M + Mᵀ)/2`
    pub fn sym_part(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// Copy of the `rows x cols` block with top-left corner at (r0, c0).
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    /// Lower-triangular Cholesky factor; fails unless symmetric positive definite.
    pub fn cholesky(&self) -> Result<Self> {
        if !self.is_symmetric(1e-10 * (1.0 + self.max_abs())) {
            return Err(Error::NotPositiveDefinite);
        }
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Lower-triangular factor of a positive semidefinite matrix (zero
    /// columns where the pivot vanishes). Used for noise covariances that may
    /// be singular.
    pub fn psd_factor(&self) -> Result<Self> {
        if !self.is_symmetric(1e-10 * (1.0 + self.max_abs())) {
            return Err(Error::Contract("covariance is not symmetric".into()));
        }
        let n = self.rows;
        let tol = 1e-14 * (1.0 + self.max_abs());
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d < -tol {
                return Err(Error::NotPositiveDefinite);
            }
            if d <= tol {
                continue;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Smallest eigenvalue of the symmetric part, by bisection on Cholesky
    /// success; accurate to about `1e-12` relative to the entry scale.
    pub fn min_sym_eigenvalue(&self) -> f64 {
        let s = self.sym_part();
        let n = s.rows();
        let bound = s.data.iter().map(|x| x.abs()).sum::<f64>() + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if s.sub(&DenseMatrix::identity(n).scale(mid)).cholesky().is_ok() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Contract("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        let lu = Lu::factor(self)?;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// Solves `self * X = rhs` column by column.
    pub fn solve_matrix(&self, rhs: &Self) -> Result<Self> {
        let lu = Lu::factor(self)?;
        let mut out = Self::zeros(rhs.rows, rhs.cols);
        let mut col = vec![0.0; rhs.rows];
        for j in 0..rhs.cols {
            for i in 0..rhs.rows {
                col[i] = rhs[(i, j)];
            }
            let x = lu.solve(&col);
            for i in 0..rhs.rows {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Contract(format!(
                "expected a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let scale = a.max_abs();
        let threshold = 1e-12 * scale;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (p, pivot) = (col..n)
                .map(|r| (r, lu[(r, col)].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > threshold) || scale == 0.0 {
                return Err(Error::Singular { column: col, pivot });
            }
            if p != col {
                for j in 0..n {
                    lu.data.swap(p * n + j, col * n + j);
                }
                perm.swap(p, col);
            }
            let d = lu[(col, col)];
            for r in col + 1..n {
                let factor = lu[(r, col)] / d;
                lu[(r, col)] = factor;
                if factor != 0.0 {
                    for j in col + 1..n {
                        let v = lu[(col, j)];
                        lu[(r, j)] -= factor * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// A pivot at or below `1e-12 * max|A|` is reported as singular.
pub fn linear_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows != b.len() {
        return Err(Error::Contract(format!(
            "right-hand side has length {}, matrix has {} rows",
            b.len(),
            a.rows
        )));
    }
    Ok(Lu::factor(a)?.solve(b))
}

/// Spectral-radius test by norm decay: true iff `‖M^256‖_F^(1/256) < 1 - 1e-6`.
///
/// The power is formed by eight repeated squarings; overflow means unstable.
pub fn stability_test(m: &DenseMatrix) -> bool {
    assert!(m.is_square(), "stability test needs a square matrix");
    let mut p = m.clone();
    for _ in 0..8 {
        p = p.matmul(&p);
        if !p.is_finite() {
            return false;
        }
    }
    let norm = p.frobenius_norm();
    norm.is_finite() && norm.powf(1.0 / 256.0) < 1.0 - 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let x = linear_solve(&DenseMatrix::identity(2), &[3.0, -2.0]).unwrap();
        assert_eq!(x, vec![3.0, -2.0]);
        let a = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        assert_eq!(linear_solve(&a, &[2.0, 8.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = SeededRng::new(3);
        let g = random_matrix(5, 5, &mut rng);
        let a = g.matmul(&g.transpose()).add(&DenseMatrix::identity(5));
        let b = rng.normal_vec(5);
        let x = linear_solve(&a, &b).unwrap();
        let ax = a.matvec(&x);
        let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let res = ax.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(res <= 1e-8 * (1.0 + bmax), "residual {res}");
    }

    #[test]
    fn singular_is_reported() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(linear_solve(&a, &[1.0, 1.0]), Err(Error::Singular { .. })));
        assert!(linear_solve(&DenseMatrix::zeros(2, 2), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn solve_needs_pivoting() {
        let a = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(linear_solve(&a, &[5.0, 7.0]).unwrap(), vec![7.0, 5.0]);
    }

    #[test]
    fn matmul_is_associative_with_vectors() {
        let mut rng = SeededRng::new(11);
        for _ in 0..20 {
            let a = random_matrix(4, 3, &mut rng);
            let b = random_matrix(3, 5, &mut rng);
            let v = rng.normal_vec(5);
            let lhs = a.matmul(&b).matvec(&v);
            let rhs = a.matvec(&b.matvec(&v));
            for (l, r) in lhs.iter().zip(&rhs) {
                assert!((l - r).abs() <= 1e-10 * (1.0 + r.abs()));
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = SeededRng::new(2);
        let a = random_matrix(4, 4, &mut rng).add(&DenseMatrix::identity(4).scale(3.0));
        let prod = a.matmul(&a.inverse().unwrap());
        assert!(prod.sub(&DenseMatrix::identity(4)).max_abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let l = a.cholesky().unwrap();
        assert!(l.matmul(&l.transpose()).sub(&a).max_abs() < 1e-14);
        let indefinite = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(indefinite.cholesky().is_err());
    }

    #[test]
    fn psd_factor_handles_singular_covariance() {
        let a = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let l = a.psd_factor().unwrap();
        assert!(l.matmul(&l.transpose()).sub(&a).max_abs() < 1e-14);
        assert_eq!(DenseMatrix::zeros(3, 3).psd_factor().unwrap(), DenseMatrix::zeros(3, 3));
    }

    #[test]
    fn stability_of_scaled_identity() {
        assert!(stability_test(&DenseMatrix::identity(3).scale(0.5)));
        assert!(!stability_test(&DenseMatrix::identity(3).scale(1.5)));
        assert!(!stability_test(&DenseMatrix::identity(2)));
        assert!(!stability_test(&DenseMatrix::identity(2).scale(1e200)));
    }
}
