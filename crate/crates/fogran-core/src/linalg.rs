//! Small dense linear algebra used across the crate: complex matrices for
//! channels and precoders, real symmetric matrices for the embedded solver,
//! and Cholesky factorizations for both.

use crate::{real, Complex, Real};

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex::new(T::zero(), T::zero()); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(s, T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn herm(&self) -> CMat<T> {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul(&self, other: &CMat<T>) -> CMat<T> {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] = out[(r, c)] + a * other[(k, c)];
                }
            }
        }
        out
    }

    /// `self * self^H`, Hermitian by construction.
    pub fn mul_herm(&self) -> CMat<T> {
        let mut out = CMat::zeros(self.rows, self.rows);
        for r in 0..self.rows {
            for c in 0..=r {
                let mut acc = Complex::new(T::zero(), T::zero());
                for k in 0..self.cols {
                    acc = acc + self[(r, k)] * self[(c, k)].conj();
                }
                out[(r, c)] = acc;
                out[(c, r)] = acc.conj();
            }
        }
        out
    }

    pub fn add_assign_scaled(&mut self, other: &CMat<T>, s: T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + *b * Complex::new(s, T::zero());
        }
    }

    pub fn sub(&self, other: &CMat<T>) -> CMat<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a = *a - *b;
        }
        out
    }

    pub fn scale(&self, s: T) -> CMat<T> {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = *a * Complex::new(s, T::zero());
        }
        out
    }

    pub fn trace(&self) -> Complex<T> {
        debug_assert_eq!(self.rows, self.cols);
        (0..self.rows).fold(Complex::new(T::zero(), T::zero()), |acc, i| acc + self[(i, i)])
    }

    /// Sum of squared entry magnitudes, `trace(A A^H)`.
    pub fn frob_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `trace(A B)` without forming the product.
    pub fn trace_product(&self, other: &CMat<T>) -> Complex<T> {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc = acc + self[(i, j)] * other[(j, i)];
            }
        }
        acc
    }

    /// Rows `r0..r1` as a copy.
    pub fn row_block(&self, r0: usize, r1: usize) -> CMat<T> {
        CMat::from_fn(r1 - r0, self.cols, |r, c| self[(r0 + r, c)])
    }

    /// Averages the matrix with its conjugate transpose.
    pub fn hermitian_part(&self) -> CMat<T> {
        let h = self.herm();
        let half = real::<T>(0.5);
        CMat::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + h[(r, c)]) * Complex::new(half, T::zero()))
    }

    /// Cholesky factor L (lower) of a Hermitian positive definite matrix.
    pub fn cholesky(&self) -> Result<CMat<T>, LinalgError> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = CMat::zeros(n, n);
        for j in 0..n {
            let mut diag = self[(j, j)].re;
            for k in 0..j {
                diag = diag - l[(j, k)].norm_sqr();
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j });
            }
            let dsqrt = diag.sqrt();
            l[(j, j)] = Complex::new(dsqrt, T::zero());
            for i in (j + 1)..n {
                let mut acc = self[(i, j)];
                for k in 0..j {
                    acc = acc - l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = acc / Complex::new(dsqrt, T::zero());
            }
        }
        Ok(l)
    }

    /// Natural-log determinant of a Hermitian PD matrix via Cholesky.
    pub fn logdet(&self) -> Result<T, LinalgError> {
        let l = self.cholesky()?;
        let two = real::<T>(2.0);
        Ok((0..self.rows).map(|i| l[(i, i)].re.ln()).sum::<T>() * two)
    }

    /// Solves `A X = B` given the Cholesky factor of Hermitian PD `A`.
    pub fn cholesky_solve(l: &CMat<T>, b: &CMat<T>) -> CMat<T> {
        let n = l.rows;
        assert_eq!(b.rows, n);
        let mut y = b.clone();
        // L y = b
        for c in 0..b.cols {
            for i in 0..n {
                let mut acc = y[(i, c)];
                for k in 0..i {
                    acc = acc - l[(i, k)] * y[(k, c)];
                }
                y[(i, c)] = acc / l[(i, i)];
            }
            // L^H x = y
            for i in (0..n).rev() {
                let mut acc = y[(i, c)];
                for k in (i + 1)..n {
                    acc = acc - l[(k, i)].conj() * y[(k, c)];
                }
                y[(i, c)] = acc / l[(i, i)];
            }
        }
        y
    }

    /// Inverse of a Hermitian PD matrix via Cholesky.
    pub fn herm_inverse(&self) -> Result<CMat<T>, LinalgError> {
        let l = self.cholesky()?;
        Ok(Self::cholesky_solve(&l, &CMat::identity(self.rows)))
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

/// Dense real matrix, row-major. Used for the embedded solver forms.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat<T> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<T>,
}

impl<T: Real> RMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign_scaled(&mut self, other: &RMat<T>, s: T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + b * s;
        }
    }

    pub fn add_diag(&mut self, s: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = self[(i, i)] + s;
        }
    }

    /// `y += s * A x`
    pub fn matvec_acc(&self, x: &[T], s: T, y: &mut [T]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = T::zero();
            for (a, &b) in row.iter().zip(x.iter()) {
                acc = acc + *a * b;
            }
            y[r] = y[r] + s * acc;
        }
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        let mut y = vec![T::zero(); self.rows];
        self.matvec_acc(x, T::one(), &mut y);
        dot(&y, x)
    }

    /// In-place lower Cholesky of a symmetric PD matrix.
    pub fn cholesky(&self) -> Result<RMat<T>, LinalgError> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = RMat::zeros(n, n);
        for j in 0..n {
            let mut diag = self[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j });
            }
            let dsqrt = diag.sqrt();
            l[(j, j)] = dsqrt;
            for i in (j + 1)..n {
                let mut acc = self[(i, j)];
                for k in 0..j {
                    acc = acc - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = acc / dsqrt;
            }
        }
        Ok(l)
    }

    /// Solves `A x = b` given the lower Cholesky factor of `A`.
    pub fn cholesky_solve_vec(l: &RMat<T>, b: &[T]) -> Vec<T> {
        let n = l.rows;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for k in 0..i {
                acc = acc - l[(i, k)] * y[k];
            }
            y[i] = acc / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in (i + 1)..n {
                acc = acc - l[(k, i)] * y[k];
            }
            y[i] = acc / l[(i, i)];
        }
        y
    }

    pub fn mean_diag(&self) -> T {
        let n = self.rows.min(self.cols);
        if n == 0 {
            return T::zero();
        }
        (0..n).map(|i| self[(i, i)]).sum::<T>() / real::<T>(n as f64)
    }
}

impl<T> std::ops::Index<(usize, usize)> for RMat<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for RMat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + alpha * xi;
    }
}

pub fn norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinalgError {
    NotPositiveDefinite { pivot: usize },
}

impl std::fmt::Display for LinalgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinalgError::NotPositiveDefinite { pivot } => {
                write!(f, "matrix not positive definite (pivot {pivot})")
            }
        }
    }
}

impl std::error::Error for LinalgError {}
