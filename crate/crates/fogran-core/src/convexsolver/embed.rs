//! Bijective embedding of complex matrix stacks into real vectors, and of
//! Hermitian quadratic forms into real symmetric PSD forms.
//!
//! A complex column `c = x + iy` of height `n` maps to `[x; y]` of length
//! `2n`. Under that map, for Hermitian `M = A + iB`:
//!
//! `c^H M c = [x; y]^T [[A, -B], [B, A]] [x; y]`
//!
//! so PSD forms stay PSD and traces of products become real quadratic forms.

use crate::linalg::{CMat, RMat};
use crate::{Complex, Real};

/// Number of real coordinates for one complex column of height `n`.
pub fn embedded_dim(n: usize) -> usize {
    2 * n
}

/// Writes column `col` of `mat` into `out` as `[Re; Im]`.
pub fn embed_column<T: Real>(mat: &CMat<T>, col: usize, out: &mut [T]) {
    let n = mat.rows;
    assert_eq!(out.len(), 2 * n);
    for r in 0..n {
        out[r] = mat[(r, col)].re;
        out[n + r] = mat[(r, col)].im;
    }
}

/// Reads one embedded column back into column `col` of `mat`.
pub fn unembed_column<T: Real>(v: &[T], mat: &mut CMat<T>, col: usize) {
    let n = mat.rows;
    assert_eq!(v.len(), 2 * n);
    for r in 0..n {
        mat[(r, col)] = Complex::new(v[r], v[n + r]);
    }
}

/// Flattens a stack of equally-shaped complex matrices column by column.
pub fn embed_stack<T: Real>(stack: &[CMat<T>]) -> Vec<T> {
    if stack.is_empty() {
        return Vec::new();
    }
    let (rows, cols) = (stack[0].rows, stack[0].cols);
    let mut out = vec![T::zero(); stack.len() * cols * 2 * rows];
    let mut off = 0;
    for mat in stack {
        assert_eq!((mat.rows, mat.cols), (rows, cols), "stack shape mismatch");
        for c in 0..cols {
            embed_column(mat, c, &mut out[off..off + 2 * rows]);
            off += 2 * rows;
        }
    }
    out
}

/// Inverse of [`embed_stack`].
pub fn unembed_stack<T: Real>(v: &[T], count: usize, rows: usize, cols: usize) -> Vec<CMat<T>> {
    assert_eq!(v.len(), count * cols * 2 * rows, "embedded length mismatch");
    let mut stack = Vec::with_capacity(count);
    let mut off = 0;
    for _ in 0..count {
        let mut mat = CMat::zeros(rows, cols);
        for c in 0..cols {
            unembed_column(&v[off..off + 2 * rows], &mut mat, c);
            off += 2 * rows;
        }
        stack.push(mat);
    }
    stack
}

/// Real symmetric representation of the Hermitian form `c^H M c`.
pub fn embed_hermitian_form<T: Real>(m: &CMat<T>) -> RMat<T> {
    let n = m.rows;
    assert_eq!(m.rows, m.cols);
    RMat::from_fn(2 * n, 2 * n, |r, c| {
        let (ri, rc) = (r % n, c % n);
        match (r < n, c < n) {
            (true, true) | (false, false) => m[(ri, rc)].re,
            (true, false) => -m[(ri, rc)].im,
            (false, true) => m[(ri, rc)].im,
        }
    })
}

/// Real linear functional representing `Re(u^T c)` for a complex row `u`
/// paired (without conjugation) against an embedded column `c`.
pub fn embed_pairing_row<T: Real>(u: &[Complex<T>]) -> Vec<T> {
    let n = u.len();
    let mut out = vec![T::zero(); 2 * n];
    for (i, z) in u.iter().enumerate() {
        out[i] = z.re;
        out[n + i] = -z.im;
    }
    out
}
