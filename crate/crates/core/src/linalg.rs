//! Small dense linear algebra over [`Scalar`]: a row-major matrix, a
//! column-pivoted Householder QR for least squares and rank detection,
//! Cholesky for symmetric positive definite systems, and a sweep-based
//! Schur complement used for segment cross-product fits.

use crate::scalar::Scalar;

/// Relative threshold on the pivoted-QR diagonal below which a column is
/// treated as linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given slices.
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length mismatch");
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
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
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| crate::scalar::dot(self.row(i), v))
            .collect()
    }

    /// `self' v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x * vi;
            }
        }
        out
    }

    /// `self' self`
    pub fn gram(&self) -> Self {
        let k = self.cols;
        let mut g = Self::zeros(k, k);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..k {
                let ra = r[a];
                if ra == T::zero() {
                    continue;
                }
                for b in a..k {
                    g.data[a * k + b] += ra * r[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                g.data[a * k + b] = g.data[b * k + a];
            }
        }
        g
    }

    /// Selects a subset of rows.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_row_major(idx.len(), self.cols, data)
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        let half = T::of(0.5);
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn scale(&mut self, c: T) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `bread * meat * bread`, symmetrized against rounding.
    pub fn sandwich(bread: &Self, meat: &Self) -> Self {
        let mut out = bread.matmul(meat).matmul(bread);
        out.symmetrize();
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Householder QR with column pivoting, `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr<T> {
    m: usize,
    n: usize,
    /// Column-major compact storage: R on and above the diagonal, Householder
    /// vectors (with implicit unit leading entry) below.
    qr: Vec<T>,
    tau: Vec<T>,
    perm: Vec<usize>,
    rank: usize,
}

impl<T: Scalar> PivotedQr<T> {
    pub fn new(a: &Matrix<T>) -> Self {
        Self::with_tolerance(a, T::of(RANK_TOL))
    }

    pub fn with_tolerance(a: &Matrix<T>, tol: T) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut qr = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                qr[j * m + i] = a[(i, j)];
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut tau = vec![T::zero(); steps];
        let mut norms: Vec<T> = (0..n)
            .map(|j| crate::scalar::norm_sq(&qr[j * m..(j + 1) * m]))
            .collect();

        for k in 0..steps {
            // Pivot on the largest remaining partial column norm; recompute it
            // exactly to avoid drift from downdating.
            for (j, nrm) in norms.iter_mut().enumerate().skip(k) {
                *nrm = crate::scalar::norm_sq(&qr[j * m + k..(j + 1) * m]);
            }
            let mut p = k;
            for j in k + 1..n {
                if norms[j] > norms[p] {
                    p = j;
                }
            }
            if p != k {
                for i in 0..m {
                    qr.swap(k * m + i, p * m + i);
                }
                perm.swap(k, p);
                norms.swap(k, p);
            }

            let col = &mut qr[k * m..(k + 1) * m];
            let xnorm = crate::scalar::norm_sq(&col[k..]).sqrt();
            if xnorm == T::zero() {
                tau[k] = T::zero();
                continue;
            }
            let alpha = col[k];
            let beta = if alpha >= T::zero() { -xnorm } else { xnorm };
            let v0 = alpha - beta;
            for v in &mut col[k + 1..] {
                *v /= v0;
            }
            tau[k] = (beta - alpha) / beta;
            col[k] = beta;

            for j in k + 1..n {
                let (left, right) = qr.split_at_mut(j * m);
                let v = &left[k * m..(k + 1) * m];
                let c = &mut right[..m];
                let mut w = c[k];
                for i in k + 1..m {
                    w += v[i] * c[i];
                }
                w *= tau[k];
                c[k] -= w;
                for i in k + 1..m {
                    c[i] -= w * v[i];
                }
            }
        }

        let r00 = if steps > 0 { qr[0].abs() } else { T::zero() };
        let mut rank = 0;
        for k in 0..steps {
            if r00 > T::zero() && qr[k * m + k].abs() > tol * r00 {
                rank += 1;
            } else {
                break;
            }
        }
        Self {
            m,
            n,
            qr,
            tau,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.n
    }

    /// Original column indices judged linearly dependent on the others.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// Overwrites `y` with `Q' y`.
    pub fn apply_qt(&self, y: &mut [T]) {
        let m = self.m;
        for k in 0..self.tau.len() {
            if self.tau[k] == T::zero() {
                continue;
            }
            let v = &self.qr[k * m..(k + 1) * m];
            let mut w = y[k];
            for i in k + 1..m {
                w += v[i] * y[i];
            }
            w *= self.tau[k];
            y[k] -= w;
            for i in k + 1..m {
                y[i] -= w * v[i];
            }
        }
    }

    /// Overwrites `y` with `Q y`.
    pub fn apply_q(&self, y: &mut [T]) {
        let m = self.m;
        for k in (0..self.tau.len()).rev() {
            if self.tau[k] == T::zero() {
                continue;
            }
            let v = &self.qr[k * m..(k + 1) * m];
            let mut w = y[k];
            for i in k + 1..m {
                w += v[i] * y[i];
            }
            w *= self.tau[k];
            y[k] -= w;
            for i in k + 1..m {
                y[i] -= w * v[i];
            }
        }
    }

    /// Residual of `y` after projection on the numerical column space.
    pub fn residual(&self, y: &[T]) -> Vec<T> {
        let mut z = y.to_vec();
        self.apply_qt(&mut z);
        for v in z.iter_mut().take(self.rank) {
            *v = T::zero();
        }
        self.apply_q(&mut z);
        z
    }

    /// Basic least-squares solution: dependent columns get coefficient zero.
    pub fn solve(&self, y: &[T]) -> Vec<T> {
        let m = self.m;
        let mut z = y.to_vec();
        self.apply_qt(&mut z);
        let r = self.rank;
        let mut b = vec![T::zero(); r];
        for k in (0..r).rev() {
            let mut s = z[k];
            for j in k + 1..r {
                s -= self.qr[j * m + k] * b[j];
            }
            b[k] = s / self.qr[k * m + k];
        }
        let mut out = vec![T::zero(); self.n];
        for k in 0..r {
            out[self.perm[k]] = b[k];
        }
        out
    }

    /// `(A'A)^{-1}` for a full-rank factorization.
    pub fn inverse_gram(&self) -> Matrix<T> {
        let n = self.n;
        let m = self.m;
        assert!(self.is_full_rank(), "inverse_gram requires full column rank");
        // Rinv upper triangular.
        let mut rinv = Matrix::zeros(n, n);
        for j in 0..n {
            rinv[(j, j)] = T::one() / self.qr[j * m + j];
            for i in (0..j).rev() {
                let mut s = T::zero();
                for k in i + 1..=j {
                    s += self.qr[k * m + i] * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / self.qr[i * m + i];
            }
        }
        let mut out = Matrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let mut s = T::zero();
                for k in b..n {
                    s += rinv[(a, k)] * rinv[(b, k)];
                }
                let (pa, pb) = (self.perm[a], self.perm[b]);
                out[(pa, pb)] = s;
                out[(pb, pa)] = s;
            }
        }
        out
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`
/// when a pivot falls below `tol` times the largest diagonal entry.
pub fn cholesky<T: Scalar>(a: &Matrix<T>, tol: T) -> Option<Matrix<T>> {
    let n = a.rows();
    let dmax = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)].abs()));
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol * dmax) || d <= T::zero() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L L' x = b` given the lower factor.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

pub fn cholesky_inverse<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = T::zero());
        e[j] = T::one();
        let col = cholesky_solve(l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv.symmetrize();
    inv
}

/// Sweeps the symmetric `d x d` matrix `a` (row-major) on the given pivots,
/// leaving the Schur complement in the un-swept rows and columns. Pivots at
/// or below `tol` times their original diagonal are skipped, which amounts to
/// projecting on the span of the accepted pivots. Returns the number of
/// skipped pivots.
pub fn sweep_schur<T: Scalar>(a: &mut [T], d: usize, pivots: &[usize], tol: T) -> usize {
    let mut skipped = 0;
    let mut done = vec![false; d];
    let diag0: Vec<T> = (0..d).map(|i| a[i * d + i]).collect();
    for &k in pivots {
        done[k] = true;
        let p = a[k * d + k];
        if !(p > tol * diag0[k].abs()) || p <= T::zero() {
            skipped += 1;
            continue;
        }
        for i in 0..d {
            if done[i] {
                continue;
            }
            let aik = a[i * d + k];
            if aik == T::zero() {
                continue;
            }
            let f = aik / p;
            for j in i..d {
                if done[j] {
                    continue;
                }
                a[i * d + j] -= f * a[k * d + j];
            }
        }
        for i in 0..d {
            if done[i] {
                continue;
            }
            for j in 0..i {
                if !done[j] {
                    a[i * d + j] = a[j * d + i];
                }
            }
        }
    }
    skipped
}
