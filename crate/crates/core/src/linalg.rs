//! Small dense linear algebra kit: vector kernels, a row-major matrix and an
//! LU factorization with partial pivoting.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[inline]
pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

#[inline]
pub fn norm2<T: Real>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

pub fn norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale<T: Real>(alpha: T, x: &mut [T]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Componentwise weighted inner product `sum w_i x_i y_i`.
pub fn weighted_dot<T: Real>(w: &[T], x: &[T], y: &[T]) -> T {
    w.iter()
        .zip(x.iter().zip(y))
        .map(|(&wi, (&a, &b))| wi * a * b)
        .sum()
}

pub fn sub<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&a, &b)| a - b).collect()
}

/// Relative distance `||x - y|| / max(||y||, tiny)`.
pub fn rel_diff<T: Real>(x: &[T], y: &[T]) -> T {
    let d = norm2(&sub(x, y));
    let n = norm2(y);
    if n > T::min_positive_value() {
        d / n
    } else {
        d
    }
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "row {i} has wrong length");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.data[i * self.n + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[T]) {
        for (i, &v) in col.iter().enumerate() {
            self.data[i * self.n + j] = v;
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// Left-multiplies by `diag(d)`.
    pub fn scale_rows(&self, d: &[T]) -> Self {
        Self::from_fn(self.n, |i, j| d[i] * self[(i, j)])
    }

    /// Right-multiplies by `diag(d)`.
    pub fn scale_cols(&self, d: &[T]) -> Self {
        Self::from_fn(self.n, |i, j| self[(i, j)] * d[j])
    }

    pub fn frobenius_norm(&self) -> T {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> T {
        norm_inf(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn lu(&self) -> Result<LuFactors<T>> {
        LuFactors::new(self)
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// `P A = L U` with unit lower `L`, stored compactly.
#[derive(Debug, Clone)]
pub struct LuFactors<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> LuFactors<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.n();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, T::neg_infinity()), |best, c| if c.1 > best.1 { c } else { best });
            if pv <= scale * T::epsilon() * T::lit(1e-3) {
                return Err(Error::Singular(k));
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            let (top, bottom) = lu.data.split_at_mut((k + 1) * n);
            let krow = &top[k * n..(k + 1) * n];
            for row in bottom.chunks_exact_mut(n) {
                let factor = row[k] / pivot;
                row[k] = factor;
                if factor != T::zero() {
                    for j in k + 1..n {
                        row[j] -= factor * krow[j];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn n(&self) -> usize {
        self.lu.n()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        let n = self.n();
        let mut out = DenseMatrix::zeros(n);
        for j in 0..n {
            let col = self.solve(&b.column(j));
            out.set_column(j, &col);
        }
        out
    }
}

/// Periodic tridiagonal system with constant stencil
/// `lower * x[i-1] + diag * x[i] + upper * x[i+1]` (indices mod `n`),
/// solved by the Thomas algorithm plus a Sherman–Morrison correction for the
/// two corner entries. The factorization is computed once.
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal<T> {
    n: usize,
    lower: T,
    corner_top: T,
    gamma: T,
    /// Modified super-diagonal of the Thomas sweep.
    c_prime: Vec<T>,
    /// Reciprocal pivots of the Thomas sweep.
    inv_pivot: Vec<T>,
    /// Solution of `B z = [gamma, 0, .., 0, corner_bottom]`.
    z: Vec<T>,
    denom: T,
}

impl<T: Real> CyclicTridiagonal<T> {
    pub fn new(n: usize, lower: T, diag: T, upper: T) -> Self {
        assert!(n >= 3, "cyclic tridiagonal systems need n >= 3");
        // A[0][n-1] = lower, A[n-1][0] = upper
        let corner_top = lower;
        let corner_bottom = upper;
        let gamma = -diag;
        let mut b = vec![diag; n];
        b[0] = diag - gamma;
        b[n - 1] = diag - corner_bottom * corner_top / gamma;
        let mut c_prime = vec![T::zero(); n];
        let mut inv_pivot = vec![T::zero(); n];
        inv_pivot[0] = T::one() / b[0];
        c_prime[0] = upper * inv_pivot[0];
        for i in 1..n {
            let piv = b[i] - lower * c_prime[i - 1];
            inv_pivot[i] = T::one() / piv;
            c_prime[i] = upper * inv_pivot[i];
        }
        let mut this = Self {
            n,
            lower,
            corner_top,
            gamma,
            c_prime,
            inv_pivot,
            z: Vec::new(),
            denom: T::one(),
        };
        let mut rhs = vec![T::zero(); n];
        rhs[0] = gamma;
        rhs[n - 1] = corner_bottom;
        this.thomas(&mut rhs);
        this.denom = T::one() + rhs[0] + corner_top * rhs[n - 1] / gamma;
        this.z = rhs;
        this
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn thomas(&self, x: &mut [T]) {
        let n = self.n;
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }

    /// Solves in place.
    pub fn solve_in_place(&self, x: &mut [T]) {
        assert_eq!(x.len(), self.n);
        self.thomas(x);
        let n = self.n;
        let fact = (x[0] + self.corner_top * x[n - 1] / self.gamma) / self.denom;
        for (xi, &zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `y = lower * x[i-1] + diag * x[i] + upper * x[i+1]` with periodic wrap.
pub fn cyclic_stencil_apply<T: Real>(lower: T, diag: T, upper: T, x: &[T], y: &mut [T]) {
    let n = x.len();
    assert_eq!(y.len(), n);
    y[0] = lower * x[n - 1] + diag * x[0] + upper * x[1];
    for i in 1..n - 1 {
        y[i] = lower * x[i - 1] + diag * x[i] + upper * x[i + 1];
    }
    y[n - 1] = lower * x[n - 2] + diag * x[n - 1] + upper * x[0];
}
