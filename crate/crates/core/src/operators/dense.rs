use super::{ForwardOperator, MatvecCounter};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;

/// Explicit matrix as a forward operator (toy problems and oracles).
#[derive(Debug)]
pub struct DenseOperator<T> {
    matrix: DenseMatrix<T>,
    level: usize,
    counter: MatvecCounter,
}

impl<T: Real> DenseOperator<T> {
    pub fn new(matrix: DenseMatrix<T>) -> Self {
        Self::on_level(matrix, 0)
    }

    pub fn on_level(matrix: DenseMatrix<T>, level: usize) -> Self {
        Self {
            matrix,
            level,
            counter: MatvecCounter::new(),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }
}

impl<T: Real> ForwardOperator<T> for DenseOperator<T> {
    fn dim(&self) -> usize {
        self.matrix.n()
    }
    fn level_index(&self) -> usize {
        self.level
    }
    fn apply_into(&self, x: &[T], y: &mut [T]) {
        self.counter.bump();
        y.copy_from_slice(&self.matrix.matvec(x));
    }
    fn apply_transpose_into(&self, x: &[T], y: &mut [T]) {
        self.counter.bump();
        let n = self.matrix.n();
        y.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..n {
            let xi = x[i];
            for (yj, &aij) in y.iter_mut().zip(self.matrix.row(i)) {
                *yj += aij * xi;
            }
        }
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// The zero map.
#[derive(Debug)]
pub struct ZeroOperator {
    dim: usize,
    level: usize,
    counter: MatvecCounter,
}

impl ZeroOperator {
    pub fn new(dim: usize) -> Self {
        Self::on_level(dim, 0)
    }

    pub fn on_level(dim: usize, level: usize) -> Self {
        Self {
            dim,
            level,
            counter: MatvecCounter::new(),
        }
    }
}

impl<T: Real> ForwardOperator<T> for ZeroOperator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn level_index(&self) -> usize {
        self.level
    }
    fn apply_into(&self, _x: &[T], y: &mut [T]) {
        self.counter.bump();
        y.iter_mut().for_each(|v| *v = T::zero());
    }
    fn apply_transpose_into(&self, _x: &[T], y: &mut [T]) {
        self.counter.bump();
        y.iter_mut().for_each(|v| *v = T::zero());
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}
