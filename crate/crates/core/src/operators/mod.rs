//! Matrix-free forward operators `K_h`, applied in the nodal basis together
//! with their transposes. Every application is counted: the finest-level
//! count is the cost metric reported by the solver.

mod dense;
mod elliptic;
mod parabolic;
mod probe;

use std::sync::atomic::{AtomicU64, Ordering};

pub use dense::{DenseOperator, ZeroOperator};
pub use elliptic::{EllipticConfig, EllipticOperator, InnerSolver};
pub use parabolic::{ParabolicConfig, ParabolicOperator, ParabolicScheme};
pub use probe::{convergence_probe, sample_on, ProbeReference};

use crate::error::Result;
use crate::grid::GridLevel;
use crate::scalar::Real;

/// Counts operator applications; shared by `apply` and `apply_transpose`.
#[derive(Debug, Default)]
pub struct MatvecCounter(AtomicU64);

impl MatvecCounter {
    pub fn new() -> Self {
        Self(AtomicU64::new(0))
    }

    #[inline]
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// A discretized forward operator on one grid level.
pub trait ForwardOperator<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn level_index(&self) -> usize {
        0
    }

    /// `y = K x`; counts one mat-vec.
    fn apply_into(&self, x: &[T], y: &mut [T]);

    /// `y = K^T x` in the Euclidean pairing; counts one mat-vec.
    fn apply_transpose_into(&self, x: &[T], y: &mut [T]);

    fn counter(&self) -> &MatvecCounter;

    fn matvecs(&self) -> u64 {
        self.counter().get()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    fn apply_transpose(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        self.apply_transpose_into(x, &mut y);
        y
    }
}

/// Adjoint of `K` with respect to `<·,·>_h`: `W^{-1} K^T W u`.
pub fn adjoint_h_apply<T: Real>(
    op: &(impl ForwardOperator<T> + ?Sized),
    weights: &[T],
    u: &[T],
) -> Vec<T> {
    let wu: Vec<T> = u.iter().zip(weights).map(|(&a, &w)| a * w).collect();
    let mut y = op.apply_transpose(&wu);
    y.iter_mut().zip(weights).for_each(|(v, &w)| *v /= w);
    y
}

/// Builds the operator for one level; used to set up per-level hierarchies.
pub type OperatorBuilder<'a, T> =
    dyn Fn(&GridLevel<T>) -> Result<Box<dyn ForwardOperator<T>>> + Sync + 'a;
