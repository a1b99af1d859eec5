//! Inverse Laplacian on the unit square with zero Dirichlet data,
//! discretized with linear elements on the three-line mesh.
//!
//! On this mesh the stiffness matrix is the 5-point stencil `[4; -1 x 4]`
//! regardless of `h`, and `K u = -A^{-1} M u` with `M` the consistent mass
//! matrix. The transpose is `-M A^{-1}`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{ForwardOperator, MatvecCounter};
use crate::error::{Error, Result};
use crate::grid::{GridKind, GridLevel};
use crate::krylov::{cg, FnOperator, KrylovOptions};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerSolver {
    /// Exact solve through the sine-transform eigenbasis of the stencil.
    #[default]
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticConfig<T> {
    pub inner_solver: InnerSolver,
    /// Relative residual for the CG inner solver.
    pub inner_tol: T,
}

impl<T: Real> Default for EllipticConfig<T> {
    fn default() -> Self {
        Self {
            inner_solver: InnerSolver::Direct,
            inner_tol: T::lit(1e-12).max(T::lit(100.0) * T::epsilon()),
        }
    }
}

impl<T: Real> EllipticConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let cap = T::lit(1e-12).max(T::lit(100.0) * T::epsilon());
        if self.inner_solver == InnerSolver::Cg && !(self.inner_tol > T::zero() && self.inner_tol <= cap) {
            return Err(Error::InvalidConfig(format!(
                "elliptic CG inner_tol must lie in (0, {cap}], got {}",
                self.inner_tol
            )));
        }
        Ok(())
    }
}

/// Fast Poisson solver for the 5-point stencil on an `m x m` interior grid,
/// `m = n - 1`: a type-I discrete sine transform along both axes.
struct SineSolver<T: Real> {
    m: usize,
    fft: Arc<dyn Fft<T>>,
    /// `(2/n)^2 / eigenvalue`, row-major over `(l, k)`.
    inv_eig: Vec<T>,
}

impl<T: Real> SineSolver<T> {
    fn new(n: usize) -> Self {
        let m = n - 1;
        let nn = T::from_usize_lossy(n);
        let one_d: Vec<T> = (1..=m)
            .map(|k| T::lit(2.0) - T::lit(2.0) * (T::PI() * T::from_usize_lossy(k) / nn).cos())
            .collect();
        let norm = (T::lit(2.0) / nn).powi(2);
        let mut inv_eig = Vec::with_capacity(m * m);
        for l in 0..m {
            for k in 0..m {
                inv_eig.push(norm / (one_d[k] + one_d[l]));
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        Self { m, fft, inv_eig }
    }

    /// In-place unnormalized DST-I of each line `data[start + i*stride]`.
    fn dst_lines(&self, data: &mut [T], line_starts: impl Iterator<Item = usize>, stride: usize) {
        let m = self.m;
        let len = 2 * (m + 1);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); len];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        for start in line_starts {
            // odd extension: [0, x_1..x_m, 0, -x_m..-x_1]
            for c in buf.iter_mut() {
                *c = Complex::new(T::zero(), T::zero());
            }
            for i in 0..m {
                let v = data[start + i * stride];
                buf[i + 1].re = v;
                buf[len - 1 - i].re = -v;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for i in 0..m {
                data[start + i * stride] = -buf[i + 1].im * T::lit(0.5);
            }
        }
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let m = self.m;
        let mut x = b.to_vec();
        self.dst_lines(&mut x, (0..m).map(|j| j * m), 1);
        self.dst_lines(&mut x, 0..m, m);
        x.iter_mut().zip(&self.inv_eig).for_each(|(v, &d)| *v *= d);
        self.dst_lines(&mut x, (0..m).map(|j| j * m), 1);
        self.dst_lines(&mut x, 0..m, m);
        x
    }
}

fn stencil_apply<T: Real>(m: usize, x: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); m * m];
    let four = T::lit(4.0);
    for j in 0..m {
        for i in 0..m {
            let k = j * m + i;
            let mut v = four * x[k];
            if i > 0 {
                v -= x[k - 1];
            }
            if i + 1 < m {
                v -= x[k + 1];
            }
            if j > 0 {
                v -= x[k - m];
            }
            if j + 1 < m {
                v -= x[k + m];
            }
            y[k] = v;
        }
    }
    y
}

pub struct EllipticOperator<T: Real> {
    level: GridLevel<T>,
    cfg: EllipticConfig<T>,
    direct: Option<SineSolver<T>>,
    counter: MatvecCounter,
}

impl<T: Real> std::fmt::Debug for EllipticOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticOperator")
            .field("n_cells", &self.level.n_cells())
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl<T: Real> EllipticOperator<T> {
    pub fn build(level: &GridLevel<T>, cfg: &EllipticConfig<T>) -> Result<Self> {
        cfg.validate()?;
        if level.kind() != GridKind::DirichletSquare {
            return Err(Error::InvalidConfig(
                "elliptic operator needs a Dirichlet square level".into(),
            ));
        }
        let direct = match cfg.inner_solver {
            InnerSolver::Direct => Some(SineSolver::new(level.n_cells())),
            InnerSolver::Cg => None,
        };
        Ok(Self {
            level: level.clone(),
            cfg: *cfg,
            direct,
            counter: MatvecCounter::new(),
        })
    }

    /// Solves `A y = b` for the 5-point stiffness matrix.
    pub fn stiffness_solve(&self, b: &[T]) -> Vec<T> {
        if let Some(direct) = &self.direct {
            return direct.solve(b);
        }
        let m = self.level.side();
        let op = FnOperator::new(m * m, |x: &[T], y: &mut [T]| {
            y.copy_from_slice(&stencil_apply(m, x));
        });
        let opts = KrylovOptions {
            tol: self.cfg.inner_tol,
            max_iter: 20 * m + 200,
        };
        let (x, report) = cg(&op, b, &opts).expect("stiffness matrix is SPD");
        assert!(
            report.converged,
            "elliptic inner CG stalled at relative residual {:e}",
            report.final_relative_residual.to_f64_lossy()
        );
        x
    }

    pub fn stiffness_apply(&self, x: &[T]) -> Vec<T> {
        stencil_apply(self.level.side(), x)
    }

    /// Unscaled consistent mass matrix product.
    fn mass_full(&self, x: &[T]) -> Vec<T> {
        let h2 = self.level.h() * self.level.h();
        let mut y = self.level.mass_apply_values(x);
        y.iter_mut().for_each(|v| *v *= h2);
        y
    }
}

impl<T: Real> ForwardOperator<T> for EllipticOperator<T> {
    fn dim(&self) -> usize {
        self.level.n_dof()
    }
    fn level_index(&self) -> usize {
        self.level.index()
    }
    fn apply_into(&self, x: &[T], y: &mut [T]) {
        self.counter.bump();
        let z = self.stiffness_solve(&self.mass_full(x));
        y.iter_mut().zip(z).for_each(|(a, b)| *a = -b);
    }
    fn apply_transpose_into(&self, x: &[T], y: &mut [T]) {
        self.counter.bump();
        let z = self.mass_full(&self.stiffness_solve(x));
        y.iter_mut().zip(z).for_each(|(a, b)| *a = -b);
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}
