//! The scaled inner system `G_h = I + D_{1/p} K^{*h} K D_{1/p}` and its
//! two-grid and W-cycle multigrid preconditioners.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, GridLevel};
use crate::krylov::{cg, FnOperator, KrylovOptions, LinearOperator};
use crate::linalg::{norm2, DenseMatrix, LuFactors};
use crate::operators::ForwardOperator;
use crate::scalar::Real;

/// `G_h` on one level for a fixed `λ_h`.
pub struct ScaledSystem<'a, T: Real> {
    weights: &'a [T],
    level_index: usize,
    op: &'a dyn ForwardOperator<T>,
    lambda: Vec<T>,
    p: Vec<T>,
    beta: T,
}

impl<'a, T: Real> ScaledSystem<'a, T> {
    /// Requires `λ >= β > 0` at every node.
    pub fn new(
        level: &'a GridLevel<T>,
        op: &'a dyn ForwardOperator<T>,
        lambda: Vec<T>,
        beta: T,
    ) -> Result<Self> {
        Self::from_weights(level.weights(), level.index(), op, lambda, beta)
    }

    /// As [`ScaledSystem::new`] for a bare weight vector (no grid needed).
    pub fn from_weights(
        weights: &'a [T],
        level_index: usize,
        op: &'a dyn ForwardOperator<T>,
        lambda: Vec<T>,
        beta: T,
    ) -> Result<Self> {
        let n = weights.len();
        if op.dim() != n || lambda.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if op.dim() != n { op.dim() } else { lambda.len() },
            });
        }
        if !(beta > T::zero()) {
            return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
        }
        if let Some((i, &l)) = lambda.iter().enumerate().find(|(_, &l)| !(l >= beta) || !l.is_finite()) {
            return Err(Error::Infeasible(format!(
                "lambda[{i}] = {l} is below beta = {beta} on level {level_index}"
            )));
        }
        let p = lambda.iter().map(|l| l.sqrt()).collect();
        Ok(Self {
            weights,
            level_index,
            op,
            lambda,
            p,
            beta,
        })
    }

    pub fn level_index(&self) -> usize {
        self.level_index
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        self.weights
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn operator(&self) -> &dyn ForwardOperator<T> {
        self.op
    }

    /// `y = G u`: exactly two forward-operator applications.
    pub fn g_apply_into(&self, u: &[T], y: &mut [T]) {
        let w = self.weights;
        let n = self.dim();
        let scaled: Vec<T> = u.iter().zip(&self.p).map(|(&a, &p)| a / p).collect();
        let mut ku = vec![T::zero(); n];
        self.op.apply_into(&scaled, &mut ku);
        ku.iter_mut().zip(w).for_each(|(v, &wi)| *v *= wi);
        self.op.apply_transpose_into(&ku, y);
        for i in 0..n {
            y[i] = u[i] + y[i] / (w[i] * self.p[i]);
        }
    }

    pub fn g_apply(&self, u: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        self.g_apply_into(u, &mut y);
        y
    }

    /// Solves `G x = b` by CG on the Euclidean-symmetric form
    /// `W^{1/2} G W^{-1/2}`.
    pub fn solve_cg(&self, b: &[T], opts: &KrylovOptions<T>) -> Result<(Vec<T>, crate::krylov::KrylovReport<T>)> {
        let sw: Vec<T> = self.weights.iter().map(|w| w.sqrt()).collect();
        let op = symmetrized(self, &sw);
        let rhs: Vec<T> = b.iter().zip(&sw).map(|(&a, &s)| a * s).collect();
        let (y, report) = cg(&op, &rhs, opts)?;
        Ok((y.iter().zip(&sw).map(|(&a, &s)| a / s).collect(), report))
    }

    pub fn materialize(&self) -> DenseMatrix<T> {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n);
        let mut e = vec![T::zero(); n];
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            self.g_apply_into(&e, &mut col);
            m.set_column(j, &col);
            e[j] = T::zero();
        }
        m
    }
}

impl<T: Real> LinearOperator<T> for ScaledSystem<'_, T> {
    fn dim(&self) -> usize {
        ScaledSystem::dim(self)
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.g_apply_into(x, y)
    }
}

/// `W^{1/2} G W^{-1/2}` given `sqrt_w = W^{1/2}`.
pub fn symmetrized<'s, T: Real>(
    sys: &'s ScaledSystem<'_, T>,
    sqrt_w: &'s [T],
) -> FnOperator<impl Fn(&[T], &mut [T]) + 's> {
    FnOperator::new(sys.dim(), move |x: &[T], y: &mut [T]| {
        let z: Vec<T> = x.iter().zip(sqrt_w).map(|(&a, &s)| a / s).collect();
        sys.g_apply_into(&z, y);
        y.iter_mut().zip(sqrt_w).for_each(|(v, &s)| *v *= s);
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecondMode {
    TwoGrid,
    #[default]
    WCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoarseSolverKind {
    /// Dense when the coarsest level has at most `dense_limit` dofs.
    #[default]
    Auto,
    Dense,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseOptions<T> {
    pub kind: CoarseSolverKind,
    pub tol: T,
    pub max_iter: usize,
    pub dense_limit: usize,
}

impl<T: Real> Default for CoarseOptions<T> {
    fn default() -> Self {
        Self {
            kind: CoarseSolverKind::Auto,
            tol: T::lit(1e-10).max(T::lit(100.0) * T::epsilon()),
            max_iter: 2000,
            dense_limit: 2048,
        }
    }
}

enum CoarseSolver<T> {
    Dense(LuFactors<T>),
    Cg(KrylovOptions<T>),
}

/// `S_h` (two-grid) or `S_h^mg` (W-cycle) for one fixed finest `λ_h`.
///
/// Systems are stored from the coarsest used level up to the finest.
pub struct MgPreconditioner<'a, T: Real> {
    hierarchy: &'a GridHierarchy<T>,
    systems: Vec<ScaledSystem<'a, T>>,
    mode: PrecondMode,
    coarse: CoarseSolver<T>,
    coarse_failures: AtomicUsize,
    applications: AtomicUsize,
}

impl<'a, T: Real> MgPreconditioner<'a, T> {
    /// Builds per-level `λ` by discarding fine-node values, the `G` closures,
    /// and the coarsest solver. `operators[i]` acts on hierarchy level `i`.
    pub fn build(
        hierarchy: &'a GridHierarchy<T>,
        operators: &'a [Box<dyn ForwardOperator<T>>],
        lambda_finest: &[T],
        beta: T,
        mode: PrecondMode,
        coarse: &CoarseOptions<T>,
    ) -> Result<Self> {
        let top = hierarchy.finest_index();
        if top == 0 {
            return Err(Error::NoSuchLevel("coarse"));
        }
        if operators.len() != hierarchy.n_levels() {
            return Err(Error::DimensionMismatch {
                expected: hierarchy.n_levels(),
                actual: operators.len(),
            });
        }
        let base = match mode {
            PrecondMode::TwoGrid => top - 1,
            PrecondMode::WCycle => 0,
        };
        let mut lambdas = vec![lambda_finest.to_vec()];
        for i in (base + 1..=top).rev() {
            let next = hierarchy.coarsen_values(i, lambdas.last().unwrap());
            lambdas.push(next);
        }
        lambdas.reverse();
        let systems = lambdas
            .into_iter()
            .enumerate()
            .map(|(k, lam)| {
                let i = base + k;
                ScaledSystem::new(hierarchy.level(i), operators[i].as_ref(), lam, beta)
            })
            .collect::<Result<Vec<_>>>()?;

        let n0 = systems[0].dim();
        let dense = match coarse.kind {
            CoarseSolverKind::Auto => n0 <= coarse.dense_limit,
            CoarseSolverKind::Dense => true,
            CoarseSolverKind::Cg => false,
        };
        let coarse = if dense {
            CoarseSolver::Dense(systems[0].materialize().lu()?)
        } else {
            CoarseSolver::Cg(KrylovOptions {
                tol: coarse.tol,
                max_iter: coarse.max_iter,
            })
        };
        Ok(Self {
            hierarchy,
            systems,
            mode,
            coarse,
            coarse_failures: AtomicUsize::new(0),
            applications: AtomicUsize::new(0),
        })
    }

    pub fn mode(&self) -> PrecondMode {
        self.mode
    }

    pub fn n_levels(&self) -> usize {
        self.systems.len()
    }

    pub fn systems(&self) -> &[ScaledSystem<'a, T>] {
        &self.systems
    }

    pub fn finest(&self) -> &ScaledSystem<'a, T> {
        self.systems.last().unwrap()
    }

    pub fn uses_dense_coarse_solver(&self) -> bool {
        matches!(self.coarse, CoarseSolver::Dense(_))
    }

    /// Coarse CG solves that stopped before reaching their tolerance.
    pub fn coarse_failures(&self) -> usize {
        self.coarse_failures.load(Ordering::Relaxed)
    }

    /// Number of preconditioner applications so far.
    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    fn coarse_solve(&self, r: &[T]) -> Vec<T> {
        match &self.coarse {
            CoarseSolver::Dense(lu) => lu.solve(r),
            CoarseSolver::Cg(opts) => match self.systems[0].solve_cg(r, opts) {
                Ok((x, rep)) => {
                    if !rep.converged {
                        self.coarse_failures.fetch_add(1, Ordering::Relaxed);
                    }
                    x
                }
                Err(_) => {
                    self.coarse_failures.fetch_add(1, Ordering::Relaxed);
                    vec![T::zero(); r.len()]
                }
            },
        }
    }

    /// Hierarchy index of stored system `k`.
    fn hier_index(&self, k: usize) -> usize {
        self.systems[k].level_index()
    }

    /// `(I - J Π) r + J · inner(Π r)` on stored level `k >= 1`.
    fn coarse_correction(&self, k: usize, r: &[T], inner: impl FnOnce(&[T]) -> Vec<T>) -> Result<Vec<T>> {
        let fine = self.hier_index(k);
        let pr = self.hierarchy.l2_project_values(fine, r)?;
        let jpr = self.hierarchy.prolong_values(fine - 1, &pr);
        let correction = inner(&pr);
        let jc = self.hierarchy.prolong_values(fine - 1, &correction);
        Ok((0..r.len()).map(|i| r[i] - jpr[i] + jc[i]).collect())
    }

    /// `S_h r = (I - J Π) r + J G_{2h}^{-1} Π r` using the two finest stored
    /// levels, with an exact coarse solve when in two-grid mode.
    pub fn two_grid_apply(&self, r: &[T]) -> Result<Vec<T>> {
        let k = self.systems.len() - 1;
        if k == 1 {
            return self.coarse_correction(k, r, |pr| self.coarse_solve(pr));
        }
        let opts = match &self.coarse {
            CoarseSolver::Cg(o) => *o,
            CoarseSolver::Dense(_) => KrylovOptions {
                tol: T::lit(1e-12).max(T::lit(100.0) * T::epsilon()),
                max_iter: 5000,
            },
        };
        let mut failed = None;
        let out = self.coarse_correction(k, r, |pr| match self.systems[k - 1].solve_cg(pr, &opts) {
            Ok((x, _)) => x,
            Err(e) => {
                failed = Some(e);
                vec![T::zero(); pr.len()]
            }
        })?;
        match failed {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Algorithm 2: the W-cycle. No `G` is applied on the finest level.
    pub fn mg_apply(&self, r: &[T]) -> Result<Vec<T>> {
        self.mg(r, self.systems.len() - 1)
    }

    fn mg(&self, r: &[T], k: usize) -> Result<Vec<T>> {
        if k == 0 {
            return Ok(self.coarse_solve(r));
        }
        let mut err = None;
        let mut recurse = |pr: &[T]| match self.mg(pr, k - 1) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                vec![T::zero(); pr.len()]
            }
        };
        let mut u = self.coarse_correction(k, r, &mut recurse)?;
        if k < self.systems.len() - 1 {
            let gu = self.systems[k].g_apply(&u);
            let r1: Vec<T> = r.iter().zip(&gu).map(|(&a, &b)| a - b).collect();
            let u1 = self.coarse_correction(k, &r1, &mut recurse)?;
            u.iter_mut().zip(&u1).for_each(|(a, &b)| *a += b);
        }
        match err {
            Some(e) => Err(e),
            None => Ok(u),
        }
    }

    /// The preconditioner action for the configured mode.
    pub fn apply_precond(&self, r: &[T]) -> Result<Vec<T>> {
        self.applications.fetch_add(1, Ordering::Relaxed);
        self.mg_apply(r)
    }

    /// Power-iteration estimate of `ρ(I - S G)` on the finest level.
    ///
    /// Uses the geometric mean growth over the second half of the run, so a
    /// dominant complex pair is handled as well as a real eigenvalue.
    pub fn spectral_radius_estimate(&self, n_iters: usize, seed: u64) -> Result<T> {
        let fine = self.finest();
        let n = fine.dim();
        // deterministic pseudo-random start with a component in every direction
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut x: Vec<T> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                T::lit(((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5)
            })
            .collect();
        let nrm = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nrm);
        let half = n_iters / 2;
        let mut log_growth = T::zero();
        for it in 0..n_iters {
            let sg = self.mg_apply(&fine.g_apply(&x))?;
            let y: Vec<T> = x.iter().zip(&sg).map(|(&a, &b)| a - b).collect();
            let ny = norm2(&y);
            if ny == T::zero() || !ny.is_finite() {
                return Ok(if ny == T::zero() { T::zero() } else { ny });
            }
            if it >= half {
                log_growth += ny.ln();
            }
            x = y.into_iter().map(|v| v / ny).collect();
        }
        Ok((log_growth / T::from_usize_lossy((n_iters - half).max(1))).exp())
    }
}

impl<T: Real> LinearOperator<T> for MgPreconditioner<'_, T> {
    fn dim(&self) -> usize {
        self.finest().dim()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        match self.apply_precond(x) {
            Ok(v) => y.copy_from_slice(&v),
            Err(_) => {
                self.coarse_failures.fetch_add(1, Ordering::Relaxed);
                y.copy_from_slice(x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridKind;
    use crate::linalg::{dot, rel_diff, sub};
    use crate::operators::{DenseOperator, ParabolicConfig, ParabolicOperator, ParabolicScheme, ZeroOperator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn parabolic_ops(h: &GridHierarchy<f64>) -> Vec<Box<dyn ForwardOperator<f64>>> {
        let cfg = ParabolicConfig {
            scheme: ParabolicScheme::Spectral,
            ..Default::default()
        };
        h.levels()
            .iter()
            .map(|l| Box::new(ParabolicOperator::build(l, &cfg).unwrap()) as Box<dyn ForwardOperator<f64>>)
            .collect()
    }

    fn zero_ops(h: &GridHierarchy<f64>) -> Vec<Box<dyn ForwardOperator<f64>>> {
        h.levels()
            .iter()
            .map(|l| Box::new(ZeroOperator::on_level(l.n_dof(), l.index())) as Box<dyn ForwardOperator<f64>>)
            .collect()
    }

    fn sin_lambda(l: &GridLevel<f64>, beta: f64) -> Vec<f64> {
        l.interpolate(|x, _| x.sin() + beta)
    }

    #[test]
    fn g_is_identity_for_zero_operator_and_huge_lambda() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 16, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random(16, &mut rng);
        let zero = zero_ops(&h);
        let sys = ScaledSystem::new(h.level(0), zero[0].as_ref(), vec![1.0; 16], 1.0).unwrap();
        assert_eq!(sys.g_apply(&u), u);

        let ops = parabolic_ops(&h);
        let sys = ScaledSystem::new(h.level(0), ops[0].as_ref(), vec![1e12; 16], 1.0).unwrap();
        assert!(rel_diff(&sys.g_apply(&u), &u) <= 1e-9);
        assert_eq!(ops[0].matvecs(), 2);
    }

    #[test]
    fn g_matches_dense_assembly() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 16, 1).unwrap();
        let l = h.level(0);
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(l, 0.1);
        let sys = ScaledSystem::new(l, ops[0].as_ref(), lam.clone(), 0.1).unwrap();
        let k = DenseMatrix::from_fn(16, |i, j| {
            let mut e = vec![0.0; 16];
            e[j] = 1.0;
            ops[0].apply(&e)[i]
        });
        let w = l.weights();
        let d: Vec<f64> = lam.iter().map(|v| 1.0 / v.sqrt()).collect();
        let w_inv: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
        let h_mat = k
            .transpose()
            .scale_rows(&w_inv)
            .matmul(&k.scale_rows(w))
            .scale_rows(&d)
            .scale_cols(&d);
        let g = DenseMatrix::identity(16).add(&h_mat);
        assert!(g.sub(&sys.materialize()).max_abs() <= 1e-12);
    }

    #[test]
    fn g_is_h_self_adjoint_and_bounded_below() {
        let h = GridHierarchy::<f64>::build(GridKind::DirichletSquare, 8, 1).unwrap();
        let l = h.level(0);
        let op = crate::operators::EllipticOperator::build(l, &Default::default()).unwrap();
        let lam = l.interpolate(|x, y| 1e-3 + x * y);
        let sys = ScaledSystem::new(l, &op, lam, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let u = random(l.n_dof(), &mut rng);
            let v = random(l.n_dof(), &mut rng);
            let a = l.inner_values(&sys.g_apply(&u), &v);
            let b = l.inner_values(&u, &sys.g_apply(&v));
            let scale = l.inner_values(&u, &u).sqrt() * l.inner_values(&v, &v).sqrt();
            assert!((a - b).abs() <= 1e-11 * scale);
            assert!(l.inner_values(&sys.g_apply(&u), &u) >= l.inner_values(&u, &u) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn rejects_lambda_below_beta() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 8, 1).unwrap();
        let ops = zero_ops(&h);
        let mut lam = vec![1.0; 8];
        lam[3] = 0.5;
        assert!(matches!(
            ScaledSystem::new(h.level(0), ops[0].as_ref(), lam, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn zero_operator_preconditioners_are_identity() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 8, 3).unwrap();
        let ops = zero_ops(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random(32, &mut rng);
        for mode in [PrecondMode::TwoGrid, PrecondMode::WCycle] {
            let mg = MgPreconditioner::build(&h, &ops, &vec![2.0; 32], 1.0, mode, &Default::default()).unwrap();
            assert!(rel_diff(&mg.mg_apply(&r).unwrap(), &r) < 1e-13);
            assert!(rel_diff(&mg.two_grid_apply(&r).unwrap(), &r) < 1e-12);
            assert!(mg.spectral_radius_estimate(10, 1).unwrap() < 1e-12);
        }
    }

    #[test]
    fn two_grid_is_identity_on_rough_space() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 40, 2).unwrap();
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(h.finest(), 1.0);
        let mg = MgPreconditioner::build(&h, &ops, &lam, 1.0, PrecondMode::TwoGrid, &Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = h.rough_project_values(1, &random(80, &mut rng)).unwrap();
        assert!(rel_diff(&mg.two_grid_apply(&r).unwrap(), &r) < 1e-10);
    }

    #[test]
    fn coarsened_lambdas_follow_discarding() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 8, 3).unwrap();
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(h.finest(), 0.5);
        let mg = MgPreconditioner::build(&h, &ops, &lam, 0.5, PrecondMode::WCycle, &Default::default()).unwrap();
        let mid = h.coarsen_values(2, &lam);
        assert_eq!(mg.systems()[1].lambda(), mid.as_slice());
        assert_eq!(mg.systems()[0].lambda(), h.coarsen_values(1, &mid).as_slice());
        for s in mg.systems() {
            for (p, l) in s.p().iter().zip(s.lambda()) {
                assert!((p * p - l).abs() <= 1e-15 * l);
            }
        }
        let flat = MgPreconditioner::build(&h, &ops, &vec![0.5; 32], 0.5, PrecondMode::WCycle, &Default::default()).unwrap();
        assert!(flat.systems().iter().all(|s| s.lambda().iter().all(|&v| v == 0.5)));
    }

    #[test]
    fn two_levels_mg_equals_two_grid() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 40, 2).unwrap();
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(h.finest(), 0.1);
        let mg = MgPreconditioner::build(&h, &ops, &lam, 0.1, PrecondMode::WCycle, &Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random(80, &mut rng);
        assert!(rel_diff(&mg.mg_apply(&r).unwrap(), &mg.two_grid_apply(&r).unwrap()) <= 1e-13);
    }

    #[test]
    fn two_grid_nearly_inverts_g() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 80, 2).unwrap();
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(h.finest(), 1.0);
        let mg = MgPreconditioner::build(&h, &ops, &lam, 1.0, PrecondMode::TwoGrid, &Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let u = random(160, &mut rng);
            let sgu = mg.two_grid_apply(&mg.finest().g_apply(&u)).unwrap();
            assert!(rel_diff(&sgu, &u) <= 0.01);
        }
    }

    #[test]
    fn w_cycle_does_no_fine_matvecs() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 80, 3).unwrap();
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(h.finest(), 0.01);
        let mg = MgPreconditioner::build(&h, &ops, &lam, 0.01, PrecondMode::WCycle, &Default::default()).unwrap();
        let before = ops[2].matvecs();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        mg.mg_apply(&random(320, &mut rng)).unwrap();
        assert_eq!(ops[2].matvecs(), before);
        assert!(ops[1].matvecs() > 0);
    }

    #[test]
    fn dense_and_cg_coarse_solvers_agree() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 80, 2).unwrap();
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(h.finest(), 0.01);
        let build = |kind| {
            let opts = CoarseOptions {
                kind,
                tol: 1e-12,
                ..Default::default()
            };
            MgPreconditioner::build(&h, &ops, &lam, 0.01, PrecondMode::TwoGrid, &opts).unwrap()
        };
        let (dense, iterative) = (build(CoarseSolverKind::Dense), build(CoarseSolverKind::Cg));
        assert!(dense.uses_dense_coarse_solver() && !iterative.uses_dense_coarse_solver());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random(80, &mut rng);
        assert!(rel_diff(&dense.coarse_solve(&r), &iterative.coarse_solve(&r)) <= 1e-9);
    }

    /// Algorithm 1 evaluated with dense matrices: `S_0 = G_0^{-1}`,
    /// `I(S) = (I - J Π) + J S Π`, `N(M) = 2M - M G M`.
    #[test]
    fn w_cycle_matches_dense_operator_form() {
        let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, 20, 4).unwrap();
        let ops = parabolic_ops(&h);
        let lam = sin_lambda(h.finest(), 0.1);
        let mg = MgPreconditioner::build(&h, &ops, &lam, 0.1, PrecondMode::WCycle, &Default::default()).unwrap();
        let dense_ops: Vec<Box<dyn ForwardOperator<f64>>> = ops
            .iter()
            .map(|op| {
                let n = op.dim();
                let m = DenseMatrix::from_fn(n, |i, j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    op.apply(&e)[i]
                });
                Box::new(DenseOperator::new(m)) as Box<dyn ForwardOperator<f64>>
            })
            .collect();
        let dense_mg =
            MgPreconditioner::build(&h, &dense_ops, &lam, 0.1, PrecondMode::WCycle, &Default::default()).unwrap();
        let matrix = |n: usize, f: &dyn Fn(&[f64]) -> Vec<f64>| {
            let mut m = DenseMatrix::zeros(n);
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                m.set_column(j, &f(&e));
            }
            m
        };
        let gs: Vec<DenseMatrix<f64>> = dense_mg.systems().iter().map(|s| s.materialize()).collect();
        let mut s = gs[0].lu().unwrap().solve_matrix(&DenseMatrix::identity(gs[0].n()));
        for i in 1..4 {
            let n = h.level(i).n_dof();
            let lifted = matrix(n, &|x| {
                let px = h.l2_project_values(i, x).unwrap();
                let smooth = h.prolong_values(i - 1, &px);
                let corr = h.prolong_values(i - 1, &s.matvec(&px));
                (0..n).map(|k| x[k] - smooth[k] + corr[k]).collect()
            });
            s = if i < 3 {
                lifted.scale_rows(&vec![2.0; n]).sub(&lifted.matmul(&gs[i]).matmul(&lifted))
            } else {
                lifted
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..3 {
            let r = random(160, &mut rng);
            let direct = s.matvec(&r);
            assert!(rel_diff(&dense_mg.mg_apply(&r).unwrap(), &direct) <= 1e-10);
            assert!(rel_diff(&mg.mg_apply(&r).unwrap(), &direct) <= 1e-10);
        }
    }

    #[test]
    fn two_grid_quality_improves_with_refinement() {
        let mut prev = f64::INFINITY;
        for n in [40, 80, 160] {
            let h = GridHierarchy::<f64>::build(GridKind::PeriodicInterval, n, 2).unwrap();
            let ops = parabolic_ops(&h);
            let lam = sin_lambda(h.finest(), 0.1);
            let mg = MgPreconditioner::build(&h, &ops, &lam, 0.1, PrecondMode::TwoGrid, &Default::default()).unwrap();
            let rho = mg.spectral_radius_estimate(60, 11).unwrap();
            assert!(rho < prev, "n={n}: {rho} !< {prev}");
            prev = rho;
        }
    }

    #[test]
    fn symmetrized_form_is_euclidean_symmetric() {
        let h = GridHierarchy::<f64>::build(GridKind::DirichletSquare, 8, 1).unwrap();
        let l = h.level(0);
        let op = crate::operators::EllipticOperator::build(l, &Default::default()).unwrap();
        let sys = ScaledSystem::new(l, &op, l.interpolate(|x, _| 0.5 + x), 0.5).unwrap();
        let sw: Vec<f64> = l.weights().iter().map(|w| w.sqrt()).collect();
        let sym = symmetrized(&sys, &sw);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (u, v) = (random(49, &mut rng), random(49, &mut rng));
        let mut su = vec![0.0; 49];
        let mut sv = vec![0.0; 49];
        sym.apply(&u, &mut su);
        sym.apply(&v, &mut sv);
        assert!((dot(&su, &v) - dot(&u, &sv)).abs() <= 1e-12 * dot(&su, &v).abs().max(1.0));
        let b = random(49, &mut rng);
        let (x, rep) = sys.solve_cg(&b, &KrylovOptions { tol: 1e-12, max_iter: 200 }).unwrap();
        assert!(rep.converged);
        assert!(norm2(&sub(&sys.g_apply(&x), &b)) <= 1e-10 * norm2(&b));
    }
}
