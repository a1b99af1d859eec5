//! Mehrotra predictor-corrector interior point method for
//!
//! ```text
//! min  1/2 |K u - f|_W^2 + beta/2 |u|_W^2   s.t.  lo <= u <= hi
//! ```
//!
//! The Newton systems are reduced to `(A + D_m) du = r`, rescaled to
//! `G du' = r'` and solved by CG (one level) or multigrid-preconditioned CGS.

use crate::error::{Error, Result};
use crate::grid::GridHierarchy;
use crate::krylov::{cgs, KrylovOptions, KrylovReport};
use crate::linalg::{norm2, norm_inf};
use crate::operators::ForwardOperator;
use crate::precond::{CoarseOptions, MgPreconditioner, PrecondMode, ScaledSystem};
use crate::scalar::Real;

/// A discretized box-constrained control problem. The last operator acts on
/// the finest level; with a hierarchy there is one operator per level.
pub struct ControlProblem<T: Real> {
    hierarchy: Option<GridHierarchy<T>>,
    operators: Vec<Box<dyn ForwardOperator<T>>>,
    weights: Vec<T>,
    f: Vec<T>,
    beta: T,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> std::fmt::Debug for ControlProblem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("n", &self.weights.len())
            .field("levels", &self.operators.len())
            .field("beta", &self.beta)
            .finish()
    }
}

impl<T: Real> ControlProblem<T> {
    pub fn on_hierarchy(
        hierarchy: GridHierarchy<T>,
        operators: Vec<Box<dyn ForwardOperator<T>>>,
        f: Vec<T>,
        beta: T,
        lo: Vec<T>,
        hi: Vec<T>,
    ) -> Result<Self> {
        if operators.len() != hierarchy.n_levels() {
            return Err(Error::DimensionMismatch {
                expected: hierarchy.n_levels(),
                actual: operators.len(),
            });
        }
        for (l, op) in hierarchy.levels().iter().zip(&operators) {
            if op.dim() != l.n_dof() {
                return Err(Error::DimensionMismatch {
                    expected: l.n_dof(),
                    actual: op.dim(),
                });
            }
        }
        let weights = hierarchy.finest().weights().to_vec();
        Self::validated(Some(hierarchy), operators, weights, f, beta, lo, hi)
    }

    /// A single-level problem with explicit quadrature weights.
    pub fn single_level(
        weights: Vec<T>,
        operator: Box<dyn ForwardOperator<T>>,
        f: Vec<T>,
        beta: T,
        lo: Vec<T>,
        hi: Vec<T>,
    ) -> Result<Self> {
        Self::validated(None, vec![operator], weights, f, beta, lo, hi)
    }

    fn validated(
        hierarchy: Option<GridHierarchy<T>>,
        operators: Vec<Box<dyn ForwardOperator<T>>>,
        weights: Vec<T>,
        f: Vec<T>,
        beta: T,
        lo: Vec<T>,
        hi: Vec<T>,
    ) -> Result<Self> {
        let n = weights.len();
        for len in [operators.last().map_or(0, |o| o.dim()), f.len(), lo.len(), hi.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, actual: len });
            }
        }
        if !(beta > T::zero()) {
            return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidConfig("weights must be positive".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(lo[i] < hi[i])) {
            return Err(Error::InvalidConfig(format!(
                "bounds must satisfy lo < hi; violated at node {i}"
            )));
        }
        Ok(Self {
            hierarchy,
            operators,
            weights,
            f,
            beta,
            lo,
            hi,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn hierarchy(&self) -> Option<&GridHierarchy<T>> {
        self.hierarchy.as_ref()
    }

    pub fn operators(&self) -> &[Box<dyn ForwardOperator<T>>] {
        &self.operators
    }

    pub fn fine_operator(&self) -> &dyn ForwardOperator<T> {
        self.operators.last().unwrap().as_ref()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn f(&self) -> &[T] {
        &self.f
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    /// `A u = beta W u + K^T W K u`: two forward-operator applications.
    pub fn hessian_apply(&self, u: &[T]) -> Vec<T> {
        let op = self.fine_operator();
        let mut ku = op.apply(u);
        ku.iter_mut().zip(&self.weights).for_each(|(v, &w)| *v *= w);
        let mut out = op.apply_transpose(&ku);
        for i in 0..self.n() {
            out[i] += self.beta * self.weights[i] * u[i];
        }
        out
    }

    /// `K^T W f`.
    pub fn data_term(&self) -> Vec<T> {
        let wf: Vec<T> = self.f.iter().zip(&self.weights).map(|(&a, &w)| a * w).collect();
        self.fine_operator().apply_transpose(&wf)
    }

    /// Objective `1/2 |K u - f|_W^2 + beta/2 |u|_W^2`.
    pub fn objective(&self, u: &[T]) -> T {
        let ku = self.fine_operator().apply(u);
        let half = T::lit(0.5);
        (0..self.n()).fold(T::zero(), |acc, i| {
            let d = ku[i] - self.f[i];
            acc + half * self.weights[i] * (d * d + self.beta * u[i] * u[i])
        })
    }
}

/// Strictly feasible primal-dual iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IpmState<T> {
    pub u: Vec<T>,
    pub v1: Vec<T>,
    pub v2: Vec<T>,
    pub mu: T,
    pub iteration: usize,
}

/// Initial multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualStart {
    /// `v1 = v2 = e`. With mesh-weighted data this makes `mu_0` too large
    /// by a factor `1/w`, so the relative `mu` test stops early on fine meshes.
    Unit,
    /// `v1 = v2 = W e`: unit multiplier functions under the mesh inner
    /// product, which keeps `mu_0` on the scale of the data as `h` shrinks.
    #[default]
    Weights,
}

impl<T: Real> IpmState<T> {
    /// Midpoint of the box with unit multipliers.
    pub fn initial(lo: &[T], hi: &[T]) -> Self {
        Self::initial_with(lo, hi, &vec![T::one(); lo.len()])
    }

    /// Midpoint of the box with `v1 = v2 = dual`.
    pub fn initial_with(lo: &[T], hi: &[T], dual: &[T]) -> Self {
        let half = T::lit(0.5);
        let u: Vec<T> = lo.iter().zip(hi).map(|(&l, &h)| l + half * (h - l)).collect();
        let mut s = Self {
            u,
            v1: dual.to_vec(),
            v2: dual.to_vec(),
            mu: T::zero(),
            iteration: 0,
        };
        s.mu = compute_mu(&s, lo, hi);
        s
    }

    /// Checks `lo < u < hi` and `v1, v2 > 0` at every node.
    pub fn check_feasible(&self, lo: &[T], hi: &[T]) -> Result<()> {
        for i in 0..self.u.len() {
            let u = self.u[i];
            if !(u > lo[i] && u < hi[i] && self.v1[i] > T::zero() && self.v2[i] > T::zero()) {
                return Err(Error::Infeasible(format!(
                    "node {i}: u = {u}, bounds [{}, {}], v1 = {}, v2 = {}",
                    lo[i], hi[i], self.v1[i], self.v2[i]
                )));
            }
        }
        Ok(())
    }
}

/// `((u - lo)^T v1 + (hi - u)^T v2) / (2N)`.
pub fn compute_mu<T: Real>(state: &IpmState<T>, lo: &[T], hi: &[T]) -> T {
    let n = state.u.len();
    let mut s = T::zero();
    for i in 0..n {
        s += (state.u[i] - lo[i]) * state.v1[i] + (hi[i] - state.u[i]) * state.v2[i];
    }
    s / T::from_usize_lossy(2 * n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals<T> {
    /// `K^T W f - A u - v2 + v1`
    pub r_u: Vec<T>,
    /// `mu e - v1 (u - lo)`
    pub r_v1: Vec<T>,
    /// `mu e - v2 (hi - u)`
    pub r_v2: Vec<T>,
    pub norm_u: T,
    pub norm_v1: T,
    pub norm_v2: T,
}

/// Right-hand sides of the Newton system for target `mu` (0 gives the pure
/// KKT residual). `ktwf` is `K^T W f`.
pub fn kkt_residuals<T: Real>(
    prob: &ControlProblem<T>,
    state: &IpmState<T>,
    ktwf: &[T],
    mu: T,
) -> Result<KktResiduals<T>> {
    state.check_feasible(&prob.lo, &prob.hi)?;
    let au = prob.hessian_apply(&state.u);
    let n = prob.n();
    let r_u: Vec<T> = (0..n).map(|i| ktwf[i] - au[i] - state.v2[i] + state.v1[i]).collect();
    let r_v1: Vec<T> = (0..n).map(|i| mu - state.v1[i] * (state.u[i] - prob.lo[i])).collect();
    let r_v2: Vec<T> = (0..n).map(|i| mu - state.v2[i] * (prob.hi[i] - state.u[i])).collect();
    Ok(KktResiduals {
        norm_u: norm2(&r_u),
        norm_v1: norm2(&r_v1),
        norm_v2: norm2(&r_v2),
        r_u,
        r_v1,
        r_v2,
    })
}

/// The reduced, rescaled Newton system.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem<T> {
    /// `v1/(u - lo) + v2/(hi - u)`
    pub m: Vec<T>,
    /// `m/w + beta`
    pub lambda: Vec<T>,
    /// `sqrt(lambda)`
    pub p: Vec<T>,
    /// `r_u + r_v1/(u - lo) - r_v2/(hi - u)`
    pub r: Vec<T>,
    /// `D_{1/p} W^{-1} r`
    pub rhs: Vec<T>,
}

impl<T: Real> ReducedSystem<T> {
    /// Maps the solution `du'` of the scaled system back to `du = du'/p`.
    pub fn unscale(&self, scaled: &[T]) -> Vec<T> {
        scaled.iter().zip(&self.p).map(|(&a, &p)| a / p).collect()
    }

    /// Right-hand side for the same matrix and a different `r`.
    pub fn scaled_rhs(&self, r: &[T], weights: &[T]) -> Vec<T> {
        (0..r.len()).map(|i| r[i] / (weights[i] * self.p[i])).collect()
    }
}

fn gaps<T: Real>(prob: &ControlProblem<T>, state: &IpmState<T>) -> Result<(Vec<T>, Vec<T>)> {
    state.check_feasible(&prob.lo, &prob.hi)?;
    let g1 = state.u.iter().zip(&prob.lo).map(|(&u, &l)| u - l).collect();
    let g2 = state.u.iter().zip(&prob.hi).map(|(&u, &h)| h - u).collect();
    Ok((g1, g2))
}

/// The `r` of the reduced system for given block residuals.
pub fn reduced_rhs<T: Real>(
    prob: &ControlProblem<T>,
    state: &IpmState<T>,
    r_u: &[T],
    r_v1: &[T],
    r_v2: &[T],
) -> Result<Vec<T>> {
    let (g1, g2) = gaps(prob, state)?;
    Ok((0..prob.n()).map(|i| r_u[i] + r_v1[i] / g1[i] - r_v2[i] / g2[i]).collect())
}

pub fn reduce_to_scaled<T: Real>(
    prob: &ControlProblem<T>,
    state: &IpmState<T>,
    r_u: &[T],
    r_v1: &[T],
    r_v2: &[T],
) -> Result<ReducedSystem<T>> {
    let (g1, g2) = gaps(prob, state)?;
    let n = prob.n();
    let m: Vec<T> = (0..n).map(|i| state.v1[i] / g1[i] + state.v2[i] / g2[i]).collect();
    let lambda: Vec<T> = (0..n).map(|i| m[i] / prob.weights[i] + prob.beta).collect();
    let p: Vec<T> = lambda.iter().map(|l| l.sqrt()).collect();
    let r = reduced_rhs(prob, state, r_u, r_v1, r_v2)?;
    let rhs = (0..n).map(|i| r[i] / (prob.weights[i] * p[i])).collect();
    Ok(ReducedSystem { m, lambda, p, r, rhs })
}

/// `dv1 = (r_v1 - v1 du)/(u - lo)`, `dv2 = (r_v2 + v2 du)/(hi - u)`.
pub fn recover_full_step<T: Real>(
    prob: &ControlProblem<T>,
    state: &IpmState<T>,
    du: &[T],
    r_v1: &[T],
    r_v2: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let (g1, g2) = gaps(prob, state)?;
    let n = prob.n();
    let dv1 = (0..n).map(|i| (r_v1[i] - state.v1[i] * du[i]) / g1[i]).collect();
    let dv2 = (0..n).map(|i| (r_v2[i] + state.v2[i] * du[i]) / g2[i]).collect();
    Ok((dv1, dv2))
}

/// Largest `alpha` keeping `x + alpha dx > 0` (infinite if nothing binds).
fn ratio_test<T: Real>(x: &[T], dx: &[T]) -> T {
    x.iter()
        .zip(dx)
        .filter(|(_, &d)| d < T::zero())
        .map(|(&v, &d)| -v / d)
        .fold(T::infinity(), T::min)
}

/// Distances to the boundary along the step: `(primal, dual)`.
pub fn max_step_to_boundary<T: Real>(
    prob: &ControlProblem<T>,
    state: &IpmState<T>,
    du: &[T],
    dv1: &[T],
    dv2: &[T],
) -> Result<(T, T)> {
    let (g1, g2) = gaps(prob, state)?;
    let neg_du: Vec<T> = du.iter().map(|&d| -d).collect();
    let primal = ratio_test(&g1, du).min(ratio_test(&g2, &neg_du));
    let dual = ratio_test(&state.v1, dv1).min(ratio_test(&state.v2, dv2));
    Ok((primal, dual))
}

/// Fraction-to-boundary rule `alpha = min(1, tau * alpha_boundary)`.
pub fn step_lengths<T: Real>(
    prob: &ControlProblem<T>,
    state: &IpmState<T>,
    du: &[T],
    dv1: &[T],
    dv2: &[T],
    tau: T,
) -> Result<(T, T)> {
    let (p, d) = max_step_to_boundary(prob, state, du, dv1, dv2)?;
    Ok((T::one().min(tau * p), T::one().min(tau * d)))
}

/// How the inner systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InnerMethod {
    /// Unpreconditioned CG on the symmetrized system.
    #[default]
    Cg,
    /// CGS preconditioned by multigrid over all hierarchy levels.
    Multigrid(PrecondMode),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions<T> {
    /// Stop once `mu <= mu_tol * mu_0` ...
    pub mu_tol: T,
    /// ... and `||r_u|| <= resid_tol * max(||r_u^0||, eps)`.
    pub resid_tol: T,
    pub max_outer: usize,
    /// Fraction to the boundary.
    pub tau: T,
    pub sigma_min: T,
    pub sigma_max: T,
    pub krylov: KrylovOptions<T>,
    pub inner: InnerMethod,
    pub coarse: CoarseOptions<T>,
    pub dual_start: DualStart,
}

impl<T: Real> Default for IpmOptions<T> {
    fn default() -> Self {
        Self {
            mu_tol: T::lit(1e-10),
            resid_tol: T::lit(1e-8),
            max_outer: 40,
            tau: T::lit(0.99995),
            sigma_min: T::lit(1e-8),
            sigma_max: T::one(),
            krylov: KrylovOptions::default(),
            inner: InnerMethod::Cg,
            coarse: CoarseOptions::default(),
            dual_start: DualStart::Weights,
        }
    }
}

impl<T: Real> IpmOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::zero() && self.tau < T::one()) {
            return Err(Error::InvalidConfig(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.mu_tol > T::zero() && self.resid_tol > T::zero()) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.krylov.max_iter == 0 {
            return Err(Error::InvalidConfig("iteration limits must be positive".into()));
        }
        if !(self.sigma_min > T::zero() && self.sigma_min <= self.sigma_max) {
            return Err(Error::InvalidConfig("need 0 < sigma_min <= sigma_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterIterationRecord<T> {
    pub iteration: usize,
    /// `mu` after the step of this iteration.
    pub mu: T,
    pub predictor_iters: usize,
    pub corrector_iters: usize,
    /// Finest-level forward-operator count at the end of the iteration.
    pub fine_matvecs_cumulative: u64,
    /// Discrete `W^{2,∞}` size of `lambda^{-1/2}` for this iteration's system.
    pub lambda_w2inf: T,
    pub alpha_primal: T,
    pub alpha_dual: T,
    pub sigma: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmResult<T> {
    pub state: IpmState<T>,
    pub records: Vec<OuterIterationRecord<T>>,
    pub converged: bool,
    pub mu0: T,
    pub initial_residual: T,
    pub final_residual: T,
    /// Preconditioner constructions; one per outer iteration.
    pub precond_builds: usize,
    /// Inner solves that stopped at `max_iter` without reaching `tol`.
    pub inner_failures: usize,
    /// Preconditioned solves that broke down and were redone with CG.
    pub inner_fallbacks: usize,
}

impl<T: Real> IpmResult<T> {
    pub fn total_fine_matvecs(&self) -> u64 {
        self.records.last().map_or(0, |r| r.fine_matvecs_cumulative)
    }

    /// Errors with [`Error::MaxOuterIterations`] unless converged.
    pub fn require_converged(self, max_outer: usize) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxOuterIterations(max_outer))
        }
    }
}

/// Inner solver for the two right-hand sides of one outer iteration.
enum Inner<'a, T: Real> {
    Cg(ScaledSystem<'a, T>),
    Mg(MgPreconditioner<'a, T>),
}

impl<T: Real> Inner<'_, T> {
    /// Returns the solution, its report, and whether the CG fallback ran.
    ///
    /// A CGS breakdown (possible when the coarse level is too coarse for a
    /// rough `λ`) is not fatal: the solve is repeated with unpreconditioned CG
    /// on the same system. The reported iterations are those of CG; the
    /// mat-vec counter includes both attempts.
    fn solve(&self, rhs: &[T], opts: &KrylovOptions<T>) -> Result<(Vec<T>, KrylovReport<T>, bool)> {
        match self {
            Inner::Cg(sys) => sys.solve_cg(rhs, opts).map(|(x, r)| (x, r, false)),
            Inner::Mg(mg) => {
                let failures = mg.coarse_failures();
                let attempt = cgs(mg.finest(), mg, rhs, opts);
                if mg.coarse_failures() > failures {
                    return Err(Error::NotConverged {
                        solver: "coarse-level solve",
                        iterations: mg.coarse_failures(),
                        residual: f64::NAN,
                    });
                }
                match attempt {
                    Ok((x, r)) => Ok((x, r, false)),
                    Err(Error::Breakdown { .. }) => {
                        let (x, r) = mg.finest().solve_cg(rhs, opts)?;
                        Ok((x, r, true))
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// Runs Mehrotra's method from the midpoint start.
///
/// Returns `Ok` with `converged = false` if `max_outer` is reached, so the
/// caller still gets the iteration history.
pub fn solve<T: Real>(prob: &ControlProblem<T>, opts: &IpmOptions<T>) -> Result<IpmResult<T>> {
    opts.validate()?;
    if let InnerMethod::Multigrid(_) = opts.inner {
        match prob.hierarchy() {
            Some(h) if h.n_levels() >= 2 => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "multigrid inner solves need a hierarchy with at least two levels".into(),
                ))
            }
        }
    }
    let n = prob.n();
    let (lo, hi) = (&prob.lo, &prob.hi);
    let dual = match opts.dual_start {
        DualStart::Unit => vec![T::one(); n],
        DualStart::Weights => prob.weights.clone(),
    };
    let mut state = IpmState::initial_with(lo, hi, &dual);
    let mu0 = state.mu;
    let ktwf = prob.data_term();
    let initial = kkt_residuals(prob, &state, &ktwf, T::zero())?;
    let resid_scale = initial.norm_u.max(T::epsilon());
    let mut residuals = initial.clone();
    let mut records = Vec::new();
    let mut precond_builds = 0;
    let mut inner_failures = 0;
    let mut inner_fallbacks = 0;
    let mut converged = false;

    for iteration in 1..=opts.max_outer {
        let mu = state.mu;
        if mu <= opts.mu_tol * mu0 && residuals.norm_u <= opts.resid_tol * resid_scale {
            converged = true;
            break;
        }
        // predictor: mu = 0
        let reduced = reduce_to_scaled(prob, &state, &residuals.r_u, &residuals.r_v1, &residuals.r_v2)?;
        let lambda_w2inf = match prob.hierarchy() {
            Some(h) => {
                let g: Vec<T> = reduced.lambda.iter().map(|l| T::one() / l.sqrt()).collect();
                h.finest().discrete_w2inf(&g)
            }
            None => T::nan(),
        };
        let inner = match opts.inner {
            InnerMethod::Cg => Inner::Cg(ScaledSystem::from_weights(
                &prob.weights,
                prob.fine_operator().level_index(),
                prob.fine_operator(),
                reduced.lambda.clone(),
                prob.beta,
            )?),
            InnerMethod::Multigrid(mode) => Inner::Mg(MgPreconditioner::build(
                prob.hierarchy().unwrap(),
                &prob.operators,
                &reduced.lambda,
                prob.beta,
                mode,
                &opts.coarse,
            )?),
        };
        precond_builds += 1;

        let (x_aff, rep_aff, fb) = inner.solve(&reduced.rhs, &opts.krylov)?;
        inner_fallbacks += usize::from(fb);
        inner_failures += usize::from(!rep_aff.converged);
        let du_aff = reduced.unscale(&x_aff);
        let (dv1_aff, dv2_aff) = recover_full_step(prob, &state, &du_aff, &residuals.r_v1, &residuals.r_v2)?;
        let (ap, ad) = max_step_to_boundary(prob, &state, &du_aff, &dv1_aff, &dv2_aff)?;
        let alpha_aff = T::one().min(ap).min(ad);
        let mut comp = T::zero();
        for i in 0..n {
            let u = state.u[i] + alpha_aff * du_aff[i];
            comp += (u - lo[i]) * (state.v1[i] + alpha_aff * dv1_aff[i])
                + (hi[i] - u) * (state.v2[i] + alpha_aff * dv2_aff[i]);
        }
        let mu_aff = comp / T::from_usize_lossy(2 * n);
        let sigma = (mu_aff / mu).powi(3).max(opts.sigma_min).min(opts.sigma_max);

        // corrector: same matrix, new complementarity rows
        let target = sigma * mu;
        let r_v1: Vec<T> = (0..n)
            .map(|i| target - state.v1[i] * (state.u[i] - lo[i]) - du_aff[i] * dv1_aff[i])
            .collect();
        let r_v2: Vec<T> = (0..n)
            .map(|i| target - state.v2[i] * (hi[i] - state.u[i]) + du_aff[i] * dv2_aff[i])
            .collect();
        let r = reduced_rhs(prob, &state, &residuals.r_u, &r_v1, &r_v2)?;
        let rhs = reduced.scaled_rhs(&r, &prob.weights);
        let (x, rep, fb) = inner.solve(&rhs, &opts.krylov)?;
        inner_fallbacks += usize::from(fb);
        inner_failures += usize::from(!rep.converged);
        drop(inner);
        let du = reduced.unscale(&x);
        let (dv1, dv2) = recover_full_step(prob, &state, &du, &r_v1, &r_v2)?;
        let (alpha_p, alpha_d) = step_lengths(prob, &state, &du, &dv1, &dv2, opts.tau)?;

        for i in 0..n {
            state.u[i] += alpha_p * du[i];
            state.v1[i] += alpha_d * dv1[i];
            state.v2[i] += alpha_d * dv2[i];
        }
        state.check_feasible(lo, hi)?;
        state.mu = compute_mu(&state, lo, hi);
        state.iteration = iteration;
        residuals = kkt_residuals(prob, &state, &ktwf, T::zero())?;
        if !state.mu.is_finite() || !residuals.norm_u.is_finite() {
            return Err(Error::Breakdown {
                solver: "interior point",
                detail: format!("non-finite iterate at outer iteration {iteration}"),
            });
        }
        records.push(OuterIterationRecord {
            iteration,
            mu: state.mu,
            predictor_iters: rep_aff.iterations,
            corrector_iters: rep.iterations,
            fine_matvecs_cumulative: prob.fine_operator().matvecs(),
            lambda_w2inf,
            alpha_primal: alpha_p,
            alpha_dual: alpha_d,
            sigma,
        });
    }
    if !converged {
        converged = state.mu <= opts.mu_tol * mu0 && residuals.norm_u <= opts.resid_tol * resid_scale;
    }
    Ok(IpmResult {
        state,
        records,
        converged,
        mu0,
        initial_residual: initial.norm_u,
        final_residual: residuals.norm_u,
        precond_builds,
        inner_failures,
        inner_fallbacks,
    })
}

/// Largest nodewise complementarity products `(max v1 (u - lo), max v2 (hi - u))`.
pub fn complementarity<T: Real>(prob: &ControlProblem<T>, state: &IpmState<T>) -> (T, T) {
    let c1: Vec<T> = (0..prob.n()).map(|i| state.v1[i] * (state.u[i] - prob.lo[i])).collect();
    let c2: Vec<T> = (0..prob.n()).map(|i| state.v2[i] * (prob.hi[i] - state.u[i])).collect();
    (norm_inf(&c1), norm_inf(&c2))
}
