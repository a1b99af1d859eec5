//! Dense materialization and eigen-analysis of the scaled systems and the
//! two-grid preconditioner: spectral distances, spectral radii, and the
//! spectral-radius versus spectral-distance bound.

mod eigen;

pub use eigen::{eigenpair_residual, eigenvalues, EIGEN_SIZE_LIMIT};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, GridKind};
use crate::linalg::DenseMatrix;
use crate::operators::{ForwardOperator, OperatorBuilder};
use crate::precond::ScaledSystem;
use crate::scalar::Real;

/// Largest dimension accepted by [`materialize`].
pub const MATERIALIZE_LIMIT: usize = 2048;

/// Dense matrix of a linear map: column `j` is `op(e_j)`.
pub fn materialize<T: Real>(n: usize, mut op: impl FnMut(&[T], &mut [T])) -> Result<DenseMatrix<T>> {
    if n > MATERIALIZE_LIMIT {
        return Err(Error::SizeGuard { n, limit: MATERIALIZE_LIMIT });
    }
    let mut m = DenseMatrix::zeros(n);
    let mut e = vec![T::zero(); n];
    let mut col = vec![T::zero(); n];
    for j in 0..n {
        e[j] = T::one();
        op(&e, &mut col);
        m.set_column(j, &col);
        e[j] = T::zero();
    }
    Ok(m)
}

/// Dense `G_h` of a scaled system.
pub fn materialize_g<T: Real>(sys: &ScaledSystem<'_, T>) -> Result<DenseMatrix<T>> {
    materialize(sys.dim(), |x, y| sys.g_apply_into(x, y))
}

/// Dense two-grid operator `N_h = (I - J Π) + J G_{2h} Π` on level `fine`.
pub fn materialize_two_grid<T: Real>(
    hierarchy: &GridHierarchy<T>,
    fine: usize,
    coarse_sys: &ScaledSystem<'_, T>,
) -> Result<DenseMatrix<T>> {
    if fine == 0 {
        return Err(Error::NoSuchLevel("coarse"));
    }
    let n = hierarchy.level(fine).n_dof();
    let mut failure = None;
    let m = materialize(n, |x: &[T], y: &mut [T]| {
        let px = match hierarchy.l2_project_values(fine, x) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let jpx = hierarchy.prolong_values(fine - 1, &px);
        let gpx = coarse_sys.g_apply(&px);
        let jgpx = hierarchy.prolong_values(fine - 1, &gpx);
        for i in 0..n {
            y[i] = x[i] - jpx[i] + jgpx[i];
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(m),
    }
}

/// `max |ln Re α|` over a spectrum.
pub fn spectral_distance<T: Real>(spectrum: &[Complex<T>]) -> T {
    spectrum
        .iter()
        .map(|z| z.re.ln().abs())
        .fold(T::zero(), |a, b| if b.is_nan() || b > a { b } else { a })
}

/// `max |Im α| / |α|` over a spectrum.
pub fn max_imag_ratio<T: Real>(spectrum: &[Complex<T>]) -> T {
    spectrum
        .iter()
        .map(|z| if z.norm() > T::zero() { z.im.abs() / z.norm() } else { T::zero() })
        .fold(T::zero(), T::max)
}

/// Spectral radius of `I - B` from the spectrum of `B`.
pub fn radius_of_complement<T: Real>(spectrum: &[Complex<T>]) -> T {
    spectrum
        .iter()
        .map(|z| (Complex::new(T::one(), T::zero()) - z).norm())
        .fold(T::zero(), T::max)
}

/// Right-hand side of the bound `ρ(I - S G) <= ((e^δ - 1)/δ) d` with `δ = d`.
pub fn lemma_a2_bound<T: Real>(d: T) -> T {
    if d == T::zero() {
        T::zero()
    } else {
        d.exp_m1()
    }
}

/// One cell of a spectral distance table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport<T> {
    pub h: T,
    pub beta: T,
    pub d_h: T,
    /// `d_{2h} / d_h`; `None` for the first `h` of a sweep.
    pub rate_vs_previous: Option<T>,
    pub max_imag_ratio: T,
    /// `ρ(I - S_h G_h)` from the same spectrum.
    pub rho: T,
    /// `((e^δ - 1)/δ) d_h` with `δ = d_h`.
    pub lemma_bound: T,
    /// `min Re` over `σ(G_h)`.
    pub min_re_g: T,
}

impl<T: Real> SpectralReport<T> {
    pub fn lemma_holds(&self, slack: T) -> bool {
        self.rho <= self.lemma_bound * (T::one() + slack)
    }
}

/// The fine-level `λ` of the two-grid study: `rule(x, y) + β` at the nodes.
pub type LambdaRule<'a, T> = dyn Fn(T, T) -> T + Sync + 'a;

/// `sin(x)` with `x` in radians.
pub fn sin_rule<T: Real>(x: T, _y: T) -> T {
    x.sin()
}

/// Dense two-grid analysis on a two-level hierarchy whose finest level has
/// `n_cells` cells. Computes `σ(G_h)` and `σ(N_h^{-1} G_h)`.
pub fn spectral_cell<T: Real>(
    builder: &OperatorBuilder<'_, T>,
    kind: GridKind,
    n_cells: usize,
    lambda_rule: &LambdaRule<'_, T>,
    beta: T,
) -> Result<SpectralReport<T>> {
    let hier = GridHierarchy::with_finest(kind, n_cells, 2)?;
    let ops: Vec<Box<dyn ForwardOperator<T>>> = hier.levels().iter().map(builder).collect::<Result<_>>()?;
    let fine = hier.finest();
    let lambda: Vec<T> = fine.interpolate(|x, y| lambda_rule(x, y) + beta);
    let lambda_c = hier.coarsen_values(1, &lambda);
    let g_sys = ScaledSystem::new(fine, ops[1].as_ref(), lambda, beta)?;
    let c_sys = ScaledSystem::new(hier.level(0), ops[0].as_ref(), lambda_c, beta)?;
    let g = materialize_g(&g_sys)?;
    let nmat = materialize_two_grid(&hier, 1, &c_sys)?;
    let b = nmat.lu()?.solve_matrix(&g);
    let spec = eigenvalues(&b)?;
    let spec_g = eigenvalues(&g)?;
    let d_h = spectral_distance(&spec);
    Ok(SpectralReport {
        h: fine.h(),
        beta,
        d_h,
        rate_vs_previous: None,
        max_imag_ratio: max_imag_ratio(&spec),
        rho: radius_of_complement(&spec),
        lemma_bound: lemma_a2_bound(d_h),
        min_re_g: spec_g.iter().map(|z| z.re).fold(T::infinity(), T::min),
    })
}

/// Sweeps `n_cells_list` (coarse to fine) for every `β`, cells in parallel.
/// The result is ordered by `β`, then by `h`, with rates filled in.
pub fn spectral_distance_table<T: Real>(
    builder: &OperatorBuilder<'_, T>,
    kind: GridKind,
    lambda_rule: &LambdaRule<'_, T>,
    n_cells_list: &[usize],
    beta_list: &[T],
    threads: usize,
) -> Result<Vec<SpectralReport<T>>> {
    let cells: Vec<(T, usize)> = beta_list
        .iter()
        .flat_map(|&b| n_cells_list.iter().map(move |&n| (b, n)))
        .collect();
    let threads = threads.max(1).min(cells.len().max(1));
    // largest cells first so the slowest ones do not start last
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(cells[i].1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Result<SpectralReport<T>>>> = (0..cells.len()).map(|_| None).collect();
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&i) = order.get(k) else { break };
                let (beta, n) = cells[i];
                let r = spectral_cell(builder, kind, n, lambda_rule, beta);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut out = results
        .into_iter()
        .map(|r| r.expect("every cell visited"))
        .collect::<Result<Vec<_>>>()?;
    for chunk in out.chunks_mut(n_cells_list.len().max(1)) {
        for k in 1..chunk.len() {
            chunk[k].rate_vs_previous = Some(chunk[k - 1].d_h / chunk[k].d_h);
        }
    }
    Ok(out)
}

/// Dense check of `ρ(I - S_h G_h) <= ((e^δ - 1)/δ) d_h`; returns `(lhs, rhs)`.
pub fn lemma_a2_check<T: Real>(
    builder: &OperatorBuilder<'_, T>,
    kind: GridKind,
    n_cells: usize,
    lambda_rule: &LambdaRule<'_, T>,
    beta: T,
) -> Result<(T, T)> {
    let n_dof = match kind {
        GridKind::PeriodicInterval => n_cells,
        GridKind::DirichletSquare => (n_cells - 1) * (n_cells - 1),
    };
    if n_dof > 1000 {
        return Err(Error::SizeGuard { n: n_dof, limit: 1000 });
    }
    let r = spectral_cell(builder, kind, n_cells, lambda_rule, beta)?;
    Ok((r.rho, r.lemma_bound))
}
