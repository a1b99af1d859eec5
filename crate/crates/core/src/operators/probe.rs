//! Self-convergence of `K_h` applied to a fixed smooth function.

use super::OperatorBuilder;
use crate::error::{Error, Result};
use crate::grid::{GridKind, GridLevel};
use crate::scalar::Real;

/// What `K_h I_h u` is compared against.
pub enum ProbeReference<'a, T> {
    /// The same operator on a finer nested level.
    Level(&'a GridLevel<T>),
    /// The exact image `K u` as a function of position.
    Exact(&'a dyn Fn(T, T) -> T),
}

/// Injects nodal values from `fine` onto the nodes of the nested level `coarse`.
pub fn sample_on<T: Real>(fine: &GridLevel<T>, values: &[T], coarse: &GridLevel<T>) -> Result<Vec<T>> {
    if fine.kind() != coarse.kind() || !fine.n_cells().is_multiple_of(coarse.n_cells()) {
        return Err(Error::InvalidGrid(format!(
            "level with {} cells is not nested in one with {}",
            coarse.n_cells(),
            fine.n_cells()
        )));
    }
    if values.len() != fine.n_dof() {
        return Err(Error::DimensionMismatch {
            expected: fine.n_dof(),
            actual: values.len(),
        });
    }
    let s = fine.n_cells() / coarse.n_cells();
    Ok(match coarse.kind() {
        GridKind::PeriodicInterval => (0..coarse.n_dof()).map(|i| values[i * s]).collect(),
        GridKind::DirichletSquare => {
            let (mc, mf) = (coarse.side(), fine.side());
            let mut out = Vec::with_capacity(mc * mc);
            for j in 1..=mc {
                for i in 1..=mc {
                    out.push(values[(j * s - 1) * mf + (i * s - 1)]);
                }
            }
            out
        }
    })
}

/// `L2` norm of a nodal function through the consistent mass matrix.
fn l2_norm<T: Real>(level: &GridLevel<T>, e: &[T]) -> T {
    let me = level.mass_apply_values(e);
    let hd = level.h().powi(level.dim() as i32);
    (hd * e.iter().zip(&me).fold(T::zero(), |acc, (&a, &b)| acc + a * b)).sqrt()
}

/// Returns `||K_h I_h u - reference||_{L2}` for each level in `levels`,
/// measured on that level's nodes.
pub fn convergence_probe<T: Real>(
    builder: &OperatorBuilder<'_, T>,
    u: impl Fn(T, T) -> T,
    levels: &[GridLevel<T>],
    reference: ProbeReference<'_, T>,
) -> Result<Vec<T>> {
    let reference_values = match &reference {
        ProbeReference::Level(r) => Some(builder(r)?.apply(&r.interpolate(&u))),
        ProbeReference::Exact(_) => None,
    };
    levels
        .iter()
        .map(|level| {
            let ku = builder(level)?.apply(&level.interpolate(&u));
            let target = match (&reference, &reference_values) {
                (ProbeReference::Level(r), Some(vals)) => sample_on(r, vals, level)?,
                (ProbeReference::Exact(f), _) => level.interpolate(f),
                _ => unreachable!(),
            };
            let e: Vec<T> = ku.iter().zip(&target).map(|(&a, &b)| a - b).collect();
            Ok(l2_norm(level, &e))
        })
        .collect()
}
