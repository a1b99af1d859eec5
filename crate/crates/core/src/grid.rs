//! Nested uniform mesh hierarchies with lumped-cubature weights, transfer
//! operators and the L²-projection used by the coarse-grid corrections.
//!
//! Two mesh families are supported:
//!
//! * `PeriodicInterval`: the unit interval with periodic wrap; every node is
//!   a degree of freedom and `w_h = h`.
//! * `DirichletSquare`: the three-line triangulation of the unit square
//!   (axis squares cut along the slope-one diagonal); only interior nodes are
//!   degrees of freedom and `w_h = h²`.
//!
//! Mass matrices are stored in rescaled form, `(M_h)_{ij} = h^{-d} (φ_i, φ_j)`.

use crate::error::{Error, Result};
use crate::krylov::{self, FnOperator};
use crate::linalg::{weighted_dot, CyclicTridiagonal};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    PeriodicInterval,
    DirichletSquare,
}

impl GridKind {
    pub fn dim(self) -> usize {
        match self {
            GridKind::PeriodicInterval => 1,
            GridKind::DirichletSquare => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridLevel<T> {
    kind: GridKind,
    index: usize,
    n_cells: usize,
    h: T,
    weights: Vec<T>,
    /// Exact factorization of the rescaled 1D periodic mass matrix.
    mass_factor: Option<CyclicTridiagonal<T>>,
}

impl<T: Real> GridLevel<T> {
    fn new(kind: GridKind, index: usize, n_cells: usize) -> Self {
        let h = T::one() / T::from_usize_lossy(n_cells);
        let weights = match kind {
            GridKind::PeriodicInterval => periodic_weights(n_cells, h),
            GridKind::DirichletSquare => three_line_weights(n_cells, h),
        };
        let mass_factor = match kind {
            GridKind::PeriodicInterval => Some(CyclicTridiagonal::new(
                n_cells,
                T::lit(1.0 / 6.0),
                T::lit(2.0 / 3.0),
                T::lit(1.0 / 6.0),
            )),
            GridKind::DirichletSquare => None,
        };
        Self {
            kind,
            index,
            n_cells,
            h,
            weights,
            mass_factor,
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Number of interior nodes per coordinate direction (2D), or nodes (1D).
    pub fn side(&self) -> usize {
        match self.kind {
            GridKind::PeriodicInterval => self.n_cells,
            GridKind::DirichletSquare => self.n_cells - 1,
        }
    }

    pub fn n_dof(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Coordinates of degree of freedom `k` (`y = 0` in 1D).
    pub fn node(&self, k: usize) -> (T, T) {
        match self.kind {
            GridKind::PeriodicInterval => (T::from_usize_lossy(k) * self.h, T::zero()),
            GridKind::DirichletSquare => {
                let m = self.side();
                let (i, j) = (k % m + 1, k / m + 1);
                (
                    T::from_usize_lossy(i) * self.h,
                    T::from_usize_lossy(j) * self.h,
                )
            }
        }
    }

    /// Nodal interpolant `I_h f`.
    pub fn interpolate(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        (0..self.n_dof())
            .map(|k| {
                let (x, y) = self.node(k);
                f(x, y)
            })
            .collect()
    }

    pub fn field(&self, values: Vec<T>) -> Result<NodalField<T>> {
        NodalField::new(self, values)
    }

    pub fn zeros(&self) -> NodalField<T> {
        NodalField {
            level: self.index,
            values: vec![T::zero(); self.n_dof()],
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_dof() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dof(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `<u, v>_h = sum_i w_h(P_i) u(P_i) v(P_i)` on raw nodal vectors.
    pub fn inner_values(&self, u: &[T], v: &[T]) -> T {
        weighted_dot(&self.weights, u, v)
    }

    /// Rescaled mass matrix product `M_h u`.
    pub fn mass_apply_values(&self, u: &[T]) -> Vec<T> {
        let n = self.n_dof();
        assert_eq!(u.len(), n);
        match self.kind {
            GridKind::PeriodicInterval => {
                let (off, diag) = (T::lit(1.0 / 6.0), T::lit(2.0 / 3.0));
                (0..n)
                    .map(|i| diag * u[i] + off * (u[(i + n - 1) % n] + u[(i + 1) % n]))
                    .collect()
            }
            GridKind::DirichletSquare => {
                let m = self.side() as isize;
                let (off, diag) = (T::lit(1.0 / 12.0), T::lit(0.5));
                let at = |i: isize, j: isize| -> T {
                    if i < 0 || j < 0 || i >= m || j >= m {
                        T::zero()
                    } else {
                        u[(j * m + i) as usize]
                    }
                };
                let mut out = vec![T::zero(); n];
                for j in 0..m {
                    for i in 0..m {
                        let nb = at(i - 1, j)
                            + at(i + 1, j)
                            + at(i, j - 1)
                            + at(i, j + 1)
                            + at(i + 1, j + 1)
                            + at(i - 1, j - 1);
                        out[(j * m + i) as usize] = diag * at(i, j) + off * nb;
                    }
                }
                out
            }
        }
    }

    /// Solves `M_h x = b` (exactly in 1D, by CG to `tol` in 2D).
    pub fn mass_solve_values(&self, b: &[T], tol: T) -> Result<Vec<T>> {
        self.check_len(b.len())?;
        if let Some(factor) = &self.mass_factor {
            return Ok(factor.solve(b));
        }
        let n = self.n_dof();
        let op = FnOperator::new(n, |x: &[T], y: &mut [T]| {
            y.copy_from_slice(&self.mass_apply_values(x));
        });
        let opts = krylov::KrylovOptions {
            tol,
            max_iter: 10 * n + 100,
        };
        let (x, report) = krylov::cg(&op, b, &opts)?;
        if !report.converged {
            return Err(Error::NotConverged {
                solver: "mass CG",
                iterations: report.iterations,
                residual: report.final_relative_residual.to_f64_lossy(),
            });
        }
        Ok(x)
    }

    /// Assembled rescaled mass matrix, for dense oracles.
    pub fn mass_dense(&self) -> crate::linalg::DenseMatrix<T> {
        let n = self.n_dof();
        let mut m = crate::linalg::DenseMatrix::zeros(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            m.set_column(j, &self.mass_apply_values(&e));
            e[j] = T::zero();
        }
        m
    }

    /// Discrete surrogate for the `W^{2,∞}` quotient seminorm: the largest
    /// scaled first or second difference over all nodes and directions.
    pub fn discrete_w2inf(&self, g: &[T]) -> T {
        assert_eq!(g.len(), self.n_dof());
        let h = self.h;
        let two = T::lit(2.0);
        let mut best = T::zero();
        match self.kind {
            GridKind::PeriodicInterval => {
                let n = self.n_dof();
                for i in 0..n {
                    let (l, c, r) = (g[(i + n - 1) % n], g[i], g[(i + 1) % n]);
                    best = best.max(((r - l) / (two * h)).abs());
                    best = best.max(((r - two * c + l) / (h * h)).abs());
                }
            }
            GridKind::DirichletSquare => {
                let m = self.side();
                let at = |i: usize, j: usize| g[j * m + i];
                for j in 0..m {
                    for i in 0..m {
                        // (neighbour before, centre, neighbour after) along x and y
                        let lines = [
                            (
                                i.checked_sub(1).map(|a| at(a, j)),
                                at(i, j),
                                (i + 1 < m).then(|| at(i + 1, j)),
                            ),
                            (
                                j.checked_sub(1).map(|b| at(i, b)),
                                at(i, j),
                                (j + 1 < m).then(|| at(i, j + 1)),
                            ),
                        ];
                        for (prev, c, next) in lines {
                            let (first, second) = match (prev, next) {
                                (Some(p), Some(q)) => {
                                    ((q - p) / (two * h), Some((q - two * c + p) / (h * h)))
                                }
                                (None, Some(q)) => ((q - c) / h, None),
                                (Some(p), None) => ((c - p) / h, None),
                                (None, None) => (T::zero(), None),
                            };
                            best = best.max(first.abs());
                            if let Some(s) = second {
                                best = best.max(s.abs());
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

fn periodic_weights<T: Real>(n_cells: usize, h: T) -> Vec<T> {
    // half the length of the two elements sharing each node
    let half = T::lit(0.5);
    (0..n_cells).map(|_| half * (h + h)).collect()
}

/// `w(P) = (1/3) * sum of areas of triangles containing P`, accumulated by
/// walking the triangles of the three-line mesh.
fn three_line_weights<T: Real>(n_cells: usize, h: T) -> Vec<T> {
    let m = n_cells - 1;
    let mut w = vec![T::zero(); m * m];
    let third_area = h * h * T::lit(0.5) / T::lit(3.0);
    let mut add = |i: usize, j: usize| {
        if i >= 1 && j >= 1 && i < n_cells && j < n_cells {
            w[(j - 1) * m + (i - 1)] += third_area;
        }
    };
    for j in 0..n_cells {
        for i in 0..n_cells {
            // lower-right triangle (i,j), (i+1,j), (i+1,j+1)
            for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1)] {
                add(a, b);
            }
            // upper-left triangle (i,j), (i+1,j+1), (i,j+1)
            for (a, b) in [(i, j), (i + 1, j + 1), (i, j + 1)] {
                add(a, b);
            }
        }
    }
    w
}

/// Nodal values attached to one level of a hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField<T> {
    level: usize,
    values: Vec<T>,
}

impl<T: Real> NodalField<T> {
    pub fn new(level: &GridLevel<T>, values: Vec<T>) -> Result<Self> {
        level.check_len(values.len())?;
        Ok(Self {
            level: level.index,
            values,
        })
    }

    pub fn level_index(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Nested uniform meshes, coarsest first.
#[derive(Debug, Clone)]
pub struct GridHierarchy<T> {
    kind: GridKind,
    levels: Vec<GridLevel<T>>,
    mass_tol: T,
}

impl<T: Real> GridHierarchy<T> {
    /// Builds `n_levels` nested meshes whose coarsest has `n0_cells` cells per
    /// direction.
    pub fn build(kind: GridKind, n0_cells: usize, n_levels: usize) -> Result<Self> {
        if n0_cells < 4 {
            return Err(Error::InvalidGrid(format!(
                "coarsest level needs at least 4 cells, got {n0_cells}"
            )));
        }
        if n_levels == 0 {
            return Err(Error::InvalidGrid("at least one level required".into()));
        }
        if kind == GridKind::DirichletSquare && !n0_cells.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "three-line mesh needs a power-of-two cell count, got {n0_cells}"
            )));
        }
        let levels = (0..n_levels)
            .map(|i| GridLevel::new(kind, i, n0_cells << i))
            .collect();
        let mass_tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
        Ok(Self {
            kind,
            levels,
            mass_tol,
        })
    }

    /// Hierarchy whose finest level has `finest_cells` cells per direction.
    pub fn with_finest(kind: GridKind, finest_cells: usize, n_levels: usize) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::InvalidGrid("at least one level required".into()));
        }
        let div = 1usize << (n_levels - 1);
        if !finest_cells.is_multiple_of(div) {
            return Err(Error::InvalidGrid(format!(
                "{finest_cells} cells cannot be coarsened {} times",
                n_levels - 1
            )));
        }
        Self::build(kind, finest_cells / div, n_levels)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[GridLevel<T>] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &GridLevel<T> {
        &self.levels[i]
    }

    pub fn finest(&self) -> &GridLevel<T> {
        self.levels.last().expect("hierarchy has at least one level")
    }

    pub fn finest_index(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn mass_tol(&self) -> T {
        self.mass_tol
    }

    /// Overrides the coarse mass-solve tolerance used by the L²-projection.
    pub fn set_mass_tol(&mut self, tol: T) {
        self.mass_tol = tol;
    }

    fn field_level(&self, u: &NodalField<T>) -> Result<&GridLevel<T>> {
        let lvl = self
            .levels
            .get(u.level)
            .ok_or(Error::NoSuchLevel("matching"))?;
        lvl.check_len(u.len())?;
        Ok(lvl)
    }

    pub fn inner_h(&self, u: &NodalField<T>, v: &NodalField<T>) -> Result<T> {
        if u.level != v.level {
            return Err(Error::LevelMismatch {
                expected: u.level,
                actual: v.level,
            });
        }
        let lvl = self.field_level(u)?;
        lvl.check_len(v.len())?;
        Ok(lvl.inner_values(&u.values, &v.values))
    }

    pub fn mass_apply(&self, u: &NodalField<T>) -> Result<NodalField<T>> {
        let lvl = self.field_level(u)?;
        Ok(NodalField {
            level: u.level,
            values: lvl.mass_apply_values(&u.values),
        })
    }

    /// Piecewise-linear interpolation from `coarse` to `coarse + 1`.
    pub fn prolong_values(&self, coarse: usize, u: &[T]) -> Vec<T> {
        let c = &self.levels[coarse];
        let f = &self.levels[coarse + 1];
        assert_eq!(u.len(), c.n_dof());
        let half = T::lit(0.5);
        match self.kind {
            GridKind::PeriodicInterval => {
                let n = c.n_dof();
                let mut out = vec![T::zero(); f.n_dof()];
                for i in 0..n {
                    out[2 * i] = u[i];
                    out[2 * i + 1] = half * (u[i] + u[(i + 1) % n]);
                }
                out
            }
            GridKind::DirichletSquare => {
                let nc = c.n_cells;
                let mc = c.side();
                let mf = f.side();
                // coarse grid value including zero boundary, grid indices 0..=nc
                let cv = |i: usize, j: usize| -> T {
                    if i == 0 || j == 0 || i >= nc || j >= nc {
                        T::zero()
                    } else {
                        u[(j - 1) * mc + (i - 1)]
                    }
                };
                let mut out = vec![T::zero(); f.n_dof()];
                for fj in 1..=mf {
                    for fi in 1..=mf {
                        let (ci, cj) = (fi / 2, fj / 2);
                        let v = match (fi % 2, fj % 2) {
                            (0, 0) => cv(ci, cj),
                            (1, 0) => half * (cv(ci, cj) + cv(ci + 1, cj)),
                            (0, 1) => half * (cv(ci, cj) + cv(ci, cj + 1)),
                            _ => half * (cv(ci, cj) + cv(ci + 1, cj + 1)),
                        };
                        out[(fj - 1) * mf + (fi - 1)] = v;
                    }
                }
                out
            }
        }
    }

    /// `J^T v` for the prolongation `J` out of level `coarse`.
    fn prolong_transpose_values(&self, coarse: usize, v: &[T]) -> Vec<T> {
        let c = &self.levels[coarse];
        let f = &self.levels[coarse + 1];
        assert_eq!(v.len(), f.n_dof());
        let half = T::lit(0.5);
        let mut out = vec![T::zero(); c.n_dof()];
        match self.kind {
            GridKind::PeriodicInterval => {
                let n = c.n_dof();
                for i in 0..n {
                    out[i] += v[2 * i];
                    out[i] += half * v[2 * i + 1];
                    out[(i + 1) % n] += half * v[2 * i + 1];
                }
            }
            GridKind::DirichletSquare => {
                let nc = c.n_cells;
                let mc = c.side();
                let mf = f.side();
                let mut scatter = |i: usize, j: usize, val: T| {
                    if i != 0 && j != 0 && i < nc && j < nc {
                        out[(j - 1) * mc + (i - 1)] += val;
                    }
                };
                for fj in 1..=mf {
                    for fi in 1..=mf {
                        let (ci, cj) = (fi / 2, fj / 2);
                        let val = v[(fj - 1) * mf + (fi - 1)];
                        match (fi % 2, fj % 2) {
                            (0, 0) => scatter(ci, cj, val),
                            (1, 0) => {
                                scatter(ci, cj, half * val);
                                scatter(ci + 1, cj, half * val);
                            }
                            (0, 1) => {
                                scatter(ci, cj, half * val);
                                scatter(ci, cj + 1, half * val);
                            }
                            _ => {
                                scatter(ci, cj, half * val);
                                scatter(ci + 1, cj + 1, half * val);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `R_{2h} v = 2^{-d} J^T v`, mapping level `fine` to `fine - 1`.
    pub fn restrict_values(&self, fine: usize, v: &[T]) -> Vec<T> {
        let scale = T::one() / T::from_usize_lossy(1 << self.dim());
        let mut out = self.prolong_transpose_values(fine - 1, v);
        out.iter_mut().for_each(|x| *x *= scale);
        out
    }

    /// Coarse coefficients of the L²-projection `Π = M_{2h}^{-1} R M_h`.
    pub fn l2_project_values(&self, fine: usize, u: &[T]) -> Result<Vec<T>> {
        let mu = self.levels[fine].mass_apply_values(u);
        let rhs = self.restrict_values(fine, &mu);
        self.levels[fine - 1].mass_solve_values(&rhs, self.mass_tol)
    }

    /// `(I - J Π) u` on level `fine`.
    pub fn rough_project_values(&self, fine: usize, u: &[T]) -> Result<Vec<T>> {
        let coarse = self.l2_project_values(fine, u)?;
        let smooth = self.prolong_values(fine - 1, &coarse);
        Ok(u.iter().zip(&smooth).map(|(&a, &b)| a - b).collect())
    }

    /// Injection onto the coarse nodes (values at finer nodes are discarded).
    pub fn coarsen_values(&self, fine: usize, v: &[T]) -> Vec<T> {
        let c = &self.levels[fine - 1];
        match self.kind {
            GridKind::PeriodicInterval => (0..c.n_dof()).map(|i| v[2 * i]).collect(),
            GridKind::DirichletSquare => {
                let mc = c.side();
                let mf = self.levels[fine].side();
                let mut out = Vec::with_capacity(c.n_dof());
                for cj in 1..=mc {
                    for ci in 1..=mc {
                        out.push(v[(2 * cj - 1) * mf + (2 * ci - 1)]);
                    }
                }
                out
            }
        }
    }

    fn finer_of(&self, u: &NodalField<T>) -> Result<usize> {
        self.field_level(u)?;
        if u.level == 0 {
            return Err(Error::NoSuchLevel("coarser"));
        }
        Ok(u.level)
    }

    pub fn prolong(&self, u: &NodalField<T>) -> Result<NodalField<T>> {
        self.field_level(u)?;
        if u.level + 1 >= self.levels.len() {
            return Err(Error::NoSuchLevel("finer"));
        }
        Ok(NodalField {
            level: u.level + 1,
            values: self.prolong_values(u.level, &u.values),
        })
    }

    pub fn restrict(&self, u: &NodalField<T>) -> Result<NodalField<T>> {
        let fine = self.finer_of(u)?;
        Ok(NodalField {
            level: fine - 1,
            values: self.restrict_values(fine, &u.values),
        })
    }

    pub fn l2_project(&self, u: &NodalField<T>) -> Result<NodalField<T>> {
        let fine = self.finer_of(u)?;
        Ok(NodalField {
            level: fine - 1,
            values: self.l2_project_values(fine, &u.values)?,
        })
    }

    pub fn rough_project(&self, u: &NodalField<T>) -> Result<NodalField<T>> {
        let fine = self.finer_of(u)?;
        Ok(NodalField {
            level: fine,
            values: self.rough_project_values(fine, &u.values)?,
        })
    }

    pub fn coarsen_lambda(&self, lam: &NodalField<T>) -> Result<NodalField<T>> {
        let fine = self.finer_of(lam)?;
        Ok(NodalField {
            level: fine - 1,
            values: self.coarsen_values(fine, &lam.values),
        })
    }

    pub fn discrete_w2inf(&self, g: &NodalField<T>) -> Result<T> {
        let lvl = self.field_level(g)?;
        Ok(lvl.discrete_w2inf(&g.values))
    }
}
