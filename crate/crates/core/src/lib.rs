//! Matrix-free interior point solver for box-constrained linear-quadratic
//! optimal control, with two-grid and W-cycle multigrid preconditioners for
//! the inner systems.
//!
//! Everything is generic over the scalar type through [`Real`]; the aliases
//! at the bottom fix it to `f64`.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod ipm;
pub mod krylov;
pub mod linalg;
pub mod operators;
pub mod precond;
pub mod scalar;

pub use error::{Error, Result};
pub use grid::{GridHierarchy, GridKind, GridLevel, NodalField};
pub use krylov::{cg, cgs, FnOperator, KrylovOptions, KrylovReport, LinearOperator};
pub use diagnostics::{spectral_distance_table, SpectralReport};
pub use ipm::{ControlProblem, DualStart, InnerMethod, IpmOptions, IpmResult, IpmState, OuterIterationRecord};
pub use linalg::DenseMatrix;
pub use operators::{
    adjoint_h_apply, EllipticConfig, EllipticOperator, ForwardOperator, InnerSolver,
    DenseOperator, OperatorBuilder, ParabolicConfig, ParabolicOperator, ParabolicScheme,
    ZeroOperator,
};
pub use precond::{CoarseOptions, CoarseSolverKind, MgPreconditioner, PrecondMode, ScaledSystem};
pub use scalar::Real;

pub type Hierarchy = GridHierarchy<f64>;
pub type Level = GridLevel<f64>;
pub type Field = NodalField<f64>;
pub type Problem = ControlProblem<f64>;
pub type Options = IpmOptions<f64>;
pub type Report = SpectralReport<f64>;
