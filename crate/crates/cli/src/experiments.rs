//! The three experiment drivers.

use std::path::{Path, PathBuf};

use mgipm_core::diagnostics::spectral_distance_table;
use mgipm_core::{
    ControlProblem, EllipticOperator, ForwardOperator, GridHierarchy, GridKind, GridLevel, InnerMethod,
    IpmResult, ParabolicOperator, Result as CoreResult,
};

use crate::config::{Bounds, Experiment, ExperimentConfig};
use crate::output::{emit_csv, emit_solution, emit_wide_table, PerOuterRow, SpectralRow, SummaryRow};
use crate::CliError;

/// Paths of the files written by one run, plus what was in them.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub per_outer: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub solution: Option<PathBuf>,
    pub spectral: Option<PathBuf>,
    pub spectral_wide: Option<PathBuf>,
    pub per_outer_rows: Vec<PerOuterRow>,
    pub summary_row: Option<SummaryRow>,
    pub spectral_rows: Vec<SpectralRow>,
    pub converged: bool,
    /// Full solver output for IPM experiments.
    pub result: Option<IpmResult<f64>>,
}

impl RunArtifacts {
    fn empty() -> Self {
        Self {
            per_outer: None,
            summary: None,
            solution: None,
            spectral: None,
            spectral_wide: None,
            per_outer_rows: Vec::new(),
            summary_row: None,
            spectral_rows: Vec::new(),
            converged: true,
            result: None,
        }
    }
}

/// Dispatches on `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    match cfg.experiment {
        Experiment::Parabolic1d => run_parabolic(cfg),
        Experiment::Elliptic2d => run_elliptic(cfg),
        Experiment::SpectralTable => run_spectral_table(cfg, worker_count()),
    }
}

/// Worker cap from `MGIPM_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("MGIPM_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        Some(n) if n > 0 => n,
        _ => avail,
    }
}

fn bounds_for(cfg: &ExperimentConfig, n: usize) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    match &cfg.bounds {
        Bounds::Scalar { lo, hi } => Ok((vec![*lo; n], vec![*hi; n])),
        Bounds::File(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut lo = Vec::with_capacity(n);
            let mut hi = Vec::with_capacity(n);
            for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
                let mut it = line.split([',', ' ', '\t']).filter(|s| !s.is_empty());
                let mut next = || -> Result<f64, CliError> {
                    it.next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| CliError::Config(format!("bad bounds line '{line}'")))
                };
                lo.push(next()?);
                hi.push(next()?);
            }
            if lo.len() != n {
                return Err(CliError::Config(format!(
                    "bounds file has {} rows, the finest level has {n} nodes",
                    lo.len()
                )));
            }
            if let Some(i) = (0..n).find(|&i| !(lo[i] < hi[i])) {
                return Err(CliError::Config(format!("bounds file: lo >= hi at node {i}")));
            }
            Ok((lo, hi))
        }
    }
}

fn inner_method(cfg: &ExperimentConfig) -> InnerMethod {
    if cfg.levels == 1 {
        InnerMethod::Cg
    } else {
        InnerMethod::Multigrid(cfg.precond)
    }
}

fn solve_and_write(
    cfg: &ExperimentConfig,
    hier: GridHierarchy<f64>,
    ops: Vec<Box<dyn ForwardOperator<f64>>>,
    f: Vec<f64>,
) -> Result<RunArtifacts, CliError> {
    let n = hier.finest().n_dof();
    let coords: Vec<(f64, f64)> = (0..n).map(|k| hier.finest().node(k)).collect();
    let (lo, hi) = bounds_for(cfg, n)?;
    ops.last().unwrap().counter().reset();
    let prob = ControlProblem::on_hierarchy(hier, ops, f, cfg.beta, lo, hi)?;
    let opts = mgipm_core::IpmOptions {
        inner: inner_method(cfg),
        ..cfg.ipm
    };
    let res = mgipm_core::ipm::solve(&prob, &opts)?;
    let rows: Vec<PerOuterRow> = res
        .records
        .iter()
        .map(|r| PerOuterRow {
            iteration: r.iteration,
            mu: r.mu,
            predictor_iters: r.predictor_iters,
            corrector_iters: r.corrector_iters,
            fine_matvecs_cumulative: r.fine_matvecs_cumulative,
            lambda_w2inf: r.lambda_w2inf,
        })
        .collect();
    let summary = SummaryRow {
        experiment: cfg.experiment.name().to_string(),
        finest_n: cfg.finest_n,
        levels: cfg.levels,
        beta: cfg.beta,
        outer_iterations: res.records.len(),
        total_fine_matvecs: res.total_fine_matvecs(),
        converged: res.converged,
    };
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let per_outer = dir.join("per_outer.csv");
    let summary_path = dir.join("summary.csv");
    emit_csv(&rows, &per_outer)?;
    emit_csv(std::slice::from_ref(&summary), &summary_path)?;
    let solution = if cfg.write_solution {
        let p = dir.join("solution.csv");
        emit_solution(&coords, &res.state.u, &res.state.v1, &res.state.v2, &p)?;
        Some(p)
    } else {
        None
    };
    Ok(RunArtifacts {
        per_outer: Some(per_outer),
        summary: Some(summary_path),
        solution,
        per_outer_rows: rows,
        summary_row: Some(summary),
        converged: res.converged,
        result: Some(res),
        ..RunArtifacts::empty()
    })
}

/// Time-reversal of a convection-diffusion process: `f = K u_0` for the
/// two-bump target `u_0`.
pub fn run_parabolic(cfg: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    cfg.validate()?;
    let hier = GridHierarchy::with_finest(GridKind::PeriodicInterval, cfg.finest_n, cfg.levels)?;
    let ops = hier
        .levels()
        .iter()
        .map(|l| Ok(Box::new(ParabolicOperator::build(l, &cfg.parabolic)?) as Box<dyn ForwardOperator<f64>>))
        .collect::<CoreResult<Vec<_>>>()?;
    let u0 = parabolic_target(cfg, hier.finest());
    let f = ops.last().unwrap().apply(&u0);
    solve_and_write(cfg, hier, ops, f)
}

pub fn parabolic_target(cfg: &ExperimentConfig, level: &GridLevel<f64>) -> Vec<f64> {
    level.interpolate(|x, _| cfg.bumps.iter().map(|b| b.eval(x)).sum())
}

/// Elliptic control with `f` obtained by applying the discrete solution
/// operator to `u_0 = A sin(2πx) sin(2πy)`.
pub fn run_elliptic(cfg: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    cfg.validate()?;
    let hier = GridHierarchy::with_finest(GridKind::DirichletSquare, cfg.finest_n, cfg.levels)?;
    let ops = hier
        .levels()
        .iter()
        .map(|l| Ok(Box::new(EllipticOperator::build(l, &cfg.elliptic)?) as Box<dyn ForwardOperator<f64>>))
        .collect::<CoreResult<Vec<_>>>()?;
    let u0 = elliptic_target(cfg, hier.finest());
    let f = ops.last().unwrap().apply(&u0);
    solve_and_write(cfg, hier, ops, f)
}

pub fn elliptic_target(cfg: &ExperimentConfig, level: &GridLevel<f64>) -> Vec<f64> {
    use std::f64::consts::PI;
    let a = cfg.elliptic_amplitude;
    level.interpolate(|x, y| a * (2.0 * PI * x).sin() * (2.0 * PI * y).sin())
}

/// Dense two-grid spectral distances for every `(h, β)` of the config.
pub fn run_spectral_table(cfg: &ExperimentConfig, threads: usize) -> Result<RunArtifacts, CliError> {
    cfg.validate()?;
    let par = cfg.parabolic;
    let builder = move |l: &GridLevel<f64>| -> CoreResult<Box<dyn ForwardOperator<f64>>> {
        Ok(Box::new(ParabolicOperator::build(l, &par)?))
    };
    let rule = cfg.lambda_rule;
    let lambda = move |x: f64, _y: f64| rule.eval(x);
    let reports = spectral_distance_table(
        &builder,
        GridKind::PeriodicInterval,
        &lambda,
        &cfg.h_list,
        &cfg.beta_list,
        threads,
    )?;
    let rows: Vec<SpectralRow> = reports
        .iter()
        .map(|r| SpectralRow {
            h: r.h,
            beta: r.beta,
            d_h: r.d_h,
            rate: r.rate_vs_previous,
        })
        .collect();
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    let long = dir.join("spectral.csv");
    let wide = dir.join("spectral_table.csv");
    emit_csv(&rows, &long)?;
    emit_wide_table(&rows, &cfg.beta_list, &wide)?;
    Ok(RunArtifacts {
        spectral: Some(long),
        spectral_wide: Some(wide),
        spectral_rows: rows,
        ..RunArtifacts::empty()
    })
}

/// Reads a run's summary file back.
pub fn read_summary(dir: &Path) -> Result<SummaryRow, CliError> {
    crate::output::read_csv::<SummaryRow>(&dir.join("summary.csv"))?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Parse("empty summary".into()))
}
